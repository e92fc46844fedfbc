#include "admp/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace admp {

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

namespace {

double central_difference(const LossFn& loss, ParamSet& work, const std::string& name, std::size_t i, double h) {
  Tensor& t = work.at(name);
  const double original = t[i];
  t[i] = original + h;
  const double up = loss(work);
  t[i] = original - h;
  const double down = loss(work);
  t[i] = original;
  return (up - down) / (2.0 * h);
}

}  // namespace

GradSet finite_diff_grad(const LossFn& loss, const ParamSet& params, double h) {
  if (!(h > 0)) throw std::invalid_argument("finite_diff_grad: step must be positive");
  ParamSet work = params;
  GradSet out;
  for (const auto& [name, value] : params) {
    Tensor g = Tensor::zeros_like(value);
    for (std::size_t i = 0; i < value.size(); ++i) g[i] = central_difference(loss, work, name, i, h);
    out.emplace(name, std::move(g));
  }
  return out;
}

std::vector<GradCheckEntry> check_gradients(const LossFn& loss, const ParamSet& params, const GradSet& analytic,
                                            double h, std::size_t max_coords) {
  if (!(h > 0)) throw std::invalid_argument("check_gradients: step must be positive");
  ParamSet work = params;
  std::vector<GradCheckEntry> out;
  for (const auto& [name, grad] : analytic) {
    const Tensor& value = params.at(name);
    if (value.shape() != grad.shape()) {
      throw ShapeError("check_gradients: '" + name + "' gradient shape " + shape_string(grad.shape()) +
                       " differs from parameter shape " + shape_string(value.shape()));
    }
    GradCheckEntry entry{name};
    const std::size_t n = value.size();
    const std::size_t stride = (max_coords == 0 || n <= max_coords) ? 1 : (n + max_coords - 1) / max_coords;
    for (std::size_t i = 0; i < n; i += stride) {
      const double numeric = central_difference(loss, work, name, i, h);
      const double err = relative_error(grad[i], numeric);
      if (entry.checked == 0 || err > entry.max_rel_error) {
        entry.max_rel_error = err;
        entry.worst_index = i;
        entry.analytic = grad[i];
        entry.numeric = numeric;
      }
      ++entry.checked;
    }
    out.push_back(entry);
  }
  return out;
}

double max_error(const std::vector<GradCheckEntry>& entries) {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
  return worst;
}

}  // namespace admp
