#pragma once

#include <functional>
#include <string>
#include <vector>

#include "admp/params.hpp"

namespace admp {

using LossFn = std::function<double(const ParamSet&)>;

/// |a - b| / max(1, |a|, |b|)
double relative_error(double a, double b);

/// Central differences (loss(p + h) - loss(p - h)) / 2h for every scalar of
/// every parameter in `params`. The loss must be deterministic.
GradSet finite_diff_grad(const LossFn& loss, const ParamSet& params, double h = 1e-5);

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares analytic gradients against central differences. At most
/// `max_coords` coordinates per tensor are probed (0 = all), chosen by a
/// fixed stride so the probe set is reproducible.
std::vector<GradCheckEntry> check_gradients(const LossFn& loss, const ParamSet& params, const GradSet& analytic,
                                            double h = 1e-5, std::size_t max_coords = 0);

double max_error(const std::vector<GradCheckEntry>& entries);

}  // namespace admp
