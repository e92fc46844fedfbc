#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "admp/objectives.hpp"
#include "admp/optim.hpp"

namespace admp {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a loss or intermediate value stops being finite.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(std::uint64_t step, std::string where, const std::string& what)
      : std::runtime_error("step " + std::to_string(step) + ", " + where + ": " + what),
        step_(step),
        where_(std::move(where)) {}
  std::uint64_t step() const { return step_; }
  const std::string& where() const { return where_; }

 private:
  std::uint64_t step_;
  std::string where_;
};

enum class MaskPolicy { none, random_drop };
MaskPolicy parse_mask_policy(const std::string& name);
std::string to_string(MaskPolicy policy);

struct TrainConfig {
  Variant variant = Variant::admp_jsd_loc;
  std::size_t iterations = 1000;
  std::size_t minibatch = 64;
  std::size_t particles_L = 1;
  std::size_t particles_K = 64;
  double lr_theta = 1e-3;
  double lr_phi = 1e-3;
  double lr_xi = 1e-3;
  std::size_t n_d = 1;
  std::uint64_t seed = 1;
  bool use_sgd = false;
  bool non_saturating = false;
  MaskPolicy mask_policy = MaskPolicy::none;
  double drop_probability = 0.25;
  std::size_t metrics_every = 100;
  std::size_t metric_samples = 500;
  AdversaryConfig adversary;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);

struct TrainState {
  ParamSet theta;
  ParamSet phi;
  ParamSet xi;
  std::map<std::string, OptimizerState> optimizers;
  std::uint64_t step = 0;
  Rng rng;

  bool operator==(const TrainState&) const = default;
};

/// Observed-role variables of the model, one flag each; true = observed.
using ObservationMask = std::vector<bool>;

/// Inverse factorizations per observation pattern, derived on first use.
class InverseCache {
 public:
  explicit InverseCache(const Model& model) : model_(&model) {}
  const InverseFactorization& get(const std::vector<std::size_t>& observed);
  std::size_t size() const { return cache_.size(); }
  const Model& model() const { return *model_; }

 private:
  const Model* model_;
  std::map<std::vector<std::size_t>, InverseFactorization> cache_;
};

/// Masked variables become latent for the datum. All-masked is an error.
const InverseFactorization& apply_mask(InverseCache& cache, const ObservationMask& mask);

/// Observation data: one tensor per model variable (empty for latents).
struct Dataset {
  Evidence values;
  std::size_t count = 0;
};

/// Everything one iteration needs after sampling: gradients of the model
/// loss at the current parameters and the labelled tuples for each adversary.
struct StepData {
  GradSet theta_grads;
  GradSet phi_grads;
  std::vector<Tensor> positive;  // label 1, per adversary
  std::vector<Tensor> negative;  // label 0, per adversary
  double model_loss = 0.0;
};

class Trainer {
 public:
  using Sink = std::function<void(const nlohmann::json&)>;

  Trainer(const Model& model, TrainConfig config, Dataset data);

  const Model& model() const { return *model_; }
  const TrainConfig& config() const { return config_; }
  const Dataset& data() const { return data_; }
  const std::vector<LocalAdversary>& adversaries() const { return adversaries_; }
  /// Observation patterns the inference parameters are built for.
  const std::vector<InverseFactorization>& patterns() const { return patterns_; }

  TrainState initial_state() const;

  /// One iteration of the minibatch loop.
  void step(TrainState& state) const;
  /// Runs `iterations` steps, emitting a metrics record at step 0 (when
  /// starting from it) and after every `metrics_every`-th step.
  void run(TrainState& state, std::size_t iterations, const Sink& sink) const;

  /// Draws samples for a minibatch and differentiates the model loss.
  StepData prepare(const TrainState& state, const std::vector<std::size_t>& rows,
                   const std::vector<ObservationMask>& masks, Rng& rng) const;
  /// Applies the updates of one factor in the order xi, theta, phi.
  void update_factor(TrainState& state, std::size_t factor, const StepData& data) const;

  /// Loss used for the given parameter group ("theta", "phi" or "xi") on a
  /// batch frozen by `seed`, with gradients. Drives gradient checks.
  struct GroupLoss {
    double value = 0.0;
    GradSet grads;
  };
  GroupLoss group_loss(const TrainState& state, const std::string& group, std::uint64_t seed,
                       DetachLog* detach_log) const;

  nlohmann::json metrics(const TrainState& state) const;

 private:
  struct Pass {
    std::vector<Var> positive;
    std::vector<Var> negative;
    Var model_loss;
  };
  Pass forward(Bindings& theta, Bindings& phi, Bindings& xi, const std::vector<std::size_t>& rows,
               const std::vector<ObservationMask>& masks, Rng& rng, std::string& where) const;
  void draw_batch(Rng& rng, std::vector<std::size_t>& rows, std::vector<ObservationMask>& masks) const;
  std::vector<std::size_t> observed_for(const ObservationMask& mask) const;
  void check_compatible() const;
  void apply(ParamSet& params, const GradSet& grads, const std::string& scope, double lr, TrainState& state) const;
  std::vector<std::size_t> adversaries_of(std::size_t factor) const;

  const Model* model_;
  TrainConfig config_;
  Dataset data_;
  std::vector<LocalAdversary> adversaries_;
  std::vector<InverseFactorization> patterns_;
  double mmd_bandwidth_ = 1.0;
};

/// Loads the dataset a model spec declares. Relative csv paths resolve
/// against `base_dir`.
Dataset load_dataset(const Model& model, const std::string& base_dir = ".");

}  // namespace admp
