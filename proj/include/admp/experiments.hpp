#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "admp/trainer.hpp"

namespace admp {

struct GradcheckRow {
  std::string group;   // theta | phi | xi
  std::string status;  // pass | fail | n/a
  double max_rel_error = 0.0;
  std::string worst;   // parameter with the largest error
  std::size_t checked = 0;
};

inline constexpr double kGradcheckTolerance = 1e-4;

/// Backward vs central differences for each parameter group on one batch
/// frozen by `seed`. At most `coords` coordinates per tensor are probed.
/// `wrong_sign_group` flips the analytic gradient of that group (negative control).
std::vector<GradcheckRow> run_gradcheck(const Trainer& trainer, std::uint64_t seed, std::size_t coords = 6,
                                        const std::string& wrong_sign_group = "");
bool gradcheck_passed(const std::vector<GradcheckRow>& rows);

struct CompareCell {
  Variant variant = Variant::admp_jsd_loc;
  std::uint64_t seed = 0;
  std::string status;  // ok | skipped | aborted
  std::string note;
  double oracle_kl = 0.0;
  bool has_oracle = false;
  double mmd2 = 0.0;
  double wall_seconds = 0.0;
  std::string config_hash;
};

/// Hash of the configuration with the seed left out.
std::string config_hash(const TrainConfig& config);

/// Trains every variant x seed cell, `threads` cells at a time. Results are
/// ordered by variant, then seed.
std::vector<CompareCell> run_compare(const Model& model, const Dataset& data, const TrainConfig& base,
                                     const std::vector<Variant>& variants, const std::vector<std::uint64_t>& seeds,
                                     std::size_t threads);

}  // namespace admp
