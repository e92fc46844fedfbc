#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "admp/adversary.hpp"
#include "admp/model.hpp"

namespace admp {

enum class Variant { gan, global_biadv, admp_jsd_loc, admp_kl_tractable, admp_kl_intractable, elbo };

/// Accepts the command-line spellings ("admp-jsdloc", "global-biadv", ...).
Variant parse_variant(const std::string& name);
std::string to_string(Variant v);
std::vector<Variant> all_variants();
bool uses_inference(Variant v);
bool uses_adversaries(Variant v);

/// Variables whose factor tuple (x_i, pa(x_i)) is not contained in another
/// factor's tuple. These are the factors that own a local adversary.
std::vector<std::size_t> adversary_factors(const ModelGraph& graph);
/// One adversary per entry of adversary_factors, named `xi/d_<var>`.
std::vector<LocalAdversary> local_adversaries(const Model& model, const AdversaryConfig& config);

/// E_data log D + E_gen log(1 - D) from discriminator probabilities.
double gan_value(const Tensor& d_data, const Tensor& d_gen);
/// Same value from logits, differentiable.
Var gan_value(Var data_logits, Var gen_logits);

/// sum_i [ 1/2 mean_bu log(1 - D_i) + 1/2 mean_td log D_i ] from per-adversary logits.
Var jsd_model_loss(const std::vector<Var>& td_logits, const std::vector<Var>& bu_logits);
/// L_locM on a bottom-up and a top-down joint. Discriminator parameters in
/// `xi` should be bound as constants.
Var admp_jsd_model_loss(const Model& model, const std::vector<LocalAdversary>& adversaries, Bindings& xi,
                        const JointSample& bottom_up, const JointSample& top_down);

/// Per-row log p(X) - log q(X_u | X_o) for `particles` draws per evidence row.
Var elbo_rows(const Model& model, Bindings& theta, Bindings& phi, const InverseFactorization& inv,
              const Evidence& evidence, std::size_t particles, Rng& rng, const std::string& tag = "");
Var elbo(const Model& model, Bindings& theta, Bindings& phi, const InverseFactorization& inv,
         const Evidence& evidence, std::size_t particles, Rng& rng, const std::string& tag = "");
/// Throws when a factor of the model or its inference network has no density.
void require_explicit(const Model& model, const InverseFactorization& inv, const std::string& what);

/// Sum over observed variables of log p(x_o | pa(x_o)) per row.
Var reconstruction_rows(const Model& model, Bindings& theta, const JointSample& joint);

/// Adversary over the latent block followed by the observed block.
std::vector<std::size_t> latent_block_slots(const ModelGraph& graph);
/// Adversary over the observed block followed by the latent block.
std::vector<std::size_t> observed_block_slots(const ModelGraph& graph);

/// mean log p(x|z) - mean log((1 - D_z) / D_z) over inference samples, with
/// D_z labelling prior-side latents 1. To be maximized.
Var kl_tractable_objective(const Model& model, Bindings& theta, const LocalAdversary& dz, Bindings& xi,
                           const JointSample& bottom_up);
/// mean logit D_z + mean logit D_x on (x_data, z_q), with both adversaries
/// labelling the inference side 1. Estimates KL(q(x,z) || p(x,z)).
Var kl_intractable_objective(const Model& model, const LocalAdversary& dz, const LocalAdversary& dx, Bindings& xi,
                             const JointSample& bottom_up);

/// log q(x) of the data distribution, per row of x.
using DataLogDensity = std::function<double(const std::vector<double>&)>;

struct MixedReport {
  double l_elbo = 0.0;
  double l_kl = 0.0;
  double difference = 0.0;  // l_kl - l_elbo
  double gradient_cosine = 0.0;
  GradSet grad_elbo;
  GradSet grad_kl;
};

/// Both losses with common random numbers, and their finite-difference
/// gradients over the trainable generative parameters. D_x is the analytic
/// q(x) / (q(x) + p(x|z)) at the evaluated parameters.
MixedReport mixed_equivalence_check(const Model& model, const ParamSet& theta, const ParamSet& phi,
                                    const Tensor& x, const DataLogDensity& log_qx, std::size_t samples,
                                    std::uint64_t seed, double h = 1e-5);

/// Median pairwise Euclidean distance over (a subsample of) the pooled sets.
double median_bandwidth(const Tensor& a, const Tensor& b, std::size_t max_points = 1000);
/// Unbiased squared MMD with k(u, v) = exp(-|u - v|^2 / (2 bandwidth^2)).
/// bandwidth <= 0 selects the median heuristic.
double mmd_rbf(const Tensor& a, const Tensor& b, double bandwidth = 0.0);

}  // namespace admp
