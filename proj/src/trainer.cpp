#include "admp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "admp/oracle.hpp"

namespace admp {

MaskPolicy parse_mask_policy(const std::string& name) {
  if (name == "none") return MaskPolicy::none;
  if (name == "random-drop" || name == "random_drop") return MaskPolicy::random_drop;
  throw std::invalid_argument("unknown mask policy '" + name + "'");
}

std::string to_string(MaskPolicy policy) { return policy == MaskPolicy::none ? "none" : "random-drop"; }

void TrainConfig::validate() const {
  if (particles_L < 1 || particles_K < 1) throw ConfigError("particle counts L and K must be at least 1");
  if (n_d < 1) throw ConfigError("n_D must be at least 1");
  if (minibatch < 1) throw ConfigError("minibatch must be at least 1");
  for (double lr : {lr_theta, lr_phi, lr_xi})
    if (!(lr >= 0) || !std::isfinite(lr)) throw ConfigError("learning rates must be finite and nonnegative");
  if (!(drop_probability >= 0 && drop_probability < 1)) throw ConfigError("drop probability must lie in [0, 1)");
  if (metric_samples < 2) throw ConfigError("metric_samples must be at least 2");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"variant", to_string(c.variant)},
          {"iterations", c.iterations},
          {"minibatch", c.minibatch},
          {"particles_L", c.particles_L},
          {"particles_K", c.particles_K},
          {"lr_theta", c.lr_theta},
          {"lr_phi", c.lr_phi},
          {"lr_xi", c.lr_xi},
          {"n_d", c.n_d},
          {"seed", c.seed},
          {"optimizer", c.use_sgd ? "sgd" : "adam"},
          {"non_saturating", c.non_saturating},
          {"mask_policy", to_string(c.mask_policy)},
          {"drop_probability", c.drop_probability},
          {"metrics_every", c.metrics_every},
          {"metric_samples", c.metric_samples},
          {"adversary_hidden", c.adversary.hidden},
          {"adversary_activation", to_string(c.adversary.activation)},
          {"clamp", c.adversary.clamp}};
}

const InverseFactorization& InverseCache::get(const std::vector<std::size_t>& observed) {
  auto it = cache_.find(observed);
  if (it == cache_.end()) it = cache_.emplace(observed, model_->inverse_for(observed)).first;
  return it->second;
}

const InverseFactorization& apply_mask(InverseCache& cache, const ObservationMask& mask) {
  const std::vector<std::size_t> observed = cache.model().graph().observed();
  if (mask.size() != observed.size()) {
    throw std::invalid_argument("mask has " + std::to_string(mask.size()) + " entries for " +
                                std::to_string(observed.size()) + " observed variables");
  }
  std::vector<std::size_t> kept;
  for (std::size_t k = 0; k < observed.size(); ++k)
    if (mask[k]) kept.push_back(observed[k]);
  if (kept.empty()) throw std::invalid_argument("every observed variable is masked for this datum");
  return cache.get(kept);
}

namespace {

Tensor take_rows(const Tensor& t, const std::vector<std::size_t>& rows) {
  Tensor out({rows.size(), t.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) out(i, j) = t(rows[i], j);
  return out;
}

Var stack(const std::vector<Var>& parts) {
  if (parts.size() == 1) return parts[0];
  return concat_rows(parts);
}

bool finite(const Tensor& t) {
  return std::all_of(t.values().begin(), t.values().end(), [](double v) { return std::isfinite(v); });
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.compare(0, prefix.size(), prefix) == 0; }

}  // namespace

Trainer::Trainer(const Model& model, TrainConfig config, Dataset data)
    : model_(&model), config_(std::move(config)), data_(std::move(data)) {
  config_.validate();
  const ModelGraph& g = model.graph();
  const auto obs = g.observed();
  if (obs.empty()) throw ConfigError("the model has no observed variables to train on");
  if (data_.count == 0) throw ConfigError("the dataset is empty");
  for (std::size_t o : obs) {
    if (o >= data_.values.size() || data_.values[o].rows() != data_.count) {
      throw ConfigError("the dataset has no values for observed variable '" + g.name(o) + "'");
    }
    check_support(g.variable(o), data_.values[o]);
  }
  check_compatible();

  const auto lat = g.latents();
  switch (config_.variant) {
    case Variant::gan:
      adversaries_.emplace_back("xi/gan", obs.front(), obs, model.width(obs), config_.adversary);
      break;
    case Variant::global_biadv: {
      const auto& order = g.topological_order();
      adversaries_.emplace_back("xi/global", order.back(), order, model.width(order), config_.adversary);
      break;
    }
    case Variant::admp_jsd_loc: adversaries_ = local_adversaries(model, config_.adversary); break;
    case Variant::admp_kl_tractable:
    case Variant::admp_kl_intractable: {
      const auto zs = latent_block_slots(g);
      adversaries_.emplace_back("xi/d_z", lat.front(), zs, model.width(zs), config_.adversary);
      if (config_.variant == Variant::admp_kl_intractable) {
        const auto xs = observed_block_slots(g);
        adversaries_.emplace_back("xi/d_x", obs.front(), xs, model.width(xs), config_.adversary);
      }
      break;
    }
    case Variant::elbo: break;
  }

  if (uses_inference(config_.variant)) {
    patterns_.push_back(model.inverse());
    if (config_.mask_policy == MaskPolicy::random_drop) {
      const std::size_t m = obs.size();
      for (std::size_t bits = 1; bits + 1 < (std::size_t{1} << m); ++bits) {
        std::vector<std::size_t> kept;
        for (std::size_t k = 0; k < m; ++k)
          if (bits & (std::size_t{1} << k)) kept.push_back(obs[k]);
        patterns_.push_back(model.inverse_for(kept));
      }
    }
  }

  Tensor sample({std::min<std::size_t>(data_.count, 1000), model.width(obs)});
  for (std::size_t i = 0; i < sample.rows(); ++i) {
    std::size_t col = 0;
    for (std::size_t o : obs)
      for (std::size_t j = 0; j < data_.values[o].cols(); ++j) sample(i, col++) = data_.values[o](i, j);
  }
  mmd_bandwidth_ = median_bandwidth(sample, sample);
}

void Trainer::check_compatible() const {
  const Model& m = *model_;
  const ModelGraph& g = m.graph();
  const std::string v = to_string(config_.variant);
  const auto lat = g.latents();
  if (config_.variant != Variant::gan) {
    for (std::size_t z : lat) {
      if (g.variable(z).support.discrete()) {
        throw ConfigError("variant " + v + " samples latent '" + g.name(z) +
                          "' bottom-up and needs it to be continuous");
      }
    }
  }
  if ((config_.variant == Variant::admp_kl_tractable || config_.variant == Variant::admp_kl_intractable) &&
      lat.empty()) {
    throw ConfigError("variant " + v + " needs at least one latent variable");
  }
  try {
    if (config_.variant == Variant::elbo) require_explicit(m, m.inverse(), "variant elbo");
    if (config_.variant == Variant::admp_kl_tractable) {
      for (std::size_t o : g.observed()) {
        if (!m.generative(o).spec().explicit_density()) {
          throw std::invalid_argument("variant admp-kl-tractable needs an explicit likelihood but '" + g.name(o) +
                                      "' is an implicit sampler; use admp-kl-intractable");
        }
      }
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (config_.mask_policy == MaskPolicy::random_drop) {
    if (config_.variant != Variant::admp_jsd_loc && config_.variant != Variant::global_biadv &&
        config_.variant != Variant::elbo) {
      throw ConfigError("mask policy random-drop is supported for admp-jsdloc, global-biadv and elbo only");
    }
    for (std::size_t o : g.observed()) {
      if (g.variable(o).support.discrete()) {
        throw ConfigError("masking discrete observed variable '" + g.name(o) +
                          "' would need discrete bottom-up sampling");
      }
    }
  }
}

TrainState Trainer::initial_state() const {
  TrainState s;
  s.rng = Rng(config_.seed);
  s.theta = model_->init_generative(s.rng);
  if (uses_inference(config_.variant)) s.phi = model_->init_inference(patterns_, s.rng);
  for (const LocalAdversary& a : adversaries_) a.init(s.xi, s.rng);
  return s;
}

std::vector<std::size_t> Trainer::observed_for(const ObservationMask& mask) const {
  const auto obs = model_->graph().observed();
  if (mask.empty()) return obs;
  std::vector<std::size_t> kept;
  for (std::size_t k = 0; k < obs.size(); ++k)
    if (mask[k]) kept.push_back(obs[k]);
  if (kept.empty()) throw std::invalid_argument("every observed variable is masked for this datum");
  return kept;
}

void Trainer::draw_batch(Rng& rng, std::vector<std::size_t>& rows, std::vector<ObservationMask>& masks) const {
  rows.resize(config_.minibatch);
  for (std::size_t& r : rows) r = rng.index(data_.count);
  masks.clear();
  if (config_.mask_policy != MaskPolicy::random_drop) return;
  const std::size_t m = model_->graph().observed().size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ObservationMask mask(m);
    do {
      for (std::size_t k = 0; k < m; ++k) mask[k] = rng.uniform() >= config_.drop_probability;
    } while (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; }));
    masks.push_back(std::move(mask));
  }
}

namespace {

/// Score-function surrogate for losses whose value depends on discrete
/// top-down draws: mean((R - b) * (log p - detach(log p))), b = mean(R).
Var score_surrogate(const Model& model, Bindings& theta, const JointSample& joint,
                    const std::vector<std::size_t>& discrete, Var row_losses) {
  if (discrete.empty()) return Var();
  Var lp;
  for (std::size_t v : discrete) {
    Var t = model.factor_log_prob(theta, v, joint);
    lp = lp.valid() ? lp + t : t;
  }
  Var r = detach(row_losses);
  Var advantage = r - detach(mean(r));
  return mean(advantage * (lp - detach(lp)));
}

Var plus(Var a, Var b) { return b.valid() ? a + b : a; }

bool bernoulli_leaf(const Model& model, std::size_t v) {
  return model.graph().children(v).empty() && model.generative(v).spec().kind == FamilyKind::bernoulli;
}

/// Local-expectation surrogate for Bernoulli leaves. Each coordinate is
/// scored at both values with the rest of the row held fixed, so
/// grad = sum_j (R(x_j=1) - R(x_j=0)) * grad p_j exactly for that row.
using RowReward = std::function<Var(const JointSample&)>;

Var bernoulli_surrogate(const Model& model, Bindings& theta, const JointSample& td, std::size_t v,
                        const RowReward& reward) {
  Tape& tape = theta.tape();
  const std::size_t w = model.width(v), rows = td.rows;
  JointSample ones = td, zeros = td;
  ones.rows = zeros.rows = w * rows;
  for (std::size_t u = 0; u < td.values.size(); ++u) {
    if (!td.has(u)) continue;
    const Tensor& t = td.at(u).value();
    Tensor tiled({w * rows, t.cols()});
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t c = 0; c < t.cols(); ++c) tiled(j * rows + i, c) = t(i, c);
    if (u != v) {
      ones.values[u] = zeros.values[u] = tape.constant(tiled);
      continue;
    }
    Tensor hi = tiled, lo = tiled;
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t i = 0; i < rows; ++i) {
        hi(j * rows + i, j) = 1.0;
        lo(j * rows + i, j) = 0.0;
      }
    ones.values[u] = tape.constant(hi);
    zeros.values[u] = tape.constant(lo);
  }
  Var delta = detach(reward(ones) - reward(zeros));

  const Conditional& c = model.generative(v);
  Head h = c.head(theta, model.gather(td, model.graph().parents(v)), rows);
  Var p = sigmoid(h.logits);
  std::vector<Var> cols;
  for (std::size_t j = 0; j < w; ++j) cols.push_back(slice_cols(p, j, j + 1));
  return scale(sum(delta * concat_rows(cols)), 1.0 / static_cast<double>(rows));
}

/// Bernoulli leaves get the local-expectation surrogate, every other discrete
/// draw the score-function one.
Var discrete_surrogate(const Model& model, Bindings& theta, const JointSample& td, const RowReward& reward,
                       Var row_losses) {
  std::vector<std::size_t> scored;
  Var out;
  for (std::size_t v : td.discrete_draws) {
    if (bernoulli_leaf(model, v)) out = out.valid() ? out + bernoulli_surrogate(model, theta, td, v, reward)
                                                    : bernoulli_surrogate(model, theta, td, v, reward);
    else scored.push_back(v);
  }
  Var s = score_surrogate(model, theta, td, scored, row_losses);
  return s.valid() ? plus(s, out) : out;
}

}  // namespace

Trainer::Pass Trainer::forward(Bindings& theta, Bindings& phi, Bindings& xi, const std::vector<std::size_t>& rows,
                               const std::vector<ObservationMask>& masks, Rng& rng, std::string& where) const {
  const Model& m = *model_;
  const ModelGraph& g = m.graph();
  Tape& tape = theta.tape();
  const auto obs = g.observed();
  const std::size_t L = config_.particles_L, K = config_.particles_K;
  Pass pass;

  auto evidence_for = [&](const std::vector<std::size_t>& pick, const std::vector<std::size_t>& vars) {
    Evidence ev(g.size());
    std::vector<std::size_t> idx;
    for (std::size_t p : pick) idx.push_back(rows[p]);
    for (std::size_t v : vars) ev[v] = take_rows(data_.values[v], idx);
    return ev;
  };
  auto logits = [&](std::size_t a, Var tuple) {
    where = "adversary " + adversaries_[a].prefix();
    return adversaries_[a].logits(xi, tuple);
  };

  // bottom-up joints, one per observation pattern present in the batch
  std::vector<JointSample> bu;
  std::vector<std::pair<const InverseFactorization*, Evidence>> groups;
  if (uses_inference(config_.variant)) {
    std::map<std::vector<std::size_t>, std::vector<std::size_t>> by_pattern;
    for (std::size_t i = 0; i < rows.size(); ++i) by_pattern[masks.empty() ? obs : observed_for(masks[i])].push_back(i);
    for (const auto& [pattern, pick] : by_pattern) {
      const InverseFactorization* inv = nullptr;
      for (const auto& p : patterns_)
        if (p.observed == pattern) inv = &p;
      if (!inv) throw std::logic_error("no inverse factorization for an observation pattern");
      groups.emplace_back(inv, evidence_for(pick, pattern));
    }
    if (config_.variant != Variant::elbo) {
      for (const auto& [inv, ev] : groups) {
        where = "bottom-up sampling";
        bu.push_back(m.inference_sample(phi, *inv, ev, L, rng, m.pattern_tag(inv->observed)));
      }
    }
  }
  auto bu_gather = [&](const std::vector<std::size_t>& slots) {
    std::vector<Var> parts;
    for (const JointSample& j : bu) parts.push_back(m.gather(j, slots));
    return stack(parts);
  };
  // latents from the prior paired with the bottom-up observed values
  auto prior_paired = [&](JointSample& td) {
    where = "top-down sampling";
    td = m.ancestral_sample(theta, bu.front().rows, rng);
    JointSample paired = bu.front();
    for (std::size_t z : g.latents()) paired.values[z] = td.values[z];
    return paired;
  };

  switch (config_.variant) {
    case Variant::gan: {
      where = "top-down sampling";
      JointSample td = m.ancestral_sample(theta, K, rng);
      JointSample data;
      data.values.assign(g.size(), Var());
      data.rows = rows.size();
      std::vector<std::size_t> all(rows.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      const Evidence ev = evidence_for(all, obs);
      for (std::size_t o : obs) data.values[o] = tape.constant(ev[o]);
      const auto& slots = adversaries_[0].slots();
      pass.positive.push_back(m.gather(data, slots));
      pass.negative.push_back(m.gather(td, slots));
      Var l = logits(0, pass.negative[0]);
      Var row_loss = config_.non_saturating ? neg(log_sigmoid(l)) : log_sigmoid(neg(l));
      where = "generator loss";
      const RowReward reward = [&](const JointSample& j) {
        Var lj = logits(0, m.gather(j, slots));
        return config_.non_saturating ? neg(log_sigmoid(lj)) : log_sigmoid(neg(lj));
      };
      pass.model_loss = plus(mean(row_loss), discrete_surrogate(m, theta, td, reward, row_loss));
      break;
    }
    case Variant::global_biadv:
    case Variant::admp_jsd_loc: {
      where = "top-down sampling";
      JointSample td = m.ancestral_sample(theta, K, rng);
      std::vector<Var> lt, lb;
      Var rewards;
      for (std::size_t a = 0; a < adversaries_.size(); ++a) {
        const auto& slots = adversaries_[a].slots();
        pass.positive.push_back(m.gather(td, slots));
        pass.negative.push_back(bu_gather(slots));
        lt.push_back(logits(a, pass.positive[a]));
        lb.push_back(logits(a, pass.negative[a]));
        Var r = scale(ratio_log(lt.back(), RatioDirection::p_over_m), 0.5);
        rewards = rewards.valid() ? rewards + r : r;
      }
      where = "model loss";
      const RowReward reward = [&](const JointSample& j) {
        Var r;
        for (std::size_t a = 0; a < adversaries_.size(); ++a) {
          Var t = scale(ratio_log(logits(a, m.gather(j, adversaries_[a].slots())), RatioDirection::p_over_m), 0.5);
          r = r.valid() ? r + t : t;
        }
        return r;
      };
      pass.model_loss = plus(jsd_model_loss(lt, lb), discrete_surrogate(m, theta, td, reward, rewards));
      break;
    }
    case Variant::admp_kl_tractable: {
      JointSample td;
      JointSample paired = prior_paired(td);
      const auto& slots = adversaries_[0].slots();
      pass.positive.push_back(m.gather(paired, slots));
      pass.negative.push_back(m.gather(bu.front(), slots));
      Var lp = logits(0, pass.positive[0]);
      Var lq = logits(0, pass.negative[0]);
      where = "reconstruction";
      Var rec = mean(reconstruction_rows(m, theta, bu.front()));
      pass.model_loss = neg(rec) + mean(ratio_log(lq, RatioDirection::q_over_p)) + mean(lp);
      break;
    }
    case Variant::admp_kl_intractable: {
      JointSample td;
      JointSample paired = prior_paired(td);
      const JointSample& q = bu.front();
      JointSample rec = q;
      rec.discrete_draws.clear();
      for (std::size_t z : g.latents()) rec.values[z] = detach(q.values[z]);
      where = "reconstruction sampling";
      for (std::size_t v : g.topological_order()) {
        if (g.variable(v).role != Role::observed) continue;
        Draw d = m.sample_factor(theta, v, rec, rng);
        rec.values[v] = d.value;
        if (d.discrete) rec.discrete_draws.push_back(v);
      }
      const auto& zs = adversaries_[0].slots();
      const auto& xs = adversaries_[1].slots();
      pass.positive.push_back(m.gather(q, zs));
      pass.negative.push_back(m.gather(paired, zs));
      pass.positive.push_back(m.gather(q, xs));
      pass.negative.push_back(m.gather(rec, xs));
      Var lzq = logits(0, pass.positive[0]), lzp = logits(0, pass.negative[0]);
      Var lxq = logits(1, pass.positive[1]), lxr = logits(1, pass.negative[1]);
      where = "model loss";
      Var rec_rows = neg(lxr);
      pass.model_loss = mean(lzq) + mean(lxq) + mean(neg(lzp)) + mean(rec_rows);
      pass.model_loss = plus(pass.model_loss, score_surrogate(m, theta, rec, rec.discrete_draws, rec_rows));
      break;
    }
    case Variant::elbo: {
      std::vector<Var> parts;
      for (const auto& [inv, ev] : groups) {
        where = "elbo";
        parts.push_back(elbo_rows(m, theta, phi, *inv, ev, L, rng, m.pattern_tag(inv->observed)));
      }
      pass.model_loss = neg(mean(stack(parts)));
      break;
    }
  }
  return pass;
}

StepData Trainer::prepare(const TrainState& state, const std::vector<std::size_t>& rows,
                          const std::vector<ObservationMask>& masks, Rng& rng) const {
  const Model& m = *model_;
  auto trainable = [&m](const std::string& n) { return m.trainable(n); };
  Tape tape;
  Bindings tb(tape, state.theta, trainable), pb(tape, state.phi, trainable), xb(tape, state.xi, false);
  std::string where = "sampling";
  StepData d;
  Pass pass;
  GradientMap grads;
  try {
    pass = forward(tb, pb, xb, rows, masks, rng, where);
    where = "model loss";
    if (!std::isfinite(pass.model_loss.item())) throw NumericError("loss", "model loss is not finite");
    where = "model loss gradient";
    grads = tape.backward(pass.model_loss);
  } catch (const NumericError& e) {
    throw TrainingAborted(state.step, where, e.what());
  }
  d.model_loss = pass.model_loss.item();
  d.theta_grads = tb.gradients(grads);
  d.phi_grads = pb.gradients(grads);
  for (const auto* set : {&d.theta_grads, &d.phi_grads})
    for (const auto& [name, gt] : *set)
      if (!finite(gt)) throw TrainingAborted(state.step, "gradient of " + name, "not finite");
  for (const Var& v : pass.positive) d.positive.push_back(v.value());
  for (const Var& v : pass.negative) d.negative.push_back(v.value());
  return d;
}

std::vector<std::size_t> Trainer::adversaries_of(std::size_t factor) const {
  std::vector<std::size_t> out;
  for (std::size_t a = 0; a < adversaries_.size(); ++a)
    if (adversaries_[a].factor() == factor) out.push_back(a);
  return out;
}

void Trainer::apply(ParamSet& params, const GradSet& grads, const std::string& scope, double lr,
                    TrainState& state) const {
  if (grads.empty()) return;
  OptimizerState& opt = state.optimizers[scope];
  if (config_.use_sgd) {
    sgd_step(params, grads, opt, lr);
  } else {
    AdamConfig cfg;
    cfg.learning_rate = lr;
    adam_step(params, grads, opt, cfg);
  }
}

void Trainer::update_factor(TrainState& state, std::size_t factor, const StepData& data) const {
  const std::string name = model_->graph().name(factor);
  for (std::size_t a : adversaries_of(factor)) {
    const LocalAdversary& adv = adversaries_[a];
    for (std::size_t k = 0; k < config_.n_d; ++k) {
      Tape tape;
      Bindings xb(tape, state.xi, [&adv](const std::string& n) { return starts_with(n, adv.prefix() + "/"); });
      Var loss;
      GradientMap gm;
      try {
        loss = loss_locD(adv.logits(xb, tape.constant(data.positive[a])), adv.logits(xb, tape.constant(data.negative[a])));
        gm = tape.backward(loss);
      } catch (const NumericError& e) {
        throw TrainingAborted(state.step, "adversary " + adv.prefix(), e.what());
      }
      if (!std::isfinite(loss.item())) throw TrainingAborted(state.step, "adversary " + adv.prefix(), "loss is not finite");
      apply(state.xi, subset(xb.gradients(gm), adv.prefix() + "/"), adv.prefix(), config_.lr_xi, state);
    }
  }
  apply(state.theta, subset(data.theta_grads, "theta/" + name + "/"), "theta/" + name, config_.lr_theta, state);
  GradSet phi;
  const std::string q = "phi/q_" + name;
  for (const auto& [n, g] : data.phi_grads)
    if (starts_with(n, q + "/") || starts_with(n, q + "@")) phi[n] = g;
  apply(state.phi, phi, q, config_.lr_phi, state);
}

void Trainer::step(TrainState& state) const {
  std::vector<std::size_t> rows;
  std::vector<ObservationMask> masks;
  draw_batch(state.rng, rows, masks);
  const StepData d = prepare(state, rows, masks, state.rng);
  for (std::size_t v : model_->graph().topological_order()) update_factor(state, v, d);
  ++state.step;
}

void Trainer::run(TrainState& state, std::size_t iterations, const Sink& sink) const {
  if (sink && state.step == 0) sink(metrics(state));
  for (std::size_t i = 0; i < iterations; ++i) {
    step(state);
    if (sink && config_.metrics_every > 0 && state.step % config_.metrics_every == 0) sink(metrics(state));
  }
}

Trainer::GroupLoss Trainer::group_loss(const TrainState& state, const std::string& group, std::uint64_t seed,
                                       DetachLog* detach_log) const {
  if (group != "theta" && group != "phi" && group != "xi") throw std::invalid_argument("unknown group '" + group + "'");
  const Model& m = *model_;
  auto only = [&m](bool on) {
    return [&m, on](const std::string& n) { return on && m.trainable(n); };
  };
  Rng rng(seed);
  std::vector<std::size_t> rows;
  std::vector<ObservationMask> masks;
  draw_batch(rng, rows, masks);
  Tape tape;
  tape.set_detach_log(detach_log);
  Bindings tb(tape, state.theta, only(group == "theta")), pb(tape, state.phi, only(group == "phi"));
  Bindings xb(tape, state.xi, group == "xi");
  std::string where;
  Pass pass = forward(tb, pb, xb, rows, masks, rng, where);
  Var loss = pass.model_loss;
  if (group == "xi") {
    loss = Var();
    for (std::size_t a = 0; a < adversaries_.size(); ++a) {
      Var l = loss_locD(adversaries_[a].logits(xb, pass.positive[a]), adversaries_[a].logits(xb, pass.negative[a]));
      loss = loss.valid() ? loss + l : l;
    }
  }
  GroupLoss out;
  if (!loss.valid()) return out;
  out.value = loss.item();
  const GradientMap gm = tape.backward(loss);
  out.grads = group == "theta" ? tb.gradients(gm) : group == "phi" ? pb.gradients(gm) : xb.gradients(gm);
  return out;
}

nlohmann::json Trainer::metrics(const TrainState& state) const {
  const Model& m = *model_;
  const ModelGraph& g = m.graph();
  Rng rng(config_.seed ^ (0x9E3779B97F4A7C15ULL * (state.step + 1)));
  std::vector<std::size_t> rows;
  std::vector<ObservationMask> masks;
  draw_batch(rng, rows, masks);
  Tape tape;
  Bindings tb(tape, state.theta, false), pb(tape, state.phi, false), xb(tape, state.xi, false);
  std::string where;
  nlohmann::json rec;
  rec["step"] = state.step;
  rec["variant"] = to_string(config_.variant);
  try {
    Pass pass = forward(tb, pb, xb, rows, masks, rng, where);
    rec["model_loss"] = pass.model_loss.item();
    nlohmann::json advs = nlohmann::json::object();
    for (std::size_t a = 0; a < adversaries_.size(); ++a) {
      Var lp = adversaries_[a].logits(xb, pass.positive[a]);
      Var ln = adversaries_[a].logits(xb, pass.negative[a]);
      advs[adversaries_[a].prefix()] = {{"loss", loss_locD(lp, ln).item()},
                                        {"d_positive", mean(sigmoid(lp)).item()},
                                        {"d_negative", mean(sigmoid(ln)).item()}};
    }
    rec["adversaries"] = advs;
    if (config_.variant == Variant::admp_jsd_loc || config_.variant == Variant::global_biadv) {
      rec["div_loc"] = pass.model_loss.item() + static_cast<double>(adversaries_.size()) * std::numbers::ln2;
    }
    where = "metric samples";
    const auto obs = g.observed();
    JointSample td = m.ancestral_sample(tb, config_.metric_samples, rng);
    Tensor model_x = m.gather(td, obs).value();
    std::vector<std::size_t> pick(config_.metric_samples);
    for (std::size_t& p : pick) p = rng.index(data_.count);
    Tensor data_x({pick.size(), model_x.cols()});
    for (std::size_t i = 0; i < pick.size(); ++i) {
      std::size_t c = 0;
      for (std::size_t o : obs)
        for (std::size_t j = 0; j < data_.values[o].cols(); ++j) data_x(i, c++) = data_.values[o](pick[i], j);
    }
    rec["mmd2"] = mmd_rbf(model_x, data_x, mmd_bandwidth_);
  } catch (const NumericError& e) {
    throw TrainingAborted(state.step, where, e.what());
  }
  if (m.spec().oracle && uses_inference(config_.variant)) {
    const RecoveryReport r = posterior_recovery_report(m, state.theta, state.phi, rng.next_u64(), config_.metric_samples);
    rec["oracle_kl"] = r.mean_kl;
    rec["oracle_max_kl"] = r.max_kl;
    rec["oracle_max_rel_mean_error"] = r.max_rel_mean_error;
  }
  return rec;
}

// ---- datasets ----

namespace {

Tensor mixture2d(std::size_t n, Rng& rng) {
  Tensor out({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(rng.index(8)) / 8.0;
    out(i, 0) = 2.0 * std::cos(angle) + 0.25 * rng.normal();
    out(i, 1) = 2.0 * std::sin(angle) + 0.25 * rng.normal();
  }
  return out;
}

// 4x4 glyphs: vertical bar, horizontal bar, diagonal, frame
constexpr const char* kGlyphs[] = {
    "0110011001100110",
    "0000111111110000",
    "1000010000100001",
    "1111100110011111",
};

Tensor minidigits(std::size_t n, Rng& rng) {
  Tensor out({n, 16});
  for (std::size_t i = 0; i < n; ++i) {
    const char* glyph = kGlyphs[rng.index(4)];
    for (std::size_t j = 0; j < 16; ++j) {
      const double p = glyph[j] == '1' ? 0.95 : 0.05;
      out(i, j) = rng.uniform() < p ? 1.0 : 0.0;
    }
  }
  return out;
}

Tensor read_csv(const std::string& path, std::size_t width) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open data file '" + path + "'");
  std::vector<double> values;
  std::string line;
  std::size_t rows = 0, lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (rows == 0 && values.empty()) continue;  // header
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": non-numeric value");
    }
    if (row.size() != width) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(width) +
                               " columns, got " + std::to_string(row.size()));
    }
    values.insert(values.end(), row.begin(), row.end());
    ++rows;
  }
  return Tensor({rows, width}, std::move(values));
}

}  // namespace

Dataset load_dataset(const Model& model, const std::string& base_dir) {
  const DataSpec& spec = model.spec().data;
  const ModelGraph& g = model.graph();
  const auto obs = g.observed();
  Dataset d;
  d.values.assign(g.size(), Tensor());
  Rng rng(spec.seed);
  auto single = [&](std::size_t width, const std::string& what) {
    if (obs.size() != 1 || model.width(obs[0]) != width) {
      throw ConfigError("data source " + what + " needs exactly one observed variable of width " +
                        std::to_string(width));
    }
    return obs[0];
  };
  if (spec.source == "self") {
    const ParamSet theta = model.init_generative(rng);
    Tape tape;
    Bindings b(tape, theta, false);
    const JointSample j = model.ancestral_sample(b, spec.count, rng);
    for (std::size_t o : obs) d.values[o] = j.at(o).value();
  } else if (spec.source == "mixture2d") {
    d.values[single(2, "mixture2d")] = mixture2d(spec.count, rng);
  } else if (spec.source == "minidigits") {
    const std::size_t o = single(16, "minidigits");
    if (g.variable(o).support.kind != Support::Kind::binary) throw ConfigError("minidigits data is binary");
    d.values[o] = minidigits(spec.count, rng);
  } else if (spec.source == "csv") {
    std::filesystem::path p(spec.path);
    if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
    const Tensor all = read_csv(p.string(), model.width(obs));
    std::size_t col = 0;
    for (std::size_t o : obs) {
      Tensor t({all.rows(), model.width(o)});
      for (std::size_t i = 0; i < all.rows(); ++i)
        for (std::size_t j = 0; j < t.cols(); ++j) t(i, j) = all(i, col + j);
      col += t.cols();
      check_support(g.variable(o), t);
      d.values[o] = std::move(t);
    }
  } else {
    throw ConfigError("unknown data source '" + spec.source + "'");
  }
  d.count = d.values[obs.front()].rows();
  return d;
}

}  // namespace admp
