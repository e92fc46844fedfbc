#include "admp/experiments.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <thread>

#include "admp/gradcheck.hpp"
#include "admp/oracle.hpp"

namespace admp {

std::vector<GradcheckRow> run_gradcheck(const Trainer& trainer, std::uint64_t seed, std::size_t coords,
                                        const std::string& wrong_sign_group) {
  const TrainState base = trainer.initial_state();
  std::vector<GradcheckRow> rows;
  for (const std::string group : {"theta", "phi", "xi"}) {
    GradcheckRow row;
    row.group = group;
    const ParamSet& params = group == "theta" ? base.theta : group == "phi" ? base.phi : base.xi;
    DetachLog log;
    Trainer::GroupLoss analytic;
    if (!params.empty()) analytic = trainer.group_loss(base, group, seed, &log);
    if (params.empty() || analytic.grads.empty()) {
      row.status = "n/a";
      rows.push_back(row);
      continue;
    }
    if (group == wrong_sign_group) {
      for (auto& [name, g] : analytic.grads)
        for (double& v : g.values()) v = -v;
    }
    ParamSet probe;
    for (const auto& [name, g] : analytic.grads) probe[name] = params.at(name);
    const LossFn loss = [&](const ParamSet& p) {
      TrainState s = base;
      ParamSet& target = group == "theta" ? s.theta : group == "phi" ? s.phi : s.xi;
      for (const auto& [name, t] : p) target[name] = t;
      log.replay = true;
      log.cursor = 0;
      return trainer.group_loss(s, group, seed, &log).value;
    };
    const auto entries = check_gradients(loss, probe, analytic.grads, 1e-5, coords);
    for (const auto& e : entries) {
      row.checked += e.checked;
      if (e.max_rel_error >= row.max_rel_error) {
        row.max_rel_error = e.max_rel_error;
        row.worst = e.name;
      }
    }
    row.status = row.max_rel_error < kGradcheckTolerance ? "pass" : "fail";
    rows.push_back(row);
  }
  return rows;
}

bool gradcheck_passed(const std::vector<GradcheckRow>& rows) {
  for (const auto& r : rows)
    if (r.status == "fail") return false;
  return true;
}

std::string config_hash(const TrainConfig& config) {
  nlohmann::json j = to_json(config);
  j.erase("seed");
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

CompareCell run_cell(const Model& model, const Dataset& data, TrainConfig config) {
  CompareCell cell;
  cell.variant = config.variant;
  cell.seed = config.seed;
  cell.config_hash = config_hash(config);
  const auto start = std::chrono::steady_clock::now();
  try {
    Trainer trainer(model, config, data);
    TrainState state = trainer.initial_state();
    trainer.run(state, config.iterations, nullptr);
    const nlohmann::json m = trainer.metrics(state);
    cell.mmd2 = m.at("mmd2").get<double>();
    if (m.contains("oracle_kl")) {
      cell.has_oracle = true;
      cell.oracle_kl = posterior_recovery_report(model, state.theta, state.phi, config.seed).mean_kl;
    }
    cell.status = "ok";
  } catch (const ConfigError& e) {
    cell.status = "skipped";
    cell.note = e.what();
  } catch (const TrainingAborted& e) {
    cell.status = "aborted";
    cell.note = e.what();
  }
  cell.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return cell;
}

}  // namespace

std::vector<CompareCell> run_compare(const Model& model, const Dataset& data, const TrainConfig& base,
                                     const std::vector<Variant>& variants, const std::vector<std::uint64_t>& seeds,
                                     std::size_t threads) {
  std::vector<TrainConfig> jobs;
  for (Variant v : variants)
    for (std::uint64_t s : seeds) {
      TrainConfig c = base;
      c.variant = v;
      c.seed = s;
      jobs.push_back(c);
    }
  std::vector<CompareCell> cells(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) cells[i] = run_cell(model, data, jobs[i]);
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(threads, jobs.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return cells;
}

}  // namespace admp
