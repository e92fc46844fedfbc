// Command-line front end: train, eval, graph, gradcheck, compare.
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "admp/checkpoint.hpp"
#include "admp/experiments.hpp"
#include "admp/oracle.hpp"
#include "admp/spec_file.hpp"

#ifndef ADMP_BUILD_ID
#define ADMP_BUILD_ID "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace admp;

namespace {

constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;
constexpr int kExitAbort = 3;

struct Options {
  std::string spec;
  std::string variant = "admp-jsdloc";
  std::size_t iters = 1000;
  std::uint64_t seed = 1;
  std::size_t minibatch = 64;
  std::size_t particles_L = 1;
  std::size_t particles_K = 64;
  std::size_t nd = 1;
  double lr_theta = 1e-3, lr_phi = 1e-3, lr_xi = 1e-3;
  std::string out = "run";
  std::string observed;
  bool observed_given = false;
  std::string mask_policy = "none";
  std::size_t metrics_every = 100;
  bool non_saturating = false;
  bool sgd = false;
  std::string resume;
  std::string checkpoint;
  std::string variants = "gan,global-biadv,admp-jsdloc,admp-kl-tractable";
  std::string seeds = "1";
  std::size_t coords = 6;
  std::string wrong_sign;
  std::string dot;
};

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void add_training_flags(CLI::App* app, Options& o) {
  app->add_option("--variant", o.variant, "objective variant");
  app->add_option("--iters", o.iters, "iterations");
  app->add_option("--seed", o.seed, "random seed");
  app->add_option("--minibatch", o.minibatch, "minibatch size");
  app->add_option("--particles-L", o.particles_L, "bottom-up particles per datum");
  app->add_option("--particles-K", o.particles_K, "top-down samples per step");
  app->add_option("--nd", o.nd, "adversary steps per generator step");
  app->add_option("--lr-theta", o.lr_theta, "generative learning rate");
  app->add_option("--lr-phi", o.lr_phi, "inference learning rate");
  app->add_option("--lr-xi", o.lr_xi, "adversary learning rate");
  app->add_option("--mask-policy", o.mask_policy, "none | random-drop");
  app->add_option("--metrics-every", o.metrics_every, "steps between metrics records");
  app->add_flag("--non-saturating", o.non_saturating, "non-saturating generator loss (gan)");
  app->add_flag("--sgd", o.sgd, "plain gradient descent instead of Adam");
}

TrainConfig make_config(const Options& o) {
  TrainConfig c;
  c.variant = parse_variant(o.variant);
  c.iterations = o.iters;
  c.seed = o.seed;
  c.minibatch = o.minibatch;
  c.particles_L = o.particles_L;
  c.particles_K = o.particles_K;
  c.n_d = o.nd;
  c.lr_theta = o.lr_theta;
  c.lr_phi = o.lr_phi;
  c.lr_xi = o.lr_xi;
  c.mask_policy = parse_mask_policy(o.mask_policy);
  c.metrics_every = o.metrics_every;
  c.non_saturating = o.non_saturating;
  c.use_sgd = o.sgd;
  c.validate();
  return c;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string base_dir(const std::string& spec_path) {
  const fs::path p = fs::path(spec_path).parent_path();
  return p.empty() ? "." : p.string();
}

int cmd_train(const Options& o) {
  const ModelSpec spec = load_model_spec(o.spec);
  const Model model(spec);
  const TrainConfig config = make_config(o);
  const Dataset data = load_dataset(model, base_dir(o.spec));
  const Trainer trainer(model, config, data);
  fs::create_directories(o.out);

  json manifest = {{"spec_path", o.spec},
                   {"spec_text", read_file(o.spec)},
                   {"spec_hash", spec_hash(spec)},
                   {"config", to_json(config)},
                   {"out", o.out},
                   {"resume", o.resume},
                   {"build_id", ADMP_BUILD_ID}};
  std::ofstream(fs::path(o.out) / "manifest.json") << manifest.dump(2) << '\n';

  TrainState state = trainer.initial_state();
  if (!o.resume.empty()) {
    CheckpointMeta meta;
    TrainState loaded = load_checkpoint(o.resume, &meta);
    if (meta.variant != to_string(config.variant)) {
      std::cerr << "error: checkpoint was written by variant " << meta.variant << '\n';
      return kExitUsage;
    }
    std::vector<std::string> bad = shape_mismatches(state.theta, loaded.theta);
    auto more = shape_mismatches(state.phi, loaded.phi);
    bad.insert(bad.end(), more.begin(), more.end());
    more = shape_mismatches(state.xi, loaded.xi);
    bad.insert(bad.end(), more.begin(), more.end());
    if (!bad.empty()) {
      std::cerr << "error: checkpoint does not match the spec; offending parameters:";
      for (const auto& n : bad) std::cerr << ' ' << n;
      std::cerr << '\n';
      return kExitUsage;
    }
    state = std::move(loaded);
  }

  std::ofstream metrics(fs::path(o.out) / "metrics.jsonl", o.resume.empty() ? std::ios::trunc : std::ios::app);
  if (o.resume.empty()) {
    metrics << json{{"type", "header"}, {"variant", to_string(config.variant)}, {"spec_hash", spec_hash(spec)},
                    {"seed", config.seed}}
                   .dump()
            << '\n';
  }
  const CheckpointMeta meta{to_string(config.variant), spec_hash(spec)};
  int code = 0;
  if (config.iterations > 0) {
    try {
      trainer.run(state, config.iterations, [&](const json& rec) { metrics << rec.dump() << '\n'; });
    } catch (const TrainingAborted& e) {
      std::cerr << "aborted: " << e.what() << '\n';
      save_checkpoint((fs::path(o.out) / "aborted.admp").string(), state, meta);
      code = kExitAbort;
    }
  }
  metrics.flush();
  save_checkpoint((fs::path(o.out) / "final.admp").string(), state, meta);
  if (code == 0) std::cout << "trained " << state.step << " steps; outputs in " << o.out << '\n';
  return code;
}

int cmd_eval(const Options& o) {
  const ModelSpec spec = load_model_spec(o.spec);
  const Model model(spec);
  CheckpointMeta meta;
  const TrainState state = load_checkpoint(o.checkpoint, &meta);
  TrainConfig config;
  config.variant = parse_variant(meta.variant);
  const Dataset data = load_dataset(model, base_dir(o.spec));
  const Trainer trainer(model, config, data);
  const TrainState expected = trainer.initial_state();
  std::vector<std::string> bad = shape_mismatches(expected.theta, state.theta);
  auto more = shape_mismatches(expected.phi, state.phi);
  bad.insert(bad.end(), more.begin(), more.end());
  if (!bad.empty()) {
    std::cerr << "error: checkpoint parameters do not match the spec:";
    for (const auto& n : bad) std::cerr << ' ' << n;
    std::cerr << '\n';
    return kExitUsage;
  }
  fs::create_directories(o.out);
  json report = {{"checkpoint", o.checkpoint}, {"variant", meta.variant}, {"step", state.step}};

  TrainState probe = expected;
  probe.theta = state.theta;
  probe.phi = state.phi;
  probe.xi = state.xi;
  probe.step = state.step;
  report["mmd2"] = trainer.metrics(probe).at("mmd2");

  if (model.spec().oracle && !state.phi.empty()) {
    const RecoveryReport r = posterior_recovery_report(model, state.theta, state.phi, o.seed);
    json rows = json::array();
    std::ofstream csv(fs::path(o.out) / "posterior.csv");
    csv << "x,oracle_mean,oracle_std,q_mean,q_std,kl,mmd2\n" << std::setprecision(10);
    for (const RecoveryRow& row : r.rows) {
      rows.push_back({{"x", row.x},
                      {"oracle_mean", row.oracle_mean},
                      {"oracle_std", row.oracle_std},
                      {"q_mean", row.q_mean},
                      {"q_std", row.q_std},
                      {"kl", row.kl},
                      {"mmd2", row.mmd2}});
      csv << row.x << ',' << row.oracle_mean << ',' << row.oracle_std << ',' << row.q_mean << ',' << row.q_std << ','
          << row.kl << ',' << row.mmd2 << '\n';
    }
    report["posterior"] = rows;
    report["mean_kl"] = r.mean_kl;
    report["max_kl"] = r.max_kl;
    report["max_rel_mean_error"] = r.max_rel_mean_error;
  }

  // model samples for plotting
  {
    Tape tape;
    Bindings b(tape, state.theta, false);
    Rng rng(o.seed);
    const JointSample j = model.ancestral_sample(b, 1000, rng);
    std::ofstream csv(fs::path(o.out) / "samples.csv");
    const ModelGraph& g = model.graph();
    for (std::size_t v = 0; v < g.size(); ++v)
      for (std::size_t c = 0; c < model.width(v); ++c) csv << (v || c ? "," : "") << g.name(v) << '_' << c;
    csv << '\n' << std::setprecision(10);
    for (std::size_t i = 0; i < j.rows; ++i) {
      bool first = true;
      for (std::size_t v = 0; v < g.size(); ++v) {
        const Tensor& t = j.at(v).value();
        for (std::size_t c = 0; c < t.cols(); ++c) {
          csv << (first ? "" : ",") << t(i, c);
          first = false;
        }
      }
      csv << '\n';
    }
  }
  std::ofstream(fs::path(o.out) / "report.json") << report.dump(2) << '\n';
  std::cout << report.dump(2) << '\n';
  return 0;
}

int cmd_graph(const Options& o) {
  const ModelSpec spec = load_model_spec(o.spec);
  const Model model(spec);
  const ModelGraph& g = model.graph();
  std::vector<std::size_t> observed = g.observed();
  if (o.observed_given) {
    observed.clear();
    for (const std::string& n : split(o.observed)) {
      const auto idx = g.find(n);
      if (!idx) {
        std::cerr << "error: unknown observed variable '" << n << "'\n";
        return kExitUsage;
      }
      observed.push_back(*idx);
    }
    std::sort(observed.begin(), observed.end());
    observed.erase(std::unique(observed.begin(), observed.end()), observed.end());
  }
  const InverseFactorization inv = model.inverse_for(observed);
  for (const std::string& w : inv.warnings) std::cout << "warning: " << w << '\n';
  std::cout << describe(g, inv) << '\n';
  const auto failing = verify_inverse(g, inv);
  std::cout << "\nvariable  given  d-separated\n";
  for (const InverseFactor& f : inv.factors) {
    std::string given;
    for (std::size_t v : f.given) given += (given.empty() ? "" : ",") + g.name(v);
    const bool ok = std::find(failing.begin(), failing.end(), g.name(f.var)) == failing.end();
    std::cout << g.name(f.var) << "  {" << given << "}  " << (ok ? "yes" : "no") << '\n';
  }
  const std::string dot = to_dot(g, inv);
  if (!o.dot.empty()) {
    std::ofstream(o.dot) << dot;
  } else {
    std::cout << '\n' << dot;
  }
  return 0;
}

int cmd_gradcheck(const Options& o) {
  const ModelSpec spec = load_model_spec(o.spec);
  const Model model(spec);
  const Dataset data = load_dataset(model, base_dir(o.spec));
  std::vector<Variant> variants;
  if (o.variant == "all") variants = all_variants();
  else variants.push_back(parse_variant(o.variant));
  bool ok = true;
  std::cout << std::left << std::setw(22) << "variant" << std::setw(7) << "group" << std::setw(7) << "status"
            << std::setw(14) << "max_rel_err" << "worst\n";
  for (Variant v : variants) {
    Options opt = o;
    opt.variant = to_string(v);
    TrainConfig config = make_config(opt);
    config.minibatch = std::min<std::size_t>(config.minibatch, 16);
    config.particles_K = std::min<std::size_t>(config.particles_K, 16);
    std::unique_ptr<Trainer> trainer;
    try {
      trainer = std::make_unique<Trainer>(model, config, data);
    } catch (const ConfigError& e) {
      std::cout << std::setw(22) << to_string(v) << "skipped: " << e.what() << '\n';
      continue;
    }
    for (const GradcheckRow& r : run_gradcheck(*trainer, o.seed, o.coords, o.wrong_sign)) {
      std::ostringstream err;
      if (r.status != "n/a") err << std::scientific << std::setprecision(2) << r.max_rel_error;
      std::cout << std::setw(22) << to_string(v) << std::setw(7) << r.group << std::setw(7) << r.status
                << std::setw(14) << (r.status == "n/a" ? "-" : err.str()) << r.worst << '\n';
      ok = ok && r.status != "fail";
    }
  }
  std::cout << (ok ? "gradcheck passed" : "gradcheck FAILED") << '\n';
  return ok ? 0 : kExitFail;
}

int cmd_compare(const Options& o) {
  const ModelSpec spec = load_model_spec(o.spec);
  const Model model(spec);
  const Dataset data = load_dataset(model, base_dir(o.spec));
  const TrainConfig base = make_config(o);
  std::vector<Variant> variants;
  for (const auto& n : split(o.variants)) variants.push_back(parse_variant(n));
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split(o.seeds)) seeds.push_back(std::stoull(s));
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("ADMP_THREADS")) threads = std::max<std::size_t>(1, std::strtoull(env, nullptr, 10));
  const auto cells = run_compare(model, data, base, variants, seeds, threads);
  fs::create_directories(o.out);
  std::ofstream csv(fs::path(o.out) / "compare.csv");
  csv << "variant,seed,status,oracle_kl,mmd2,wall_seconds,config_hash,note\n";
  std::cout << std::left << std::setw(22) << "variant" << std::setw(6) << "seed" << std::setw(9) << "status"
            << std::setw(12) << "oracle_kl" << std::setw(12) << "mmd2" << "seconds\n";
  for (const CompareCell& c : cells) {
    std::string note = c.note;
    std::replace(note.begin(), note.end(), ',', ';');
    csv << to_string(c.variant) << ',' << c.seed << ',' << c.status << ','
        << (c.has_oracle ? std::to_string(c.oracle_kl) : "") << ',' << (c.status == "ok" ? std::to_string(c.mmd2) : "")
        << ',' << c.wall_seconds << ',' << c.config_hash << ',' << note << '\n';
    std::cout << std::setw(22) << to_string(c.variant) << std::setw(6) << c.seed << std::setw(9) << c.status
              << std::setw(12) << (c.has_oracle ? std::to_string(c.oracle_kl) : "-") << std::setw(12)
              << (c.status == "ok" ? std::to_string(c.mmd2) : "-") << std::fixed << std::setprecision(2)
              << c.wall_seconds << std::defaultfloat << (note.empty() ? "" : "  " + note) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial message passing for directed graphical models"};
  app.require_subcommand(1);
  Options o;

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--spec", o.spec, "model spec file")->required();
  add_training_flags(train, o);
  train->add_option("--out", o.out, "output directory");
  train->add_option("--resume", o.resume, "continue from a checkpoint");

  auto* eval = app.add_subcommand("eval", "posterior-recovery report for a checkpoint");
  eval->add_option("--spec", o.spec, "model spec file")->required();
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  eval->add_option("--out", o.out, "output directory");
  eval->add_option("--seed", o.seed, "random seed");

  auto* graph = app.add_subcommand("graph", "print the inverse factorization");
  graph->add_option("--spec", o.spec, "model spec file")->required();
  graph->add_option("--observed", o.observed, "comma-separated observed variables");
  graph->add_option("--dot", o.dot, "write the dot export here instead of stdout");

  auto* gradcheck = app.add_subcommand("gradcheck", "compare backward gradients with finite differences");
  gradcheck->add_option("--spec", o.spec, "model spec file")->required();
  add_training_flags(gradcheck, o);
  gradcheck->add_option("--coords", o.coords, "coordinates probed per tensor");
  gradcheck->add_option("--inject-wrong-sign", o.wrong_sign, "flip one group's gradient (test hook)");

  auto* compare = app.add_subcommand("compare", "train several variants and seeds");
  compare->add_option("--spec", o.spec, "model spec file")->required();
  add_training_flags(compare, o);
  compare->add_option("--variants", o.variants, "comma-separated variants");
  compare->add_option("--seeds", o.seeds, "comma-separated seeds");
  compare->add_option("--out", o.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  o.observed_given = graph->count("--observed") > 0;

  try {
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*graph) return cmd_graph(o);
    if (*gradcheck) return cmd_gradcheck(o);
    if (*compare) return cmd_compare(o);
  } catch (const SpecError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const TrainingAborted& e) {
    std::cerr << "aborted: " << e.what() << '\n';
    return kExitAbort;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFail;
  }
  return kExitUsage;
}
