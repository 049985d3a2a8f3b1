#pragma once

// Subcommand implementations behind the traceguard CLI. Each returns a
// process exit code and writes results to `out`, diagnostics to `err`.

#include <cstddef>
#include <cstdint>
#include <exception>
#include <fstream>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "traceguard/anchor_poisoner.hpp"
#include "traceguard/detectability.hpp"
#include "traceguard/errors.hpp"
#include "traceguard/game_solver.hpp"
#include "traceguard/logit_sim.hpp"
#include "traceguard/report.hpp"
#include "traceguard/synth.hpp"
#include "traceguard/trace_model.hpp"

namespace traceguard::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kConstraint = 3 };

inline constexpr const char* kSeedEnv = "TRACEGUARD_SEED";

struct PoisonConfig {
  std::string input;
  std::string output;
  std::string method = "traceguard";
  std::size_t k = 0;
  std::optional<std::string> markers_file;
  std::uint64_t seed = 0;
  bool match_traceguard = false;
  unsigned threads = 1;
};

struct ReportConfig {
  std::vector<std::string> inputs;
  char delimiter = ',';
};

struct DetectConfig {
  std::size_t vocab = 2;
  double sigma2 = 0.0;
  std::uint64_t samples = 100000;
  std::uint64_t seed = 0;
  std::string convention = "total_norm";
  std::vector<double> logits;  // empty: draw N(0, logit_scale^2) logits from the seed
  double logit_scale = 1.0;
  unsigned threads = 1;
};

struct GaussianConfig {
  std::optional<std::string> table_file;  // absent: random Markov teacher
  std::size_t vocab = 8;
  std::size_t length = 64;
  double logit_scale = 3.0;
  double eta = 1.0;
  std::size_t k = 4;
  double sigma2 = 0.5;
  std::string convention = "total_norm";
  std::uint64_t seed = 0;
  std::size_t trials = 1000;
  bool greedy = false;
  std::vector<std::size_t> protect;
};

struct GameConfig {
  std::string mode = "robust";
  std::string instance;
  std::optional<std::string> class_name;
};

struct SynthConfig {
  std::size_t traces = 100;
  std::uint64_t seed = 0;
  double branching_probability = 0.2;
  std::size_t min_sentences = 3;
  std::size_t max_sentences = 30;
  std::string output;
};

// Maps library exceptions onto the exit-code contract.
template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ConstraintError& e) {
    err << "error: " << e.what() << '\n';
    return kConstraint;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  }
}

inline int run_poison(const PoisonConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    CorpusPoisonOptions opt;
    if (cfg.method != "traceguard" && cfg.method != "random" && cfg.method != "gaussian") {
      throw std::invalid_argument("unknown --method '" + cfg.method + "'");
    }
    opt.method = parse_poison_method(cfg.method);
    if (opt.method == PoisonMethod::gaussian) {
      throw std::invalid_argument("poison supports --method traceguard|random; use the gaussian subcommand for logits");
    }
    if (cfg.match_traceguard && opt.method != PoisonMethod::random) {
      throw std::invalid_argument("--match-traceguard requires --method random");
    }
    opt.budget = cfg.k;
    opt.seed = cfg.seed;
    opt.match_traceguard = cfg.match_traceguard;
    opt.threads = cfg.threads;
    if (cfg.markers_file) opt.markers = load_branching_set(*cfg.markers_file);
    const auto corpus = load_corpus(cfg.input);
    const auto poisoned = poison_corpus(corpus, opt);
    save_corpus(poisoned, cfg.output);
    const auto s = summarize(poisoned);
    out << "traces=" << s.traces << " sentences_removed=" << s.sentences_removed
        << " tokens_removed=" << s.tokens_removed << " method=" << cfg.method << " k=" << cfg.k
        << " seed=" << cfg.seed << '\n';
    return kOk;
  });
}

inline int run_report(const ReportConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    std::vector<ReasoningTrace> all;
    for (const auto& path : cfg.inputs) {
      auto part = load_corpus(path);
      all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    write_report(aggregate_reports(all), out, cfg.delimiter);
    return kOk;
  });
}

inline int run_detect(const DetectConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const NoiseConvention conv = parse_noise_convention(cfg.convention);
    std::vector<double> z = cfg.logits;
    if (z.empty()) {
      if (cfg.vocab == 0) throw std::invalid_argument("--vocab must be positive");
      Rng rng(derive_seed(cfg.seed, 0x6c6f67697473ULL));
      std::normal_distribution<double> normal(0.0, cfg.logit_scale);
      z.resize(cfg.vocab);
      for (double& v : z) v = normal(rng);
    } else if (cfg.vocab != 0 && cfg.vocab != z.size()) {
      throw std::invalid_argument("--vocab disagrees with the number of --logits");
    }
    const KlEstimate est = monte_carlo_expected_kl(z, cfg.sigma2, conv, cfg.samples, cfg.seed, cfg.threads);
    Json j;
    j["mean"] = est.mean;
    j["std_error"] = est.std_error;
    j["samples"] = est.samples;
    j["bound"] = est.bound;
    j["satisfied"] = est.bound_satisfied;
    j["seed"] = cfg.seed;
    j["vocab"] = z.size();
    j["sigma2"] = cfg.sigma2;
    j["convention"] = std::string(to_string(conv));
    j["logits"] = z;
    if (cfg.logits.empty()) j["logit_scale"] = cfg.logit_scale;
    out << j.dump() << '\n';
    return kOk;
  });
}

inline int run_gaussian(const GaussianConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    ConstraintParams p;
    p.eta = cfg.eta;
    p.k = cfg.k;
    p.sigma2 = cfg.sigma2;
    p.convention = parse_noise_convention(cfg.convention);
    p.protected_positions = std::set<std::size_t>(cfg.protect.begin(), cfg.protect.end());
    require_valid(p);
    const LogitTable table =
        cfg.table_file ? load_logit_table(*cfg.table_file)
                       : MarkovTeacher::random(cfg.vocab, cfg.logit_scale, derive_seed(cfg.seed, 1))
                             .generate(cfg.length, derive_seed(cfg.seed, 2));
    const Resampling mode = cfg.greedy ? Resampling::greedy : Resampling::sample;
    const auto mask = sample_mask(table.length(), p, derive_seed(cfg.seed, 3));
    const auto example = perturb_and_resample(table, mask, p, derive_seed(cfg.seed, 4), mode);
    const double flip = token_flip_rate(table, p, cfg.trials, derive_seed(cfg.seed, 5), mode);

    Json params;
    params["eta"] = p.eta;
    params["k"] = p.k;
    params["sigma2"] = p.sigma2;
    params["convention"] = std::string(to_string(p.convention));
    params["protected_positions"] = cfg.protect;
    params["trials"] = cfg.trials;
    params["resampling"] = cfg.greedy ? "greedy" : "sample";
    params["table"] = cfg.table_file ? Json(*cfg.table_file) : Json(nullptr);
    params["vocab"] = table.vocab();
    params["length"] = table.length();
    if (!cfg.table_file) params["logit_scale"] = cfg.logit_scale;

    Json j;
    j["seed"] = cfg.seed;
    j["params"] = params;
    j["flip_rate"] = flip;
    j["detectability_bound"] =
        static_cast<double>(p.k) * expected_noise_norm2(p.sigma2, table.vocab(), p.convention) / 2.0;
    j["eta"] = p.eta;
    Json ex;
    ex["mask"] = example.mask;
    ex["original_tokens"] = example.original_tokens;
    ex["perturbed_tokens"] = example.perturbed_tokens;
    j["example"] = ex;
    out << j.dump() << '\n';
    return kOk;
  });
}

inline int run_game(const GameConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const GameInstance g = load_game_instance(cfg.instance);
    Json j;
    j["mode"] = cfg.mode;
    if (cfg.mode == "robust") {
      j.update(equilibrium_to_json(g, robust_value(g)));
    } else if (cfg.mode == "poison") {
      std::size_t cls = 0;
      if (cfg.class_name) {
        cls = g.class_index(*cfg.class_name);
      } else if (g.classes.size() != 1) {
        throw std::invalid_argument("--mode poison needs --class when the instance has several classes");
      }
      j["class"] = g.classes[cls].name;
      j.update(equilibrium_to_json(g, data_poisoning_value(g, cls)));
    } else if (cfg.mode == "bayes") {
      j.update(equilibrium_to_json(g, bayesian_value(g)));
    } else if (cfg.mode == "relax") {
      const auto r = check_relaxation(g);
      j["robust"] = r.robust;
      j["bayesian"] = r.bayesian;
      j["holds"] = r.holds;
    } else if (cfg.mode == "memo") {
      const auto r = memorization_demo(g);
      j["union_class"] = g.classes[r.union_class].name;
      j["pulled_inside"] = equilibrium_to_json(g, r.pulled_inside);
      j["robust"] = equilibrium_to_json(g, r.robust);
      j["gap"] = r.gap;
    } else {
      throw std::invalid_argument("unknown --mode '" + cfg.mode + "'");
    }
    out << j.dump() << '\n';
    return kOk;
  });
}

inline int run_synth(const SynthConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (cfg.min_sentences == 0 || cfg.min_sentences > cfg.max_sentences) {
      throw std::invalid_argument("need 1 <= --min-sentences <= --max-sentences");
    }
    if (!(cfg.branching_probability >= 0.0 && cfg.branching_probability <= 1.0)) {
      throw std::invalid_argument("--branching-prob must lie in [0, 1]");
    }
    SynthOptions opt{cfg.branching_probability, cfg.min_sentences, cfg.max_sentences};
    const auto corpus = synth_corpus(cfg.traces, cfg.seed, opt);
    save_corpus(corpus, cfg.output);
    std::size_t branching = 0;
    for (const auto& t : corpus) branching += synth_branching_indices(t).size();
    out << "traces=" << corpus.size() << " branching_sentences=" << branching << " seed=" << cfg.seed << '\n';
    return kOk;
  });
}

}  // namespace traceguard::cli
