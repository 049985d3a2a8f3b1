#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "traceguard/commands.hpp"

namespace {

std::uint64_t default_seed() {
  if (const char* env = std::getenv(traceguard::cli::kSeedEnv)) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      std::cerr << "warning: ignoring non-numeric " << traceguard::cli::kSeedEnv << '\n';
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  namespace tc = traceguard::cli;
  CLI::App app{"traceguard: reasoning-trace poisoning, logit perturbation and antidistillation game tools"};
  app.require_subcommand(1);
  const std::uint64_t seed = default_seed();

  tc::PoisonConfig poison;
  poison.seed = seed;
  poison.threads = traceguard::default_threads();
  auto* p = app.add_subcommand("poison", "Remove branching (or random) sentences from a JSONL corpus");
  p->add_option("--input,-i", poison.input, "Input corpus (JSONL)")->required();
  p->add_option("--output,-o", poison.output, "Output corpus (JSONL)")->required();
  p->add_option("--method", poison.method, "traceguard | random")
      ->check(CLI::IsMember({"traceguard", "random"}));
  p->add_option("--k", poison.k, "Removal budget (sentences per trace)");
  p->add_option("--markers", poison.markers_file, "Marker file, one marker per line");
  p->add_option("--seed", poison.seed, "Global seed (default $TRACEGUARD_SEED or 0)");
  p->add_flag("--match-traceguard", poison.match_traceguard,
              "Random baseline removing as many sentences as TraceGuard would with --k");
  p->add_option("--threads", poison.threads, "Worker threads")->check(CLI::PositiveNumber);

  tc::ReportConfig report;
  std::string delimiter = ",";
  auto* r = app.add_subcommand("report", "Token-accounting table over poisoned corpora");
  r->add_option("--input,-i", report.inputs, "Poisoned corpora (repeatable)")->required();
  r->add_option("--delimiter", delimiter, "Column delimiter (one character)");

  tc::DetectConfig detect;
  detect.seed = seed;
  detect.threads = traceguard::default_threads();
  auto* d = app.add_subcommand("detect", "Monte Carlo expected KL of Gaussian-perturbed logits versus its bound");
  d->add_option("--vocab", detect.vocab, "Vocabulary size")->check(CLI::PositiveNumber);
  d->add_option("--sigma2", detect.sigma2, "Noise scale sigma^2")->check(CLI::NonNegativeNumber);
  d->add_option("--samples", detect.samples, "Monte Carlo samples")->check(CLI::PositiveNumber);
  d->add_option("--seed", detect.seed, "Seed");
  d->add_option("--convention", detect.convention, "total_norm | per_coordinate")
      ->check(CLI::IsMember({"total_norm", "per_coordinate"}));
  d->add_option("--logits", detect.logits, "Explicit logit vector (overrides random logits)")->delimiter(',');
  d->add_option("--logit-scale", detect.logit_scale, "Std. dev. of random logits");
  d->add_option("--threads", detect.threads, "Worker threads")->check(CLI::PositiveNumber);

  tc::GaussianConfig gauss;
  gauss.seed = seed;
  auto* g = app.add_subcommand("gaussian", "Sparse Gaussian logit perturbation on a toy teacher");
  g->add_option("--table", gauss.table_file, "Logit table file (V=<int> header, one row per position)");
  g->add_option("--vocab", gauss.vocab, "Vocabulary of the random Markov teacher")->check(CLI::PositiveNumber);
  g->add_option("--length", gauss.length, "Sequence length of the random Markov teacher")->check(CLI::PositiveNumber);
  g->add_option("--logit-scale", gauss.logit_scale, "Std. dev. of the Markov teacher's logits");
  g->add_option("--eta", gauss.eta, "Detectability budget eta");
  g->add_option("--k", gauss.k, "Maximum perturbed positions");
  g->add_option("--sigma2", gauss.sigma2, "Noise scale sigma^2");
  g->add_option("--convention", gauss.convention, "total_norm | per_coordinate")
      ->check(CLI::IsMember({"total_norm", "per_coordinate"}));
  g->add_option("--seed", gauss.seed, "Seed");
  g->add_option("--trials", gauss.trials, "Trials for the token flip rate")->check(CLI::PositiveNumber);
  g->add_flag("--greedy", gauss.greedy, "Resample by argmax instead of sampling");
  g->add_option("--protect", gauss.protect, "Protected positions (e.g. answer tokens)")->delimiter(',');

  tc::GameConfig game;
  auto* gm = app.add_subcommand("game", "Finite antidistillation games");
  gm->require_subcommand(1);
  auto* solve = gm->add_subcommand("solve", "Solve a game instance by enumeration");
  solve->add_option("--mode", game.mode, "robust | poison | bayes | relax | memo")
      ->check(CLI::IsMember({"robust", "poison", "bayes", "relax", "memo"}));
  solve->add_option("--instance", game.instance, "Instance JSON")->required();
  solve->add_option("--class", game.class_name, "Hypothesis class for --mode poison");

  tc::SynthConfig synth;
  synth.seed = seed;
  auto* s = app.add_subcommand("synth", "Generate a seeded synthetic corpus");
  s->group("");
  s->add_option("--traces", synth.traces, "Number of traces");
  s->add_option("--seed", synth.seed, "Seed");
  s->add_option("--branching-prob", synth.branching_probability, "Probability a sentence is branching");
  s->add_option("--min-sentences", synth.min_sentences, "Minimum sentences per trace");
  s->add_option("--max-sentences", synth.max_sentences, "Maximum sentences per trace");
  s->add_option("--output,-o", synth.output, "Output corpus (JSONL)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? tc::kOk : tc::kUsage;
  }

  if (*p) return tc::run_poison(poison, std::cout, std::cerr);
  if (*r) {
    if (delimiter.size() != 1) {
      std::cerr << "usage error: --delimiter must be a single character\n";
      return tc::kUsage;
    }
    report.delimiter = delimiter.front();
    return tc::run_report(report, std::cout, std::cerr);
  }
  if (*d) return tc::run_detect(detect, std::cout, std::cerr);
  if (*g) return tc::run_gaussian(gauss, std::cout, std::cerr);
  if (*gm) return tc::run_game(game, std::cout, std::cerr);
  if (*s) return tc::run_synth(synth, std::cout, std::cerr);
  return tc::kUsage;
}
