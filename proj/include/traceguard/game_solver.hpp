#pragma once

// Exhaustive solver for finite antidistillation games. The defender picks a
// dataset perturbation; for every hypothesis class the attacker trains the
// train-loss minimizer; the defender is scored by the population loss of
// those best responses (worst class, a single known class, or a prior-weighted
// average over classes). Every argmin/argmax breaks ties toward the lowest index.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "traceguard/errors.hpp"
#include "traceguard/seeding.hpp"

namespace traceguard {

struct HypothesisClass {
  std::string name;
  std::vector<std::size_t> members;  // indices into GameInstance::hypotheses

  friend bool operator==(const HypothesisClass&, const HypothesisClass&) = default;
};

struct GameInstance {
  std::vector<std::string> perturbations;
  std::vector<std::string> hypotheses;
  std::vector<HypothesisClass> classes;
  std::vector<std::vector<double>> train_loss;  // [perturbation][hypothesis]
  std::vector<double> pop_loss;                 // [hypothesis]
  std::optional<std::vector<double>> prior;     // [class]

  friend bool operator==(const GameInstance&, const GameInstance&) = default;

  void validate() const {
    if (perturbations.empty()) throw DataError("game: no perturbations");
    if (classes.empty()) throw DataError("game: no hypothesis classes");
    if (train_loss.size() != perturbations.size()) throw DataError("game: train_loss must have one row per perturbation");
    for (const auto& row : train_loss) {
      if (row.size() != hypotheses.size()) throw DataError("game: train_loss row does not cover every hypothesis");
      for (double v : row) {
        if (!std::isfinite(v)) throw DataError("game: non-finite train loss");
      }
    }
    if (pop_loss.size() != hypotheses.size()) throw DataError("game: pop_loss does not cover every hypothesis");
    for (double v : pop_loss) {
      if (!std::isfinite(v)) throw DataError("game: non-finite population loss");
    }
    for (const auto& c : classes) {
      if (c.members.empty()) throw DataError("game: class '" + c.name + "' is empty");
      for (std::size_t h : c.members) {
        if (h >= hypotheses.size()) throw DataError("game: class '" + c.name + "' references an unknown hypothesis");
      }
    }
    if (prior) {
      if (prior->size() != classes.size()) throw DataError("game: prior must have one entry per class");
      double sum = 0.0;
      for (double w : *prior) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw DataError("game: prior entries must be nonnegative");
        sum += w;
      }
      if (std::abs(sum - 1.0) > 1e-12) throw DataError("game: prior must sum to 1");
    }
  }

  std::size_t perturbation_index(std::string_view label) const { return find(perturbations, label, "perturbation"); }
  std::size_t hypothesis_index(std::string_view label) const { return find(hypotheses, label, "hypothesis"); }
  std::size_t class_index(std::string_view name) const {
    for (std::size_t i = 0; i < classes.size(); ++i) {
      if (classes[i].name == name) return i;
    }
    throw DataError("game: unknown class '" + std::string(name) + "'");
  }

 private:
  static std::size_t find(const std::vector<std::string>& v, std::string_view label, const char* what) {
    auto it = std::find(v.begin(), v.end(), label);
    if (it == v.end()) throw DataError(std::string("game: unknown ") + what + " '" + std::string(label) + "'");
    return static_cast<std::size_t>(it - v.begin());
  }
};

struct ClassResponse {
  std::size_t class_index = 0;
  std::size_t hypothesis = 0;

  friend bool operator==(const ClassResponse&, const ClassResponse&) = default;
};

struct Equilibrium {
  std::size_t perturbation = 0;
  std::vector<ClassResponse> responses;  // best responses at the chosen perturbation
  double value = 0.0;
  std::vector<double> per_perturbation;  // objective at every perturbation
};

enum class GameMode { robust, poison, bayes };

// Train-loss minimizer within a class.
inline std::size_t best_response(const GameInstance& g, std::size_t cls, std::size_t perturbation) {
  if (cls >= g.classes.size()) throw DataError("game: class index out of range");
  if (perturbation >= g.perturbations.size()) throw DataError("game: perturbation index out of range");
  const auto& members = g.classes[cls].members;
  const auto& row = g.train_loss[perturbation];
  std::size_t best = members.front();
  for (std::size_t h : members) {
    if (row[h] < row[best]) best = h;
  }
  return best;
}

inline std::size_t best_response(const GameInstance& g, std::string_view cls, std::string_view perturbation) {
  return best_response(g, g.class_index(cls), g.perturbation_index(perturbation));
}

inline double response_loss(const GameInstance& g, std::size_t cls, std::size_t perturbation) {
  return g.pop_loss[best_response(g, cls, perturbation)];
}

// Objective at one perturbation. `cls` is used only by GameMode::poison.
inline double objective_at(const GameInstance& g, GameMode mode, std::size_t perturbation, std::size_t cls = 0) {
  switch (mode) {
    case GameMode::robust: {
      double worst = response_loss(g, 0, perturbation);
      for (std::size_t c = 1; c < g.classes.size(); ++c) worst = std::min(worst, response_loss(g, c, perturbation));
      return worst;
    }
    case GameMode::poison:
      return response_loss(g, cls, perturbation);
    case GameMode::bayes: {
      if (!g.prior) throw DataError("game: bayesian objective needs a prior");
      double acc = 0.0;
      for (std::size_t c = 0; c < g.classes.size(); ++c) acc += (*g.prior)[c] * response_loss(g, c, perturbation);
      return acc;
    }
  }
  return 0.0;
}

namespace detail {

inline Equilibrium solve(const GameInstance& g, GameMode mode, std::size_t cls) {
  if (g.perturbations.empty() || g.classes.empty()) throw DataError("game: empty perturbation set or class family");
  Equilibrium eq;
  eq.per_perturbation.reserve(g.perturbations.size());
  for (std::size_t d = 0; d < g.perturbations.size(); ++d) {
    eq.per_perturbation.push_back(objective_at(g, mode, d, cls));
    if (eq.per_perturbation[d] > eq.per_perturbation[eq.perturbation]) eq.perturbation = d;
  }
  eq.value = eq.per_perturbation[eq.perturbation];
  if (mode == GameMode::poison) {
    eq.responses.push_back({cls, best_response(g, cls, eq.perturbation)});
  } else {
    for (std::size_t c = 0; c < g.classes.size(); ++c) eq.responses.push_back({c, best_response(g, c, eq.perturbation)});
  }
  return eq;
}

}  // namespace detail

// max over perturbations of min over classes.
inline Equilibrium robust_value(const GameInstance& g) { return detail::solve(g, GameMode::robust, 0); }

// Single known class: the classical data-poisoning bi-level problem.
inline Equilibrium data_poisoning_value(const GameInstance& g, std::size_t cls) {
  if (cls >= g.classes.size()) throw DataError("game: class index out of range");
  return detail::solve(g, GameMode::poison, cls);
}

inline Equilibrium data_poisoning_value(const GameInstance& g, std::string_view cls) {
  return data_poisoning_value(g, g.class_index(cls));
}

// max over perturbations of the prior-weighted population loss.
inline Equilibrium bayesian_value(const GameInstance& g) {
  if (!g.prior) throw DataError("game: bayesian objective needs a prior");
  return detail::solve(g, GameMode::bayes, 0);
}

struct RelaxationCheck {
  double robust = 0.0;
  double bayesian = 0.0;
  bool holds = false;
};

inline RelaxationCheck check_relaxation(const GameInstance& g) {
  RelaxationCheck r;
  r.robust = robust_value(g).value;
  r.bayesian = bayesian_value(g).value;
  r.holds = r.robust <= r.bayesian + 1e-12;
  return r;
}

// Copy of `g` keeping only the listed classes, in the given order.
inline GameInstance restrict_classes(const GameInstance& g, const std::vector<std::size_t>& keep) {
  GameInstance out = g;
  out.classes.clear();
  for (std::size_t c : keep) out.classes.push_back(g.classes.at(c));
  if (g.prior) {
    std::vector<double> p;
    double mass = 0.0;
    for (std::size_t c : keep) mass += (*g.prior)[c];
    if (mass > 0.0) {
      for (std::size_t c : keep) p.push_back((*g.prior)[c] / mass);
      out.prior = std::move(p);
    } else {
      out.prior.reset();
    }
  }
  return out;
}

// Drops perturbations whose distortion exceeds epsilon.
inline GameInstance filter_by_distortion(const GameInstance& g, const std::vector<double>& distortion, double epsilon) {
  if (distortion.size() != g.perturbations.size()) throw DataError("game: distortion must cover every perturbation");
  GameInstance out = g;
  out.perturbations.clear();
  out.train_loss.clear();
  for (std::size_t d = 0; d < g.perturbations.size(); ++d) {
    if (distortion[d] <= epsilon) {
      out.perturbations.push_back(g.perturbations[d]);
      out.train_loss.push_back(g.train_loss[d]);
    }
  }
  if (out.perturbations.empty()) throw DataError("game: no perturbation satisfies the distortion budget");
  return out;
}

struct MemorizationReport {
  std::size_t union_class = 0;
  Equilibrium pulled_inside;  // train-loss minimizer over the union of all classes
  Equilibrium robust;         // worst class outside the population loss
  double gap = 0.0;           // pulled_inside.value - robust.value
};

// Contrasts the robust objective with the variant that minimizes train loss
// over the union of every class. Requires a class whose members are exactly
// that union; the robust side ranges over the remaining classes (or over the
// union itself when it is the only class).
inline MemorizationReport memorization_demo(const GameInstance& g) {
  g.validate();
  std::set<std::size_t> all;
  for (const auto& c : g.classes) all.insert(c.members.begin(), c.members.end());
  std::optional<std::size_t> union_idx;
  for (std::size_t c = 0; c < g.classes.size() && !union_idx; ++c) {
    if (std::set<std::size_t>(g.classes[c].members.begin(), g.classes[c].members.end()) == all) union_idx = c;
  }
  if (!union_idx) throw DataError("game: memorization demo needs a class equal to the union of all classes");
  MemorizationReport r;
  r.union_class = *union_idx;
  r.pulled_inside = data_poisoning_value(g, *union_idx);
  std::vector<std::size_t> architectures;
  for (std::size_t c = 0; c < g.classes.size(); ++c) {
    if (c != *union_idx) architectures.push_back(c);
  }
  if (architectures.empty()) architectures.push_back(*union_idx);
  Equilibrium robust = robust_value(restrict_classes(g, architectures));
  for (auto& resp : robust.responses) resp.class_index = architectures[resp.class_index];
  r.robust = std::move(robust);
  r.gap = r.pulled_inside.value - r.robust.value;
  return r;
}

// ---- instance files -------------------------------------------------------

namespace detail {

inline double json_real(const nlohmann::ordered_json& v, const std::string& where) {
  if (!v.is_number()) throw DataError("game: " + where + " must be a number");
  return v.get<double>();
}

}  // namespace detail

// Keys: "perturbations" (list), "classes" (name -> hypothesis list),
// "train_loss" (perturbation -> hypothesis -> real), "pop_loss" (hypothesis ->
// real), optional "prior" (class -> weight, or a list in class order), optional
// "distortion" (perturbation -> real) with "epsilon".
inline GameInstance game_from_json(const nlohmann::ordered_json& j) {
  using J = nlohmann::ordered_json;
  if (!j.is_object()) throw DataError("game: instance must be a JSON object");
  auto need = [&](const char* key) -> const J& {
    auto it = j.find(key);
    if (it == j.end()) throw DataError(std::string("game: missing key '") + key + "'");
    return *it;
  };
  GameInstance g;
  const J& perts = need("perturbations");
  if (!perts.is_array()) throw DataError("game: 'perturbations' must be a list");
  for (const auto& p : perts) {
    if (!p.is_string()) throw DataError("game: perturbation labels must be strings");
    if (std::find(g.perturbations.begin(), g.perturbations.end(), p.get<std::string>()) != g.perturbations.end()) {
      throw DataError("game: duplicate perturbation '" + p.get<std::string>() + "'");
    }
    g.perturbations.push_back(p.get<std::string>());
  }
  const J& classes = need("classes");
  if (!classes.is_object()) throw DataError("game: 'classes' must map class names to hypothesis lists");
  std::unordered_map<std::string, std::size_t> hyp_index;
  for (const auto& [name, members] : classes.items()) {
    if (!members.is_array()) throw DataError("game: class '" + name + "' must be a list");
    HypothesisClass c{name, {}};
    for (const auto& h : members) {
      if (!h.is_string()) throw DataError("game: hypothesis labels must be strings");
      auto label = h.get<std::string>();
      auto [it, inserted] = hyp_index.emplace(label, g.hypotheses.size());
      if (inserted) g.hypotheses.push_back(label);
      c.members.push_back(it->second);
    }
    g.classes.push_back(std::move(c));
  }
  const J& train = need("train_loss");
  if (!train.is_object()) throw DataError("game: 'train_loss' must be a nested map");
  for (const auto& d : g.perturbations) {
    auto row_it = train.find(d);
    if (row_it == train.end() || !row_it->is_object()) throw DataError("game: train_loss has no row for '" + d + "'");
    std::vector<double> row(g.hypotheses.size());
    for (std::size_t h = 0; h < g.hypotheses.size(); ++h) {
      auto cell = row_it->find(g.hypotheses[h]);
      if (cell == row_it->end()) throw DataError("game: train_loss['" + d + "'] lacks '" + g.hypotheses[h] + "'");
      row[h] = detail::json_real(*cell, "train_loss['" + d + "']['" + g.hypotheses[h] + "']");
    }
    g.train_loss.push_back(std::move(row));
  }
  const J& pop = need("pop_loss");
  if (!pop.is_object()) throw DataError("game: 'pop_loss' must be a map");
  for (const auto& h : g.hypotheses) {
    auto cell = pop.find(h);
    if (cell == pop.end()) throw DataError("game: pop_loss lacks '" + h + "'");
    g.pop_loss.push_back(detail::json_real(*cell, "pop_loss['" + h + "']"));
  }
  if (auto it = j.find("prior"); it != j.end() && !it->is_null()) {
    std::vector<double> prior;
    if (it->is_array()) {
      for (const auto& w : *it) prior.push_back(detail::json_real(w, "prior entry"));
    } else if (it->is_object()) {
      for (const auto& c : g.classes) {
        auto w = it->find(c.name);
        prior.push_back(w == it->end() ? 0.0 : detail::json_real(*w, "prior['" + c.name + "']"));
      }
      for (const auto& [name, w] : it->items()) g.class_index(name);
    } else {
      throw DataError("game: 'prior' must be a map or list");
    }
    g.prior = std::move(prior);
  }
  g.validate();
  if (auto it = j.find("distortion"); it != j.end() && !it->is_null()) {
    auto eps = j.find("epsilon");
    if (eps == j.end()) throw DataError("game: 'distortion' needs 'epsilon'");
    if (!it->is_object()) throw DataError("game: 'distortion' must map perturbations to reals");
    std::vector<double> distortion;
    for (const auto& d : g.perturbations) {
      auto cell = it->find(d);
      if (cell == it->end()) throw DataError("game: distortion lacks '" + d + "'");
      distortion.push_back(detail::json_real(*cell, "distortion['" + d + "']"));
    }
    g = filter_by_distortion(g, distortion, detail::json_real(*eps, "epsilon"));
  }
  return g;
}

inline GameInstance load_game_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open game instance '" + path + "'");
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("game: malformed JSON: ") + e.what());
  }
  return game_from_json(j);
}

inline nlohmann::ordered_json game_to_json(const GameInstance& g) {
  nlohmann::ordered_json j;
  j["perturbations"] = g.perturbations;
  j["classes"] = nlohmann::ordered_json::object();
  for (const auto& c : g.classes) {
    auto& list = j["classes"][c.name] = nlohmann::ordered_json::array();
    for (std::size_t h : c.members) list.push_back(g.hypotheses[h]);
  }
  j["train_loss"] = nlohmann::ordered_json::object();
  for (std::size_t d = 0; d < g.perturbations.size(); ++d) {
    auto& row = j["train_loss"][g.perturbations[d]] = nlohmann::ordered_json::object();
    for (std::size_t h = 0; h < g.hypotheses.size(); ++h) row[g.hypotheses[h]] = g.train_loss[d][h];
  }
  j["pop_loss"] = nlohmann::ordered_json::object();
  for (std::size_t h = 0; h < g.hypotheses.size(); ++h) j["pop_loss"][g.hypotheses[h]] = g.pop_loss[h];
  if (g.prior) {
    j["prior"] = nlohmann::ordered_json::object();
    for (std::size_t c = 0; c < g.classes.size(); ++c) j["prior"][g.classes[c].name] = (*g.prior)[c];
  }
  return j;
}

inline nlohmann::ordered_json equilibrium_to_json(const GameInstance& g, const Equilibrium& eq) {
  nlohmann::ordered_json j;
  j["chosen"] = g.perturbations[eq.perturbation];
  j["value"] = eq.value;
  j["best_responses"] = nlohmann::ordered_json::object();
  for (const auto& r : eq.responses) j["best_responses"][g.classes[r.class_index].name] = g.hypotheses[r.hypothesis];
  j["per_perturbation"] = nlohmann::ordered_json::object();
  for (std::size_t d = 0; d < g.perturbations.size(); ++d) j["per_perturbation"][g.perturbations[d]] = eq.per_perturbation[d];
  return j;
}

// ---- random instances -------------------------------------------------------

struct RandomGameLimits {
  std::size_t max_perturbations = 6;
  std::size_t max_classes = 6;
  std::size_t max_class_size = 6;
  bool with_prior = true;
  // Losses drawn from {0, 0.25, ..., 1} instead of [0, 1), so ties are common.
  bool quantized = false;
};

inline GameInstance random_game(std::uint64_t seed, const RandomGameLimits& lim = {}) {
  Rng rng(seed);
  auto pick_size = [&](std::size_t max) { return std::uniform_int_distribution<std::size_t>(1, max)(rng); };
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> step(0, 4);
  auto loss = [&] { return lim.quantized ? 0.25 * step(rng) : unit(rng); };

  GameInstance g;
  const std::size_t nb = pick_size(lim.max_perturbations);
  const std::size_t nf = pick_size(lim.max_classes);
  for (std::size_t d = 0; d < nb; ++d) g.perturbations.push_back("d" + std::to_string(d + 1));
  for (std::size_t c = 0; c < nf; ++c) {
    HypothesisClass cls{"H" + std::to_string(c + 1), {}};
    const std::size_t size = pick_size(lim.max_class_size);
    for (std::size_t i = 0; i < size; ++i) {
      cls.members.push_back(g.hypotheses.size());
      g.hypotheses.push_back("h" + std::to_string(c + 1) + "_" + std::to_string(i + 1));
    }
    g.classes.push_back(std::move(cls));
  }
  g.train_loss.assign(nb, std::vector<double>(g.hypotheses.size()));
  for (auto& row : g.train_loss) {
    for (double& v : row) v = loss();
  }
  g.pop_loss.resize(g.hypotheses.size());
  for (double& v : g.pop_loss) v = loss();
  if (lim.with_prior) {
    std::vector<double> w(nf);
    double sum = 0.0;
    for (double& x : w) sum += (x = unit(rng) + 1e-3);
    for (double& x : w) x /= sum;
    g.prior = std::move(w);
  }
  return g;
}

}  // namespace traceguard
