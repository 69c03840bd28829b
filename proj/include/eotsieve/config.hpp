#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eotsieve/cost.hpp"
#include "eotsieve/errors.hpp"
#include "eotsieve/marginal.hpp"
#include "eotsieve/saa_solver.hpp"

#include <json.hpp>

namespace eotsieve {

struct MarginalSpec {
  std::string kind = "uniform";  // uniform | discrete | empirical
  double lo = 0.0, hi = 1.0;
  std::vector<double> atoms;
  std::vector<double> weights;

  Marginal build() const {
    if (kind == "uniform") return Marginal::uniform(lo, hi);
    if (kind == "discrete") return Marginal::discrete(atoms, weights);
    if (kind == "empirical") return Marginal::empirical(atoms);
    throw InvalidArgument("marginal kind '" + kind +
                          "' is not config-instantiable (user kinds are "
                          "code-level plugins)");
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["kind"] = kind;
    if (kind == "uniform") {
      j["lo"] = lo;
      j["hi"] = hi;
    } else {
      j["atoms"] = atoms;
      if (kind == "discrete") j["weights"] = weights;
    }
    return j;
  }

  static MarginalSpec from_json(const nlohmann::json& j) {
    MarginalSpec s;
    s.kind = j.value("kind", "uniform");
    s.lo = j.value("lo", 0.0);
    s.hi = j.value("hi", 1.0);
    if (j.contains("atoms")) s.atoms = j["atoms"].get<std::vector<double>>();
    if (j.contains("weights")) s.weights = j["weights"].get<std::vector<double>>();
    return s;
  }
};

struct CiSpec {
  double level = 0.95;
  std::int64_t bootstrap_draws = 1000;
  std::int64_t index_grid_size = 256;
};

struct ExperimentConfig {
  MarginalSpec x_marginal;
  MarginalSpec y_marginal{.kind = "uniform", .lo = 0.0, .hi = 2.0};
  std::string cost_kind = "quadratic";  // quadratic | absolute
  double gamma = 100.0;
  double epsilon = 0.1;
  std::string mode = "reduced";  // reduced | general
  bool strict_slab = true;  // l1-capped class (the bounded class of the theory)
  std::string saa_sampling = "product-importance";  // product-importance | reference
  std::optional<std::int64_t> sample_size;  // absent = "auto" (balance rule)
  std::int64_t replications = 1;
  std::uint64_t master_seed = 1;
  std::vector<std::string> estimators{"sieve"};
  std::optional<CiSpec> ci;
  std::optional<double> target_value;  // for mean-abs-dev summaries
  std::int64_t normalizer_draws = 1000000;
  double normalizer_stderr_gate = 0.05;
  bool allow_noisy_normalizer = false;
  bool check_reference_marginals = false;
  std::string sampler = "rejection";  // rejection | importance
  std::int64_t max_proposals_factor = 10000;
  std::int64_t importance_oversample = 64;
  std::string output_dir = "out";
  int threads = 0;  // 0 = hardware concurrency
  int oracle_grid = 512;
  int solver_max_iters = 20000;
  double solver_tol = 1e-8;

  void validate() const {
    if (gamma <= 0) throw InvalidArgument("config: gamma must be positive");
    if (!(epsilon > 0 && epsilon < 1))
      throw InvalidArgument("config: epsilon must lie in (0,1)");
    if (replications < 1) throw InvalidArgument("config: replications >= 1 required");
    if (mode != "reduced" && mode != "general")
      throw InvalidArgument("config: mode must be 'reduced' or 'general'");
    if (sampler != "rejection" && sampler != "importance")
      throw InvalidArgument("config: sampler must be 'rejection' or 'importance'");
    if (saa_sampling != "product-importance" && saa_sampling != "reference")
      throw InvalidArgument(
          "config: saa_sampling must be 'product-importance' or 'reference'");
    if (cost_kind != "quadratic" && cost_kind != "absolute")
      throw InvalidArgument("config: cost kind '" + cost_kind +
                            "' not supported from config ('user' costs are "
                            "code-level plugins)");
    if (sample_size && *sample_size < 1)
      throw InvalidArgument("config: explicit sample_size must be >= 1");
    for (const auto& e : estimators)
      if (e != "sieve" && e != "sinkhorn")
        throw InvalidArgument("config: unknown estimator '" + e + "'");
    if (estimators.empty()) throw InvalidArgument("config: no estimators selected");
    if (ci) {
      if (!(ci->level > 0.5 && ci->level < 1.0))
        throw InvalidArgument("config: ci.level must lie in (0.5, 1)");
      if (ci->bootstrap_draws < 200)
        throw InvalidArgument("config: ci.bootstrap_draws >= 200 required");
      if (ci->index_grid_size < 1)
        throw InvalidArgument("config: ci.index_grid_size >= 1 required");
    }
    if (normalizer_draws < 100)
      throw InvalidArgument("config: normalizer_draws >= 100 required");
  }

  bool wants(const std::string& estimator) const {
    for (const auto& e : estimators)
      if (e == estimator) return true;
    return false;
  }

  /// Every default materialized, so a run's manifest is self-describing.
  nlohmann::json to_json() const {
    nlohmann::json j;
    j["x_marginal"] = x_marginal.to_json();
    j["y_marginal"] = y_marginal.to_json();
    j["cost"] = {{"kind", cost_kind}};
    j["gamma"] = gamma;
    j["epsilon"] = epsilon;
    j["mode"] = mode;
    j["strict_slab"] = strict_slab;
    j["saa_sampling"] = saa_sampling;
    if (sample_size)
      j["sample_size"] = *sample_size;
    else
      j["sample_size"] = "auto";
    j["replications"] = replications;
    j["master_seed"] = master_seed;
    j["estimators"] = estimators;
    if (ci)
      j["ci"] = {{"level", ci->level},
                 {"bootstrap_draws", ci->bootstrap_draws},
                 {"index_grid_size", ci->index_grid_size}};
    else
      j["ci"] = nullptr;
    if (target_value)
      j["target_value"] = *target_value;
    else
      j["target_value"] = nullptr;
    j["normalizer_draws"] = normalizer_draws;
    j["normalizer_stderr_gate"] = normalizer_stderr_gate;
    j["allow_noisy_normalizer"] = allow_noisy_normalizer;
    j["check_reference_marginals"] = check_reference_marginals;
    j["sampler"] = sampler;
    j["max_proposals_factor"] = max_proposals_factor;
    j["importance_oversample"] = importance_oversample;
    j["output_dir"] = output_dir;
    j["threads"] = threads;
    j["oracle_grid"] = oracle_grid;
    j["solver"] = {{"max_iters", solver_max_iters}, {"tol", solver_tol}};
    return j;
  }

  static ExperimentConfig from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    try {
      if (j.contains("x_marginal")) c.x_marginal = MarginalSpec::from_json(j["x_marginal"]);
      if (j.contains("y_marginal")) c.y_marginal = MarginalSpec::from_json(j["y_marginal"]);
      if (j.contains("cost")) {
        if (j["cost"].is_string())
          c.cost_kind = j["cost"].get<std::string>();
        else
          c.cost_kind = j["cost"].value("kind", "quadratic");
      }
      c.gamma = j.value("gamma", c.gamma);
      c.epsilon = j.value("epsilon", c.epsilon);
      c.mode = j.value("mode", c.mode);
      c.strict_slab = j.value("strict_slab", c.strict_slab);
      c.saa_sampling = j.value("saa_sampling", c.saa_sampling);
      if (j.contains("sample_size") && !j["sample_size"].is_string())
        c.sample_size = j["sample_size"].get<std::int64_t>();
      c.replications = j.value("replications", c.replications);
      c.master_seed = j.value("master_seed", c.master_seed);
      if (j.contains("estimators"))
        c.estimators = j["estimators"].get<std::vector<std::string>>();
      if (j.contains("ci") && !j["ci"].is_null()) {
        CiSpec s;
        s.level = j["ci"].value("level", s.level);
        s.bootstrap_draws = j["ci"].value("bootstrap_draws", s.bootstrap_draws);
        s.index_grid_size = j["ci"].value("index_grid_size", s.index_grid_size);
        c.ci = s;
      }
      if (j.contains("target_value") && !j["target_value"].is_null())
        c.target_value = j["target_value"].get<double>();
      c.normalizer_draws = j.value("normalizer_draws", c.normalizer_draws);
      c.normalizer_stderr_gate = j.value("normalizer_stderr_gate", c.normalizer_stderr_gate);
      c.allow_noisy_normalizer = j.value("allow_noisy_normalizer", c.allow_noisy_normalizer);
      c.check_reference_marginals =
          j.value("check_reference_marginals", c.check_reference_marginals);
      c.sampler = j.value("sampler", c.sampler);
      c.max_proposals_factor = j.value("max_proposals_factor", c.max_proposals_factor);
      c.importance_oversample = j.value("importance_oversample", c.importance_oversample);
      c.output_dir = j.value("output_dir", c.output_dir);
      c.threads = j.value("threads", c.threads);
      c.oracle_grid = j.value("oracle_grid", c.oracle_grid);
      if (j.contains("solver")) {
        c.solver_max_iters = j["solver"].value("max_iters", c.solver_max_iters);
        c.solver_tol = j["solver"].value("tol", c.solver_tol);
      }
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument(std::string("config: malformed JSON field: ") + e.what());
    }
    c.validate();
    return c;
  }
};

/// The concrete measure/cost objects a run works with. Built from config for
/// the CLI path; tests may supply their own (user cost kinds are code-level
/// plugins).
struct Instruments {
  Marginal x;
  Marginal y;
  CostFunction cost;
};

inline Instruments build_instruments(const ExperimentConfig& cfg) {
  Marginal x = cfg.x_marginal.build();
  Marginal y = cfg.y_marginal.build();
  CostFunction cost = cfg.cost_kind == "quadratic" ? CostFunction::quadratic(x, y)
                                                   : CostFunction::absolute(x, y);
  return Instruments{std::move(x), std::move(y), std::move(cost)};
}

}  // namespace eotsieve
