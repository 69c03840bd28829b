#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "eotsieve/config.hpp"
#include "eotsieve/errors.hpp"
#include "eotsieve/estimator.hpp"
#include "eotsieve/oracle.hpp"
#include "eotsieve/random.hpp"
#include "eotsieve/reference_measure.hpp"
#include "eotsieve/sieve.hpp"
#include "eotsieve/sinkhorn.hpp"

#include <json.hpp>

namespace eotsieve {

// Stream tags for seed derivation; replications stay independent and
// order-insensitive because every stream is keyed, never shared.
namespace seed_tag {
constexpr std::uint64_t normalizer = 0x6e6f726d;
constexpr std::uint64_t partition = 0x70617274;
constexpr std::uint64_t replication = 0x72657073;
constexpr std::uint64_t draws = 0x64726177;
constexpr std::uint64_t ci = 0x63690000;
constexpr std::uint64_t sinkhorn_x = 0x736b7800;
constexpr std::uint64_t sinkhorn_y = 0x736b7900;
}  // namespace seed_tag

struct ReplicationRecord {
  std::int64_t index = 0;
  std::uint64_t seed = 0;
  std::string status = "ok";  // "ok" or the error type
  double sieve_value = std::numeric_limits<double>::quiet_NaN();
  double sinkhorn_value = std::numeric_limits<double>::quiet_NaN();
  double theta_hat = std::numeric_limits<double>::quiet_NaN();
  double log_theta_hat = std::numeric_limits<double>::quiet_NaN();
  double ci_lo = std::numeric_limits<double>::quiet_NaN();
  double ci_hi = std::numeric_limits<double>::quiet_NaN();
  double acceptance_rate = std::numeric_limits<double>::quiet_NaN();
  std::int64_t solver_iterations = 0;
  double wall_time_ms = 0;  // never serialized into the deterministic outputs
};

/// Deterministic per-campaign state shared by all replications.
struct Campaign {
  ExperimentConfig config;
  Instruments instruments;
  double kappa_value = 0;
  std::shared_ptr<ReferenceMeasure> reference;
  SievePartition partition;
  std::shared_ptr<SieveDictionary> dictionary;
  std::int64_t sample_size = 0;
  double scale = 0, shift = 0;
};

inline Campaign prepare_campaign(const ExperimentConfig& cfg,
                                 const Instruments* override_instruments = nullptr) {
  cfg.validate();
  Campaign c{cfg, override_instruments ? *override_instruments : build_instruments(cfg)};
  c.kappa_value = kappa(c.instruments.x, c.instruments.y);

  Rng norm_rng(derive_seed(cfg.master_seed, 0, seed_tag::normalizer));
  c.reference = std::make_shared<ReferenceMeasure>(ReferenceMeasure::make(
      cfg.gamma, c.instruments.cost, c.instruments.x, c.instruments.y,
      cfg.normalizer_draws, norm_rng));

  const double la = c.reference->log_a_gamma();
  const double ratio = c.reference->a_gamma_stderr() / std::max(std::abs(la), 1e-300);
  if (c.reference->a_gamma_stderr() > 0 && ratio > cfg.normalizer_stderr_gate &&
      !cfg.allow_noisy_normalizer)
    throw NumericalError("normalizer-noise",
                         "normalizer stderr/|log a| = " + std::to_string(ratio) +
                             " exceeds the gate " +
                             std::to_string(cfg.normalizer_stderr_gate) +
                             "; raise normalizer_draws or set allow_noisy_normalizer");

  if (cfg.check_reference_marginals) {
    Rng part_rng(derive_seed(cfg.master_seed, 0, seed_tag::partition));
    c.partition = build_partition(c.instruments.x, c.instruments.y, cfg.epsilon,
                                  c.reference.get(), &part_rng);
  } else {
    c.partition = build_partition(c.instruments.x, c.instruments.y, cfg.epsilon);
  }

  const DictionaryKind kind = cfg.mode == "reduced" ? DictionaryKind::reduced_tau
                                                    : DictionaryKind::general_alpha_mu;
  c.dictionary = std::make_shared<SieveDictionary>(c.partition, kind, cfg.gamma,
                                                   c.kappa_value,
                                                   c.instruments.cost.sup_norm(),
                                                   c.instruments.x, c.instruments.y);
  c.sample_size = cfg.sample_size ? *cfg.sample_size
                                  : optimal_sample_size(cfg.epsilon, c.partition.n_total);
  c.scale = cfg.gamma * c.instruments.cost.sup_norm();
  c.shift = cfg.gamma * c.kappa_value * c.instruments.cost.sup_norm();
  return c;
}

inline ReplicationRecord run_replication(const Campaign& c, std::int64_t index) {
  const auto t0 = std::chrono::steady_clock::now();
  ReplicationRecord rec;
  rec.index = index;
  rec.seed = derive_seed(c.config.master_seed, std::uint64_t(index), seed_tag::replication);
  try {
    if (c.config.wants("sieve")) {
      // Draws: either product-measure samples with importance offsets (the
      // default; estimates the same R_gamma expectation with every cell
      // populated) or exact R_gamma draws per the literal protocol.
      Rng draw_rng(derive_seed(rec.seed, 0, seed_tag::draws));
      std::vector<Vector> xs, ys;
      Vector offsets;
      if (c.config.saa_sampling == "product-importance") {
        xs = c.instruments.x.sample(c.sample_size, draw_rng);
        ys = c.instruments.y.sample(c.sample_size, draw_rng);
        offsets.resize(c.sample_size);
        const double gamma = c.config.gamma;
        const double inf_c = c.instruments.cost.inf_value();
        double mean_accept = 0;
        for (std::int64_t j = 0; j < c.sample_size; ++j) {
          const double cost_j = c.instruments.cost(xs[std::size_t(j)], ys[std::size_t(j)]);
          offsets[j] = -gamma * cost_j - c.reference->log_a_gamma();
          mean_accept += std::exp(-gamma * (cost_j - inf_c));
        }
        rec.acceptance_rate = mean_accept / double(c.sample_size);
      } else {
        ReferenceSample draws =
            c.config.sampler == "rejection"
                ? sample_reference(*c.reference, c.sample_size,
                                   c.sample_size * c.config.max_proposals_factor,
                                   draw_rng)
                : sample_reference_importance(*c.reference, c.sample_size,
                                              c.config.importance_oversample, draw_rng);
        xs = std::move(draws.x);
        ys = std::move(draws.y);
        rec.acceptance_rate = draws.acceptance_rate;
      }

      SolveOptions opts;
      opts.max_iters = c.config.solver_max_iters;
      opts.tol = c.config.solver_tol;

      SaaSolution sol;
      Matrix values;  // unsigned dictionary rows, used by the CI in both modes
      if (c.config.mode == "reduced") {
        values = c.dictionary->evaluate_rows(xs, ys);
        sol = solve_reduced(values, c.scale, c.shift, opts, c.config.strict_slab,
                            c.kappa_value, offsets);
      } else {
        const Matrix signed_values = c.dictionary->evaluate_rows_signed(xs, ys);
        values = signed_values.leftCols(signed_values.cols() / 2);
        sol = solve_general(signed_values, c.config.gamma, c.kappa_value,
                            c.instruments.cost.sup_norm(), opts, offsets);
      }
      rec.solver_iterations = sol.iterations;
      EotEstimate est = estimate_eot(sol, *c.reference);
      rec.sieve_value = est.eot_value;
      rec.theta_hat = est.theta_hat;
      rec.log_theta_hat = est.log_theta_hat;
      if (c.config.ci) {
        SaaSolution view = sol;
        if (c.config.mode != "reduced")
          view.tau =
              general_to_reduced_tau(sol, c.config.gamma, c.instruments.cost.sup_norm());
        Rng ci_rng(derive_seed(rec.seed, 0, seed_tag::ci));
        auto [lo, hi] = symmetric_ci(view, values, c.scale, c.shift,
                                     c.config.ci->level, c.config.ci->bootstrap_draws,
                                     c.config.ci->index_grid_size, ci_rng, offsets);
        rec.ci_lo = lo;
        rec.ci_hi = hi;
      }
    }
    if (c.config.wants("sinkhorn")) {
      // Same sample size as the sieve estimator, independent streams.
      Rng x_rng(derive_seed(rec.seed, 0, seed_tag::sinkhorn_x));
      Rng y_rng(derive_seed(rec.seed, 0, seed_tag::sinkhorn_y));
      const std::vector<Vector> xs = c.instruments.x.sample(c.sample_size, x_rng);
      const std::vector<Vector> ys = c.instruments.y.sample(c.sample_size, y_rng);
      rec.sinkhorn_value =
          empirical_sinkhorn_value(xs, ys, c.instruments.cost, c.config.gamma);
    }
  } catch (const Error& e) {
    rec.status = e.type();
  } catch (const std::exception& e) {
    rec.status = "error";
  }
  rec.wall_time_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
  return rec;
}

namespace detail {

inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::string records_to_csv(const std::vector<ReplicationRecord>& records) {
  std::string out = "schema_version=1\n";
  out +=
      "replication_index,seed,status,sieve_value,sinkhorn_value,theta_hat,"
      "log_theta_hat,ci_lo,ci_hi,acceptance_rate,solver_iterations\n";
  for (const auto& r : records) {
    out += std::to_string(r.index) + "," + std::to_string(r.seed) + "," + r.status + ",";
    out += detail::fmt_double(r.sieve_value) + ",";
    out += detail::fmt_double(r.sinkhorn_value) + ",";
    out += detail::fmt_double(r.theta_hat) + ",";
    out += detail::fmt_double(r.log_theta_hat) + ",";
    out += detail::fmt_double(r.ci_lo) + ",";
    out += detail::fmt_double(r.ci_hi) + ",";
    out += detail::fmt_double(r.acceptance_rate) + ",";
    out += std::to_string(r.solver_iterations) + "\n";
  }
  return out;
}

struct CampaignResult {
  std::vector<ReplicationRecord> records;
  nlohmann::json summary;
  double total_wall_time_ms = 0;
};

inline nlohmann::json summarize_estimator(const std::vector<double>& values,
                                          std::optional<double> target) {
  nlohmann::json j;
  j["count"] = values.size();
  if (values.empty()) return j;
  const BoxStats b = box_stats(values);
  j["mean"] = b.mean;
  j["box"] = {{"min", b.min}, {"q1", b.q1}, {"median", b.median},
              {"q3", b.q3},   {"max", b.max}};
  if (target) {
    double mad = 0;
    for (double v : values) mad += std::abs(v - *target);
    j["mean_abs_dev"] = mad / double(values.size());
  }
  return j;
}

/// Runs the replication campaign on a worker pool. Records land in a vector
/// indexed by replication, so parallel and serial execution emit identical
/// sorted output.
inline CampaignResult run_replicate(const ExperimentConfig& cfg,
                                    const Instruments* override_instruments = nullptr,
                                    int thread_override = -1) {
  const auto t0 = std::chrono::steady_clock::now();
  Campaign campaign = prepare_campaign(cfg, override_instruments);

  const std::int64_t reps = cfg.replications;
  std::vector<ReplicationRecord> records(static_cast<std::size_t>(reps));
  int threads = thread_override >= 0 ? thread_override : cfg.threads;
  if (threads <= 0) threads = int(std::thread::hardware_concurrency());
  threads = std::max(1, std::min<int>(threads, int(reps)));

  std::atomic<std::int64_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::int64_t i = next.fetch_add(1);
      if (i >= reps) return;
      records[std::size_t(i)] = run_replication(campaign, i);
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(std::size_t(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  CampaignResult result;
  result.records = std::move(records);

  std::vector<double> sieve_vals, sinkhorn_vals;
  std::int64_t failed = 0;
  for (const auto& r : result.records) {
    if (r.status != "ok") {
      ++failed;
      continue;
    }
    if (!std::isnan(r.sieve_value)) sieve_vals.push_back(r.sieve_value);
    if (!std::isnan(r.sinkhorn_value)) sinkhorn_vals.push_back(r.sinkhorn_value);
  }

  nlohmann::json s;
  s["schema_version"] = 1;
  s["gamma"] = cfg.gamma;
  s["epsilon"] = cfg.epsilon;
  s["kappa"] = campaign.kappa_value;
  s["n_x"] = campaign.partition.n_x;
  s["n_y"] = campaign.partition.n_y;
  s["n_total"] = campaign.partition.n_total;
  s["sample_size"] = campaign.sample_size;
  s["normalizer"] = {{"log_a_gamma", campaign.reference->log_a_gamma()},
                     {"stderr", campaign.reference->a_gamma_stderr()},
                     {"draws", campaign.reference->normalizer_sample_count()}};
  const double log_n_over_n =
      std::log(double(campaign.partition.n_total)) / double(campaign.sample_size);
  s["entropy_condition"] = {
      {"log_n_over_N", log_n_over_n},
      {"ok", entropy_condition_ok({{cfg.epsilon, campaign.partition.n_total,
                                    campaign.sample_size}})[0]}};
  s["replications"] = {{"requested", reps},
                       {"completed", reps - failed},
                       {"failed", failed}};
  s["complete"] = failed == 0;
  if (cfg.wants("sieve")) s["sieve"] = summarize_estimator(sieve_vals, cfg.target_value);
  if (cfg.wants("sinkhorn"))
    s["sinkhorn"] = summarize_estimator(sinkhorn_vals, cfg.target_value);
  if (cfg.target_value) s["target_value"] = *cfg.target_value;
  result.summary = std::move(s);
  result.total_wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
          .count();
  return result;
}

/// Writes results.csv, summary.json and manifest.json under cfg.output_dir.
inline void write_campaign_outputs(const ExperimentConfig& cfg,
                                   const CampaignResult& result) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);
  {
    std::ofstream csv(fs::path(cfg.output_dir) / "results.csv", std::ios::binary);
    csv << records_to_csv(result.records);
  }
  {
    std::ofstream sj(fs::path(cfg.output_dir) / "summary.json", std::ios::binary);
    sj << result.summary.dump(1) << "\n";
  }
  {
    nlohmann::json manifest;
    manifest["schema_version"] = 1;
    manifest["config"] = cfg.to_json();
    manifest["outputs"] = {"results.csv", "summary.json"};
    manifest["wall_time_ms_total"] = result.total_wall_time_ms;
    std::ofstream mj(fs::path(cfg.output_dir) / "manifest.json", std::ios::binary);
    mj << manifest.dump(1) << "\n";
  }
}

/// Single end-to-end estimate (replication 0 of the campaign seeding).
inline nlohmann::json run_estimate(const ExperimentConfig& cfg,
                                   const Instruments* override_instruments = nullptr) {
  Campaign campaign = prepare_campaign(cfg, override_instruments);
  ReplicationRecord rec = run_replication(campaign, 0);
  if (rec.status != "ok")
    throw NumericalError(rec.status, "estimate failed: " + rec.status);

  EotEstimate est;
  est.gamma = cfg.gamma;
  est.eot_value = rec.sieve_value;
  est.theta_hat = rec.theta_hat;
  est.log_theta_hat = rec.log_theta_hat;
  est.log_a_gamma = campaign.reference->log_a_gamma();
  est.log_a_gamma_stderr = campaign.reference->a_gamma_stderr();
  est.epsilon = cfg.epsilon;
  est.n_total = campaign.partition.n_total;
  est.sample_size = campaign.sample_size;
  est.rate_bound_log10 =
      rate_bound_log10(cfg.epsilon, campaign.partition.n_total, campaign.sample_size,
                       cfg.gamma, campaign.kappa_value,
                       campaign.instruments.cost.sup_norm());
  if (cfg.ci && !std::isnan(rec.ci_lo)) {
    est.has_ci = true;
    est.ci_level = cfg.ci->level;
    est.ci_lo = rec.ci_lo;
    est.ci_hi = rec.ci_hi;
  }
  nlohmann::json j = est.to_json();
  j["kappa"] = campaign.kappa_value;
  j["n_x"] = campaign.partition.n_x;
  j["n_y"] = campaign.partition.n_y;
  j["acceptance_rate"] = rec.acceptance_rate;
  j["solver_iterations"] = rec.solver_iterations;
  j["seed"] = rec.seed;
  j["wall_time_ms"] = rec.wall_time_ms;
  if (cfg.wants("sinkhorn")) j["sinkhorn_value"] = rec.sinkhorn_value;
  j["partition_warnings"] = campaign.partition.warnings;
  return j;
}

inline nlohmann::json run_oracle(const ExperimentConfig& cfg,
                                 const Instruments* override_instruments = nullptr) {
  cfg.validate();
  Instruments inst = override_instruments ? *override_instruments : build_instruments(cfg);
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);
  const std::string cache = (fs::path(cfg.output_dir) / "oracle_cache.json").string();
  OracleEot o = oracle_eot_value(inst.x, inst.y, inst.cost, cfg.gamma, cfg.oracle_grid,
                                 cache);
  nlohmann::json j;
  j["eot_value"] = o.eot_value;
  if (cfg.cost_kind == "quadratic") j["ot_value"] = exact_ot_1d(inst.x, inst.y);
  j["theta_star"] = o.theta_star;
  j["log_a_discrete"] = o.log_a_discrete;
  j["grid"] = o.grid;
  j["value_at_grid"] = o.value_at_grid;
  j["value_at_double_grid"] = o.value_at_double_grid;
  j["richardson_ok"] = o.richardson_ok;
  return j;
}

inline nlohmann::json run_partition_info(const ExperimentConfig& cfg,
                                         const Instruments* override_instruments = nullptr) {
  cfg.validate();
  Instruments inst = override_instruments ? *override_instruments : build_instruments(cfg);
  const double kappa_value = kappa(inst.x, inst.y);
  SievePartition partition;
  if (cfg.check_reference_marginals) {
    // The reference-marginal refinement needs R_gamma, hence the normalizer.
    Rng norm_rng(derive_seed(cfg.master_seed, 0, seed_tag::normalizer));
    ReferenceMeasure ref = ReferenceMeasure::make(cfg.gamma, inst.cost, inst.x, inst.y,
                                                  cfg.normalizer_draws, norm_rng);
    Rng part_rng(derive_seed(cfg.master_seed, 0, seed_tag::partition));
    partition = build_partition(inst.x, inst.y, cfg.epsilon, &ref, &part_rng);
  } else {
    partition = build_partition(inst.x, inst.y, cfg.epsilon);
  }
  const std::int64_t auto_n = optimal_sample_size(cfg.epsilon, partition.n_total);
  const std::int64_t n = cfg.sample_size ? *cfg.sample_size : auto_n;
  nlohmann::json j = partition.to_json();
  j["kappa"] = kappa_value;
  j["auto_sample_size"] = auto_n;
  j["sample_size"] = n;
  j["log_n_over_N"] = std::log(double(partition.n_total)) / double(n);
  return j;
}

}  // namespace eotsieve
