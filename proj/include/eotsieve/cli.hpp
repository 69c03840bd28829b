#pragma once

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "eotsieve/harness.hpp"

#include <CLI11.hpp>
#include <json.hpp>

namespace eotsieve {

namespace detail {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> out_dir;
};

inline void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "experiment config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", flags.seed, "override master_seed");
  cmd->add_option("--threads", flags.threads, "worker pool size (0 = hardware)");
  cmd->add_option("--out", flags.out_dir, "override output directory");
}

inline ExperimentConfig load_config(const CommonFlags& flags) {
  std::ifstream in(flags.config_path);
  if (!in) throw InvalidArgument("cannot open config file " + flags.config_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg = ExperimentConfig::from_json(j);
  if (flags.seed) cfg.master_seed = *flags.seed;
  if (flags.threads) cfg.threads = *flags.threads;
  if (flags.out_dir) cfg.output_dir = *flags.out_dir;
  cfg.validate();
  return cfg;
}

}  // namespace detail

inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout) {
  CLI::App app{"sieve M-estimation of entropically regularized optimal transport"};
  app.require_subcommand(1);

  detail::CommonFlags estimate_flags, replicate_flags, oracle_flags, partition_flags;
  CLI::App* cmd_estimate =
      app.add_subcommand("estimate", "single end-to-end EOT value estimate");
  detail::add_common(cmd_estimate, estimate_flags);
  CLI::App* cmd_replicate =
      app.add_subcommand("replicate", "seeded Monte Carlo replication campaign");
  detail::add_common(cmd_replicate, replicate_flags);
  CLI::App* cmd_oracle =
      app.add_subcommand("oracle", "grid-discretization EOT/OT ground truth");
  detail::add_common(cmd_oracle, oracle_flags);
  CLI::App* cmd_partition =
      app.add_subcommand("partition-info", "partition summary and sample-size rule");
  detail::add_common(cmd_partition, partition_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << e.what() << "\n";
    return int(ExitCode::invalid_config);
  }

  try {
    if (cmd_estimate->parsed()) {
      out << run_estimate(detail::load_config(estimate_flags)).dump(1) << "\n";
    } else if (cmd_replicate->parsed()) {
      const ExperimentConfig cfg = detail::load_config(replicate_flags);
      CampaignResult result = run_replicate(cfg);
      write_campaign_outputs(cfg, result);
      out << result.summary.dump(1) << "\n";
    } else if (cmd_oracle->parsed()) {
      out << run_oracle(detail::load_config(oracle_flags)).dump(1) << "\n";
    } else if (cmd_partition->parsed()) {
      out << run_partition_info(detail::load_config(partition_flags)).dump(1) << "\n";
    }
  } catch (const Error& e) {
    nlohmann::json err;
    err["error"] = {{"type", e.type()}, {"message", e.what()}};
    out << err.dump(1) << "\n";
    return int(e.exit_code());
  } catch (const std::exception& e) {
    nlohmann::json err;
    err["error"] = {{"type", "internal-error"}, {"message", e.what()}};
    out << err.dump(1) << "\n";
    return int(ExitCode::numerical_failure);
  }
  return 0;
}

}  // namespace eotsieve
