#pragma once

#include <optional>
#include <string>
#include <vector>

#include "csp/baselines.hpp"
#include "csp/planner.hpp"

namespace csp::bench {

constexpr long kDefaultCap = 1'000'000;
constexpr long kMaxCap = 10'000'000;

struct RunRow {
  std::string task;
  std::string algorithm;  // csp | csp-nocur | csp-noac | rrt
  std::string metric;     // se | fd | rnd | - (non-curiosity algorithms)
  uint64_t seed = 0;
  long samples = 0;
  bool capped = false;
  int depth = 0;
  double wall_ms = 0.0;
};

std::string csv_header();
std::string to_csv(const RunRow& r);
std::vector<RunRow> parse_csv(const std::string& text);

planner::PlannerConfig config_for(const std::string& algorithm, const std::string& metric,
                                  uint64_t seed, long cap);

struct RunArtifacts {
  std::optional<nlohmann::json> tree;
  std::optional<nlohmann::json> policy_ckpt;
  std::optional<nlohmann::json> curiosity_ckpt;
};

RunRow run_one(const std::string& task_name, const std::string& algorithm,
               const std::string& metric, uint64_t seed, long cap,
               RunArtifacts* artifacts = nullptr);

struct GridSpec {
  std::vector<std::string> tasks;
  std::vector<std::string> algorithms;
  std::vector<std::string> metrics;  // applied to curiosity algorithms only
  std::vector<uint64_t> seeds;
  long cap = kDefaultCap;
  std::string results_dir;  // per-cell files; finished cells are skipped
};

// Runs every cell, resuming from per-cell files keyed by a content hash of the
// cell parameters, and writes trial rows plus mean/SEM summary rows to `out`.
std::vector<RunRow> run_grid(const GridSpec& spec, const std::string& out_csv);

struct TransferCondition {
  bool reuse_curiosity = false;
  bool reuse_policy = false;
};
TransferCondition transfer_condition(const std::string& name);  // none|curiosity|action|full

struct TransferRow {
  std::string condition;
  uint64_t seed = 0;
  long source_samples = 0;
  long target_samples = 0;
  bool solved = false;
};

std::vector<TransferRow> run_transfer(const std::string& source_task,
                                      const std::string& target_task, const std::string& metric,
                                      const std::vector<uint64_t>& seeds, long cap,
                                      const std::vector<std::string>& conditions);

std::string tree_to_dot(const nlohmann::json& tree);

struct TimingReport {
  double action_select_ms = 0.0;  // medians
  double motion_plan_ms = 0.0;
  double wm_update_ms = 0.0;
  double ac_update_ms = 0.0;
  long measurements = 0;
};
TimingReport run_timing(const std::string& task_name, const std::string& algorithm,
                        const std::string& metric, uint64_t seed, long cap);

double median(std::vector<double> xs);
double mean(const std::vector<double>& xs);
double sem(const std::vector<double>& xs);

}  // namespace csp::bench
