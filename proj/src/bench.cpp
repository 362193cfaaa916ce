#include "csp/bench.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "csp/util.hpp"

namespace csp::bench {

namespace fs = std::filesystem;

double median(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

double mean(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sem(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  v /= static_cast<double>(xs.size() - 1);
  return std::sqrt(v / static_cast<double>(xs.size()));
}

std::string csv_header() { return "task,algorithm,metric,seed,samples,capped,depth,wall_ms"; }

std::string to_csv(const RunRow& r) {
  std::ostringstream os;
  os << r.task << ',' << r.algorithm << ',' << r.metric << ',' << r.seed << ',' << r.samples
     << ',' << (r.capped ? 1 : 0) << ',' << r.depth << ',' << r.wall_ms;
  return os.str();
}

std::vector<RunRow> parse_csv(const std::string& text) {
  std::vector<RunRow> rows;
  std::istringstream is(text);
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (first && line == csv_header()) {
      first = false;
      continue;
    }
    first = false;
    std::istringstream ls(line);
    std::string f[8];
    for (int i = 0; i < 8; ++i)
      if (!std::getline(ls, f[i], ',')) throw std::runtime_error("malformed csv row: " + line);
    // Summary rows use non-numeric seed fields; keep them out of RunRow.
    if (f[3] == "mean" || f[3] == "sem") continue;
    RunRow r;
    r.task = f[0];
    r.algorithm = f[1];
    r.metric = f[2];
    r.seed = std::stoull(f[3]);
    r.samples = std::stol(f[4]);
    r.capped = f[5] == "1";
    r.depth = std::stoi(f[6]);
    r.wall_ms = std::stod(f[7]);
    rows.push_back(std::move(r));
  }
  return rows;
}

planner::PlannerConfig config_for(const std::string& algorithm, const std::string& metric,
                                  uint64_t seed, long cap) {
  if (cap <= 0 || cap > kMaxCap) throw std::invalid_argument("sample cap out of range");
  if (algorithm == "csp-nocur") return baselines::no_curiosity_config(cap, seed);
  const auto m = curiosity::metric_from_name(metric);
  if (algorithm == "csp-noac") return baselines::no_actor_critic_config(m, cap, seed);
  if (algorithm != "csp") throw std::invalid_argument("unknown planner algorithm: " + algorithm);
  planner::PlannerConfig cfg;
  cfg.sample_cap = cap;
  cfg.seed = seed;
  cfg.metric = m;
  return cfg;
}

RunRow run_one(const std::string& task_name, const std::string& algorithm,
               const std::string& metric, uint64_t seed, long cap, RunArtifacts* artifacts) {
  RunRow row;
  row.task = task_name;
  row.algorithm = algorithm;
  row.seed = seed;
  const sim::TaskSpec task = sim::TaskSpec::by_name(task_name, seed);

  if (algorithm == "rrt") {
    row.metric = "-";
    auto res = baselines::run_rrt_macro(task, cap, seed);
    row.samples = res.samples;
    row.capped = !res.solved;
    row.depth = res.depth;
    row.wall_ms = res.wall_ms;
    return row;
  }

  row.metric = algorithm == "csp-nocur" ? "-" : metric;
  planner::Planner pl(task, config_for(algorithm, algorithm == "csp-nocur" ? "rnd" : metric,
                                       seed, cap));
  auto out = pl.run();
  row.samples = out.samples;
  row.capped = !out.solution.has_value();
  row.depth = out.solution ? out.solution->depth : 0;
  row.wall_ms = out.wall_ms;
  if (artifacts) {
    artifacts->tree = pl.tree_to_json();
    if (algorithm == "csp") artifacts->policy_ckpt = pl.policy().checkpoint();
    if (pl.curiosity_module()) artifacts->curiosity_ckpt = pl.curiosity_module()->checkpoint();
  }
  return row;
}

namespace {

std::string cell_key(const std::string& task, const std::string& algo, const std::string& metric,
                     uint64_t seed, long cap) {
  uint64_t h = hash_string(task);
  h = hash_string(algo, h);
  h = hash_string(metric, h);
  h = hash_combine(h, seed);
  h = hash_combine(h, static_cast<uint64_t>(cap));
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

bool uses_metric(const std::string& algo) { return algo == "csp" || algo == "csp-noac"; }

}  // namespace

std::vector<RunRow> run_grid(const GridSpec& spec, const std::string& out_csv) {
  if (!spec.results_dir.empty()) fs::create_directories(spec.results_dir);
  std::vector<RunRow> rows;
  for (const auto& task : spec.tasks) {
    for (const auto& algo : spec.algorithms) {
      const std::vector<std::string> metrics =
          uses_metric(algo) ? spec.metrics : std::vector<std::string>{"-"};
      for (const auto& metric : metrics) {
        for (uint64_t seed : spec.seeds) {
          RunRow row;
          fs::path cell;
          if (!spec.results_dir.empty()) {
            cell = fs::path(spec.results_dir) / (cell_key(task, algo, metric, seed, spec.cap) +
                                                 ".csv");
            if (fs::exists(cell)) {
              std::ifstream in(cell);
              std::stringstream ss;
              ss << in.rdbuf();
              auto cached = parse_csv(ss.str());
              if (cached.size() == 1) {
                rows.push_back(cached[0]);
                continue;
              }
            }
          }
          row = run_one(task, algo, metric, seed, spec.cap);
          if (!cell.empty()) {
            std::ofstream out(cell);
            out << csv_header() << '\n' << to_csv(row) << '\n';
          }
          rows.push_back(std::move(row));
        }
      }
    }
  }

  std::ofstream out(out_csv);
  if (!out) throw std::runtime_error("cannot write " + out_csv);
  out << csv_header() << '\n';
  for (const auto& r : rows) out << to_csv(r) << '\n';
  // Per-(task, algorithm, metric) mean and SEM of the samples column.
  for (const auto& task : spec.tasks)
    for (const auto& algo : spec.algorithms) {
      const std::vector<std::string> metrics =
          uses_metric(algo) ? spec.metrics : std::vector<std::string>{"-"};
      for (const auto& metric : metrics) {
        std::vector<double> samples, walls;
        int capped = 0, depth_sum = 0, n = 0;
        for (const auto& r : rows)
          if (r.task == task && r.algorithm == algo && r.metric == metric) {
            samples.push_back(static_cast<double>(r.samples));
            walls.push_back(r.wall_ms);
            capped += r.capped ? 1 : 0;
            depth_sum += r.depth;
            ++n;
          }
        if (n == 0) continue;
        out << task << ',' << algo << ',' << metric << ",mean," << mean(samples) << ','
            << (static_cast<double>(capped) / n) << ',' << (static_cast<double>(depth_sum) / n)
            << ',' << mean(walls) << '\n';
        out << task << ',' << algo << ',' << metric << ",sem," << sem(samples) << ",0,0,"
            << sem(walls) << '\n';
      }
    }
  return rows;
}

TransferCondition transfer_condition(const std::string& name) {
  if (name == "none") return {false, false};
  if (name == "curiosity") return {true, false};
  if (name == "action") return {false, true};
  if (name == "full") return {true, true};
  throw std::invalid_argument("unknown transfer condition: " + name);
}

std::vector<TransferRow> run_transfer(const std::string& source_task,
                                      const std::string& target_task, const std::string& metric,
                                      const std::vector<uint64_t>& seeds, long cap,
                                      const std::vector<std::string>& conditions) {
  std::vector<TransferRow> out;
  for (uint64_t seed : seeds) {
    RunArtifacts art;
    RunRow src = run_one(source_task, "csp", metric, seed, cap, &art);
    for (const auto& cond_name : conditions) {
      const TransferCondition cond = transfer_condition(cond_name);
      const sim::TaskSpec task = sim::TaskSpec::by_name(target_task, seed);
      planner::Planner pl(task, config_for("csp", metric, seed, cap));
      if (cond.reuse_policy && art.policy_ckpt) pl.load_policy_checkpoint(*art.policy_ckpt);
      if (cond.reuse_curiosity && art.curiosity_ckpt)
        pl.load_curiosity_checkpoint(*art.curiosity_ckpt);
      auto res = pl.run();
      TransferRow row;
      row.condition = cond_name;
      row.seed = seed;
      row.source_samples = src.samples;
      row.target_samples = res.samples;
      row.solved = res.solution.has_value();
      out.push_back(std::move(row));
    }
  }
  return out;
}

std::string tree_to_dot(const nlohmann::json& tree) {
  std::ostringstream os;
  os << "digraph csp {\n  node [shape=circle];\n";
  for (const auto& v : tree.at("vertices")) {
    const int id = v.at("id").get<int>();
    const bool pruned = v.at("pruned").get<bool>();
    os << "  n" << id << " [label=\"" << id << "\\n" << v.at("score").get<double>()
       << "\"" << (pruned ? ", style=dotted" : "") << "];\n";
    const int parent = v.at("parent").get<int>();
    if (parent >= 0) os << "  n" << parent << " -> n" << id << ";\n";
  }
  os << "}\n";
  return os.str();
}

TimingReport run_timing(const std::string& task_name, const std::string& algorithm,
                        const std::string& metric, uint64_t seed, long cap) {
  const sim::TaskSpec task = sim::TaskSpec::by_name(task_name, seed);
  auto cfg = config_for(algorithm, algorithm == "csp-nocur" ? "rnd" : metric, seed, cap);
  cfg.collect_timing = true;
  planner::Planner pl(task, cfg);
  pl.run();
  const auto& t = pl.timing();
  TimingReport rep;
  rep.action_select_ms = median(t.action_select_ms);
  rep.motion_plan_ms = median(t.motion_plan_ms);
  rep.wm_update_ms = median(t.wm_update_ms);
  rep.ac_update_ms = median(t.ac_update_ms);
  rep.measurements = static_cast<long>(t.motion_plan_ms.size());
  return rep;
}

}  // namespace csp::bench
