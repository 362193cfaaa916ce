#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "csp/bench.hpp"

namespace {

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  nlohmann::json j;
  in >> j;
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

int cmd_plan(const std::string& task, const std::string& algo, const std::string& metric,
             uint64_t seed, long cap, const std::string& out_dir, const nlohmann::json& config) {
  csp::bench::RunArtifacts art;
  if (algo == "rrt") {
    auto row = csp::bench::run_one(task, algo, metric, seed, cap);
    std::cout << csp::bench::csv_header() << '\n' << csp::bench::to_csv(row) << '\n';
    return row.capped ? 2 : 0;
  }
  const csp::sim::TaskSpec spec = csp::sim::TaskSpec::by_name(task, seed);
  auto cfg = csp::bench::config_for(algo, algo == "csp-nocur" ? "rnd" : metric, seed, cap);
  if (config.contains("batch_size")) cfg.batch_size = config["batch_size"].get<int>();
  if (config.contains("keep_fraction")) cfg.keep_fraction = config["keep_fraction"].get<double>();
  if (config.contains("replay_check_permille"))
    cfg.replay_check_permille = config["replay_check_permille"].get<int>();
  csp::planner::Planner pl(spec, cfg);
  auto out = pl.run();

  csp::bench::RunRow row;
  row.task = task;
  row.algorithm = algo;
  row.metric = algo == "csp-nocur" ? "-" : metric;
  row.seed = seed;
  row.samples = out.samples;
  row.capped = !out.solution.has_value();
  row.depth = out.solution ? out.solution->depth : 0;
  row.wall_ms = out.wall_ms;
  std::cout << csp::bench::csv_header() << '\n' << csp::bench::to_csv(row) << '\n';

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_text(out_dir + "/tree.json", pl.tree_to_json().dump(1));
    if (algo == "csp") write_text(out_dir + "/policy.json", pl.policy().checkpoint().dump());
    if (pl.curiosity_module())
      write_text(out_dir + "/curiosity.json", pl.curiosity_module()->checkpoint().dump());
    if (out.solution) {
      nlohmann::json sol;
      sol["vertex_path"] = out.solution->vertex_path;
      nlohmann::json macros = nlohmann::json::array();
      for (const auto& m : out.solution->macros) macros.push_back(csp::sim::macro_to_json(m));
      sol["macros"] = std::move(macros);
      sol["samples"] = out.solution->samples;
      sol["depth"] = out.solution->depth;
      write_text(out_dir + "/solution.json", sol.dump(1));
    }
  }
  return out.solution ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"curiosity-weighted macro-action planner benchmark"};
  app.require_subcommand(1);

  std::string task = "stack3", algo = "csp", metric = "rnd";
  uint64_t seed = 0;
  long cap = csp::bench::kDefaultCap;
  std::string out_path, config_path, in_path;

  auto add_common = [&](CLI::App* c) {
    c->add_option("--task", task, "task name (stack2|stack3|stack5|pushaway|bookshelf|moveany)");
    c->add_option("--algo", algo, "algorithm (csp|csp-nocur|csp-noac|rrt|ppo|ppo-rnd)");
    c->add_option("--metric", metric, "curiosity metric (se|fd|rnd)");
    c->add_option("--seed", seed, "random seed");
    c->add_option("--cap", cap, "sample cap");
    c->add_option("--out", out_path, "output file or directory");
    c->add_option("--config", config_path, "JSON config overrides");
  };

  CLI::App* plan = app.add_subcommand("plan", "run one planning instance");
  add_common(plan);
  CLI::App* grid = app.add_subcommand("grid", "run a task x algorithm x seed grid");
  add_common(grid);
  CLI::App* transfer = app.add_subcommand("transfer", "source-to-target reuse experiment");
  add_common(transfer);
  CLI::App* export_tree = app.add_subcommand("export-tree", "emit a DOT view of a search tree");
  add_common(export_tree);
  export_tree->add_option("--in", in_path, "tree JSON produced by plan --out");
  CLI::App* timing = app.add_subcommand("timing", "per-component median timings");
  add_common(timing);

  CLI11_PARSE(app, argc, argv);

  try {
    nlohmann::json config = nlohmann::json::object();
    if (!config_path.empty()) config = load_json(config_path);
    if (config.contains("cap")) cap = config["cap"].get<long>();

    if (plan->parsed()) {
      if (algo == "ppo" || algo == "ppo-rnd") {
        csp::baselines::DrlConfig dcfg;
        dcfg.seed = seed;
        dcfg.train_rnd = algo == "ppo-rnd";
        dcfg.alpha = algo == "ppo-rnd" ? 0.5 : 1.0;
        if (config.contains("alpha")) dcfg.alpha = config["alpha"].get<double>();
        if (config.contains("train_steps")) dcfg.train_steps = config["train_steps"].get<long>();
        auto res = csp::baselines::run_ppo(csp::sim::TaskSpec::by_name(task, seed), dcfg);
        std::cout << "task,algorithm,metric,seed,train_steps,goal_reaching,eval_successes,wall_ms\n";
        int succ = 0;
        for (bool b : res.eval_success) succ += b ? 1 : 0;
        std::cout << task << ',' << algo << ",-," << seed << ',' << res.train_steps << ','
                  << (res.goal_reaching ? 1 : 0) << ',' << succ << ',' << res.wall_ms << '\n';
        return res.goal_reaching ? 0 : 2;
      }
      return cmd_plan(task, algo, metric, seed, cap, out_path, config);
    }

    if (grid->parsed()) {
      csp::bench::GridSpec spec;
      spec.tasks = config.value("tasks", std::vector<std::string>{task});
      spec.algorithms = config.value("algorithms", std::vector<std::string>{algo});
      spec.metrics = config.value("metrics", std::vector<std::string>{metric});
      std::vector<uint64_t> seeds = {seed};
      if (config.contains("seeds")) seeds = config["seeds"].get<std::vector<uint64_t>>();
      spec.seeds = seeds;
      spec.cap = cap;
      spec.results_dir = config.value("results_dir", std::string{});
      if (out_path.empty()) throw std::runtime_error("grid needs --out CSV path");
      auto rows = csp::bench::run_grid(spec, out_path);
      std::cout << "wrote " << rows.size() << " rows to " << out_path << '\n';
      return 0;
    }

    if (transfer->parsed()) {
      const std::string source = config.value("source_task", std::string{"stack5"});
      const std::string target = config.value("target_task", std::string{"pushaway"});
      std::vector<uint64_t> seeds = {seed};
      if (config.contains("seeds")) seeds = config["seeds"].get<std::vector<uint64_t>>();
      std::vector<std::string> conditions =
          config.value("conditions", std::vector<std::string>{"none", "curiosity", "action",
                                                              "full"});
      auto rows = csp::bench::run_transfer(source, target, metric, seeds, cap, conditions);
      std::ostringstream os;
      os << "condition,seed,source_samples,target_samples,solved\n";
      for (const auto& r : rows)
        os << r.condition << ',' << r.seed << ',' << r.source_samples << ','
           << r.target_samples << ',' << (r.solved ? 1 : 0) << '\n';
      if (!out_path.empty())
        write_text(out_path, os.str());
      else
        std::cout << os.str();
      return 0;
    }

    if (export_tree->parsed()) {
      if (in_path.empty()) throw std::runtime_error("export-tree needs --in tree.json");
      const nlohmann::json tree = load_json(in_path);
      csp::planner::replay_validate_tree_json(tree,
                                              csp::sim::TaskSpec::from_json(tree.at("task")));
      const std::string dot = csp::bench::tree_to_dot(tree);
      if (!out_path.empty())
        write_text(out_path, dot);
      else
        std::cout << dot;
      return 0;
    }

    if (timing->parsed()) {
      auto rep = csp::bench::run_timing(task, algo, metric, seed, cap);
      std::cout << "component,median_ms\n";
      std::cout << "action_selection," << rep.action_select_ms << '\n';
      std::cout << "motion_planning," << rep.motion_plan_ms << '\n';
      std::cout << "world_model_update," << (algo == "csp-nocur" ? -1.0 : rep.wm_update_ms)
                << '\n';
      std::cout << "actor_critic_update," << (algo == "csp" ? rep.ac_update_ms : -1.0) << '\n';
      std::cout << "measurements," << rep.measurements << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "fault: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
