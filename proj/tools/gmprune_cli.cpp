// gmprune: pretrain, search per-group pruning rates, prune and compare.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "gmprune/checkpoint.hpp"
#include "gmprune/pipeline.hpp"
#include "gmprune/train.hpp"

namespace fs = std::filesystem;
using namespace gmprune;
using nlohmann::json;

namespace {

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "JSON config file")->required();
  cmd->add_option("--seed", args.seed, "override the config seed");
  cmd->add_option("--out-dir", args.out_dir, "output directory (default: out)");
}

pipeline::PipelineConfig resolve(const CommonArgs& args) {
  if (!fs::exists(args.config)) throw pipeline::ConfigError("config file not found: " + args.config);
  auto cfg = pipeline::load_config(args.config);
  if (args.seed) cfg.seed = *args.seed;
  return cfg;
}

fs::path out_dir(const CommonArgs& args) {
  fs::path dir = args.out_dir.empty() ? fs::path("out") : fs::path(args.out_dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::vector<double> read_rates(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read rates file " + path.string());
  const json j = json::parse(in);
  const json& r = j.is_object() ? j.at("rates") : j;
  return r.get<std::vector<double>>();
}

json sparsity_json(const group::SparsityReport& s, const group::LayerGrouping& g) {
  json per = json::array();
  for (std::size_t i = 0; i < g.size(); ++i) {
    per.push_back({{"group", g.names[i]},
                   {"sparsity", s.per_group[i]},
                   {"params", s.per_group_params[i]},
                   {"pruned", s.per_group_pruned[i]}});
  }
  return {{"overall", s.overall}, {"params_total", s.params_total}, {"params_pruned", s.params_pruned},
          {"groups", per}};
}

int cmd_pretrain(const CommonArgs& args) {
  const auto cfg = resolve(args);
  const auto dir = out_dir(args);
  const auto data = pipeline::load_datasets(cfg);
  auto net = pipeline::build_toy_net(pipeline::stage_seed(cfg.seed, pipeline::Stage::Init), data.train.class_count,
                                     cfg.arch);
  const auto grouping = pipeline::make_grouping(net, cfg);
  const auto r = pipeline::pretrain(net, data, grouping, cfg);
  nn::save_checkpoint(net, dir / "pretrained.pkck");
  std::ofstream m(dir / "metrics.csv", std::ios::binary);
  pipeline::write_metrics_csv(m, r.metrics);
  const auto acc = nn::evaluate(net, data.test).accuracy;
  std::cout << "pretrained " << cfg.n_pretrain << " epochs, test accuracy " << acc << "\n"
            << "wrote " << (dir / "pretrained.pkck").string() << "\n";
  return 0;
}

int cmd_optimize(const CommonArgs& args, const std::string& checkpoint) {
  const auto cfg = resolve(args);
  const auto dir = out_dir(args);
  const fs::path ckpt = checkpoint.empty() ? dir / "pretrained.pkck" : fs::path(checkpoint);
  const auto net = nn::load_checkpoint(ckpt);
  const auto data = pipeline::load_datasets(cfg);
  const auto grouping = pipeline::make_grouping(net, cfg);
  const auto r = pipeline::optimize_rates(net, data.train, grouping, cfg);
  std::ofstream h(dir / "bo_history.csv", std::ios::binary);
  bo::write_history_csv(h, r.history);
  write_file(dir / "rates.json", json{{"rates", r.best_x}, {"value", r.best_value}}.dump(2) + "\n");
  std::cout << "best value " << r.best_value << " at rates " << json(r.best_x).dump() << "\n";
  return 0;
}

int cmd_prune(const CommonArgs& args, const std::string& checkpoint, const std::string& rates_path) {
  const auto cfg = resolve(args);
  const auto dir = out_dir(args);
  const fs::path ckpt = checkpoint.empty() ? dir / "pretrained.pkck" : fs::path(checkpoint);
  auto net = nn::load_checkpoint(ckpt);
  const auto data = pipeline::load_datasets(cfg);
  const auto grouping = pipeline::make_grouping(net, cfg);
  std::vector<double> rates;
  if (!rates_path.empty()) {
    rates = read_rates(rates_path);
  } else if (cfg.mode == pipeline::Mode::Uniform) {
    rates.assign(grouping.size(), cfg.t);
  } else {
    rates = read_rates(dir / "rates.json");
  }
  if (rates.size() != grouping.size()) {
    throw pipeline::ConfigError("rates file has " + std::to_string(rates.size()) + " entries, grouping has " +
                                std::to_string(grouping.size()));
  }
  const auto r = pipeline::prune_and_finetune(net, rates, data, grouping, cfg);
  nn::save_checkpoint(net, dir / "final.pkck");
  std::ofstream m(dir / "metrics.csv", std::ios::binary);
  pipeline::write_metrics_csv(m, r.metrics);
  const auto s = group::sparsity(net, grouping);
  const auto acc = nn::evaluate(net, data.test).accuracy;
  std::cout << "final accuracy " << acc << ", sparsity " << s.overall << "\n";
  return 0;
}

int cmd_run_all(const CommonArgs& args) {
  const auto cfg = resolve(args);
  const auto dir = out_dir(args);
  const auto report = pipeline::run(cfg, {dir});
  std::cout << "mode " << report.mode << ", rates " << json(report.rates).dump() << "\n"
            << "final accuracy " << report.final_accuracy << ", sparsity " << report.final_sparsity.overall << "\n"
            << "reports in " << dir.string() << "\n";
  return 0;
}

int cmd_compare(const CommonArgs& args, const std::vector<std::uint64_t>& seeds) {
  const auto cfg = resolve(args);
  const auto dir = out_dir(args);
  const auto cmp = pipeline::compare_modes(cfg, seeds, dir);
  pipeline::write_comparison_csv(std::cout, cmp);
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint) {
  const auto cfg = resolve(args);
  const auto net = nn::load_checkpoint(checkpoint);
  const auto data = pipeline::load_datasets(cfg);
  const auto grouping = pipeline::make_grouping(net, cfg);
  const auto m = nn::evaluate(net, data.test);
  const json out = {{"accuracy", m.accuracy}, {"loss", m.loss},
                    {"sparsity", sparsity_json(group::sparsity(net, grouping), grouping)}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geometric-median filter pruning with Bayesian per-group rate search"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string checkpoint, rates_path;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

  auto* pre = app.add_subcommand("pretrain", "train the unpruned toy net");
  auto* opt = app.add_subcommand("optimize-rates", "search per-group pruning rates");
  auto* prune = app.add_subcommand("prune", "soft-prune loop, hard prune and finetune");
  auto* all = app.add_subcommand("run-all", "run the full pipeline");
  auto* cmp = app.add_subcommand("compare", "compare uniform and searched rates over several seeds");
  auto* ev = app.add_subcommand("eval", "report accuracy and sparsity of a checkpoint");
  for (auto* cmd : {pre, opt, prune, all, cmp, ev}) add_common(cmd, common);
  opt->add_option("--checkpoint", checkpoint, "pretrained checkpoint (default: <out-dir>/pretrained.pkck)");
  prune->add_option("--checkpoint", checkpoint, "pretrained checkpoint (default: <out-dir>/pretrained.pkck)");
  prune->add_option("--rates", rates_path, "rates JSON (default: uniform T, or <out-dir>/rates.json for bfpgm)");
  cmp->add_option("--seeds", seeds, "seeds to run")->delimiter(',');
  ev->add_option("--checkpoint", checkpoint, "checkpoint to evaluate")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << sub->help();
    return 2;
  }

  try {
    if (*pre) return cmd_pretrain(common);
    if (*opt) return cmd_optimize(common, checkpoint);
    if (*prune) return cmd_prune(common, checkpoint, rates_path);
    if (*all) return cmd_run_all(common);
    if (*cmp) return cmd_compare(common, seeds);
    if (*ev) return cmd_eval(common, checkpoint);
  } catch (const pipeline::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (const auto* s = dynamic_cast<const pipeline::StageError*>(&e); s && !s->checkpoint().empty()) {
      std::cerr << "last good state: " << s->checkpoint().string() << "\n";
    }
    return 1;
  }
  return 2;
}
