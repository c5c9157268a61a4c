#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>

#include "gmprune/checkpoint.hpp"
#include "gmprune/fpgm.hpp"
#include "gmprune/objective.hpp"
#include "gmprune/pipeline.hpp"
#include "gmprune/rng.hpp"
#include "gmprune/train.hpp"

namespace gmprune::pipeline {

using nlohmann::json;

namespace {

struct ConvSpec {
  std::size_t out;
  std::size_t stride;
};

std::vector<ConvSpec> conv_specs(Architecture arch) {
  if (arch == Architecture::Conv6) return {{8, 2}, {8, 1}, {16, 2}, {16, 1}, {24, 2}, {24, 1}};
  return {{8, 2}, {8, 1}, {8, 1}, {16, 2}, {16, 1}, {16, 1}, {24, 2}, {24, 1}, {24, 1}};
}

double one_epoch(nn::Network& net, const data::Dataset& d, float lr, std::size_t batch, std::uint64_t seed,
                 std::size_t epoch) {
  const auto trace = nn::train_epochs(net, d, {1, lr, batch, mix_seed(seed, epoch)});
  return trace.epoch_loss.front();
}

EpochMetric measure(const nn::Network& net, const Datasets& data, const group::LayerGrouping& grouping,
                    std::size_t epoch, const std::string& stage, double loss) {
  return {epoch, stage, loss, nn::evaluate(net, data.test).accuracy, group::sparsity(net, grouping).overall};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

template <class Fn>
void write_with(const std::filesystem::path& path, Fn&& fn) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  fn(out);
}

double elapsed(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

nn::Network build_toy_net(std::uint64_t seed, std::size_t classes, Architecture arch) {
  if (classes < 2) throw std::invalid_argument("toy net needs at least two classes");
  nn::Network net(seed);
  std::size_t in = 1;
  for (const auto& c : conv_specs(arch)) {
    net.add(nn::ConvLayer::make(in, c.out, 3, c.stride, 1));
    net.add(nn::LeakyRelu{});
    in = c.out;
  }
  net.add(nn::GlobalAvgPool{});
  auto head = nn::DenseLayer::make(in, classes);
  head.prunable = false;
  net.add(std::move(head));
  net.validate({1, 16, 16});
  net.initialize();
  return net;
}

Datasets load_datasets(const PipelineConfig& cfg) {
  const auto& d = cfg.dataset;
  if (d.kind == "synthetic") {
    return {data::make_synthetic(stage_seed(cfg.seed, Stage::Data), d.n, d.classes, d.size),
            data::make_synthetic(stage_seed(cfg.seed, Stage::TestData), d.n_test, d.classes, d.size)};
  }
  Datasets out{data::read_idx(d.train_images, d.train_labels), {}};
  out.test = d.test_images.empty() ? out.train : data::read_idx(d.test_images, d.test_labels);
  if (out.test.class_count != out.train.class_count) {
    out.test.class_count = std::max(out.test.class_count, out.train.class_count);
    out.train.class_count = out.test.class_count;
  }
  return out;
}

group::LayerGrouping make_grouping(const nn::Network& net, const PipelineConfig& cfg) {
  try {
    if (cfg.boundaries) return group::partition(net, cfg.n_groups, *cfg.boundaries);
    const auto cuts = group::equal_depth_boundaries(net.prunable_layers().size(), cfg.n_groups);
    return group::partition(net, cfg.n_groups, cuts);
  } catch (const group::GroupingError& e) {
    throw ConfigError(std::string("invalid grouping: ") + e.what());
  }
}

StageResult pretrain(nn::Network& net, const Datasets& data, const group::LayerGrouping& grouping,
                     const PipelineConfig& cfg) {
  StageResult r;
  const auto seed = stage_seed(cfg.seed, Stage::Pretrain);
  r.events.push_back("pretrain");
  for (std::size_t e = 0; e < cfg.n_pretrain; ++e) {
    const double loss = one_epoch(net, data.train, cfg.lr_pretrain, cfg.batch_size, seed, e);
    r.metrics.push_back(measure(net, data, grouping, e, "pretrain", loss));
  }
  return r;
}

bo::OptimizeResult optimize_rates(const nn::Network& pretrained, const data::Dataset& train,
                                  const group::LayerGrouping& grouping, const PipelineConfig& cfg) {
  objective::ObjectiveConfig ocfg;
  ocfg.target = cfg.t;
  ocfg.t_plus = cfg.t_plus;
  ocfg.lambda = cfg.lambda;
  ocfg.penalty_value = cfg.penalty_value;
  ocfg.lr = cfg.lr_sfp;
  ocfg.batch_size = cfg.batch_size;
  ocfg.epoch_seed = stage_seed(cfg.seed, Stage::Objective);
  const objective::PruningObjective f(objective::snapshot_pretrained(pretrained), grouping,
                                      data::split_80_20(train, stage_seed(cfg.seed, Stage::Split)), ocfg);

  const auto bounds = bo::rate_bounds(grouping.size(), cfg.t, cfg.bound_offset, kBoundCap);
  bo::BOConfig bcfg;
  bcfg.i0 = cfg.i0;
  bcfg.iterations = cfg.big_i;
  bcfg.kappa = cfg.kappa;
  bcfg.seed = stage_seed(cfg.seed, Stage::Optimize);
  return bo::optimize(
      [&](std::span<const double> x) {
        const auto r = f.evaluate(x);
        return bo::Evaluation{r.value, r.was_penalty};
      },
      bounds, bcfg);
}

StageResult prune_and_finetune(nn::Network& net, std::span<const double> rates, const Datasets& data,
                               const group::LayerGrouping& grouping, const PipelineConfig& cfg) {
  StageResult r;
  const auto sfp_seed = stage_seed(cfg.seed, Stage::Sfp);
  for (std::size_t e = 0; e < cfg.n_sfp; ++e) {
    if (e % kSoftPruneCadence == 0) {
      fpgm::soft_prune_network(net, rates, grouping);
      r.events.push_back("soft_prune@" + std::to_string(e));
    }
    r.events.push_back("sfp_epoch@" + std::to_string(e));
    const double loss = one_epoch(net, data.train, cfg.lr_sfp, cfg.batch_size, sfp_seed, e);
    r.metrics.push_back(measure(net, data, grouping, e, "sfp", loss));
  }
  fpgm::hard_prune_network(net, rates, grouping);
  r.events.push_back("hard_prune");
  const auto ft_seed = stage_seed(cfg.seed, Stage::Finetune);
  for (std::size_t e = 0; e < cfg.n_finetune; ++e) {
    r.events.push_back("finetune_epoch@" + std::to_string(e));
    const double loss = one_epoch(net, data.train, cfg.lr_finetune, cfg.batch_size, ft_seed, e);
    r.metrics.push_back(measure(net, data, grouping, e, "finetune", loss));
  }
  return r;
}

void write_metrics_csv(std::ostream& out, std::span<const EpochMetric> metrics) {
  out << "epoch,stage,loss,accuracy,sparsity\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& m : metrics) {
    out << m.epoch << ',' << m.stage << ',' << m.loss << ',' << m.accuracy << ',' << m.sparsity << '\n';
  }
}

json RunReport::to_json(bool include_timing) const {
  json j;
  j["mode"] = mode;
  j["seed"] = seed;
  j["target"] = target;
  j["arch"] = arch;
  j["n_groups"] = n_groups;
  j["events"] = events;
  j["rates"] = rates;
  j["bo"] = {{"evaluations", bo_evaluations}, {"penalties", bo_penalties}};
  j["bo"]["best_value"] = bo_best_value ? json(*bo_best_value) : json(nullptr);
  json hist = json::array();
  for (const auto& h : bo_history) {
    json e = {{"iteration", h.iteration}, {"x", h.x}, {"value", h.value}, {"was_penalty", h.was_penalty}};
    if (include_timing) e["seconds"] = h.seconds;
    hist.push_back(e);
  }
  j["bo"]["history"] = hist;
  json traces = json::array();
  for (const auto& m : metrics) {
    traces.push_back(
        {{"epoch", m.epoch}, {"stage", m.stage}, {"loss", m.loss}, {"accuracy", m.accuracy}, {"sparsity", m.sparsity}});
  }
  j["metrics"] = traces;
  j["pretrain_accuracy"] = pretrain_accuracy;
  j["final_accuracy"] = final_accuracy;
  j["final_loss"] = final_loss;
  j["sparsity"] = {{"overall", final_sparsity.overall},
                   {"per_group", final_sparsity.per_group},
                   {"params_total", final_sparsity.params_total},
                   {"params_pruned", final_sparsity.params_pruned},
                   {"per_group_params", final_sparsity.per_group_params},
                   {"per_group_pruned", final_sparsity.per_group_pruned}};
  j["params"] = {{"prunable_before", params_before},
                 {"prunable_after", params_after},
                 {"network_total", params_network},
                 {"per_group", group_params}};
  if (include_timing) j["stage_seconds"] = stage_seconds;
  return j;
}

RunReport run(const PipelineConfig& cfg, const RunOptions& options) {
  cfg.validate();
  const bool writing = !options.out_dir.empty();
  if (writing) std::filesystem::create_directories(options.out_dir);
  const auto last_good_path = writing ? options.out_dir / "last_good.pkck" : std::filesystem::path{};

  RunReport report;
  report.mode = to_string(cfg.mode);
  report.seed = cfg.seed;
  report.target = cfg.t;
  report.arch = to_string(cfg.arch);
  report.n_groups = cfg.n_groups;

  Datasets data;
  try {
    data = load_datasets(cfg);
  } catch (const std::exception& e) {
    throw StageError("data", {}, e.what());
  }
  nn::Network net = build_toy_net(stage_seed(cfg.seed, Stage::Init), data.train.class_count, cfg.arch);
  try {
    net.validate(data.train.sample_shape());
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("dataset does not fit the toy net: ") + e.what());
  }
  const auto grouping = make_grouping(net, cfg);
  const auto counts = group::count_params(net, grouping);
  report.params_before = counts.total;
  report.group_params = counts.per_group;
  for (const auto& layer : net.layers) {
    nn::visit_filter_layer(layer, [&](const auto& l) { report.params_network += nn::param_count(l); });
  }

  // Each stage works on `net`; on failure the state it started from is saved.
  auto guarded = [&](const std::string& stage, auto&& body) {
    const auto start = std::chrono::steady_clock::now();
    const nn::Network before = net;
    try {
      body();
    } catch (const std::exception& e) {
      if (writing) {
        try {
          nn::save_checkpoint(before, last_good_path);
        } catch (const std::exception&) {
        }
      }
      throw StageError(stage, last_good_path, e.what());
    }
    report.stage_seconds[stage] = elapsed(start);
  };

  guarded("pretrain", [&] {
    auto r = pretrain(net, data, grouping, cfg);
    report.events.insert(report.events.end(), r.events.begin(), r.events.end());
    report.metrics.insert(report.metrics.end(), r.metrics.begin(), r.metrics.end());
    report.pretrain_accuracy = nn::evaluate(net, data.test).accuracy;
    if (writing) nn::save_checkpoint(net, options.out_dir / "pretrained.pkck");
  });

  if (cfg.mode == Mode::BFpgm) {
    guarded("optimize", [&] {
      report.events.push_back("optimize");
      bo::OptimizeResult r;
      try {
        r = optimize_rates(net, data.train, grouping, cfg);
      } catch (const bo::OptimizationAborted& e) {
        report.bo_history = e.partial_history();
        throw;
      }
      report.bo_history = r.history;
      report.bo_evaluations = r.history.size();
      for (const auto& h : r.history) report.bo_penalties += h.was_penalty ? 1 : 0;
      report.bo_best_value = r.best_value;
      if (report.bo_penalties == r.history.size()) {
        report.events.push_back("optimize:no_feasible_point:uniform_fallback");
        report.rates.assign(grouping.size(), cfg.t);
      } else {
        report.rates = r.best_x;
      }
    });
  } else {
    report.rates.assign(grouping.size(), cfg.t);
  }

  guarded("prune", [&] {
    auto r = prune_and_finetune(net, report.rates, data, grouping, cfg);
    report.events.insert(report.events.end(), r.events.begin(), r.events.end());
    report.metrics.insert(report.metrics.end(), r.metrics.begin(), r.metrics.end());
  });

  const auto final_metrics = nn::evaluate(net, data.test);
  report.final_accuracy = final_metrics.accuracy;
  report.final_loss = final_metrics.loss;
  report.final_sparsity = group::sparsity(net, grouping);
  report.params_after = report.final_sparsity.params_total - report.final_sparsity.params_pruned;

  if (writing) {
    nn::save_checkpoint(net, options.out_dir / "final.pkck");
    write_text(options.out_dir / "run_report.json", report.to_json().dump(2) + "\n");
    write_with(options.out_dir / "metrics.csv", [&](std::ostream& o) { write_metrics_csv(o, report.metrics); });
    write_with(options.out_dir / "bo_history.csv",
               [&](std::ostream& o) { bo::write_history_csv(o, report.bo_history); });
    write_text(options.out_dir / "config.json", to_json(cfg).dump(2) + "\n");
  }
  return report;
}

Comparison compare_modes(const PipelineConfig& cfg, std::span<const std::uint64_t> seeds,
                         const std::filesystem::path& out_dir) {
  if (seeds.empty()) throw ConfigError("compare needs at least one seed");
  Comparison cmp;
  for (Mode mode : {Mode::Uniform, Mode::BFpgm}) {
    std::vector<double> acc, sp;
    for (std::uint64_t seed : seeds) {
      PipelineConfig c = cfg;
      c.mode = mode;
      c.seed = seed;
      RunOptions opts;
      if (!out_dir.empty()) opts.out_dir = out_dir / (to_string(mode) + "_seed" + std::to_string(seed));
      cmp.runs.push_back(run(c, opts));
      acc.push_back(cmp.runs.back().final_accuracy);
      sp.push_back(cmp.runs.back().final_sparsity.overall);
    }
    auto stats = [](const std::vector<double>& v) {
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
      return std::pair{mean, sd};
    };
    const auto [am, as] = stats(acc);
    const auto [sm, ss] = stats(sp);
    cmp.rows.push_back({to_string(mode), seeds.size(), am, as, sm, ss});
  }
  if (!out_dir.empty()) {
    write_with(out_dir / "comparison.csv", [&](std::ostream& o) { write_comparison_csv(o, cmp); });
  }
  return cmp;
}

void write_comparison_csv(std::ostream& out, const Comparison& cmp) {
  out << "mode,runs,accuracy_mean,accuracy_std,sparsity_mean,sparsity_std\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& r : cmp.rows) {
    out << r.mode << ',' << r.runs << ',' << r.accuracy_mean << ',' << r.accuracy_std << ',' << r.sparsity_mean << ','
        << r.sparsity_std << '\n';
  }
}

}  // namespace gmprune::pipeline
