#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gmprune/bayesopt.hpp"
#include "gmprune/dataset.hpp"
#include "gmprune/grouping.hpp"
#include "gmprune/network.hpp"

namespace gmprune::pipeline {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a stage fails; `checkpoint` names the last good network state
/// (empty when no output directory was configured).
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, std::filesystem::path checkpoint, const std::string& what)
      : std::runtime_error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)),
        checkpoint_(std::move(checkpoint)) {}
  const std::string& stage() const { return stage_; }
  const std::filesystem::path& checkpoint() const { return checkpoint_; }

 private:
  std::string stage_;
  std::filesystem::path checkpoint_;
};

enum class Mode { BFpgm, Uniform };
enum class Architecture { Conv6, Conv9 };

std::string to_string(Mode mode);
std::string to_string(Architecture arch);

struct DatasetSpec {
  std::string kind = "synthetic";  // "synthetic" | "idx"
  std::size_t n = 1000;
  std::size_t n_test = 500;
  std::size_t classes = 4;
  std::size_t size = 16;
  std::string train_images, train_labels, test_images, test_labels;
};

struct PipelineConfig {
  std::size_t n_pretrain = 50;
  std::size_t n_sfp = 30;
  std::size_t n_finetune = 5;
  double t = 0.5;
  double bound_offset = 0.2;
  std::size_t i0 = 12;
  std::size_t big_i = 60;
  double t_plus = 0.04;
  double lambda = 5.0;
  double penalty_value = 100.0;
  double kappa = 2.0;
  float lr_pretrain = 0.05f;
  float lr_sfp = 0.02f;
  float lr_finetune = 0.01f;
  std::size_t n_groups = 6;
  std::optional<std::vector<std::size_t>> boundaries;
  Mode mode = Mode::BFpgm;
  std::uint64_t seed = 1;
  std::size_t batch_size = 32;
  Architecture arch = Architecture::Conv6;
  DatasetSpec dataset;

  void validate() const;
};

inline constexpr double kBoundCap = 0.95;
inline constexpr std::size_t kSoftPruneCadence = 5;

/// Unknown keys, wrong types and out-of-range values raise ConfigError.
PipelineConfig parse_config(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const PipelineConfig& cfg);

// Every stage draws from seed ^ (stage << 56).
enum class Stage : std::uint64_t { Init = 0, Data = 1, Pretrain = 2, Split = 3, Optimize = 4, Objective = 5, Sfp = 6, Finetune = 7, TestData = 8 };
std::uint64_t stage_seed(std::uint64_t seed, Stage stage);

/// conv6: channels 1-8-8-16-16-24-24, k=3, padding 1, stride 2 on the 1st/3rd/5th conv;
/// conv9: 1-8-8-8-16-16-16-24-24-24, stride 2 on the 1st/4th/7th conv.
/// Each conv is followed by LeakyRelu; then global average pool and a
/// non-prunable dense head.
nn::Network build_toy_net(std::uint64_t seed, std::size_t classes = 4, Architecture arch = Architecture::Conv6);

struct Datasets {
  data::Dataset train;
  data::Dataset test;
};

Datasets load_datasets(const PipelineConfig& cfg);

group::LayerGrouping make_grouping(const nn::Network& net, const PipelineConfig& cfg);

struct EpochMetric {
  std::size_t epoch = 0;
  std::string stage;
  double loss = 0.0;
  double accuracy = 0.0;
  double sparsity = 0.0;
};

struct RunReport {
  std::string mode;
  std::uint64_t seed = 0;
  double target = 0.0;
  std::string arch;
  std::size_t n_groups = 0;
  std::vector<std::string> events;
  std::vector<EpochMetric> metrics;
  std::vector<double> rates;
  std::optional<double> bo_best_value;
  std::size_t bo_evaluations = 0;
  std::size_t bo_penalties = 0;
  std::vector<bo::HistoryEntry> bo_history;
  double pretrain_accuracy = 0.0;
  double final_accuracy = 0.0;
  double final_loss = 0.0;
  group::SparsityReport final_sparsity;
  std::size_t params_before = 0;  // prunable parameters
  std::size_t params_after = 0;   // prunable parameters still active
  std::size_t params_network = 0;  // every parameter, head included
  std::vector<std::size_t> group_params;
  std::map<std::string, double> stage_seconds;

  nlohmann::json to_json(bool include_timing = true) const;
};

struct StageResult {
  std::vector<EpochMetric> metrics;
  std::vector<std::string> events;
};

StageResult pretrain(nn::Network& net, const Datasets& data, const group::LayerGrouping& grouping,
                     const PipelineConfig& cfg);

/// Bayesian search over [0, min(T + bound_offset, 0.95)]^N on the 80/20 split of the training data.
bo::OptimizeResult optimize_rates(const nn::Network& pretrained, const data::Dataset& train,
                                  const group::LayerGrouping& grouping, const PipelineConfig& cfg);

/// SFP loop (soft prune when epoch % 5 == 0, then one epoch), hard prune, finetune.
StageResult prune_and_finetune(nn::Network& net, std::span<const double> rates, const Datasets& data,
                               const group::LayerGrouping& grouping, const PipelineConfig& cfg);

struct RunOptions {
  std::filesystem::path out_dir;  // empty: nothing written
};

RunReport run(const PipelineConfig& cfg, const RunOptions& options = {});

void write_metrics_csv(std::ostream& out, std::span<const EpochMetric> metrics);

struct ComparisonRow {
  std::string mode;
  std::size_t runs = 0;
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;
  double sparsity_mean = 0.0;
  double sparsity_std = 0.0;
};

struct Comparison {
  std::vector<ComparisonRow> rows;  // uniform first, then bfpgm
  std::vector<RunReport> runs;
};

/// Runs both modes for every seed at the same T; std is the sample standard deviation.
Comparison compare_modes(const PipelineConfig& cfg, std::span<const std::uint64_t> seeds,
                         const std::filesystem::path& out_dir = {});

void write_comparison_csv(std::ostream& out, const Comparison& cmp);

}  // namespace gmprune::pipeline
