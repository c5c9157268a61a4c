#include <cmath>
#include <fstream>
#include <set>

#include "gmprune/pipeline.hpp"

namespace gmprune::pipeline {

using nlohmann::json;

std::string to_string(Mode mode) { return mode == Mode::BFpgm ? "bfpgm" : "uniform"; }
std::string to_string(Architecture arch) { return arch == Architecture::Conv6 ? "conv6" : "conv9"; }

std::uint64_t stage_seed(std::uint64_t seed, Stage stage) {
  return seed ^ (static_cast<std::uint64_t>(stage) << 56);
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

std::size_t get_count(const json& j, const char* key, std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(std::string("'") + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

double get_real(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number() || !std::isfinite(v.get<double>())) {
    throw ConfigError(std::string("'") + key + "' must be a finite number");
  }
  return v.get<double>();
}

std::string get_string(const json& j, const char* key, const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_string()) throw ConfigError(std::string("'") + key + "' must be a string");
  return j.at(key).get<std::string>();
}

DatasetSpec parse_dataset(const json& j) {
  reject_unknown(j,
                 {"kind", "n", "n_test", "classes", "size", "train_images", "train_labels", "test_images",
                  "test_labels"},
                 "dataset");
  DatasetSpec d;
  d.kind = get_string(j, "kind", d.kind);
  d.n = get_count(j, "n", d.n);
  d.n_test = get_count(j, "n_test", d.n_test);
  d.classes = get_count(j, "classes", d.classes);
  d.size = get_count(j, "size", d.size);
  d.train_images = get_string(j, "train_images", "");
  d.train_labels = get_string(j, "train_labels", "");
  d.test_images = get_string(j, "test_images", "");
  d.test_labels = get_string(j, "test_labels", "");
  return d;
}

}  // namespace

void PipelineConfig::validate() const {
  if (!(t > 0.0 && t < 1.0)) throw ConfigError("'t' must lie in (0, 1)");
  if (t_plus < 0.0) throw ConfigError("'t_plus' must be non-negative");
  if (lambda < 0.0) throw ConfigError("'lambda' must be non-negative");
  if (bound_offset < 0.0) throw ConfigError("'bound_offset' must be non-negative");
  if (kappa < 0.0) throw ConfigError("'kappa' must be non-negative");
  if (i0 < 1 || i0 > big_i) throw ConfigError("need 1 <= i0 <= big_i");
  if (!(lr_pretrain > 0.0f && lr_sfp > 0.0f && lr_finetune > 0.0f)) throw ConfigError("learning rates must be positive");
  if (n_groups < 1) throw ConfigError("'n_groups' must be at least 1");
  if (boundaries && boundaries->size() + 1 != n_groups) {
    throw ConfigError("'boundaries' must list n_groups - 1 = " + std::to_string(n_groups - 1) + " cut points");
  }
  if (batch_size < 1) throw ConfigError("'batch_size' must be positive");
  if (dataset.kind == "synthetic") {
    if (dataset.classes < 2 || dataset.classes > 10) throw ConfigError("dataset.classes must be in 2..10");
    if (dataset.size < 8) throw ConfigError("dataset.size must be at least 8");
    if (dataset.n < 5 || dataset.n < dataset.classes) throw ConfigError("dataset.n is too small");
    if (dataset.n_test < dataset.classes) throw ConfigError("dataset.n_test is too small");
  } else if (dataset.kind == "idx") {
    if (dataset.train_images.empty() || dataset.train_labels.empty()) {
      throw ConfigError("idx dataset needs train_images and train_labels");
    }
    if (dataset.test_images.empty() != dataset.test_labels.empty()) {
      throw ConfigError("idx dataset needs both test_images and test_labels, or neither");
    }
  } else {
    throw ConfigError("dataset.kind must be 'synthetic' or 'idx'");
  }
}

PipelineConfig parse_config(const json& j) {
  reject_unknown(j,
                 {"n_pretrain", "n_sfp", "n_finetune", "t", "bound_offset", "i0", "big_i", "t_plus", "lambda",
                  "penalty_value", "kappa", "lr_pretrain", "lr_sfp", "lr_finetune", "n_groups", "boundaries", "mode",
                  "seed", "batch_size", "arch", "dataset"},
                 "config");
  PipelineConfig c;
  c.n_pretrain = get_count(j, "n_pretrain", c.n_pretrain);
  c.n_sfp = get_count(j, "n_sfp", c.n_sfp);
  c.n_finetune = get_count(j, "n_finetune", c.n_finetune);
  c.t = get_real(j, "t", c.t);
  c.bound_offset = get_real(j, "bound_offset", c.bound_offset);
  c.i0 = get_count(j, "i0", c.i0);
  c.big_i = get_count(j, "big_i", c.big_i);
  c.t_plus = get_real(j, "t_plus", c.t_plus);
  c.lambda = get_real(j, "lambda", c.lambda);
  c.penalty_value = get_real(j, "penalty_value", c.penalty_value);
  c.kappa = get_real(j, "kappa", c.kappa);
  c.lr_pretrain = static_cast<float>(get_real(j, "lr_pretrain", c.lr_pretrain));
  c.lr_sfp = static_cast<float>(get_real(j, "lr_sfp", c.lr_sfp));
  c.lr_finetune = static_cast<float>(get_real(j, "lr_finetune", c.lr_finetune));
  c.n_groups = get_count(j, "n_groups", c.n_groups);
  if (j.contains("boundaries")) {
    const auto& b = j.at("boundaries");
    if (!b.is_array()) throw ConfigError("'boundaries' must be an array of layer indices");
    std::vector<std::size_t> cuts;
    for (const auto& v : b) {
      if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError("'boundaries' entries must be indices");
      cuts.push_back(v.get<std::size_t>());
    }
    c.boundaries = std::move(cuts);
  }
  const std::string mode = get_string(j, "mode", to_string(c.mode));
  if (mode == "bfpgm") c.mode = Mode::BFpgm;
  else if (mode == "uniform") c.mode = Mode::Uniform;
  else throw ConfigError("'mode' must be 'bfpgm' or 'uniform', got '" + mode + "'");
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_integer() || j.at("seed").get<long long>() < 0) {
      throw ConfigError("'seed' must be a non-negative integer");
    }
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  c.batch_size = get_count(j, "batch_size", c.batch_size);
  const std::string arch = get_string(j, "arch", to_string(c.arch));
  if (arch == "conv6") c.arch = Architecture::Conv6;
  else if (arch == "conv9") c.arch = Architecture::Conv9;
  else throw ConfigError("'arch' must be 'conv6' or 'conv9', got '" + arch + "'");
  if (j.contains("dataset")) c.dataset = parse_dataset(j.at("dataset"));
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

json to_json(const PipelineConfig& c) {
  json j = {{"n_pretrain", c.n_pretrain}, {"n_sfp", c.n_sfp},
            {"n_finetune", c.n_finetune}, {"t", c.t},
            {"bound_offset", c.bound_offset}, {"i0", c.i0},
            {"big_i", c.big_i}, {"t_plus", c.t_plus},
            {"lambda", c.lambda}, {"penalty_value", c.penalty_value},
            {"kappa", c.kappa}, {"lr_pretrain", c.lr_pretrain},
            {"lr_sfp", c.lr_sfp}, {"lr_finetune", c.lr_finetune},
            {"n_groups", c.n_groups}, {"mode", to_string(c.mode)},
            {"seed", c.seed}, {"batch_size", c.batch_size},
            {"arch", to_string(c.arch)}};
  if (c.boundaries) j["boundaries"] = *c.boundaries;
  json d = {{"kind", c.dataset.kind}};
  if (c.dataset.kind == "synthetic") {
    d["n"] = c.dataset.n;
    d["n_test"] = c.dataset.n_test;
    d["classes"] = c.dataset.classes;
    d["size"] = c.dataset.size;
  } else {
    d["train_images"] = c.dataset.train_images;
    d["train_labels"] = c.dataset.train_labels;
    if (!c.dataset.test_images.empty()) {
      d["test_images"] = c.dataset.test_images;
      d["test_labels"] = c.dataset.test_labels;
    }
  }
  j["dataset"] = d;
  return j;
}

}  // namespace gmprune::pipeline
