#pragma once

// Files exchanged between CLI stages: datasets (JSON lines), trained models
// (JSON) and learning curves (CSV).

#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "iaop/influence.hpp"
#include "iaop/rnn.hpp"
#include "iaop/source.hpp"

namespace iaop {

using json = nlohmann::json;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline json to_json(const SourceSpec& spec) {
  json heads = json::array();
  for (const auto& h : spec.heads) heads.push_back({{"kind", to_string(h.kind)}, {"arity", h.arity}});
  return heads;
}

inline SourceSpec source_spec_from_json(const json& j) {
  SourceSpec spec;
  for (const auto& h : j)
    spec.heads.push_back(HeadSpec{head_kind_from_string(h.at("kind").get<std::string>()),
                                  h.at("arity").get<int>()});
  spec.validate();
  return spec;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return in;
}

/// Header line, then one line per episode with per-step input rows and target rows.
inline void write_dataset(const InfluenceDataset& ds, std::ostream& out) {
  json header = {{"input_width", ds.input_width},
                 {"seq_len", ds.seq_len},
                 {"source_spec", to_json(ds.source_spec)},
                 {"episodes", ds.episodes.size()}};
  out << header.dump() << '\n';
  const auto w = static_cast<std::size_t>(ds.input_width);
  const auto k = ds.source_spec.size();
  for (const auto& e : ds.episodes) {
    json inputs = json::array(), targets = json::array();
    for (int t = 0; t < ds.seq_len; ++t) {
      const auto at = static_cast<std::size_t>(t);
      inputs.push_back(std::vector<double>(e.inputs.begin() + static_cast<std::ptrdiff_t>(at * w),
                                           e.inputs.begin() + static_cast<std::ptrdiff_t>((at + 1) * w)));
      targets.push_back(std::vector<int>(e.targets.begin() + static_cast<std::ptrdiff_t>(at * k),
                                         e.targets.begin() + static_cast<std::ptrdiff_t>((at + 1) * k)));
    }
    out << json{{"inputs", inputs}, {"targets", targets}}.dump() << '\n';
  }
}

inline InfluenceDataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("dataset is empty");
  InfluenceDataset ds;
  try {
    const json header = json::parse(line);
    ds.input_width = header.at("input_width").get<int>();
    ds.seq_len = header.at("seq_len").get<int>();
    ds.source_spec = source_spec_from_json(header.at("source_spec"));
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json row = json::parse(line);
      EpisodeRecord rec;
      for (const auto& step : row.at("inputs"))
        for (const auto& v : step) rec.inputs.push_back(v.get<double>());
      for (const auto& step : row.at("targets"))
        for (const auto& v : step) rec.targets.push_back(v.get<int>());
      ds.episodes.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed dataset: ") + e.what());
  }
  ds.validate();
  return ds;
}

inline void save_dataset(const InfluenceDataset& ds, const std::string& path) {
  auto out = open_out(path);
  write_dataset(ds, out);
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline InfluenceDataset load_dataset(const std::string& path) {
  auto in = open_in(path);
  return read_dataset(in);
}

inline json train_config_json(const TrainConfig& cfg) {
  return {{"cell_kind", to_string(cfg.cell_kind)},
          {"hidden_width", cfg.hidden_width},
          {"learning_rate", cfg.learning_rate},
          {"batch_size", cfg.batch_size},
          {"epochs", cfg.epochs},
          {"weight_decay", cfg.weight_decay},
          {"optimizer", to_string(cfg.optimizer)},
          {"grad_clip_norm", cfg.grad_clip_norm},
          {"seed", cfg.seed}};
}

inline json model_json(const RnnPredictor& model) {
  json params = json::object();
  const auto flat = model.params();
  for (const auto& b : model.blocks())
    params[b.name] = std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(b.offset),
                                         flat.begin() + static_cast<std::ptrdiff_t>(b.offset + b.size()));
  return {{"cell_kind", to_string(model.cell_kind())},
          {"input_width", model.input_width()},
          {"hidden_width", model.hidden_width()},
          {"heads", to_json(model.source_spec())},
          {"params", params}};
}

inline RnnPredictor model_from_json(const json& j) {
  try {
    RnnPredictor model(cell_kind_from_string(j.at("cell_kind").get<std::string>()),
                       j.at("input_width").get<int>(), j.at("hidden_width").get<int>(),
                       source_spec_from_json(j.at("heads")));
    auto flat = model.params();
    const auto& params = j.at("params");
    for (const auto& b : model.blocks()) {
      const auto values = params.at(b.name).get<std::vector<double>>();
      if (values.size() != b.size())
        throw ConfigError("parameter block '" + b.name + "' has " + std::to_string(values.size()) +
                          " values, expected " + std::to_string(b.size()));
      std::copy(values.begin(), values.end(), flat.begin() + static_cast<std::ptrdiff_t>(b.offset));
    }
    if (params.size() != model.blocks().size())
      throw ConfigError("model file has unexpected parameter blocks");
    return model;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed model: ") + e.what());
  }
}

inline void save_model(const RnnPredictor& model, const std::string& path,
                       const TrainConfig* cfg = nullptr) {
  json j = model_json(model);
  if (cfg) j["train_config"] = train_config_json(*cfg);
  auto out = open_out(path);
  out << j.dump(1) << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline RnnPredictor load_model(const std::string& path) {
  auto in = open_in(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("malformed model '" + path + "': " + e.what());
  }
  return model_from_json(j);
}

inline void write_learning_curve(const LearningCurve& curve, std::ostream& out) {
  out << "epoch,train_ce,val_ce\n" << std::setprecision(17);
  for (std::size_t e = 0; e < curve.train_ce.size(); ++e)
    out << e << ',' << curve.train_ce[e] << ',' << curve.val_ce[e] << '\n';
}

inline void save_learning_curve(const LearningCurve& curve, const std::string& path) {
  auto out = open_out(path);
  write_learning_curve(curve, out);
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace iaop
