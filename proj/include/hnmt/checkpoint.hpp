#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "hnmt/common.hpp"
#include "hnmt/tensor.hpp"
#include "json.hpp"

namespace hnmt {

// Parameter checkpoint: versioned JSON mapping parameter id to shape and
// row-major float data. JSON doubles round-trip exactly, so a save/load
// cycle is bit-identical.
inline nlohmann::json checkpoint_json(const std::map<std::string, Tensor>& params,
                                      const nlohmann::json& meta = {}) {
  nlohmann::json j;
  j["format"] = "hnmt-checkpoint";
  j["version"] = 1;
  if (!meta.is_null()) j["meta"] = meta;
  nlohmann::json p = nlohmann::json::object();
  for (const auto& [id, t] : params) {
    p[id] = {{"shape", t.shape()}, {"data", t.vec()}};
  }
  j["params"] = std::move(p);
  return j;
}

inline void save_checkpoint(const std::string& path, const std::map<std::string, Tensor>& params,
                            const nlohmann::json& meta = {}) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint file '" + path + "'");
  out << checkpoint_json(params, meta) << "\n";
}

struct Checkpoint {
  std::map<std::string, Tensor> params;
  nlohmann::json meta;
};

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read checkpoint file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint '" + path + "' is not valid JSON: " + e.what());
  }
  if (j.value("format", "") != "hnmt-checkpoint" || j.value("version", 0) != 1)
    throw ParseError("checkpoint '" + path + "' has unknown format or version");
  Checkpoint ck;
  if (j.contains("meta")) ck.meta = j["meta"];
  for (const auto& [id, entry] : j.at("params").items()) {
    std::vector<std::size_t> shape = entry.at("shape").get<std::vector<std::size_t>>();
    std::vector<double> data = entry.at("data").get<std::vector<double>>();
    ck.params.emplace(id, Tensor(std::move(shape), std::move(data)));
  }
  return ck;
}

}  // namespace hnmt
