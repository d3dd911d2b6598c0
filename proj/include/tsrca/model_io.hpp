#pragma once

#include "tsrca/detector.hpp"
#include "tsrca/embedding.hpp"

#include <nlohmann/json.hpp>

#include <string>

namespace tsrca {

/// Versioned JSON model files: {"magic":"tsrca-model","version":1,...} with
/// layer shapes, activation tags, and row-major weights. Doubles are written
/// as shortest round-trip decimals, so reload is exact.

nlohmann::json net_to_json(const DenseNet& net);
DenseNet net_from_json(const nlohmann::json& doc);

nlohmann::json detector_to_json(const Detector& detector);
Detector detector_from_json(const nlohmann::json& doc);
void save_detector(const Detector& detector, const std::string& path);
Detector load_detector(const std::string& path);

nlohmann::json embedding_to_json(const Embedding& embedding);
Embedding embedding_from_json(const nlohmann::json& doc);
void save_embedding(const Embedding& embedding, const std::string& path);
Embedding load_embedding(const std::string& path);

}  // namespace tsrca
