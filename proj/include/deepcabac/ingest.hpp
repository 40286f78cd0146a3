#pragma once

// Manifest and importance-map ingestion.
//
// Manifest (JSON, UTF-8):
//   {"tensors": [{"name": "fc1", "weights": "fc1.npy", "importance": "fc1_sigma.npy"},
//                {"name": "fc1.bias", "weights": "b1.npy", "importance": null, "raw": true}]}
// Relative paths resolve against the manifest's directory. File order is the
// layer scan order.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deepcabac/errors.hpp"
#include "deepcabac/npy.hpp"
#include "deepcabac/quantizers.hpp"

namespace deepcabac {

enum class ImportanceKind {
  Fisher,   // file holds F_i directly
  Sigma,    // file holds sigma_i; F_i = 1 / max(sigma_i, 1e-8)^2
  Uniform,  // F_i = 1, file ignored
};

inline constexpr double kSigmaFloor = 1e-8;

struct ManifestEntry {
  std::string name;
  std::filesystem::path weights;
  std::optional<std::filesystem::path> importance;
  bool raw = false;
};

inline std::vector<ManifestEntry> manifest_parse(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open manifest " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError("manifest " + path.string() + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("tensors") || !doc["tensors"].is_array()) {
    throw IngestionError("manifest " + path.string() + ": expected an object with a \"tensors\" array");
  }
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };

  std::vector<ManifestEntry> entries;
  std::set<std::string> names;
  for (const auto& item : doc["tensors"]) {
    if (!item.is_object() || !item.contains("weights") || !item["weights"].is_string()) {
      throw IngestionError("manifest " + path.string() + ": every tensor needs a \"weights\" path");
    }
    ManifestEntry e;
    e.weights = resolve(item["weights"].get<std::string>());
    if (item.contains("name") && !item["name"].is_null()) {
      if (!item["name"].is_string()) throw IngestionError("manifest: \"name\" must be a string");
      e.name = item["name"].get<std::string>();
    } else {
      e.name = e.weights.stem().string();
    }
    if (item.contains("importance") && !item["importance"].is_null()) {
      if (!item["importance"].is_string()) throw IngestionError("manifest: \"importance\" must be a path or null");
      e.importance = resolve(item["importance"].get<std::string>());
    }
    if (item.contains("raw")) {
      if (!item["raw"].is_boolean()) throw IngestionError("manifest: \"raw\" must be a boolean");
      e.raw = item["raw"].get<bool>();
    }
    if (!std::filesystem::exists(e.weights)) throw IngestionError("manifest: missing weights file " + e.weights.string());
    if (e.importance && !std::filesystem::exists(*e.importance)) {
      throw IngestionError("manifest: missing importance file " + e.importance->string());
    }
    if (!names.insert(e.name).second) throw IngestionError("manifest: duplicate tensor name '" + e.name + "'");
    entries.push_back(std::move(e));
  }
  return entries;
}

/// Importance aligned with `tensor`. Without a file (or with Uniform) every
/// weight gets F = 1.
inline ImportanceMap load_importance(const std::optional<std::filesystem::path>& path, const WeightTensor& tensor,
                                     ImportanceKind kind) {
  if (kind == ImportanceKind::Uniform) return ImportanceMap::uniform(tensor.size());
  if (!path) {
    throw IngestionError("tensor '" + tensor.name + "': importance file required for this importance kind");
  }
  const auto arr = npy::load(*path);
  auto values = npy::as_doubles(arr);
  if (values.size() != tensor.size()) {
    throw IngestionError("tensor '" + tensor.name + "': importance has " + std::to_string(values.size()) +
                         " entries, tensor has " + std::to_string(tensor.size()));
  }
  for (const double v : values) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw IngestionError("tensor '" + tensor.name + "': importance entries must be finite and >= 0");
    }
  }
  if (kind == ImportanceKind::Sigma) {
    for (double& v : values) {
      const double s = std::max(v, kSigmaFloor);
      v = 1.0 / (s * s);
    }
  }
  ImportanceMap map{std::move(values)};
  try {
    map.validate(tensor.size());
  } catch (const InputError& e) {
    throw IngestionError("tensor '" + tensor.name + "': " + e.what());
  }
  return map;
}

/// Per-weight standard deviations implied by an importance map (sigma = 1/sqrt(F)).
inline double sigma_min(const ImportanceMap& importance) {
  double best = std::numeric_limits<double>::infinity();
  for (const double f : importance.values) {
    if (f > 0.0) best = std::min(best, 1.0 / std::sqrt(f));
  }
  return best;
}

}  // namespace deepcabac
