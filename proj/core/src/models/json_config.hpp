#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <string_view>

#include "sfus/models/common.hpp"
#include "sfus/nn/ops.hpp"

namespace sfus::nn {
inline void to_json(nlohmann::json& j, Activation a) {
  j = a == Activation::kRelu ? "relu" : a == Activation::kGelu ? "gelu" : "silu";
}

inline void from_json(const nlohmann::json& j, Activation& a) {
  const auto name = j.get<std::string>();
  if (name == "relu") {
    a = Activation::kRelu;
  } else if (name == "gelu") {
    a = Activation::kGelu;
  } else if (name == "silu") {
    a = Activation::kSilu;
  } else {
    throw sfus::models::ModelError("unknown activation '" + name + "' (relu|gelu|silu)");
  }
}
}

namespace sfus::models::detail {

inline void reject_unknown_keys(const nlohmann::json& given, const nlohmann::json& known, const std::string& where) {
  if (!given.is_object()) throw ModelError(where + ": expected a JSON object");
  for (const auto& [key, value] : given.items()) {
    if (!known.contains(key)) throw ModelError(where + ": unknown key '" + key + "'");
    if (known.at(key).is_object()) reject_unknown_keys(value, known.at(key), where + "." + key);
  }
}

/// Keys missing from `text` keep the values in `defaults`.
template <typename Config>
Config config_from_json(std::string_view text, const Config& defaults, const char* what) {
  nlohmann::json merged = defaults;
  try {
    const nlohmann::json given = nlohmann::json::parse(text);
    reject_unknown_keys(given, merged, what);
    merged.merge_patch(given);
    Config cfg = merged.get<Config>();
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string(what) + ": " + e.what());
  }
}

}  // namespace sfus::models::detail
