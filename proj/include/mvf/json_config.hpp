#pragma once

#include <initializer_list>
#include <string>

#include <json.hpp>

#include "mvf/error.hpp"

// Helpers for strict config parsing: unknown keys and type mismatches raise
// ConfigError; absent keys keep the value already in the target.
namespace mvf::cfg {

using json = nlohmann::json;

inline void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& context) {
  if (!j.is_object()) throw ConfigError(context + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) ok = true;
    if (!ok) throw ConfigError(context + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& field, const std::string& context) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(context + "." + key + ": " + e.what());
  }
}

}  // namespace mvf::cfg
