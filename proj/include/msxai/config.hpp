#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "msxai/error.hpp"

namespace msxai::config {

using json = nlohmann::json;

/// Rejects keys outside `allowed`; the error names the first offender.
inline void require_known_keys(const json& j, std::string_view context, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw Error(Errc::ConfigParse, std::string(context) + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (auto a : allowed) known = known || it.key() == a;
    if (!known) throw Error(Errc::ConfigParse, std::string(context) + "." + it.key() + ": unknown key");
  }
}

/// Reads j[key] into `out` if present; type errors name the key.
template <typename T>
void read(const json& j, std::string_view context, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(Errc::ConfigParse, std::string(context) + "." + key + ": wrong type");
  }
}

inline json parse(const std::string& text, std::string_view what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::ConfigParse, std::string(what) + ": " + e.what());
  }
}

}  // namespace msxai::config
