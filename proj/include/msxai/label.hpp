#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "msxai/error.hpp"

namespace msxai {

enum class Label : int { Negative = 0, Positive = 1 };

constexpr std::string_view to_string(Label l) { return l == Label::Positive ? "positive" : "negative"; }

inline Label parse_label(std::string_view s) {
  if (s == "positive") return Label::Positive;
  if (s == "negative") return Label::Negative;
  throw Error(Errc::InvalidArgument, "label '" + std::string(s) + "'");
}

inline std::string label_or_empty(const std::optional<Label>& l) {
  return l ? std::string(to_string(*l)) : std::string();
}

}  // namespace msxai
