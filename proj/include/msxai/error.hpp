#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace msxai {

enum class Errc {
  InvalidArgument,
  EmptyInput,
  MalformedRow,
  NegativeIntensity,
  WindowTooLarge,
  ZeroCalibrantPeak,
  CalibrantOutOfRange,
  EmptyRange,
  ZeroDenominatorAuc,
  NonuniformGrid,
  BinTooWide,
  DegenerateData,
  ArityMismatch,
  EmptyNode,
  SingleClassTraining,
  TooFewPerClass,
  NonConvergence,
  UntrainedModel,
  TooManyFeatures,
  EmptyBackground,
  NameMismatch,
  EmptySummary,
  AllZeroAttributions,
  InvalidConfig,
  LengthMismatch,
  ConfigParse,
  IoFailure,
  SchemeMismatch,
  MissingArtifact,
  UnsupportedVersion,
};

constexpr std::string_view to_string(Errc c) {
  switch (c) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::MalformedRow: return "MalformedRow";
    case Errc::NegativeIntensity: return "NegativeIntensity";
    case Errc::WindowTooLarge: return "WindowTooLarge";
    case Errc::ZeroCalibrantPeak: return "ZeroCalibrantPeak";
    case Errc::CalibrantOutOfRange: return "CalibrantOutOfRange";
    case Errc::EmptyRange: return "EmptyRange";
    case Errc::ZeroDenominatorAuc: return "ZeroDenominatorAuc";
    case Errc::NonuniformGrid: return "NonuniformGrid";
    case Errc::BinTooWide: return "BinTooWide";
    case Errc::DegenerateData: return "DegenerateData";
    case Errc::ArityMismatch: return "ArityMismatch";
    case Errc::EmptyNode: return "EmptyNode";
    case Errc::SingleClassTraining: return "SingleClassTraining";
    case Errc::TooFewPerClass: return "TooFewPerClass";
    case Errc::NonConvergence: return "NonConvergence";
    case Errc::UntrainedModel: return "UntrainedModel";
    case Errc::TooManyFeatures: return "TooManyFeatures";
    case Errc::EmptyBackground: return "EmptyBackground";
    case Errc::NameMismatch: return "NameMismatch";
    case Errc::EmptySummary: return "EmptySummary";
    case Errc::AllZeroAttributions: return "AllZeroAttributions";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::ConfigParse: return "ConfigParse";
    case Errc::IoFailure: return "IoFailure";
    case Errc::SchemeMismatch: return "SchemeMismatch";
    case Errc::MissingArtifact: return "MissingArtifact";
    case Errc::UnsupportedVersion: return "UnsupportedVersion";
  }
  return "Unknown";
}

// Every failure in the library is reported as an Error carrying a machine
// readable code. `detail` holds the offending line number, biomarker name,
// config key, etc., depending on the code.
class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string detail = {})
      : std::runtime_error(format(code, detail)), code_(code), detail_(std::move(detail)) {}

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  static std::string format(Errc code, const std::string& detail) {
    std::string msg(to_string(code));
    if (!detail.empty()) msg += "(" + detail + ")";
    return msg;
  }

  Errc code_;
  std::string detail_;
};

// Error raised by the command layer: wraps a module error with the pipeline
// stage it came from.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const Error& cause)
      : std::runtime_error("stage '" + stage + "': " + cause.what()),
        stage_(std::move(stage)),
        cause_(cause) {}

  const std::string& stage() const noexcept { return stage_; }
  Errc code() const noexcept { return cause_.code(); }
  const Error& cause() const noexcept { return cause_; }

 private:
  std::string stage_;
  Error cause_;
};

}  // namespace msxai
