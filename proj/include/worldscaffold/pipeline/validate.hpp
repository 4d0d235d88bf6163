#pragma once

// Read-only workspace audit: manifest consistency, per-frame artifact
// presence, schema validity and box / transform invariants.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace worldscaffold::pipeline {

struct ValidationIssue {
  std::string path;
  std::string message;
  std::optional<double> deviation;  // for invariant violations
};

struct ValidationReport {
  std::vector<ValidationIssue> errors;
  std::vector<ValidationIssue> warnings;
  std::vector<std::string> present;  // artifact kinds found

  bool ok() const { return errors.empty(); }
  nlohmann::json to_json() const;
};

inline constexpr double kBoxDeviationTol = 1e-6;  // × max(1, diagonal)
inline constexpr double kRotationDefectTol = 1e-6;

/// Never writes to the workspace; problems become report entries.
ValidationReport validate_workspace(const std::filesystem::path& root);

}  // namespace worldscaffold::pipeline
