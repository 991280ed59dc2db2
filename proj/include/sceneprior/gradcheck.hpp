#pragma once

// Finite-difference checks of every differentiable piece, grouped by
// subsystem. Used by the CLI `gradcheck` command and the acceptance binary.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace sceneprior {

struct GradcheckEntry {
  std::string subsystem;  // "primitive", "geometry", "composite" or "renderer"
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t points = 0;   // inputs or coordinates compared
  std::size_t skipped = 0;  // coordinates not differentiable within the stencil
  bool passed() const {
    return points > 0 && max_rel_error < tolerance &&
           static_cast<double>(skipped) <= 0.1 * static_cast<double>(points + skipped);
  }
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double seconds = 0.0;

  bool passed() const;
  // Worst error per subsystem.
  double max_error(const std::string& subsystem) const;
};

nlohmann::json to_json(const GradcheckReport& r);

struct GradcheckOptions {
  std::size_t primitive_points = 100;
  std::uint64_t seed = 0;
};

GradcheckReport run_gradcheck_suite(const GradcheckOptions& options = {});

}  // namespace sceneprior
