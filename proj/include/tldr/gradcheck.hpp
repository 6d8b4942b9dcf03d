#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tldr {

struct GradCheckResult {
  std::string name;
  double worst_relative_error = 0.0;
  std::size_t cases = 0;
};

inline constexpr double kGradCheckTolerance = 1e-4;

// Finite-difference checks of every primitive and of the composite losses
// (cross entropy, gram, texture losses, total objective), each over `seeds`
// random draws starting at first_seed.
std::vector<GradCheckResult> run_gradient_suite(std::size_t seeds, std::uint64_t first_seed = 0);

}  // namespace tldr
