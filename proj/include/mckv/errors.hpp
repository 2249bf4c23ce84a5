#pragma once
#include <stdexcept>
#include <string>

namespace mckv {

// Invalid scalar arguments or model parameters.
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Grid / realization / flow pairing violations.
struct GridError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Exact-solver size cap exceeded.
struct SizeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A parameter regime the rate theory does not cover.
struct UncoveredCaseError : std::domain_error {
  using std::domain_error::domain_error;
};

// Non-finite particle state during simulation.
struct BlowUpError : std::runtime_error {
  BlowUpError(std::size_t particle_index, double time_point, const std::string& what)
      : std::runtime_error(what), particle(particle_index), time(time_point) {}
  std::size_t particle;
  double time;
};

// File open/read/write failures and malformed on-disk data.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mckv
