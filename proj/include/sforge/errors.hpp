#pragma once

#include <stdexcept>
#include <string>

namespace sforge {

// Base class for all library errors. Subclasses map to CLI exit codes:
// ConfigError -> 2, NotFoundError -> 3, everything else -> 4.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid configuration values or unusable flag combinations.
struct ConfigError : Error {
  using Error::Error;
};

// A required input artifact (data dir, checkpoint, scenario file) is absent.
struct NotFoundError : Error {
  using Error::Error;
};

// Malformed file content; message carries file path and field context.
struct ParseError : Error {
  ParseError(const std::string& file, const std::string& detail)
      : Error(file + ": " + detail) {}
};

// Violated shape, range, or domain contract of a library operation.
struct ValidationError : Error {
  using Error::Error;
};

// Scenario generation could not satisfy placement constraints.
struct GenerationError : Error {
  using Error::Error;
};

// Ego planner could not produce a plan (e.g. no centerline in range).
struct PlannerError : Error {
  using Error::Error;
};

// Training diverged or could not reach a usable state.
struct TrainingError : Error {
  using Error::Error;
};

// Guidance produced an unusable (non-finite) gradient; the sampler treats
// this as a per-step fallback to the unguided update rather than a failure.
struct GuidanceError : Error {
  using Error::Error;
};

// Checkpoint file malformed or incompatible with the requested architecture.
struct CheckpointError : Error {
  using Error::Error;
};

}  // namespace sforge
