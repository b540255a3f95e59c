#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ftsim {

using ProcId = std::int32_t;  // stable process identity, never reused
using Rank = std::int32_t;    // position inside the current communicator epoch

/// Bad or inconsistent configuration input (JSON, CLI, constructor args).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Fault plan that violates validation rules (bad rank, duplicate, window too crowded).
class PlanError : public ConfigError {
 public:
  explicit PlanError(const std::string& what) : ConfigError(what) {}
};

/// Raised by communication operations when a peer process has died.
/// Control-flow signal: the caller is expected to run detection and repair.
class ProcFailed : public std::runtime_error {
 public:
  explicit ProcFailed(std::vector<ProcId> observed)
      : std::runtime_error("communication with failed process"),
        observed_(std::move(observed)) {}
  const std::vector<ProcId>& observed() const { return observed_; }

 private:
  std::vector<ProcId> observed_;
};

/// Lost state cannot be reconstructed (owner and all replica hosts dead,
/// or spares exhausted). Always reported, never turned into a wrong answer.
class UnrecoverableError : public std::runtime_error {
 public:
  explicit UnrecoverableError(const std::string& what) : std::runtime_error(what) {}
};

/// Internal consistency violation of the simulation itself (e.g. a message
/// stamped with a stale epoch). Indicates a bug, not a modeled failure.
class SimInvariantError : public std::logic_error {
 public:
  explicit SimInvariantError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace ftsim
