#pragma once

#include <stdexcept>
#include <string>

namespace r3d {

// Error taxonomy mirrors the CLI exit codes: validation 2, estimation 3, io 4.

struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

struct EstimationError : std::runtime_error {
  explicit EstimationError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace r3d
