#pragma once

#include <stdexcept>

namespace medintake {

// Bad run configuration or command usage (CLI exit code 1).
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input data: dataset or embedding files (CLI exit code 2).
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace medintake
