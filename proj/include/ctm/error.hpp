#pragma once

#include <stdexcept>
#include <string>

namespace ctm {

/// Malformed or inconsistent user input (files, flags, shapes). Maps to CLI exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A training or evaluation run failed after its inputs were accepted. Exit code 1.
class RunError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ctm
