#pragma once

#include <stdexcept>
#include <string>

namespace gridflex {

// Input file could not be parsed (bad syntax, non-numeric cell, ...).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Structurally valid input violates a model invariant or precondition.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numerical solve failed (power flow divergence, QP failure inside a loop).
class SolveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Neural-network training diverged; carries the epoch it blew up in.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, int epoch)
      : std::runtime_error(what), epoch(epoch) {}
  int epoch;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gridflex
