#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace assoc {

// Raised when a caller-supplied value breaks a precondition.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A base station load reached or exceeded 1: the queue has no stationary regime.
class UnstableLoad : public std::runtime_error {
 public:
  UnstableLoad(std::size_t cell, double load)
      : std::runtime_error("base station " + std::to_string(cell) + " is unstable (load " +
                           std::to_string(load) + " >= 1)"),
        cell_(cell),
        load_(load) {}

  std::size_t cell() const noexcept { return cell_; }
  double load() const noexcept { return load_; }

 private:
  std::size_t cell_;
  double load_;
};

// No association split keeps every load below 1. The certificate brackets the
// optimal max-load: lower_bound is provable, best_found is what the search reached.
class Infeasible : public std::runtime_error {
 public:
  Infeasible(double lower_bound, double best_found)
      : std::runtime_error("no stabilizing association split: min-max load in [" +
                           std::to_string(lower_bound) + ", " + std::to_string(best_found) + "]"),
        lower_bound_(lower_bound),
        best_found_(best_found) {}

  double lower_bound() const noexcept { return lower_bound_; }
  double best_found() const noexcept { return best_found_; }

 private:
  double lower_bound_;
  double best_found_;
};

class NotConverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TruncationTooLarge : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace assoc
