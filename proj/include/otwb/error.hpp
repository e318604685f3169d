#pragma once

#include <stdexcept>
#include <string>

namespace otwb {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Problem data violates a contract (shape, sign, marginal mass).
class InvalidInstance : public Error {
 public:
  using Error::Error;
};

// Malformed input file; the message carries the location.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Non-finite iterates, underflow in a prox, and similar breakdowns.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

// The inner step-size loop hit its cap without satisfying the acceptance test.
class LinesearchStall : public Error {
 public:
  LinesearchStall(const std::string& what, double tau, double beta, long k)
      : Error(what), tau_(tau), beta_(beta), k_(k) {}

  double tau() const { return tau_; }
  double beta() const { return beta_; }
  long iteration() const { return k_; }

 private:
  double tau_;
  double beta_;
  long k_;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace otwb
