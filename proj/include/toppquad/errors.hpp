#pragma once

#include <stdexcept>
#include <string>

namespace toppquad {

// Invalid physical parameters or configuration values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Differential-flatness map hit a singular configuration (free fall, or the
// body z axis aligned with the yaw heading).
class SingularityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Polynomial fit failed; `segment` names the degenerate segment, -1 if unknown.
class FitError : public std::runtime_error {
 public:
  FitError(const std::string& what, int segment)
      : std::runtime_error(what), segment_(segment) {}
  int segment() const { return segment_; }

 private:
  int segment_;
};

// Speed profile with an interval whose both endpoints have h = 0.
class DegenerateIntervalError : public std::runtime_error {
 public:
  DegenerateIntervalError(const std::string& what, int interval)
      : std::runtime_error(what), interval_(interval) {}
  int interval() const { return interval_; }

 private:
  int interval_;
};

// Dimension mismatch between a grid and the data attached to it.
class AssemblyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace toppquad
