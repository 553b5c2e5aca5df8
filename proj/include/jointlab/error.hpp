#pragma once

#include <stdexcept>
#include <string>

namespace jointlab {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside its mathematical domain (e.g. t outside [0, tau]).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Invalid model parameters (non-PD covariance, wrong lengths, sigma_y <= 0).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Inputs that do not fit together (missing hazard jump at an event time, ...).
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Underflow / non-finite values during integration or optimisation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Fitting could not proceed (singular design, empty risk set, ...).
class FitError : public Error {
 public:
  using Error::Error;
};

inline std::string subject_tag(const std::string& id) { return "subject " + id + ": "; }

}  // namespace jointlab
