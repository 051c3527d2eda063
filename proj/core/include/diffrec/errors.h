// Copyright 2026 The diffrec Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DIFFREC_ERRORS_H_
#define DIFFREC_ERRORS_H_

#include <stdexcept>
#include <string>

namespace diffrec {

// Base class for every error raised by the library. The CLI maps
// subclasses of InvalidInput to exit code 2 and everything else to 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller supplied inputs that violate a documented precondition.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Grid too small for the five-point stencil, or mismatched shapes.
class InvalidGridError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

// Nonpositive diffusion coefficient, time step, or similar.
class DomainError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

class ConfigurationError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

// Explicit Euler step would violate the von Neumann bound.
class StabilityError : public InvalidInput {
 public:
  StabilityError(const std::string& what, double admissible_dt)
      : InvalidInput(what), admissible_dt_(admissible_dt) {}

  // Exclusive upper bound on the time step; any smaller step is stable.
  double admissible_dt() const { return admissible_dt_; }

 private:
  double admissible_dt_;
};

// Every candidate alpha yields the same loss (e.g. constant frames).
class UnidentifiableError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

// Malformed or missing dataset container.
class DataError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

// Non-finite activation inside the estimator network.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace diffrec

#endif  // DIFFREC_ERRORS_H_
