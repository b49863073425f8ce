#pragma once

#include <stdexcept>
#include <string>

namespace aoi {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parameter outside its documented domain (rates, probabilities, sizes).
class InvalidParams : public Error {
 public:
  using Error::Error;
};

// Malformed SHS model (bad state index, non-binary reset, bad rate).
class InvalidModel : public Error {
 public:
  using Error::Error;
};

// The discrete chain is not strongly connected.
class NonErgodic : public Error {
 public:
  using Error::Error;
};

// A linear system could not be solved to the requested residual.
class SingularSystem : public Error {
 public:
  using Error::Error;
};

// The age fixed point has a materially negative component.
class NegativeSolution : public Error {
 public:
  using Error::Error;
};

// The endpoints of a search interval do not enclose a minimum.
class BracketError : public Error {
 public:
  using Error::Error;
};

}  // namespace aoi
