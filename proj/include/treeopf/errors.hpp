#pragma once

#include <stdexcept>
#include <string>

namespace treeopf {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed case document.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Case document is well-formed but does not describe a rooted tree.
class StructureError : public Error {
 public:
  using Error::Error;
};

/// A quantity left the domain where a formula is defined (e.g. v <= 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// The instance (or a relaxation of it) has no feasible point.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// Brute-force enumeration would exceed its configured cap.
class CapExceededError : public Error {
 public:
  using Error::Error;
};

/// Broken internal invariant; indicates a bug rather than bad input.
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace treeopf
