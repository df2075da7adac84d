#pragma once

#include <stdexcept>
#include <string>

namespace mlz {

// Base class for all library errors.
class error : public std::runtime_error {
  public:
    explicit error(const std::string& what) : std::runtime_error(what) {}
};

// Bad user-supplied data: malformed config, non-Hermitian input, invalid
// parameters, dimension mismatches. CLI maps this to exit code 2.
class invalid_input : public error {
  public:
    explicit invalid_input(const std::string& what) : error(what) {}
};

// A numerical routine could not deliver its contract: eigensolver failure,
// step underflow, ambiguous state labeling, stochasticity violation.
// CLI maps this to exit code 3.
class numerical_failure : public error {
  public:
    explicit numerical_failure(const std::string& what) : error(what) {}
};

// A requested computation exceeds a hard size limit. CLI maps this to exit
// code 2 (the request, not the math, is at fault).
class resource_limit : public error {
  public:
    explicit resource_limit(const std::string& what) : error(what) {}
};

}  // namespace mlz
