#pragma once

#include <stdexcept>
#include <string>

namespace ncbf {

/// Invalid or incomplete run configuration (unknown system, missing key, ...).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the domain an operation is defined on.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

}  // namespace ncbf
