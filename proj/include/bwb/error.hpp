#pragma once

#include <stdexcept>
#include <string>

namespace bwb {

// Exception taxonomy. The CLI maps these onto its exit codes
// (usage = 1, data/schema = 2, numerical = 3).

/// Input outside the physical domain (e.g. planform outside its box).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Bad call: shape mismatch, empty input, invalid count.
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Table or checkpoint does not carry the expected columns/fields.
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Unsupported or malformed file content; message carries the location.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Checkpoint checksum or structure failure.
struct IntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Object used before it was fitted/trained.
struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Non-finite value produced during a computation.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace bwb
