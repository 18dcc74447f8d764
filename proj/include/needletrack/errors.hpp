#pragma once

#include <stdexcept>
#include <string>

namespace needletrack {

/// Configuration file or override problems. CLI exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed input data (e.g. a detection CSV row). CLI exit code 2.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Filesystem failures. CLI exit code 3.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A runtime contract the library guarantees was observed broken
/// (e.g. ensemble weights no longer normalized). CLI exit code 4.
struct InvariantError : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace needletrack
