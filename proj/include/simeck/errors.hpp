#pragma once

#include <stdexcept>
#include <string>

namespace simeck {

/// Malformed, truncated or mismatched file contents.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A configured resource cap (memory, trial budget) was exceeded.
class ResourceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training diverged or produced non-finite values.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace simeck
