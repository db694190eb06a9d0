#pragma once

#include <stdexcept>

namespace dfl {

// CSV or config text that cannot be parsed; the message carries the location.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss; the message names epoch and batch.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Parameter vectors with different shape tags met in aggregation.
struct IncompatibleModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid or unknown configuration; the message names the offending key.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace dfl
