#pragma once

#include <stdexcept>

namespace jtsp {

// Bad configuration or command input. The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed data file; the message carries "path:line".
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Divergence or other unrecoverable failure while training. Exit code 3.
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Unreadable, corrupt or incompatible checkpoint file.
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace jtsp
