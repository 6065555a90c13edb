// Error taxonomy shared by all modules.
#pragma once

#include <stdexcept>
#include <string>

namespace hd {

// Base class so callers can catch everything from this library at once.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration: dimension mismatches, bad spectra, unknown presets,
// malformed scenario keys.
struct config_error : error {
    using error::error;
};

// A documented precondition of an operation was violated by the caller.
struct precondition_error : error {
    using error::error;
};

// A time was requested that is not on (or recorded on) the batch grid.
// Interpolation is never performed silently.
struct grid_error : error {
    using error::error;
};

// Integration produced a non-finite state. Carries the module that aborted.
struct numerical_abort : error {
    numerical_abort(const std::string& module, const std::string& what)
        : error(module + ": " + what), module_name(module) {}
    std::string module_name;
};

}  // namespace hd
