#pragma once

#include <stdexcept>
#include <string>

namespace igdm {

// Bad or inconsistent run configuration (unknown key, missing file, shape
// mismatch between configured pieces).  The CLI maps this to exit code 1.
struct config_error : std::runtime_error {
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed on-disk data: wrong magic, wrong version, truncated payload.
struct format_error : std::runtime_error {
    explicit format_error(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem-level failure (cannot open / read / write).
struct io_error : std::runtime_error {
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace igdm
