#pragma once

#include <stdexcept>
#include <string>

namespace icrm {

// Base class for every structured error the library throws. Parsers and
// codecs must never crash on hostile input; they throw a subclass of this.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem trouble: missing files, unreadable paths, failed writes.
struct IOFailure : Error { using Error::Error; };

} // namespace icrm
