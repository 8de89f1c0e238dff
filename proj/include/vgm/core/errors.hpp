#ifndef VGM_CORE_ERRORS_HPP
#define VGM_CORE_ERRORS_HPP

#include <stdexcept>

namespace vgm {

// Failure classes the command line reports with distinct exit codes.

struct MissingFileError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionMismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ManifestFormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace vgm

#endif // VGM_CORE_ERRORS_HPP
