#ifndef VGM_CORE_FRAME_HPP
#define VGM_CORE_FRAME_HPP

#include "vgm/core/geometry.hpp"
#include "vgm/core/image.hpp"

namespace vgm {

/// One RGB-D observation with its camera-to-world pose.
struct Frame {
    int index = 0;
    double timestamp = 0.0;
    RgbImage rgb;
    DepthImage depth;
    Pose pose;
};

} // namespace vgm

#endif // VGM_CORE_FRAME_HPP
