#pragma once

#include <string>

#include "grcert/train.hpp"

namespace grcert {

/// Loads a big-endian IDX image/label file pair (magics 0x00000803 and
/// 0x00000801). Image bytes are scaled to [0, 1] by dividing by 255.
Dataset loadIdx(const std::string& imagesPath, const std::string& labelsPath,
                const std::string& split = "train");

}  // namespace grcert
