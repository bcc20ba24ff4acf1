#pragma once

#include "json.hpp"

#include "dsa/image.hpp"

namespace dsa {

// COCO uncompressed RLE: column-major scan, counts alternate runs of
// background (0) and foreground, starting with background.
nlohmann::json rle_encode(const Mask& binary);
Mask rle_decode(const nlohmann::json& rle);

}  // namespace dsa
