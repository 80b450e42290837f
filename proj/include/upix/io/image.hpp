#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "upix/core/tensor.hpp"

namespace upix {

// round((v + 1) * 127.5) clamped to [0, 255].
std::uint8_t to_byte(double v);
double from_byte(std::uint8_t b);

// Binary PPM ("P6\n{w} {h}\n255\n" then RGB rows) for H x W x 3 images in [-1, 1].
std::vector<std::uint8_t> encode_ppm(const Tensor& image);
// Throws FormatError on a malformed header or short payload.
Tensor decode_ppm(std::span<const std::uint8_t> bytes);

void write_image(const std::string& path, const Tensor& image);
Tensor read_image(const std::string& path);

}  // namespace upix
