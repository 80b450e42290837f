#include "upix/io/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "upix/io/checkpoint.hpp"

namespace upix {

std::uint8_t to_byte(double v) {
    double b = std::round((v + 1.0) * 127.5);
    return static_cast<std::uint8_t>(std::clamp(b, 0.0, 255.0));
}

double from_byte(std::uint8_t b) { return static_cast<double>(b) / 127.5 - 1.0; }

std::vector<std::uint8_t> encode_ppm(const Tensor& image) {
    if (image.rank() != 3 || image.dim(2) != 3) {
        throw ShapeError("encode_ppm: expected H x W x 3, got " + shape_str(image.shape()));
    }
    auto header = "P6\n" + std::to_string(image.dim(1)) + " " + std::to_string(image.dim(0)) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + image.numel());
    for (double v : image.data()) out.push_back(to_byte(v));
    return out;
}

namespace {

// Reads one whitespace-delimited decimal header field; '#' comments are skipped.
std::size_t header_field(std::span<const std::uint8_t> bytes, std::size_t& pos) {
    while (pos < bytes.size()) {
        if (bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else if (std::isspace(bytes[pos])) {
            ++pos;
        } else {
            break;
        }
    }
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
        value = value * 10 + (bytes[pos] - '0');
        if (++digits > 6) throw FormatError("ppm: header field too large");
        ++pos;
    }
    if (digits == 0) throw FormatError("ppm: malformed header");
    return value;
}

}  // namespace

Tensor decode_ppm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw FormatError("ppm: missing P6 magic");
    std::size_t pos = 2;
    auto w = header_field(bytes, pos);
    auto h = header_field(bytes, pos);
    auto maxval = header_field(bytes, pos);
    if (maxval != 255) throw FormatError("ppm: only maxval 255 is supported");
    if (w == 0 || h == 0) throw FormatError("ppm: empty image");
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("ppm: malformed header");
    ++pos;
    std::size_t n = w * h * 3;
    if (bytes.size() - pos < n) throw FormatError("ppm: payload shorter than header implies");
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = from_byte(bytes[pos + i]);
    return Tensor::from_data({h, w, 3}, std::move(values));
}

void write_image(const std::string& path, const Tensor& image) { write_file(path, encode_ppm(image)); }

Tensor read_image(const std::string& path) { return decode_ppm(read_file(path)); }

}  // namespace upix
