#pragma once

#include "rgrad/scene.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace rgrad {

/// Row-major RGB image with double channels.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> pixels; // 3 * width * height

    Image() = default;
    Image(int w, int h, double fill = 0.0)
        : width(w), height(h), pixels(static_cast<std::size_t>(3 * w * h), fill)
    {
    }

    std::size_t index(int x, int y, int c) const
    {
        return 3 * (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) +
               static_cast<std::size_t>(c);
    }
    double& at(int x, int y, int c) { return pixels[index(x, y, c)]; }
    double at(int x, int y, int c) const { return pixels[index(x, y, c)]; }

    bool same_size(const Image& o) const { return width == o.width && height == o.height; }
    bool operator==(const Image&) const = default;
};

/// Binary PPM (P6, maxval 255); channels are clamped then rounded half-up.
void write_ppm(std::ostream& out, const Image& img);
/// Header "IMGF32 v1 <width> <height>\n" followed by little-endian float32 RGB, row-major.
void write_imgf32(std::ostream& out, const Image& img);
Image read_imgf32(std::istream& in);

void save_image(const std::string& path, const Image& img);

} // namespace rgrad
