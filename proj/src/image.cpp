#include "rgrad/image.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace rgrad {

void write_ppm(std::ostream& out, const Image& img)
{
    out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
    std::string bytes(img.pixels.size(), '\0');
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        const double v = std::clamp(img.pixels[i], 0.0, 1.0);
        bytes[i] = static_cast<char>(static_cast<unsigned char>(std::floor(v * 255.0 + 0.5)));
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void write_imgf32(std::ostream& out, const Image& img)
{
    out << "IMGF32 v1 " << img.width << ' ' << img.height << '\n';
    for (double v : img.pixels) {
        std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        if constexpr (std::endian::native == std::endian::big)
            bits = ((bits & 0xffu) << 24) | ((bits & 0xff00u) << 8) | ((bits >> 8) & 0xff00u) | (bits >> 24);
        char raw[4];
        std::memcpy(raw, &bits, 4);
        out.write(raw, 4);
    }
}

Image read_imgf32(std::istream& in)
{
    std::string magic, version;
    int w = 0, h = 0;
    in >> magic >> version >> w >> h;
    if (magic != "IMGF32" || version != "v1" || w <= 0 || h <= 0)
        throw std::invalid_argument("not an IMGF32 v1 stream");
    in.get(); // newline
    Image img(w, h);
    for (double& v : img.pixels) {
        char raw[4];
        if (!in.read(raw, 4))
            throw std::invalid_argument("IMGF32: truncated pixel data");
        std::uint32_t bits;
        std::memcpy(&bits, raw, 4);
        if constexpr (std::endian::native == std::endian::big)
            bits = ((bits & 0xffu) << 24) | ((bits & 0xff00u) << 8) | ((bits >> 8) & 0xff00u) | (bits >> 24);
        v = std::bit_cast<float>(bits);
    }
    return img;
}

void save_image(const std::string& path, const Image& img)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open '" + path + "' for writing");
    const bool f32 = path.size() >= 6 && path.compare(path.size() - 6, 6, ".imgf32") == 0;
    if (f32)
        write_imgf32(out, img);
    else
        write_ppm(out, img);
}

} // namespace rgrad
