#pragma once

#include "rgrad/blocks.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace rgrad {

using Vec2 = std::array<double, 2>;
using Vec3 = std::array<double, 3>;

/// Planar Gaussian primitive. Scale is stored as log standard deviation and
/// opacity as a logit; color is clamped to [0,1] only when rendering.
struct Splat {
    Vec2 mu{0.0, 0.0};
    double depth = 0.0;
    Vec2 log_scale{0.0, 0.0};
    double rot = 0.0;
    double opacity_logit = 0.0;
    Vec3 color{0.0, 0.0, 0.0};

    double opacity() const;
    Vec2 scale() const;

    bool operator==(const Splat&) const = default;
};

struct SplatScene {
    std::vector<Splat> splats;
    Vec3 background{0.0, 0.0, 0.0};

    std::size_t size() const { return splats.size(); }
    bool operator==(const SplatScene&) const = default;
};

/// Pinhole camera looking straight at the scene plane from distance r.
struct CameraSpec {
    Vec2 offset{0.0, 0.0};
    double r = 1.0;
    double f = 32.0;
    int width = 32;
    int height = 32;
    int id = 0;

    /// Pixels per scene unit at the scene plane (f / r).
    double magnification() const { return f / r; }
    /// Throws std::invalid_argument on r <= 0, f <= 0, or an image side < 4.
    void validate() const;

    bool operator==(const CameraSpec&) const = default;
};

/// Uniform positions in [-extent, extent]^2; other attributes from fixed ranges.
/// Throws std::invalid_argument when n_splats == 0 or extent <= 0.
SplatScene make_synthetic_scene(std::uint64_t seed, std::size_t n_splats, double extent);

/// Trainable parameters by block. Depth and background are not trainable.
BlockVectors pack(const SplatScene& scene);

/// Inverse of pack. Depths and background come from `layout`, which must have
/// the same splat count the vectors encode. Throws std::invalid_argument on any
/// length mismatch.
SplatScene unpack(const BlockVectors& params, const SplatScene& layout);

/// Adds N(0, sigma^2) to every packed parameter. sigma == 0 returns the input.
SplatScene perturb_scene(const SplatScene& scene, std::uint64_t seed, double sigma);

// Text format: "SPLATSCENE v1 N=<n>", n lines of
// "mu_x mu_y depth logsx logsy rot op_logit r g b", then "BG r g b".
void write_scene(std::ostream& out, const SplatScene& scene);
SplatScene read_scene(std::istream& in);
void save_scene(const std::string& path, const SplatScene& scene);
SplatScene load_scene(const std::string& path);

} // namespace rgrad
