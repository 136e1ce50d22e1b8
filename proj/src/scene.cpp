#include "rgrad/scene.hpp"

#include "rgrad/rng.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace rgrad {

double Splat::opacity() const { return 1.0 / (1.0 + std::exp(-opacity_logit)); }

Vec2 Splat::scale() const { return {std::exp(log_scale[0]), std::exp(log_scale[1])}; }

void CameraSpec::validate() const
{
    if (!(r > 0.0) || !(f > 0.0))
        throw std::invalid_argument("camera " + std::to_string(id) + ": r and f must be positive");
    if (width < 4 || height < 4)
        throw std::invalid_argument("camera " + std::to_string(id) + ": image must be at least 4x4");
}

SplatScene make_synthetic_scene(std::uint64_t seed, std::size_t n_splats, double extent)
{
    if (n_splats == 0)
        throw std::invalid_argument("make_synthetic_scene: n_splats must be >= 1");
    if (!(extent > 0.0))
        throw std::invalid_argument("make_synthetic_scene: extent must be positive");

    CounterRng rng(seed, /*stream=*/1);
    const double ls_lo = std::log(0.05 * extent);
    const double ls_hi = std::log(0.3 * extent);

    SplatScene scene;
    scene.splats.resize(n_splats);
    for (Splat& s : scene.splats) {
        s.mu = {rng.uniform(-extent, extent), rng.uniform(-extent, extent)};
        s.depth = rng.uniform01();
        s.log_scale = {rng.uniform(ls_lo, ls_hi), rng.uniform(ls_lo, ls_hi)};
        s.rot = rng.uniform(0.0, std::numbers::pi);
        s.opacity_logit = rng.uniform(-1.0, 2.0);
        for (double& c : s.color)
            c = rng.uniform(0.1, 0.9);
    }
    for (double& c : scene.background)
        c = rng.uniform(0.1, 0.9);
    return scene;
}

BlockVectors pack(const SplatScene& scene)
{
    BlockVectors p(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const Splat& s = scene.splats[i];
        p[BlockKind::Position][2 * i] = s.mu[0];
        p[BlockKind::Position][2 * i + 1] = s.mu[1];
        p[BlockKind::Scale][2 * i] = s.log_scale[0];
        p[BlockKind::Scale][2 * i + 1] = s.log_scale[1];
        p[BlockKind::Rotation][i] = s.rot;
        p[BlockKind::Opacity][i] = s.opacity_logit;
        for (std::size_t c = 0; c < 3; ++c)
            p[BlockKind::Color][3 * i + c] = s.color[c];
    }
    return p;
}

SplatScene unpack(const BlockVectors& params, const SplatScene& layout)
{
    const std::size_t n = layout.size();
    for (BlockKind k : kAllBlocks) {
        const std::size_t len = params[k].size();
        if (len % block_width(k) != 0)
            throw std::invalid_argument("unpack: " + std::string(block_long_name(k)) + " length " +
                                        std::to_string(len) + " is not a multiple of " +
                                        std::to_string(block_width(k)));
        if (len != block_width(k) * n)
            throw std::invalid_argument("unpack: " + std::string(block_long_name(k)) + " length " +
                                        std::to_string(len) + " does not match " + std::to_string(n) +
                                        " splats");
    }

    SplatScene scene = layout;
    for (std::size_t i = 0; i < n; ++i) {
        Splat& s = scene.splats[i];
        s.mu = {params[BlockKind::Position][2 * i], params[BlockKind::Position][2 * i + 1]};
        s.log_scale = {params[BlockKind::Scale][2 * i], params[BlockKind::Scale][2 * i + 1]};
        s.rot = params[BlockKind::Rotation][i];
        s.opacity_logit = params[BlockKind::Opacity][i];
        for (std::size_t c = 0; c < 3; ++c)
            s.color[c] = params[BlockKind::Color][3 * i + c];
    }
    return scene;
}

SplatScene perturb_scene(const SplatScene& scene, std::uint64_t seed, double sigma)
{
    if (sigma < 0.0)
        throw std::invalid_argument("perturb_scene: sigma must be >= 0");
    if (sigma == 0.0)
        return scene;

    CounterRng rng(seed, /*stream=*/2);
    std::normal_distribution<double> noise(0.0, sigma);
    BlockVectors p = pack(scene);
    for (auto& block : p.data) {
        for (double& x : block)
            x += noise(rng);
    }
    return unpack(p, scene);
}

namespace {

std::string fmt17(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

double parse_double(const std::string& tok, int line)
{
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(tok, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != tok.size())
        throw std::invalid_argument("scene line " + std::to_string(line) + ": bad number '" + tok + "'");
    return v;
}

std::vector<double> parse_numbers(const std::string& text, int line)
{
    std::istringstream ls(text);
    std::vector<double> out;
    std::string tok;
    while (ls >> tok)
        out.push_back(parse_double(tok, line));
    return out;
}

} // namespace

void write_scene(std::ostream& out, const SplatScene& scene)
{
    out << "SPLATSCENE v1 N=" << scene.size() << '\n';
    for (const Splat& s : scene.splats) {
        out << fmt17(s.mu[0]) << ' ' << fmt17(s.mu[1]) << ' ' << fmt17(s.depth) << ' '
            << fmt17(s.log_scale[0]) << ' ' << fmt17(s.log_scale[1]) << ' ' << fmt17(s.rot) << ' '
            << fmt17(s.opacity_logit) << ' ' << fmt17(s.color[0]) << ' ' << fmt17(s.color[1]) << ' '
            << fmt17(s.color[2]) << '\n';
    }
    out << "BG " << fmt17(scene.background[0]) << ' ' << fmt17(scene.background[1]) << ' '
        << fmt17(scene.background[2]) << '\n';
}

SplatScene read_scene(std::istream& in)
{
    std::string header;
    if (!std::getline(in, header) || header.rfind("SPLATSCENE v1 N=", 0) != 0)
        throw std::invalid_argument("scene: missing 'SPLATSCENE v1 N=<n>' header");
    const long n = std::stol(header.substr(16));
    if (n < 1)
        throw std::invalid_argument("scene: N must be >= 1");

    SplatScene scene;
    scene.splats.resize(static_cast<std::size_t>(n));
    std::string line;
    for (long i = 0; i < n; ++i) {
        if (!std::getline(in, line))
            throw std::invalid_argument("scene: expected " + std::to_string(n) + " splat lines");
        const auto v = parse_numbers(line, static_cast<int>(i + 2));
        if (v.size() != 10)
            throw std::invalid_argument("scene line " + std::to_string(i + 2) + ": expected 10 fields");
        Splat& s = scene.splats[static_cast<std::size_t>(i)];
        s.mu = {v[0], v[1]};
        s.depth = v[2];
        s.log_scale = {v[3], v[4]};
        s.rot = v[5];
        s.opacity_logit = v[6];
        s.color = {v[7], v[8], v[9]};
    }
    if (!std::getline(in, line) || line.rfind("BG ", 0) != 0)
        throw std::invalid_argument("scene: missing 'BG r g b' line");
    const auto bg = parse_numbers(line.substr(3), static_cast<int>(n + 2));
    if (bg.size() != 3)
        throw std::invalid_argument("scene: BG needs 3 fields");
    scene.background = {bg[0], bg[1], bg[2]};
    return scene;
}

void save_scene(const std::string& path, const SplatScene& scene)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open '" + path + "' for writing");
    write_scene(out, scene);
}

SplatScene load_scene(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open '" + path + "'");
    return read_scene(in);
}

} // namespace rgrad
