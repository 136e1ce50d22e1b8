#include "rgrad/blocks.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rgrad {

std::string_view block_name(BlockKind k)
{
    switch (k) {
    case BlockKind::Position: return "pos";
    case BlockKind::Scale: return "scale";
    case BlockKind::Rotation: return "rot";
    case BlockKind::Opacity: return "op";
    case BlockKind::Color: return "col";
    }
    return "?";
}

std::string_view block_long_name(BlockKind k)
{
    switch (k) {
    case BlockKind::Position: return "position";
    case BlockKind::Scale: return "scale";
    case BlockKind::Rotation: return "rotation";
    case BlockKind::Opacity: return "opacity";
    case BlockKind::Color: return "color";
    }
    return "?";
}

BlockKind parse_block(std::string_view name)
{
    for (BlockKind k : kAllBlocks) {
        if (name == block_name(k) || name == block_long_name(k))
            return k;
    }
    throw std::invalid_argument("unknown parameter block '" + std::string(name) + "'");
}

BlockVectors::BlockVectors(std::size_t n_splats)
{
    for (BlockKind k : kAllBlocks)
        data[index_of(k)].assign(block_width(k) * n_splats, 0.0);
}

std::size_t BlockVectors::total_size() const
{
    std::size_t n = 0;
    for (const auto& v : data)
        n += v.size();
    return n;
}

std::vector<double> BlockVectors::flatten() const
{
    std::vector<double> out;
    out.reserve(total_size());
    for (const auto& v : data)
        out.insert(out.end(), v.begin(), v.end());
    return out;
}

bool BlockVectors::same_shape(const BlockVectors& other) const
{
    for (std::size_t i = 0; i < kNumBlocks; ++i) {
        if (data[i].size() != other.data[i].size())
            return false;
    }
    return true;
}

bool GradientSet::all_finite() const
{
    for (const auto& v : blocks.data) {
        for (double x : v) {
            if (!std::isfinite(x))
                return false;
        }
    }
    return true;
}

void require_same_shape(const BlockVectors& a, const BlockVectors& b, std::string_view what)
{
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": gradient block shapes differ");
}

double dot(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size())
        throw std::invalid_argument("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

double norm(std::span<const double> a) { return std::sqrt(squared_norm(a)); }

} // namespace rgrad
