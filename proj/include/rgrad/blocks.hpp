#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace rgrad {

/// Parameter tensor types. Reconciliation operators act on one block at a time.
enum class BlockKind : std::uint8_t { Position = 0, Scale, Rotation, Opacity, Color };

inline constexpr std::size_t kNumBlocks = 5;

inline constexpr std::array<BlockKind, kNumBlocks> kAllBlocks = {
    BlockKind::Position, BlockKind::Scale, BlockKind::Rotation, BlockKind::Opacity, BlockKind::Color};

constexpr std::size_t index_of(BlockKind k) { return static_cast<std::size_t>(k); }

/// Scalars per splat in each block: (2, 2, 1, 1, 3).
constexpr std::size_t block_width(BlockKind k)
{
    switch (k) {
    case BlockKind::Position: return 2;
    case BlockKind::Scale: return 2;
    case BlockKind::Rotation: return 1;
    case BlockKind::Opacity: return 1;
    case BlockKind::Color: return 3;
    }
    return 0;
}

/// Short lowercase name used in config keys and CSV columns ("pos", "scale", ...).
std::string_view block_name(BlockKind k);

/// Long name used in config keys ("position", "scale", "rotation", "opacity", "color").
std::string_view block_long_name(BlockKind k);

/// Accepts either the short or the long name. Throws std::invalid_argument.
BlockKind parse_block(std::string_view name);

template <class T>
using PerBlock = std::array<T, kNumBlocks>;

/// One flat vector per BlockKind. Used both for packed parameters and gradients.
struct BlockVectors {
    PerBlock<std::vector<double>> data;

    BlockVectors() = default;
    /// Zero-filled vectors sized for n splats.
    explicit BlockVectors(std::size_t n_splats);

    std::vector<double>& operator[](BlockKind k) { return data[index_of(k)]; }
    const std::vector<double>& operator[](BlockKind k) const { return data[index_of(k)]; }

    std::size_t total_size() const;
    /// Concatenation Position|Scale|Rotation|Opacity|Color.
    std::vector<double> flatten() const;
    bool same_shape(const BlockVectors& other) const;

    bool operator==(const BlockVectors&) const = default;
};

/// Gradient of one view's loss with respect to every parameter block.
struct GradientSet {
    BlockVectors blocks;
    int view_id = -1;
    int iteration = 0;

    std::vector<double>& operator[](BlockKind k) { return blocks[k]; }
    const std::vector<double>& operator[](BlockKind k) const { return blocks[k]; }

    bool all_finite() const;
};

/// Throws std::invalid_argument unless every block has the same length in a and b.
void require_same_shape(const BlockVectors& a, const BlockVectors& b, std::string_view what);

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);
double norm(std::span<const double> a);

} // namespace rgrad
