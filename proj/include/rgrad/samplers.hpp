#pragma once

#include "rgrad/grouping.hpp"
#include "rgrad/rng.hpp"
#include "rgrad/scene.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>

namespace rgrad {

enum class SamplerKind { Single, RandomPair, Balanced, Active };

SamplerKind parse_sampler(const std::string& name); // single|r2view|balanced|active
std::string sampler_name(SamplerKind kind);

struct ViewDraw {
    int first = -1;
    std::optional<int> second;

    bool operator==(const ViewDraw&) const = default;
};

/// Single-owner sampler state: RNG stream, per-view loss EMA, and the active
/// pairing knobs.
struct SamplerState {
    CounterRng rng;
    std::map<int, double> loss_ema;
    double ema_beta = 0.9;
    int topk = 5;
    double temperature = 1.0;
    /// Group that supplies the anchor view on the next active draw.
    bool anchor_near = true;

    explicit SamplerState(std::uint64_t seed = 0) : rng(seed, /*stream=*/3) {}
};

/// Uniform over all cameras. Throws std::invalid_argument on an empty list.
ViewDraw draw_single(SamplerState& state, std::span<const CameraSpec> cams);

/// Two iid uniform draws with replacement.
ViewDraw draw_random_pair(SamplerState& state, std::span<const CameraSpec> cams);

/// first uniform on near, second uniform on far. Throws DegeneratePartitionError
/// when a group is empty.
ViewDraw draw_balanced_pair(SamplerState& state, const RegimePartition& part);

/// ema <- beta * ema + (1 - beta) * loss; the first observation initializes it.
void update_loss_ema(SamplerState& state, int view_id, double loss);

/// Anchor drawn uniformly from alternating groups; partner drawn from the
/// opposite group by softmax over the top-k |ema_anchor - ema_v| / temperature.
/// Falls back to draw_balanced_pair until each group has an initialized EMA.
/// The returned draw is always ordered (near, far).
ViewDraw draw_active_pair(SamplerState& state, const RegimePartition& part);

/// Dispatch on kind. Single-view kinds leave `second` empty.
ViewDraw draw(SamplerKind kind, SamplerState& state, std::span<const CameraSpec> cams, const RegimePartition* part);

} // namespace rgrad
