#include "rgrad/samplers.hpp"

#include "rgrad/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace rgrad {

SamplerKind parse_sampler(const std::string& name)
{
    if (name == "single")
        return SamplerKind::Single;
    if (name == "r2view")
        return SamplerKind::RandomPair;
    if (name == "balanced")
        return SamplerKind::Balanced;
    if (name == "active")
        return SamplerKind::Active;
    throw std::invalid_argument("unknown sampler '" + name + "'");
}

std::string sampler_name(SamplerKind kind)
{
    switch (kind) {
    case SamplerKind::Single: return "single";
    case SamplerKind::RandomPair: return "r2view";
    case SamplerKind::Balanced: return "balanced";
    case SamplerKind::Active: return "active";
    }
    return "?";
}

namespace {

int pick(CounterRng& rng, const std::vector<int>& ids) { return ids[rng.below(ids.size())]; }

void require_groups(const RegimePartition& part)
{
    if (part.near_ids.empty() || part.far_ids.empty())
        throw DegeneratePartitionError("pairing needs nonempty near and far groups");
}

bool any_initialized(const SamplerState& state, const std::vector<int>& ids)
{
    return std::any_of(ids.begin(), ids.end(), [&](int id) { return state.loss_ema.count(id) != 0; });
}

} // namespace

ViewDraw draw_single(SamplerState& state, std::span<const CameraSpec> cams)
{
    if (cams.empty())
        throw std::invalid_argument("draw_single: empty camera list");
    return {cams[state.rng.below(cams.size())].id, std::nullopt};
}

ViewDraw draw_random_pair(SamplerState& state, std::span<const CameraSpec> cams)
{
    if (cams.empty())
        throw std::invalid_argument("draw_random_pair: empty camera list");
    const int a = cams[state.rng.below(cams.size())].id;
    const int b = cams[state.rng.below(cams.size())].id;
    return {a, b};
}

ViewDraw draw_balanced_pair(SamplerState& state, const RegimePartition& part)
{
    require_groups(part);
    const int a = pick(state.rng, part.near_ids);
    const int b = pick(state.rng, part.far_ids);
    return {a, b};
}

void update_loss_ema(SamplerState& state, int view_id, double loss)
{
    if (!std::isfinite(loss))
        throw std::invalid_argument("update_loss_ema: loss must be finite");
    auto it = state.loss_ema.find(view_id);
    if (it == state.loss_ema.end())
        state.loss_ema.emplace(view_id, loss);
    else
        it->second = state.ema_beta * it->second + (1.0 - state.ema_beta) * loss;
}

ViewDraw draw_active_pair(SamplerState& state, const RegimePartition& part)
{
    require_groups(part);
    if (!any_initialized(state, part.near_ids) || !any_initialized(state, part.far_ids))
        return draw_balanced_pair(state, part);

    const bool anchor_near = state.anchor_near;
    state.anchor_near = !state.anchor_near;
    const auto& anchor_group = anchor_near ? part.near_ids : part.far_ids;
    const auto& partner_group = anchor_near ? part.far_ids : part.near_ids;

    const int anchor = pick(state.rng, anchor_group);
    const auto ema_of = [&](int id) -> std::optional<double> {
        auto it = state.loss_ema.find(id);
        return it == state.loss_ema.end() ? std::nullopt : std::optional<double>(it->second);
    };
    const auto anchor_ema = ema_of(anchor);

    std::vector<double> disparity(partner_group.size(), 0.0);
    for (std::size_t i = 0; i < partner_group.size(); ++i) {
        const auto e = ema_of(partner_group[i]);
        if (anchor_ema && e)
            disparity[i] = std::abs(*anchor_ema - *e);
    }

    // Top-k by disparity, ties broken by position in the group.
    std::vector<std::size_t> idx(partner_group.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return disparity[a] > disparity[b]; });
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(std::max(state.topk, 1)), idx.size());
    idx.resize(k);

    const double t = state.temperature;
    const double top = disparity[idx.front()] / t;
    std::vector<double> w(k);
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        w[i] = std::exp(disparity[idx[i]] / t - top);
        total += w[i];
    }
    double u = state.rng.uniform01() * total;
    std::size_t chosen = k - 1;
    for (std::size_t i = 0; i < k; ++i) {
        if (u < w[i]) {
            chosen = i;
            break;
        }
        u -= w[i];
    }
    const int partner = partner_group[idx[chosen]];
    return anchor_near ? ViewDraw{anchor, partner} : ViewDraw{partner, anchor};
}

ViewDraw draw(SamplerKind kind, SamplerState& state, std::span<const CameraSpec> cams, const RegimePartition* part)
{
    switch (kind) {
    case SamplerKind::Single: return draw_single(state, cams);
    case SamplerKind::RandomPair: return draw_random_pair(state, cams);
    case SamplerKind::Balanced:
    case SamplerKind::Active:
        if (!part)
            throw ConfigError("paired regime sampler needs a camera partition");
        return kind == SamplerKind::Balanced ? draw_balanced_pair(state, *part) : draw_active_pair(state, *part);
    }
    throw std::logic_error("unreachable sampler kind");
}

} // namespace rgrad
