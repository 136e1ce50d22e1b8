#pragma once

#include "rgrad/blocks.hpp"
#include "rgrad/rng.hpp"

#include <initializer_list>
#include <vector>

namespace testing {

/// Gradient set over one splat with only the position block filled.
inline rgrad::GradientSet pos_grad(double x, double y)
{
    rgrad::GradientSet g{rgrad::BlockVectors(1)};
    g[rgrad::BlockKind::Position] = {x, y};
    return g;
}

/// Gradient set with every block filled from a standard normal-ish draw.
inline rgrad::GradientSet random_grad(rgrad::CounterRng& rng, std::size_t n_splats, double scale = 1.0)
{
    rgrad::GradientSet g{rgrad::BlockVectors(n_splats)};
    for (auto& block : g.blocks.data)
        for (double& x : block)
            x = scale * (rng.uniform01() + rng.uniform01() + rng.uniform01() - 1.5) * 2.0;
    return g;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace testing
