#pragma once

#include "rgrad/blocks.hpp"
#include "rgrad/grouping.hpp"
#include "rgrad/metrics.hpp"
#include "rgrad/renderer.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace rgrad {

/// Per-view gradients of two regimes, all evaluated at one frozen parameter point.
struct RegimeGradientPopulation {
    std::vector<GradientSet> near;
    std::vector<GradientSet> far;
    std::string point_id;
};

/// Within/between-regime decomposition of single-view gradient scatter. All
/// variances are traces (mean squared Euclidean deviation of the flattened
/// all-block vector) with population normalization.
struct VarianceReport {
    double sigma2_w = 0.0;
    double sigma2_b = 0.0;
    std::vector<double> mu_near;
    std::vector<double> mu_far;
    std::vector<double> g_bar; // (mu_near + mu_far) / 2
    /// Single-view variance about the pooled mean.
    double single_view_variance = 0.0;
    /// Exhaustive-enumeration estimator variances.
    double var_random = 0.0;
    double var_structured = 0.0;
    std::optional<double> ratio_predicted; // 1 + sigma2_b / sigma2_w
    std::optional<double> ratio_measured;  // var_random / var_structured
    bool equal_groups = false;
};

enum class PairEstimator { RandomPair, StructuredPair };

/// Monte Carlo settings; absence means exhaustive enumeration.
struct MonteCarlo {
    std::size_t n_draws = 100000;
    std::uint64_t seed = 0;
};

/// Throws std::invalid_argument on an empty group or mismatched shapes.
VarianceReport variance_decompose(const RegimeGradientPopulation& pop);

/// Total variance of g = (g_v1 + g_v2) / 2 under the named pairing. With
/// exhaustive enumeration RandomPair visits all ordered pairs of the pooled
/// views and StructuredPair all near x far pairs.
double estimator_variance(const RegimeGradientPopulation& pop, PairEstimator kind,
                          const std::optional<MonteCarlo>& mc = std::nullopt);

struct RatioCheck {
    bool pass = false;
    double measured = 0.0;
    double predicted = 0.0;
    double relative_error = 0.0;
    VarianceReport report;
};

/// Compares var_R / var_S against 1 + sigma2_b / sigma2_w. Requires equal group
/// sizes (std::invalid_argument) and sigma2_w > 0 (UndefinedRatioError).
RatioCheck check_ratio_identity(const RegimeGradientPopulation& pop, const std::optional<MonteCarlo>& mc, double tol);

struct UnbiasednessCheck {
    bool pass = false;
    double deviation_random = 0.0;     // |mean(g_R) - g_bar|
    double deviation_structured = 0.0; // |mean(g_S) - g_bar|
    double stderr_random = 0.0;        // sqrt(var / n), 0 for exhaustive
    double stderr_structured = 0.0;
    double g_bar_norm = 0.0;
};

/// Passes when both deviations are below tol * (1 + |g_bar|).
UnbiasednessCheck check_unbiasedness(const RegimeGradientPopulation& pop, const std::optional<MonteCarlo>& mc,
                                     double tol);

struct ConflictReport {
    std::size_t iterations = 0;
    double conflict_rate = 0.0; // over all (iteration, block) pairs
    PerBlock<double> block_rates{};
    std::vector<PerBlock<int>> dot_signs; // -1, 0, +1 per iteration and block
};

/// Fraction of (iteration, block) pairs whose dot product is negative.
ConflictReport conflict_rate(std::span<const GradientSet> gn_series, std::span<const GradientSet> gf_series);
/// Same, from recorded per-block dot products.
ConflictReport conflict_rate(std::span<const PerBlock<double>> dots);

/// R per block: mean near-view norm over mean far-view norm. Throws
/// UndefinedRatioError when a far mean norm is zero.
PerBlock<double> gradient_ratio(const RegimeGradientPopulation& pop);

/// Least-squares d in |g| ~ r^(-d) from (r, mean |g|) pairs. Needs three
/// distinct r and positive norms (std::invalid_argument otherwise).
double fit_distance_exponent(std::span<const std::pair<double, double>> measurements);

/// Gradients of every camera at a fixed scene against precomputed targets.
RegimeGradientPopulation gradient_population(const SplatScene& scene, std::span<const CameraSpec> cams,
                                             const TargetSet& targets, const RegimePartition& part,
                                             const LossConfig& cfg);

/// Per block, (r, mean |g_block|) for each radius, averaging over the lateral
/// placements of `placements` with their distance replaced by r. Targets are
/// rendered from target_scene at each moved camera.
PerBlock<std::vector<std::pair<double, double>>> distance_sweep(const SplatScene& scene, const SplatScene& target_scene,
                                                                std::span<const CameraSpec> placements,
                                                                std::span<const double> radii, const LossConfig& cfg);

/// One-coordinate population: near {0, 2}, far {10, 12}. Gives sigma2_w = 1,
/// sigma2_b = 25.
RegimeGradientPopulation scalar_toy_population();

/// Gaussian clusters around two planted means: near at -shift/2, far at
/// +shift/2 along every coordinate, unit within-group noise per coordinate.
/// Each view is a GradientSet of `n_splats` splats (all blocks filled).
RegimeGradientPopulation planted_population(std::uint64_t seed, std::size_t per_group, std::size_t n_splats,
                                            double shift);

} // namespace rgrad
