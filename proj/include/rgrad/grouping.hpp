#pragma once

#include "rgrad/scene.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace rgrad {

enum class PartitionMethod { MedianRadial, Percentile, KMeans2 };

/// Near/far split of a camera set by distance.
struct RegimePartition {
    std::vector<int> near_ids;
    std::vector<int> far_ids;
    /// Largest distance assigned to near; every far camera lies strictly above it.
    double r_med = 0.0;
    double mean_distance = 0.0;
    PartitionMethod method = PartitionMethod::MedianRadial;
    double percentile = 50.0; // only meaningful for Percentile

    bool is_near(int id) const;
    bool is_far(int id) const;
};

/// Threshold at the lower median; ties go to near. Throws std::invalid_argument
/// for fewer than two cameras and DegeneratePartitionError when all distances are equal.
RegimePartition median_split(std::span<const CameraSpec> cams);

/// Threshold at the nearest-rank p-th percentile, p in (0, 100).
RegimePartition percentile_split(std::span<const CameraSpec> cams, double p);

/// 1-D two-means on distance, initialized at (min, max). The seed is accepted
/// for interface stability; the initialization is deterministic.
RegimePartition kmeans2_split(std::span<const CameraSpec> cams, std::uint64_t seed = 0);

/// Parses "median", "percentile:<p>" or "kmeans" and applies it.
RegimePartition split_by(std::span<const CameraSpec> cams, const std::string& method);

struct DistanceStats {
    double mean = 0.0;
    double variance = 0.0;
    double skewness = 0.0;
    double kurtosis = 0.0; // standardized fourth moment, not excess
    double bimodality = 0.0;
};

/// Population moments and Sarle's coefficient (skew^2 + 1) / kurtosis.
/// Needs at least four values; throws UndefinedMomentsError on zero variance.
DistanceStats distance_stats(std::span<const double> r);
DistanceStats distance_stats(std::span<const CameraSpec> cams);

} // namespace rgrad
