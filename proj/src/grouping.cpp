#include "rgrad/grouping.hpp"

#include "rgrad/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace rgrad {

bool RegimePartition::is_near(int id) const
{
    return std::find(near_ids.begin(), near_ids.end(), id) != near_ids.end();
}

bool RegimePartition::is_far(int id) const
{
    return std::find(far_ids.begin(), far_ids.end(), id) != far_ids.end();
}

namespace {

std::vector<double> sorted_distances(std::span<const CameraSpec> cams)
{
    if (cams.size() < 2)
        throw std::invalid_argument("camera grouping needs at least 2 cameras");
    std::vector<double> r;
    r.reserve(cams.size());
    for (const auto& c : cams)
        r.push_back(c.r);
    std::sort(r.begin(), r.end());
    if (r.front() == r.back())
        throw DegeneratePartitionError("all cameras share one distance; no far group exists");
    return r;
}

// near = {r <= threshold}. If that leaves far empty, the cameras at the
// maximum distance move to far and the threshold drops to the next value.
RegimePartition split_at(std::span<const CameraSpec> cams, const std::vector<double>& sorted, double threshold)
{
    if (threshold >= sorted.back()) {
        auto it = std::lower_bound(sorted.begin(), sorted.end(), sorted.back());
        threshold = *std::prev(it);
    }
    RegimePartition part;
    part.r_med = threshold;
    double sum = 0.0;
    for (const auto& c : cams) {
        (c.r <= threshold ? part.near_ids : part.far_ids).push_back(c.id);
        sum += c.r;
    }
    part.mean_distance = sum / static_cast<double>(cams.size());
    std::sort(part.near_ids.begin(), part.near_ids.end());
    std::sort(part.far_ids.begin(), part.far_ids.end());
    return part;
}

} // namespace

RegimePartition median_split(std::span<const CameraSpec> cams)
{
    const auto r = sorted_distances(cams);
    auto part = split_at(cams, r, r[(r.size() - 1) / 2]);
    part.method = PartitionMethod::MedianRadial;
    return part;
}

RegimePartition percentile_split(std::span<const CameraSpec> cams, double p)
{
    if (!(p > 0.0 && p < 100.0))
        throw std::invalid_argument("percentile must lie in (0, 100)");
    const auto r = sorted_distances(cams);
    const double n = static_cast<double>(r.size());
    // Nearest rank; the small slack keeps exact products like 30*10/100 from rounding up.
    auto rank = static_cast<std::size_t>(std::ceil(p * n / 100.0 - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, r.size());
    auto part = split_at(cams, r, r[rank - 1]);
    part.method = PartitionMethod::Percentile;
    part.percentile = p;
    return part;
}

RegimePartition kmeans2_split(std::span<const CameraSpec> cams, std::uint64_t /*seed*/)
{
    const auto r = sorted_distances(cams);
    double c_near = r.front(), c_far = r.back();
    std::vector<bool> far(cams.size(), false);
    for (int iter = 0; iter < 1000; ++iter) {
        bool changed = false;
        double s_near = 0.0, s_far = 0.0;
        std::size_t n_near = 0, n_far = 0;
        for (std::size_t i = 0; i < cams.size(); ++i) {
            const bool to_far = std::abs(cams[i].r - c_far) < std::abs(cams[i].r - c_near);
            changed = changed || (to_far != far[i]) || iter == 0;
            far[i] = to_far;
            if (to_far) {
                s_far += cams[i].r;
                ++n_far;
            } else {
                s_near += cams[i].r;
                ++n_near;
            }
        }
        if (n_near == 0 || n_far == 0)
            throw DegeneratePartitionError("two-means collapsed to a single cluster");
        c_near = s_near / static_cast<double>(n_near);
        c_far = s_far / static_cast<double>(n_far);
        if (!changed)
            break;
    }
    RegimePartition part;
    part.method = PartitionMethod::KMeans2;
    double sum = 0.0;
    part.r_med = r.front();
    for (std::size_t i = 0; i < cams.size(); ++i) {
        sum += cams[i].r;
        if (far[i]) {
            part.far_ids.push_back(cams[i].id);
        } else {
            part.near_ids.push_back(cams[i].id);
            part.r_med = std::max(part.r_med, cams[i].r);
        }
    }
    part.mean_distance = sum / static_cast<double>(cams.size());
    std::sort(part.near_ids.begin(), part.near_ids.end());
    std::sort(part.far_ids.begin(), part.far_ids.end());
    return part;
}

RegimePartition split_by(std::span<const CameraSpec> cams, const std::string& method)
{
    if (method == "median")
        return median_split(cams);
    if (method == "kmeans")
        return kmeans2_split(cams);
    if (method.rfind("percentile:", 0) == 0)
        return percentile_split(cams, std::stod(method.substr(11)));
    throw std::invalid_argument("unknown partition method '" + method + "'");
}

DistanceStats distance_stats(std::span<const double> r)
{
    if (r.size() < 4)
        throw std::invalid_argument("distance_stats needs at least 4 values");
    const double n = static_cast<double>(r.size());
    DistanceStats st;
    st.mean = std::accumulate(r.begin(), r.end(), 0.0) / n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double x : r) {
        const double d = x - st.mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if (!(m2 > 0.0))
        throw UndefinedMomentsError("distance_stats: zero variance");
    st.variance = m2;
    st.skewness = m3 / std::pow(m2, 1.5);
    st.kurtosis = m4 / (m2 * m2);
    st.bimodality = (st.skewness * st.skewness + 1.0) / st.kurtosis;
    return st;
}

DistanceStats distance_stats(std::span<const CameraSpec> cams)
{
    std::vector<double> r;
    r.reserve(cams.size());
    for (const auto& c : cams)
        r.push_back(c.r);
    return distance_stats(r);
}

} // namespace rgrad
