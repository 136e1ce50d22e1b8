#include "rgrad/diagnostics.hpp"

#include "rgrad/errors.hpp"
#include "rgrad/rng.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace rgrad {

namespace {

using Flat = std::vector<double>;

struct FlatPopulation {
    std::vector<Flat> near;
    std::vector<Flat> far;
    std::size_t dim = 0;
};

FlatPopulation flatten(const RegimeGradientPopulation& pop)
{
    if (pop.near.empty() || pop.far.empty())
        throw std::invalid_argument("gradient population needs nonempty near and far groups");
    FlatPopulation fp;
    const BlockVectors& ref = pop.near.front().blocks;
    for (const auto* group : {&pop.near, &pop.far}) {
        for (const auto& g : *group) {
            require_same_shape(ref, g.blocks, "gradient population");
            (group == &pop.near ? fp.near : fp.far).push_back(g.blocks.flatten());
        }
    }
    fp.dim = fp.near.front().size();
    return fp;
}

Flat mean_of(const std::vector<Flat>& vs)
{
    Flat m(vs.front().size(), 0.0);
    for (const auto& v : vs) {
        for (std::size_t i = 0; i < m.size(); ++i)
            m[i] += v[i];
    }
    for (double& x : m)
        x /= static_cast<double>(vs.size());
    return m;
}

double sq_dist(const Flat& a, const Flat& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double mean_sq_dev(const std::vector<Flat>& vs, const Flat& center)
{
    double s = 0.0;
    for (const auto& v : vs)
        s += sq_dist(v, center);
    return s / static_cast<double>(vs.size());
}

// Mean and total variance of the pair estimator, by enumeration or sampling.
struct EstimatorMoments {
    Flat mean;
    double variance = 0.0;
    std::size_t samples = 0;
};

template <class Visit>
void for_each_pair(const FlatPopulation& fp, PairEstimator kind, const std::optional<MonteCarlo>& mc, Visit&& visit)
{
    std::vector<const Flat*> pooled;
    for (const auto& v : fp.near)
        pooled.push_back(&v);
    for (const auto& v : fp.far)
        pooled.push_back(&v);

    if (!mc) {
        if (kind == PairEstimator::RandomPair) {
            for (const Flat* a : pooled)
                for (const Flat* b : pooled)
                    visit(*a, *b);
        } else {
            for (const auto& a : fp.near)
                for (const auto& b : fp.far)
                    visit(a, b);
        }
        return;
    }
    CounterRng rng(mc->seed, /*stream=*/4);
    for (std::size_t n = 0; n < mc->n_draws; ++n) {
        if (kind == PairEstimator::RandomPair) {
            const Flat& a = *pooled[rng.below(pooled.size())];
            const Flat& b = *pooled[rng.below(pooled.size())];
            visit(a, b);
        } else {
            const Flat& a = fp.near[rng.below(fp.near.size())];
            const Flat& b = fp.far[rng.below(fp.far.size())];
            visit(a, b);
        }
    }
}

EstimatorMoments estimator_moments(const FlatPopulation& fp, PairEstimator kind, const std::optional<MonteCarlo>& mc)
{
    if (mc && mc->n_draws < 2)
        throw std::invalid_argument("Monte Carlo estimator variance needs at least 2 draws");
    // Two passes over the same (deterministic) pair sequence: sum, then squared deviations.
    EstimatorMoments m;
    Flat sum(fp.dim, 0.0);
    for_each_pair(fp, kind, mc, [&](const Flat& a, const Flat& b) {
        ++m.samples;
        for (std::size_t i = 0; i < fp.dim; ++i)
            sum[i] += 0.5 * (a[i] + b[i]);
    });
    m.mean.resize(fp.dim);
    for (std::size_t i = 0; i < fp.dim; ++i)
        m.mean[i] = sum[i] / static_cast<double>(m.samples);
    Flat m2(fp.dim, 0.0);
    for_each_pair(fp, kind, mc, [&](const Flat& a, const Flat& b) {
        for (std::size_t i = 0; i < fp.dim; ++i) {
            const double d = 0.5 * (a[i] + b[i]) - m.mean[i];
            m2[i] += d * d;
        }
    });
    double total = 0.0;
    for (double x : m2)
        total += x;
    // Enumeration is the exact distribution; sampling uses the unbiased estimate.
    m.variance = mc ? total / static_cast<double>(m.samples - 1) : total / static_cast<double>(m.samples);
    return m;
}

} // namespace

VarianceReport variance_decompose(const RegimeGradientPopulation& pop)
{
    const FlatPopulation fp = flatten(pop);
    VarianceReport rep;
    rep.mu_near = mean_of(fp.near);
    rep.mu_far = mean_of(fp.far);
    rep.g_bar.resize(fp.dim);
    for (std::size_t i = 0; i < fp.dim; ++i)
        rep.g_bar[i] = 0.5 * (rep.mu_near[i] + rep.mu_far[i]);
    rep.sigma2_w = 0.5 * (mean_sq_dev(fp.near, rep.mu_near) + mean_sq_dev(fp.far, rep.mu_far));
    rep.sigma2_b = 0.25 * sq_dist(rep.mu_near, rep.mu_far);
    rep.equal_groups = fp.near.size() == fp.far.size();

    std::vector<Flat> pooled = fp.near;
    pooled.insert(pooled.end(), fp.far.begin(), fp.far.end());
    rep.single_view_variance = mean_sq_dev(pooled, mean_of(pooled));

    rep.var_random = estimator_moments(fp, PairEstimator::RandomPair, std::nullopt).variance;
    rep.var_structured = estimator_moments(fp, PairEstimator::StructuredPair, std::nullopt).variance;
    if (rep.sigma2_w > 0.0)
        rep.ratio_predicted = 1.0 + rep.sigma2_b / rep.sigma2_w;
    if (rep.var_structured > 0.0)
        rep.ratio_measured = rep.var_random / rep.var_structured;
    return rep;
}

double estimator_variance(const RegimeGradientPopulation& pop, PairEstimator kind, const std::optional<MonteCarlo>& mc)
{
    return estimator_moments(flatten(pop), kind, mc).variance;
}

RatioCheck check_ratio_identity(const RegimeGradientPopulation& pop, const std::optional<MonteCarlo>& mc, double tol)
{
    if (pop.near.size() != pop.far.size())
        throw std::invalid_argument("ratio identity requires equal near and far group sizes");
    RatioCheck chk;
    chk.report = variance_decompose(pop);
    if (!(chk.report.sigma2_w > 0.0))
        throw UndefinedRatioError("ratio identity undefined: within-regime variance is zero");
    chk.predicted = *chk.report.ratio_predicted;
    if (mc) {
        const FlatPopulation fp = flatten(pop);
        MonteCarlo structured = *mc;
        structured.seed = mc->seed ^ 0x5bd1e995u;
        const double vr = estimator_moments(fp, PairEstimator::RandomPair, mc).variance;
        const double vs = estimator_moments(fp, PairEstimator::StructuredPair, structured).variance;
        chk.measured = vr / vs;
    } else {
        chk.measured = *chk.report.ratio_measured;
    }
    chk.relative_error = std::abs(chk.measured - chk.predicted) / chk.predicted;
    chk.pass = chk.relative_error < tol;
    return chk;
}

UnbiasednessCheck check_unbiasedness(const RegimeGradientPopulation& pop, const std::optional<MonteCarlo>& mc,
                                     double tol)
{
    const FlatPopulation fp = flatten(pop);
    const Flat mu_n = mean_of(fp.near), mu_f = mean_of(fp.far);
    Flat g_bar(fp.dim);
    for (std::size_t i = 0; i < fp.dim; ++i)
        g_bar[i] = 0.5 * (mu_n[i] + mu_f[i]);

    std::optional<MonteCarlo> mc_s = mc;
    if (mc_s)
        mc_s->seed ^= 0x5bd1e995u;
    const auto r = estimator_moments(fp, PairEstimator::RandomPair, mc);
    const auto s = estimator_moments(fp, PairEstimator::StructuredPair, mc_s);

    UnbiasednessCheck chk;
    chk.g_bar_norm = norm(g_bar);
    chk.deviation_random = std::sqrt(sq_dist(r.mean, g_bar));
    chk.deviation_structured = std::sqrt(sq_dist(s.mean, g_bar));
    if (mc) {
        chk.stderr_random = std::sqrt(r.variance / static_cast<double>(r.samples));
        chk.stderr_structured = std::sqrt(s.variance / static_cast<double>(s.samples));
    }
    const double bound = tol * (1.0 + chk.g_bar_norm);
    chk.pass = chk.deviation_random <= bound && chk.deviation_structured <= bound;
    return chk;
}

ConflictReport conflict_rate(std::span<const PerBlock<double>> dots)
{
    ConflictReport rep;
    rep.iterations = dots.size();
    if (dots.empty())
        return rep;
    std::size_t total = 0;
    PerBlock<std::size_t> per{};
    for (const auto& row : dots) {
        PerBlock<int> signs{};
        for (std::size_t b = 0; b < kNumBlocks; ++b) {
            signs[b] = row[b] < 0.0 ? -1 : (row[b] > 0.0 ? 1 : 0);
            if (row[b] < 0.0) {
                ++per[b];
                ++total;
            }
        }
        rep.dot_signs.push_back(signs);
    }
    const double n = static_cast<double>(dots.size());
    for (std::size_t b = 0; b < kNumBlocks; ++b)
        rep.block_rates[b] = static_cast<double>(per[b]) / n;
    rep.conflict_rate = static_cast<double>(total) / (n * static_cast<double>(kNumBlocks));
    return rep;
}

ConflictReport conflict_rate(std::span<const GradientSet> gn_series, std::span<const GradientSet> gf_series)
{
    if (gn_series.size() != gf_series.size())
        throw std::invalid_argument("conflict_rate: series lengths differ");
    std::vector<PerBlock<double>> dots;
    dots.reserve(gn_series.size());
    for (std::size_t t = 0; t < gn_series.size(); ++t) {
        require_same_shape(gn_series[t].blocks, gf_series[t].blocks, "conflict_rate");
        PerBlock<double> row{};
        for (BlockKind k : kAllBlocks)
            row[index_of(k)] = dot(gn_series[t][k], gf_series[t][k]);
        dots.push_back(row);
    }
    return conflict_rate(dots);
}

PerBlock<double> gradient_ratio(const RegimeGradientPopulation& pop)
{
    if (pop.near.empty() || pop.far.empty())
        throw std::invalid_argument("gradient_ratio needs nonempty near and far groups");
    PerBlock<double> out{};
    for (BlockKind k : kAllBlocks) {
        double sn = 0.0, sf = 0.0;
        for (const auto& g : pop.near)
            sn += norm(g[k]);
        for (const auto& g : pop.far)
            sf += norm(g[k]);
        sn /= static_cast<double>(pop.near.size());
        sf /= static_cast<double>(pop.far.size());
        if (sf == 0.0)
            throw UndefinedRatioError("gradient_ratio: far-group mean norm of block '" +
                                      std::string(block_long_name(k)) + "' is zero");
        out[index_of(k)] = sn / sf;
    }
    return out;
}

double fit_distance_exponent(std::span<const std::pair<double, double>> measurements)
{
    if (measurements.size() < 3)
        throw std::invalid_argument("fit_distance_exponent needs at least 3 measurements");
    double sx = 0.0, sy = 0.0;
    for (const auto& [r, g] : measurements) {
        if (!(r > 0.0) || !(g > 0.0))
            throw std::invalid_argument("fit_distance_exponent: distances and norms must be positive");
        sx += std::log(r);
        sy += std::log(g);
    }
    const double n = static_cast<double>(measurements.size());
    const double mx = sx / n, my = sy / n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [r, g] : measurements) {
        const double dx = std::log(r) - mx;
        sxx += dx * dx;
        sxy += dx * (std::log(g) - my);
    }
    // Three distinct radii leave a strictly positive spread.
    std::vector<double> distinct;
    for (const auto& m : measurements) {
        if (std::find(distinct.begin(), distinct.end(), m.first) == distinct.end())
            distinct.push_back(m.first);
    }
    if (distinct.size() < 3 || !(sxx > 0.0))
        throw std::invalid_argument("fit_distance_exponent needs at least 3 distinct distances");
    return -sxy / sxx;
}

RegimeGradientPopulation gradient_population(const SplatScene& scene, std::span<const CameraSpec> cams,
                                             const TargetSet& targets, const RegimePartition& part,
                                             const LossConfig& cfg)
{
    RegimeGradientPopulation pop;
    for (const auto& cam : cams) {
        auto it = targets.find(cam.id);
        if (it == targets.end())
            throw std::invalid_argument("gradient_population: no target for camera " + std::to_string(cam.id));
        GradientSet g = backward(scene, cam, it->second, cfg).grads;
        if (part.is_near(cam.id))
            pop.near.push_back(std::move(g));
        else if (part.is_far(cam.id))
            pop.far.push_back(std::move(g));
    }
    return pop;
}

PerBlock<std::vector<std::pair<double, double>>> distance_sweep(const SplatScene& scene, const SplatScene& target_scene,
                                                                std::span<const CameraSpec> placements,
                                                                std::span<const double> radii, const LossConfig& cfg)
{
    if (placements.empty())
        throw std::invalid_argument("distance_sweep needs at least one camera placement");
    PerBlock<std::vector<std::pair<double, double>>> out;
    for (double r : radii) {
        PerBlock<double> sums{};
        for (CameraSpec cam : placements) {
            cam.r = r;
            const Image target = render(target_scene, cam);
            const GradientSet g = backward(scene, cam, target, cfg).grads;
            for (BlockKind k : kAllBlocks)
                sums[index_of(k)] += norm(g[k]);
        }
        for (std::size_t b = 0; b < kNumBlocks; ++b)
            out[b].emplace_back(r, sums[b] / static_cast<double>(placements.size()));
    }
    return out;
}

RegimeGradientPopulation scalar_toy_population()
{
    auto view = [](double v) {
        GradientSet g;
        g.blocks.data[index_of(BlockKind::Opacity)] = {v};
        return g;
    };
    RegimeGradientPopulation pop;
    pop.near = {view(0.0), view(2.0)};
    pop.far = {view(10.0), view(12.0)};
    pop.point_id = "scalar-toy";
    return pop;
}

RegimeGradientPopulation planted_population(std::uint64_t seed, std::size_t per_group, std::size_t n_splats,
                                            double shift)
{
    if (per_group == 0 || n_splats == 0)
        throw std::invalid_argument("planted_population: empty population");
    CounterRng rng(seed, /*stream=*/7);
    std::normal_distribution<double> noise(0.0, 1.0);
    RegimeGradientPopulation pop;
    auto fill = [&](std::vector<GradientSet>& group, double centre) {
        for (std::size_t v = 0; v < per_group; ++v) {
            GradientSet g{BlockVectors(n_splats)};
            for (auto& block : g.blocks.data)
                for (double& x : block)
                    x = centre + noise(rng);
            g.view_id = static_cast<int>(v);
            group.push_back(std::move(g));
        }
    };
    fill(pop.near, -0.5 * shift);
    fill(pop.far, 0.5 * shift);
    pop.point_id = "planted";
    return pop;
}

} // namespace rgrad
