#include "rgrad/reconcile.hpp"

#include "rgrad/errors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rgrad {

Operator parse_operator(const std::string& name)
{
    if (name == "sum")
        return Operator::Sum;
    if (name == "project")
        return Operator::SymmetricProject;
    if (name == "precond")
        return Operator::Precondition;
    if (name == "normeq")
        return Operator::NormEqualize;
    if (name == "minnorm")
        return Operator::MinNorm;
    if (name == "cagrad")
        return Operator::CAGrad;
    if (name == "confgate")
        return Operator::ConfGate;
    throw std::invalid_argument("unknown reconciler '" + name + "'");
}

std::string operator_name(Operator op)
{
    switch (op) {
    case Operator::Sum: return "sum";
    case Operator::SymmetricProject: return "project";
    case Operator::Precondition: return "precond";
    case Operator::NormEqualize: return "normeq";
    case Operator::MinNorm: return "minnorm";
    case Operator::CAGrad: return "cagrad";
    case Operator::ConfGate: return "confgate";
    }
    return "?";
}

void ReconcileConfig::validate() const
{
    if (!(epsilon > 0.0))
        throw ConfigError("epsilon must be positive");
    if (!(cagrad_c >= 0.0 && cagrad_c < 1.0))
        throw ConfigError("cagrad_c must lie in [0, 1)");
    if (!(tau >= -1.0 && tau <= 1.0))
        throw ConfigError("tau must lie in [-1, 1]");
    if (!(gate_beta >= 0.0 && gate_beta < 1.0))
        throw ConfigError("confgate beta must lie in [0, 1)");
    if (!(r_ref > 0.0))
        throw ConfigError("r_ref must be positive");
    if (dispatch) {
        for (BlockKind k : kAllBlocks) {
            if (!dispatch->count(k))
                throw ConfigError("dispatch map has no operator for block '" + std::string(block_long_name(k)) + "'");
        }
    }
}

bool ConflictStats::any_conflict() const
{
    return std::any_of(conflict.begin(), conflict.end(), [](bool b) { return b; });
}

double cosine(std::span<const double> a, std::span<const double> b)
{
    const double na = norm(a), nb = norm(b);
    if (na == 0.0 || nb == 0.0)
        return 0.0;
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

void measure_conflict(const GradientSet& gn, const GradientSet& gf, ConflictStats& stats)
{
    require_same_shape(gn.blocks, gf.blocks, "measure_conflict");
    for (BlockKind k : kAllBlocks) {
        const std::size_t i = index_of(k);
        stats.dots[i] = dot(gn[k], gf[k]);
        stats.cosines[i] = cosine(gn[k], gf[k]);
        stats.conflict[i] = stats.dots[i] < 0.0;
    }
}

namespace block_ops {

Pair project(std::span<const double> gn, std::span<const double> gf, double epsilon)
{
    Pair out{{gn.begin(), gn.end()}, {gf.begin(), gf.end()}, false};
    const double d = dot(gn, gf);
    if (!(d < 0.0))
        return out;
    const double kn = d / (squared_norm(gf) + epsilon);
    const double kf = d / (squared_norm(gn) + epsilon);
    for (std::size_t i = 0; i < gn.size(); ++i) {
        out.gn[i] = gn[i] - kn * gf[i];
        out.gf[i] = gf[i] - kf * gn[i];
    }
    out.fired = true;
    return out;
}

Pair norm_equalize(std::span<const double> gn, std::span<const double> gf)
{
    Pair out{{gn.begin(), gn.end()}, {gf.begin(), gf.end()}, false};
    const double nn = norm(gn), nf = norm(gf);
    if (nn == 0.0 || nf == 0.0)
        return out;
    const double target = std::sqrt(nn * nf);
    const double sn = target / nn, sf = target / nf;
    for (std::size_t i = 0; i < gn.size(); ++i) {
        out.gn[i] = gn[i] * sn;
        out.gf[i] = gf[i] * sf;
    }
    out.fired = true;
    return out;
}

std::vector<double> min_norm(std::span<const double> gn, std::span<const double> gf)
{
    std::vector<double> out(gn.size());
    double diff2 = 0.0, num = 0.0;
    for (std::size_t i = 0; i < gn.size(); ++i) {
        const double d = gf[i] - gn[i];
        diff2 += d * d;
        num += d * gf[i];
    }
    if (diff2 == 0.0) {
        for (std::size_t i = 0; i < gn.size(); ++i)
            out[i] = 2.0 * gn[i];
        return out;
    }
    const double gamma = std::clamp(num / diff2, 0.0, 1.0);
    for (std::size_t i = 0; i < gn.size(); ++i)
        out[i] = 2.0 * (gamma * gn[i] + (1.0 - gamma) * gf[i]);
    return out;
}

namespace {

struct CagradTerms {
    double nn, ff, nf, g0n, g0f, g0_norm;
};

CagradTerms cagrad_terms(std::span<const double> gn, std::span<const double> gf)
{
    CagradTerms t{};
    t.nn = squared_norm(gn);
    t.ff = squared_norm(gf);
    t.nf = dot(gn, gf);
    // g0 = (gn + gf) / 2
    t.g0n = 0.5 * (t.nn + t.nf);
    t.g0f = 0.5 * (t.nf + t.ff);
    t.g0_norm = std::sqrt(std::max(0.0, 0.25 * (t.nn + 2.0 * t.nf + t.ff)));
    return t;
}

double dual_value(const CagradTerms& t, double c, double w)
{
    const double v = 1.0 - w;
    const double gw2 = std::max(0.0, w * w * t.nn + 2.0 * w * v * t.nf + v * v * t.ff);
    return w * t.g0n + v * t.g0f + c * t.g0_norm * std::sqrt(gw2);
}

} // namespace

double cagrad_dual(std::span<const double> gn, std::span<const double> gf, double c, double w)
{
    return dual_value(cagrad_terms(gn, gf), c, w);
}

std::vector<double> cagrad_direction(std::span<const double> gn, std::span<const double> gf, double c, double w)
{
    const auto t = cagrad_terms(gn, gf);
    std::vector<double> gw(gn.size());
    for (std::size_t i = 0; i < gn.size(); ++i)
        gw[i] = w * gn[i] + (1.0 - w) * gf[i];
    const double gw_norm = norm(gw);
    const double lambda = gw_norm > 0.0 ? c * t.g0_norm / gw_norm : 0.0;
    std::vector<double> d(gn.size());
    for (std::size_t i = 0; i < gn.size(); ++i)
        d[i] = 0.5 * (gn[i] + gf[i]) + lambda * gw[i];
    return d;
}

std::vector<double> cagrad(std::span<const double> gn, std::span<const double> gf, double c)
{
    if (c == 0.0) {
        std::vector<double> out(gn.size());
        for (std::size_t i = 0; i < gn.size(); ++i)
            out[i] = gn[i] + gf[i];
        return out;
    }
    const auto t = cagrad_terms(gn, gf);
    // Golden-section search; the dual is convex in w.
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = 0.0, hi = 1.0;
    double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
    double f1 = dual_value(t, c, x1), f2 = dual_value(t, c, x2);
    while (hi - lo > 1e-10) {
        if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = dual_value(t, c, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = dual_value(t, c, x2);
        }
    }
    double w = 0.5 * (lo + hi);
    // The minimum may sit on the boundary of [0,1].
    double best = dual_value(t, c, w);
    for (double edge : {0.0, 1.0}) {
        const double fe = dual_value(t, c, edge);
        if (fe < best) {
            best = fe;
            w = edge;
        }
    }
    auto d = cagrad_direction(gn, gf, c, w);
    const double scale = 2.0 / (1.0 + c);
    for (double& x : d)
        x *= scale;
    return d;
}

} // namespace block_ops

GradientSet reconcile_sum(const GradientSet& gn, const GradientSet& gf)
{
    require_same_shape(gn.blocks, gf.blocks, "reconcile_sum");
    GradientSet out = gn;
    for (BlockKind k : kAllBlocks) {
        for (std::size_t i = 0; i < out[k].size(); ++i)
            out[k][i] = gn[k][i] + gf[k][i];
    }
    return out;
}

ProjectResult reconcile_project(const GradientSet& gn, const GradientSet& gf, double epsilon)
{
    require_same_shape(gn.blocks, gf.blocks, "reconcile_project");
    if (!(epsilon > 0.0))
        throw std::invalid_argument("reconcile_project: epsilon must be positive");
    ProjectResult res{gn, gf, {}};
    measure_conflict(gn, gf, res.stats);
    for (BlockKind k : kAllBlocks) {
        auto p = block_ops::project(gn[k], gf[k], epsilon);
        res.gn[k] = std::move(p.gn);
        res.gf[k] = std::move(p.gf);
        res.stats.projected[index_of(k)] = p.fired;
    }
    return res;
}

GradientSet precondition(const GradientSet& g, double r, const ReconcileConfig& cfg)
{
    if (!(r > 0.0) || !(cfg.r_ref > 0.0))
        throw std::invalid_argument("precondition: distances must be positive");
    GradientSet out = g;
    for (BlockKind k : kAllBlocks) {
        const double factor = std::pow(r / cfg.r_ref, cfg.d_map[index_of(k)]);
        for (double& x : out[k])
            x *= factor;
    }
    return out;
}

std::pair<GradientSet, GradientSet> norm_equalize(const GradientSet& gn, const GradientSet& gf)
{
    require_same_shape(gn.blocks, gf.blocks, "norm_equalize");
    std::pair<GradientSet, GradientSet> out{gn, gf};
    for (BlockKind k : kAllBlocks) {
        auto p = block_ops::norm_equalize(gn[k], gf[k]);
        out.first[k] = std::move(p.gn);
        out.second[k] = std::move(p.gf);
    }
    return out;
}

GradientSet min_norm_combine(const GradientSet& gn, const GradientSet& gf)
{
    require_same_shape(gn.blocks, gf.blocks, "min_norm_combine");
    GradientSet out = gn;
    for (BlockKind k : kAllBlocks)
        out[k] = block_ops::min_norm(gn[k], gf[k]);
    return out;
}

GradientSet cagrad_combine(const GradientSet& gn, const GradientSet& gf, double c)
{
    require_same_shape(gn.blocks, gf.blocks, "cagrad_combine");
    if (!(c >= 0.0 && c < 1.0))
        throw std::invalid_argument("cagrad_combine: c must lie in [0, 1)");
    GradientSet out = gn;
    for (BlockKind k : kAllBlocks)
        out[k] = block_ops::cagrad(gn[k], gf[k], c);
    return out;
}

namespace {

// One block of the confidence gate; updates the smoothed cosine in place.
block_ops::Pair gate_block(std::span<const double> gn, std::span<const double> gf, std::optional<double>& ema,
                           double tau, double epsilon, double beta)
{
    const double cos = cosine(gn, gf);
    ema = ema ? beta * *ema + (1.0 - beta) * cos : cos;
    if (*ema < tau)
        return block_ops::project(gn, gf, epsilon);
    return {{gn.begin(), gn.end()}, {gf.begin(), gf.end()}, false};
}

} // namespace

std::pair<GradientSet, GradientSet> conf_gate(const GradientSet& gn, const GradientSet& gf, ConflictStats& stats,
                                              double tau, double epsilon, double beta)
{
    require_same_shape(gn.blocks, gf.blocks, "conf_gate");
    measure_conflict(gn, gf, stats);
    std::pair<GradientSet, GradientSet> out{gn, gf};
    for (BlockKind k : kAllBlocks) {
        const std::size_t i = index_of(k);
        auto p = gate_block(gn[k], gf[k], stats.ema_cosine[i], tau, epsilon, beta);
        out.first[k] = std::move(p.gn);
        out.second[k] = std::move(p.gf);
        stats.projected[i] = p.fired;
    }
    return out;
}

namespace {

std::vector<double> add(const std::vector<double>& a, const std::vector<double>& b)
{
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        out[i] = a[i] + b[i];
    return out;
}

std::vector<double> combine_block(Operator op, BlockKind k, const GradientSet& gn, const GradientSet& gf,
                                  const ReconcileConfig& cfg, PairContext& ctx, ConflictStats& stats)
{
    const std::size_t i = index_of(k);
    switch (op) {
    case Operator::Sum: return add(gn[k], gf[k]);
    case Operator::SymmetricProject: {
        auto p = block_ops::project(gn[k], gf[k], cfg.epsilon);
        stats.projected[i] = p.fired;
        return add(p.gn, p.gf);
    }
    case Operator::Precondition: {
        const double d = cfg.d_map[i];
        const double a = std::pow(ctx.r_first / cfg.r_ref, d);
        const double b = std::pow(ctx.r_second / cfg.r_ref, d);
        std::vector<double> out(gn[k].size());
        for (std::size_t j = 0; j < out.size(); ++j)
            out[j] = a * gn[k][j] + b * gf[k][j];
        return out;
    }
    case Operator::NormEqualize: {
        auto p = block_ops::norm_equalize(gn[k], gf[k]);
        return add(p.gn, p.gf);
    }
    case Operator::MinNorm: return block_ops::min_norm(gn[k], gf[k]);
    case Operator::CAGrad: return block_ops::cagrad(gn[k], gf[k], cfg.cagrad_c);
    case Operator::ConfGate: {
        auto p = gate_block(gn[k], gf[k], stats.ema_cosine[i], cfg.tau, cfg.epsilon, cfg.gate_beta);
        stats.projected[i] = p.fired;
        return add(p.gn, p.gf);
    }
    }
    throw std::logic_error("unreachable operator");
}

GradientSet combine(const GradientSet& gn, const GradientSet& gf, const ReconcileConfig& cfg, PairContext& ctx,
                    bool use_dispatch)
{
    require_same_shape(gn.blocks, gf.blocks, "reconcile");
    cfg.validate();
    if (use_dispatch && !cfg.dispatch)
        throw ConfigError("dispatch requested without a dispatch map");
    ConflictStats local;
    ConflictStats& stats = ctx.stats ? *ctx.stats : local;
    measure_conflict(gn, gf, stats);
    stats.projected = {};
    GradientSet out = gn;
    for (BlockKind k : kAllBlocks) {
        const Operator op = use_dispatch ? cfg.dispatch->at(k) : cfg.op;
        out[k] = combine_block(op, k, gn, gf, cfg, ctx, stats);
    }
    return out;
}

} // namespace

GradientSet dispatch(const GradientSet& gn, const GradientSet& gf, const ReconcileConfig& cfg, PairContext& ctx)
{
    return combine(gn, gf, cfg, ctx, true);
}

GradientSet reconcile(const GradientSet& gn, const GradientSet& gf, const ReconcileConfig& cfg, PairContext& ctx)
{
    return combine(gn, gf, cfg, ctx, cfg.dispatch.has_value());
}

} // namespace rgrad
