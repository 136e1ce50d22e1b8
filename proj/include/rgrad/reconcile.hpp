#pragma once

#include "rgrad/blocks.hpp"

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace rgrad {

/// How two per-view gradients become one update gradient.
enum class Operator { Sum, SymmetricProject, Precondition, NormEqualize, MinNorm, CAGrad, ConfGate };

/// sum|project|precond|normeq|minnorm|cagrad|confgate
Operator parse_operator(const std::string& name);
std::string operator_name(Operator op);

struct ReconcileConfig {
    Operator op = Operator::SymmetricProject;
    double epsilon = 1e-12;
    double cagrad_c = 0.5;
    double tau = -0.1;
    /// EMA factor for the confidence gate's smoothed cosine.
    double gate_beta = 0.99;
    /// Distance exponent per block for the preconditioner.
    PerBlock<int> d_map{2, 2, 2, 1, 1};
    double r_ref = 1.0;
    /// When set, must name an operator for every block.
    std::optional<std::map<BlockKind, Operator>> dispatch;

    /// Throws ConfigError on epsilon <= 0, c outside [0,1), tau outside [-1,1],
    /// r_ref <= 0, or a dispatch map that misses a block.
    void validate() const;
};

/// Per-block agreement statistics between two gradients, plus the gate's
/// smoothed cosine which persists across steps.
struct ConflictStats {
    PerBlock<double> dots{};
    PerBlock<double> cosines{};
    PerBlock<bool> conflict{};
    PerBlock<bool> projected{};
    PerBlock<std::optional<double>> ema_cosine{};

    bool any_conflict() const;
};

/// Cosine, or 0 when either vector is zero.
double cosine(std::span<const double> a, std::span<const double> b);

/// Fills dots, cosines and conflict flags; leaves ema_cosine untouched.
void measure_conflict(const GradientSet& gn, const GradientSet& gf, ConflictStats& stats);

GradientSet reconcile_sum(const GradientSet& gn, const GradientSet& gf);

struct ProjectResult {
    GradientSet gn;
    GradientSet gf;
    ConflictStats stats;
};

/// Per block: on gn.gf < 0 remove from each gradient its component along the
/// other (both projections use the original pair); otherwise pass both through.
ProjectResult reconcile_project(const GradientSet& gn, const GradientSet& gf, double epsilon);

/// Block-wise (r / r_ref)^d scaling.
GradientSet precondition(const GradientSet& g, double r, const ReconcileConfig& cfg);

/// Both gradients rescaled per block to sqrt(|gn| |gf|); zero blocks unchanged.
std::pair<GradientSet, GradientSet> norm_equalize(const GradientSet& gn, const GradientSet& gf);

/// Two-task min-norm point of the segment [gn, gf], scaled by 2.
GradientSet min_norm_combine(const GradientSet& gn, const GradientSet& gf);

/// Two-task conflict-averse direction with radius c |g0|, rescaled by 2 / (1 + c).
GradientSet cagrad_combine(const GradientSet& gn, const GradientSet& gf, double c);

/// Smoothed-cosine gate: updates stats.ema_cosine per block, then applies the
/// symmetric projection only where the smoothed cosine is below tau.
std::pair<GradientSet, GradientSet> conf_gate(const GradientSet& gn, const GradientSet& gf, ConflictStats& stats,
                                              double tau, double epsilon, double beta = 0.99);

/// Distances of the two rendered views (for the preconditioner) and the
/// persistent statistics (for the gate).
struct PairContext {
    double r_first = 1.0;
    double r_second = 1.0;
    ConflictStats* stats = nullptr;
};

/// Applies the operator named for each block in cfg.dispatch, then sums the
/// two per-view results. Throws ConfigError when a block is unmapped.
GradientSet dispatch(const GradientSet& gn, const GradientSet& gf, const ReconcileConfig& cfg, PairContext& ctx);

/// Final update gradient for one pair: dispatch when configured, else cfg.op on
/// every block. ctx.stats, when given, receives the conflict measurements.
GradientSet reconcile(const GradientSet& gn, const GradientSet& gf, const ReconcileConfig& cfg, PairContext& ctx);

namespace block_ops {

struct Pair {
    std::vector<double> gn;
    std::vector<double> gf;
    bool fired = false;
};

Pair project(std::span<const double> gn, std::span<const double> gf, double epsilon);
Pair norm_equalize(std::span<const double> gn, std::span<const double> gf);
std::vector<double> min_norm(std::span<const double> gn, std::span<const double> gf);
std::vector<double> cagrad(std::span<const double> gn, std::span<const double> gf, double c);

/// Objective minimized over w in [0,1] by cagrad:
/// g_w . g0 + c |g0| |g_w| with g_w = w gn + (1 - w) gf.
double cagrad_dual(std::span<const double> gn, std::span<const double> gf, double c, double w);
/// Direction for a given dual weight, before the 2 / (1 + c) rescale.
std::vector<double> cagrad_direction(std::span<const double> gn, std::span<const double> gf, double c, double w);

} // namespace block_ops

} // namespace rgrad
