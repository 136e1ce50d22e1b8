#pragma once

#include "rgrad/blocks.hpp"
#include "rgrad/grouping.hpp"
#include "rgrad/metrics.hpp"
#include "rgrad/reconcile.hpp"
#include "rgrad/renderer.hpp"
#include "rgrad/samplers.hpp"
#include "rgrad/scene.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rgrad {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-15;
};

/// First and second moments per packed coordinate, plus the step counter.
struct AdamState {
    BlockVectors m;
    BlockVectors v;
    long step = 0;
};

/// One bias-corrected Adam update with a learning rate per block. Moments are
/// lazily sized on the first call. Throws std::invalid_argument on shape mismatch.
void adam_step(BlockVectors& params, const BlockVectors& grads, AdamState& state, const PerBlock<double>& lr,
               const AdamConfig& cfg = {});

struct SamplerConfig {
    SamplerKind kind = SamplerKind::Balanced;
    double ema_beta = 0.9;
    int topk = 5;
    double temperature = 1.0;
};

struct TrainConfig {
    int iterations = 2000;
    PerBlock<double> lr{2e-3, 5e-3, 1e-3, 5e-2, 2.5e-2};
    AdamConfig adam;
    SamplerConfig sampler;
    ReconcileConfig reconcile;
    /// Preconditioner reference distance; the partition threshold when unset.
    std::optional<double> r_ref;
    std::string partition = "median";
    LossConfig loss;
    int eval_every = 500;
    std::uint64_t seed = 0;
    /// Std of Gaussian noise added to training targets (0 disables).
    double pixel_noise = 0.0;
    /// Iterations after which a copy of the scene is kept.
    std::vector<int> checkpoints;

    /// Throws ConfigError on non-positive iterations, learning rates or eval_every.
    void validate() const;
};

struct RegimeMetrics {
    double psnr_all = 0.0, ssim_all = 0.0;
    double psnr_near = 0.0, ssim_near = 0.0;
    double psnr_far = 0.0, ssim_far = 0.0;
    std::size_t n_near = 0, n_far = 0;
};

struct IterationRow {
    int iter = 0;
    int view_a = -1;
    int view_b = -1; // -1 for single-view steps
    double loss_a = 0.0;
    double loss_b = 0.0;
    PerBlock<double> dots{};
    bool conflict_any = false;
    double update_norm = 0.0;
};

struct EvalRow {
    int iter = 0;
    RegimeMetrics metrics;
};

struct RunRecord {
    std::vector<IterationRow> rows;
    std::vector<EvalRow> evals;
    /// Counted while training: (iteration, block) pairs with a negative dot.
    std::size_t online_conflicts = 0;
    std::size_t online_pairs = 0;

    double online_conflict_rate() const;
    /// Per-block dot rows of the iterations that rendered two views.
    std::vector<PerBlock<double>> pair_dots() const;
};

/// Mean per-image PSNR/SSIM over test cameras, overall and per regime. A
/// camera is near when its distance is at most `near_threshold`. Throws
/// std::invalid_argument for an empty test set.
RegimeMetrics evaluate(const SplatScene& scene, const TargetSet& test_targets, std::span<const CameraSpec> test_cams,
                       double near_threshold, const LossConfig& cfg = {});
/// Renders the targets from target_scene; also rejects test ids that occur in
/// the partition (test and train cameras must be disjoint).
RegimeMetrics evaluate(const SplatScene& scene, const SplatScene& target_scene, std::span<const CameraSpec> test_cams,
                       const RegimePartition& partition, const LossConfig& cfg = {});

/// Optimizer loop: draw view(s), backpropagate each view separately,
/// reconcile, Adam step, record telemetry.
class Trainer {
  public:
    /// Throws ConfigError for a regime sampler on a degenerate partition.
    Trainer(const SplatScene& scene0, const SplatScene& target_scene, std::vector<CameraSpec> train_cams,
            std::vector<CameraSpec> test_cams, TrainConfig cfg);

    /// Update gradient for a given draw at the current parameters. Records the
    /// row fields it computes into `row` when non-null.
    GradientSet update_gradient(const ViewDraw& draw, IterationRow* row = nullptr);

    /// One full iteration (draw, gradient, Adam step, telemetry).
    void step();
    void run();

    SplatScene scene() const;
    const RunRecord& record() const { return record_; }
    const std::optional<RegimePartition>& partition() const { return partition_; }
    double near_threshold() const { return near_threshold_; }
    const std::map<int, SplatScene>& checkpoints() const { return checkpoints_; }
    int iteration() const { return iter_; }
    const TargetSet& train_targets() const { return train_targets_; }
    const std::vector<CameraSpec>& train_cams() const { return train_cams_; }

  private:
    const CameraSpec& camera(int id) const;
    void evaluate_now();

    SplatScene layout_;
    std::vector<CameraSpec> train_cams_;
    std::vector<CameraSpec> test_cams_;
    TrainConfig cfg_;
    std::optional<RegimePartition> partition_;
    double near_threshold_ = 0.0;
    TargetSet train_targets_;
    TargetSet test_targets_;
    BlockVectors params_;
    AdamState adam_;
    SamplerState sampler_;
    ConflictStats gate_stats_;
    RunRecord record_;
    std::map<int, SplatScene> checkpoints_;
    int iter_ = 0;
};

struct TrainResult {
    SplatScene scene;
    RunRecord record;
    std::map<int, SplatScene> checkpoints;
    std::optional<RegimePartition> partition;
};

TrainResult train(const SplatScene& scene0, const SplatScene& target_scene, std::span<const CameraSpec> train_cams,
                  std::span<const CameraSpec> test_cams, const TrainConfig& cfg);

// CSV with header iter,view_a,view_b,loss_a,loss_b,dot_pos,dot_scale,dot_rot,dot_op,dot_col,conflict_any,update_norm
void write_run_csv(std::ostream& out, const RunRecord& rec);
// CSV with header iter,psnr_all,ssim_all,psnr_near,ssim_near,psnr_far,ssim_far
void write_eval_csv(std::ostream& out, const RunRecord& rec);

} // namespace rgrad
