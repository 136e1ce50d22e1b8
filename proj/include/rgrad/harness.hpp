#pragma once

#include "rgrad/config.hpp"
#include "rgrad/diagnostics.hpp"
#include "rgrad/reconcile.hpp"
#include "rgrad/samplers.hpp"
#include "rgrad/scene.hpp"
#include "rgrad/train.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace rgrad {

/// Two camera populations at separated distance ranges.
struct CameraLayout {
    std::size_t n_near = 8;
    std::size_t n_far = 8;
    double r_near_min = 1.0, r_near_max = 1.3;
    double r_far_min = 5.0, r_far_max = 6.0;
    /// Lateral offsets are uniform in [-offset, offset]^2.
    double near_offset = 0.6;
    double far_offset = 0.3;
    double f = 32.0;
    int width = 32;
    int height = 32;
    bool bimodal = true;

    /// Throws std::invalid_argument on fewer than two cameras per group,
    /// inverted ranges, or (when bimodal) r_far_min <= r_near_max.
    void validate() const;
};

/// Near cameras first (ids first_id...), then far ones. Deterministic in seed.
std::vector<CameraSpec> gen_bimodal_cameras(const CameraLayout& layout, std::uint64_t seed, int first_id = 0);

/// One training arm, written `sampler[+reconciler]@iterations`, e.g.
/// `single@4000` or `balanced+project@2000`. Two-view samplers default to sum.
struct ArmSpec {
    std::string name;
    SamplerKind sampler = SamplerKind::Single;
    Operator op = Operator::Sum;
    int iterations = 2000;
};

/// Throws std::invalid_argument on malformed text.
ArmSpec parse_arm(const std::string& text);
std::string arm_label(const ArmSpec& arm);

struct ScenarioSpec {
    std::string name = "hybrid-16";
    std::uint64_t scene_seed = 1;
    std::size_t n_splats = 16;
    double extent = 1.0;
    double init_sigma = 0.15;
    CameraLayout train_layout;
    std::size_t n_test_near = 4;
    std::size_t n_test_far = 4;
    std::uint64_t camera_seed = 7;
    std::vector<ArmSpec> arms;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    /// Shared settings; sampler, reconciler, iterations and seed come from the arm.
    TrainConfig base;

    /// Throws std::invalid_argument on empty arms or seeds, and on an invalid layout.
    void validate() const;
};

/// The default toy benchmark with arms single@4000, single@2000, r2view@2000
/// and balanced+project@2000.
ScenarioSpec hybrid16();

/// Known scenario and camera keys (train keys are accepted too).
const std::set<std::string>& scenario_config_keys();
/// Overlays scenario keys (scene.*, cams.*, camera.*, scenario.*) and training keys.
ScenarioSpec scenario_from(const Config& cfg, ScenarioSpec base = hybrid16());

struct ScenarioCameras {
    std::vector<CameraSpec> train;
    std::vector<CameraSpec> test; // ids start at 1000
};

ScenarioCameras scenario_cameras(const ScenarioSpec& spec);

// id,r,offset_x,offset_y,f,width,height,regime,split
void write_cameras_csv(std::ostream& out, const ScenarioCameras& cams);
/// Reads the format above (regime and split columns are informational).
/// Throws std::invalid_argument on a malformed header or row.
ScenarioCameras read_cameras_csv(std::istream& in);
SplatScene scenario_target(const ScenarioSpec& spec);
/// Target perturbed with init_sigma using the run seed.
SplatScene scenario_init(const ScenarioSpec& spec, std::uint64_t run_seed);

struct RunSummary {
    std::string arm;
    std::uint64_t seed = 0;
    int iterations = 0;
    RegimeMetrics final_metrics;
    double conflict_rate = 0.0;
    /// Variance decomposition at the run's init and halfway checkpoint.
    double sigma2_w_init = 0.0, sigma2_b_init = 0.0;
    double sigma2_w_mid = 0.0, sigma2_b_mid = 0.0;
};

struct ArmSummary {
    std::string arm;
    std::size_t n = 0;
    double mean_psnr = 0.0;
    std::optional<double> std_psnr; // sample std, absent for fewer than two seeds
    double mean_ssim = 0.0;
    std::optional<double> std_ssim;
    double mean_psnr_near = 0.0;
    double mean_psnr_far = 0.0;
    double mean_conflict_rate = 0.0;
    double mean_ratio_mid = 0.0; // mean over seeds of sigma2_b / sigma2_w at the halfway checkpoint
};

struct DeltaRow {
    std::string arm_a;
    std::string arm_b;
    double delta_psnr = 0.0;          // mean(b) - mean(a)
    std::optional<double> band;       // max of the two seed stds
    std::optional<bool> within_band;  // |delta| <= 2 * band
};

struct ComparisonReport {
    std::string scenario;
    std::vector<RunSummary> runs;
    std::vector<ArmSummary> arms;
    std::vector<DeltaRow> deltas;
    std::optional<double> bimodality; // of the training camera distances; unset when all are equal
    bool partial = false;
    std::string error;

    const ArmSummary* find_arm(const std::string& name) const;
};

/// Arms summarized from raw run rows in arm order of first appearance.
std::vector<ArmSummary> summarize_runs(const std::vector<RunSummary>& runs);
std::vector<DeltaRow> pairwise_deltas(const std::vector<ArmSummary>& arms);

struct ScenarioOptions {
    /// Worker threads; 0 means the hardware count. REGIME_GRAD_THREADS caps either.
    unsigned threads = 0;
    /// When set, each run's CSVs are written under this directory.
    std::optional<std::filesystem::path> run_dir;
};

/// Trains every arm x seed from a fresh perturbed init. A failed run stops
/// scheduling, and the report is marked partial.
ComparisonReport run_scenario(const ScenarioSpec& spec, const ScenarioOptions& opts = {});

unsigned worker_count(unsigned requested);

// runs: arm,seed,iterations,psnr_all,ssim_all,psnr_near,ssim_near,psnr_far,ssim_far,conflict_rate,
//       sigma2_w_init,sigma2_b_init,sigma2_w_mid,sigma2_b_mid
void write_runs_csv(std::ostream& out, const ComparisonReport& report);
// arms: arm,n,mean_psnr,std_psnr,mean_ssim,std_ssim,mean_psnr_near,mean_psnr_far,mean_conflict_rate,mean_ratio_mid
void write_arms_csv(std::ostream& out, const ComparisonReport& report);
// deltas: arm_a,arm_b,delta_psnr,band,within_band
void write_deltas_csv(std::ostream& out, const ComparisonReport& report);

/// Variance decomposition of all training cameras at a frozen scene.
VarianceReport frozen_variance(const SplatScene& scene, const SplatScene& target_scene,
                               std::span<const CameraSpec> train_cams, const LossConfig& cfg);

/// Fitted exponent per block from a camera sweep at the given radii, using
/// the lateral placements of `placements`.
PerBlock<double> sweep_exponents(const SplatScene& scene, const SplatScene& target_scene,
                                 std::span<const CameraSpec> placements, std::span<const double> radii,
                                 const LossConfig& cfg);

} // namespace rgrad
