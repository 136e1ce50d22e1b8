#pragma once

#include "rgrad/blocks.hpp"
#include "rgrad/image.hpp"
#include "rgrad/metrics.hpp"
#include "rgrad/scene.hpp"

#include <array>
#include <map>
#include <span>
#include <cstddef>
#include <utility>
#include <vector>

namespace rgrad {

/// Splats contribute only where the squared Mahalanobis distance is below this.
inline constexpr double kCullMahalanobis = 3.0;
/// Added to the diagonal of every projected covariance (px^2).
inline constexpr double kCovFloor = 1e-6;

struct Projected2D {
    Vec2 mean_px{0.0, 0.0};
    /// Row-major symmetric 2x2 covariance, px^2.
    std::array<double, 4> cov_px{0.0, 0.0, 0.0, 0.0};

    /// Covariance the rasterizer uses: cov_px + kCovFloor * I.
    std::array<double, 4> floored_cov() const;
};

/// mean_px = (f/r)(mu - offset) + image center;
/// cov_px = (f/r)^2 R diag(s^2) R^T.
Projected2D project(const Splat& splat, const CameraSpec& cam);

/// Footprint as a function of squared Mahalanobis distance u: a Gaussian with
/// peak 1 whose value and first derivative are blended to zero at the culling
/// radius, so the image is C^1 in every parameter.
double footprint(double u);
double footprint_derivative(double u);

/// Front-to-back composite over splats sorted by (depth, index).
Image render(const SplatScene& scene, const CameraSpec& cam);

/// Per-splat blending weights a_i T_i at one pixel plus the residual transmittance.
struct PixelComposite {
    std::vector<std::pair<std::size_t, double>> weights;
    double transmittance = 1.0;
};
PixelComposite composite_weights(const SplatScene& scene, const CameraSpec& cam, int px, int py);

/// Compositing order: indices sorted by depth, ties by index.
std::vector<std::size_t> depth_order(const SplatScene& scene);

struct BackwardResult {
    double loss = 0.0;
    GradientSet grads;
    Image rendered;
};

/// Loss of render(scene, cam) against target and its gradient with respect to
/// every packed parameter. Throws std::invalid_argument on size mismatch.
BackwardResult backward(const SplatScene& scene, const CameraSpec& cam, const Image& target, const LossConfig& cfg);

/// Photometric loss of the rendered view (forward only).
double view_loss(const SplatScene& scene, const CameraSpec& cam, const Image& target, const LossConfig& cfg);

/// Same loss evaluated entirely in long double. Used by the finite-difference
/// oracle so its round-off floor sits well below the analytic gradient's.
long double view_loss_extended(const SplatScene& scene, const CameraSpec& cam, const Image& target,
                               const LossConfig& cfg);

/// Default central-difference steps: 1e-5 for position, scale, rotation and
/// color, 1e-3 for the opacity logit.
PerBlock<double> default_fd_steps();

/// Central differences (L(p+h) - L(p-h)) / 2h over every packed coordinate.
GradientSet finite_diff_grad(const SplatScene& scene, const CameraSpec& cam, const Image& target,
                             const LossConfig& cfg, const PerBlock<double>& steps);
GradientSet finite_diff_grad(const SplatScene& scene, const CameraSpec& cam, const Image& target,
                             const LossConfig& cfg, double step);

} // namespace rgrad

namespace rgrad {

/// Target images keyed by camera id.
using TargetSet = std::map<int, Image>;

TargetSet render_targets(const SplatScene& scene, std::span<const CameraSpec> cams);

} // namespace rgrad
