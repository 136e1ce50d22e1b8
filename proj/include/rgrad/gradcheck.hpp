#pragma once

#include "rgrad/blocks.hpp"
#include "rgrad/metrics.hpp"
#include "rgrad/renderer.hpp"
#include "rgrad/scene.hpp"

#include <cstdint>
#include <iosfwd>

namespace rgrad {

struct GradCheckOptions {
    std::uint64_t seed = 0;
    int draws = 20;
    std::size_t n_splats = 8;
    double extent = 1.0;
    double r_min = 1.0, r_max = 6.0;
    double max_offset = 0.3;
    double rel_tol = 1e-4;
    double abs_tol = 1e-6;
    /// Below this analytic magnitude the absolute tolerance applies.
    double small_cutoff = 1e-8;
    PerBlock<double> steps = default_fd_steps();
    LossConfig loss;
};

struct BlockCheck {
    double max_rel_error = 0.0; // over coordinates judged relatively
    double max_abs_error = 0.0; // over coordinates with |analytic| < small_cutoff
    std::size_t checked = 0;
    std::size_t failures = 0;
};

struct GradCheckReport {
    PerBlock<BlockCheck> blocks{};
    int draws = 0;
    bool pass() const;
};

/// Target for draw k: 0.92 + 0.08 * render of an independent scene, so the L1
/// residual keeps one sign under every finite-difference step.
Image grad_check_target(const SplatScene& other, const CameraSpec& cam);

/// Compares backward() against long-double central differences on `draws`
/// random scene/camera pairs.
GradCheckReport grad_check(const GradCheckOptions& opts);

// block,max_rel_error,max_abs_error,checked,failures
void write_grad_check_csv(std::ostream& out, const GradCheckReport& report);

} // namespace rgrad
