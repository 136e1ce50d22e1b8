#include "rgrad/gradcheck.hpp"

#include "rgrad/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace rgrad {

bool GradCheckReport::pass() const
{
    return std::all_of(blocks.begin(), blocks.end(), [](const BlockCheck& b) { return b.failures == 0; });
}

Image grad_check_target(const SplatScene& other, const CameraSpec& cam)
{
    Image t = render(other, cam);
    for (double& v : t.pixels)
        v = 0.92 + 0.08 * v;
    return t;
}

GradCheckReport grad_check(const GradCheckOptions& opts)
{
    if (opts.draws < 1)
        throw std::invalid_argument("grad_check: draws must be >= 1");
    GradCheckReport report;
    report.draws = opts.draws;
    for (int k = 0; k < opts.draws; ++k) {
        const std::uint64_t s = opts.seed * 1000003ULL + static_cast<std::uint64_t>(k);
        const SplatScene scene = make_synthetic_scene(s, opts.n_splats, opts.extent);
        const SplatScene other = make_synthetic_scene(s ^ 0x5bd1e995ULL, opts.n_splats, opts.extent);
        CounterRng rng(s, /*stream=*/9);
        CameraSpec cam;
        cam.r = rng.uniform(opts.r_min, opts.r_max);
        cam.offset = {rng.uniform(-opts.max_offset, opts.max_offset), rng.uniform(-opts.max_offset, opts.max_offset)};
        cam.id = k;
        const Image target = grad_check_target(other, cam);

        const BackwardResult an = backward(scene, cam, target, opts.loss);
        const GradientSet fd = finite_diff_grad(scene, cam, target, opts.loss, opts.steps);
        for (BlockKind b : kAllBlocks) {
            BlockCheck& bc = report.blocks[index_of(b)];
            const auto& ga = an.grads[b];
            const auto& gf = fd[b];
            for (std::size_t j = 0; j < ga.size(); ++j) {
                ++bc.checked;
                const double diff = std::abs(ga[j] - gf[j]);
                if (std::abs(ga[j]) < opts.small_cutoff) {
                    bc.max_abs_error = std::max(bc.max_abs_error, diff);
                    if (!(diff < opts.abs_tol))
                        ++bc.failures;
                } else {
                    const double rel = diff / std::max(std::abs(ga[j]), std::abs(gf[j]));
                    bc.max_rel_error = std::max(bc.max_rel_error, rel);
                    if (!(rel < opts.rel_tol))
                        ++bc.failures;
                }
            }
        }
    }
    return report;
}

void write_grad_check_csv(std::ostream& out, const GradCheckReport& report)
{
    out << "block,max_rel_error,max_abs_error,checked,failures\n";
    char buf[128];
    for (BlockKind b : kAllBlocks) {
        const BlockCheck& bc = report.blocks[index_of(b)];
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%zu,%zu", bc.max_rel_error, bc.max_abs_error, bc.checked,
                      bc.failures);
        out << block_name(b) << ',' << buf << '\n';
    }
}

} // namespace rgrad
