#include "rgrad/renderer.hpp"

#include "forward_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace rgrad {

namespace {

using View = kernels::SplatView<double>;
using Hit = kernels::Hit<double>;

} // namespace

Projected2D project(const Splat& splat, const CameraSpec& cam)
{
    const auto p = kernels::project<double>(splat, cam, 0.0);
    return {{p.mean[0], p.mean[1]}, p.cov};
}

std::array<double, 4> Projected2D::floored_cov() const
{
    return {cov_px[0] + kCovFloor, cov_px[1], cov_px[2], cov_px[3] + kCovFloor};
}

double footprint(double u) { return kernels::footprint(u); }

double footprint_derivative(double u) { return kernels::footprint_derivative(u); }

std::vector<std::size_t> depth_order(const SplatScene& scene)
{
    std::vector<std::size_t> order(scene.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scene.splats[a].depth < scene.splats[b].depth;
    });
    return order;
}

Image render(const SplatScene& scene, const CameraSpec& cam)
{
    Image img(cam.width, cam.height);
    img.pixels = kernels::render<double>(scene, cam, depth_order(scene), kCovFloor);
    return img;
}

PixelComposite composite_weights(const SplatScene& scene, const CameraSpec& cam, int px, int py)
{
    const auto views = kernels::prepare<double>(scene, cam, kCovFloor);
    const auto order = depth_order(scene);
    std::vector<Hit> hits;
    PixelComposite out;
    out.transmittance = kernels::collect(views, order, px + 0.5, py + 0.5, hits);
    for (const Hit& h : hits)
        out.weights.emplace_back(h.splat, h.a * h.transmittance);
    return out;
}

BackwardResult backward(const SplatScene& scene, const CameraSpec& cam, const Image& target, const LossConfig& cfg)
{
    if (target.width != cam.width || target.height != cam.height)
        throw std::invalid_argument("backward: target size does not match camera");
    const auto views = kernels::prepare<double>(scene, cam, kCovFloor);
    const auto order = depth_order(scene);
    const std::size_t n = scene.size();

    // Forward pass, keeping per-pixel hit lists for the backward sweep.
    BackwardResult res;
    res.rendered = Image(cam.width, cam.height);
    std::vector<std::vector<Hit>> pixel_hits(static_cast<std::size_t>(cam.width * cam.height));
    std::vector<double> pixel_T(pixel_hits.size());
    std::vector<std::array<bool, 3>> clamped(pixel_hits.size());
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const std::size_t p = static_cast<std::size_t>(y * cam.width + x);
            auto& hits = pixel_hits[p];
            pixel_T[p] = kernels::collect(views, order, x + 0.5, y + 0.5, hits);
            for (std::size_t ch = 0; ch < 3; ++ch) {
                bool was_clamped = false;
                res.rendered.at(x, y, static_cast<int>(ch)) =
                    kernels::shade(views, hits, pixel_T[p], scene.background[ch], ch, &was_clamped);
                clamped[p][ch] = was_clamped;
            }
        }
    }

    std::vector<double> dl_dimg;
    res.loss = photometric_loss_with_grad(res.rendered, target, cfg, dl_dimg);

    // Per-splat accumulators in projected space.
    std::vector<std::array<double, 2>> g_mean(n, {0.0, 0.0});
    std::vector<std::array<double, 3>> g_cov(n, {0.0, 0.0, 0.0}); // (00, 01, 11) of the symmetric dL/dSigma
    std::vector<double> g_logit(n, 0.0);
    std::vector<Vec3> g_color(n, {0.0, 0.0, 0.0});

    for (std::size_t p = 0; p < pixel_hits.size(); ++p) {
        const auto& hits = pixel_hits[p];
        if (hits.empty())
            continue;
        Vec3 gc;
        for (std::size_t ch = 0; ch < 3; ++ch)
            gc[ch] = clamped[p][ch] ? 0.0 : dl_dimg[3 * p + ch];

        // Color composited behind the current splat, with unit transmittance.
        Vec3 behind = scene.background;
        for (auto it = hits.rbegin(); it != hits.rend(); ++it) {
            const Hit& h = *it;
            const View& v = views[h.splat];
            double dl_da = 0.0;
            for (std::size_t ch = 0; ch < 3; ++ch) {
                dl_da += gc[ch] * h.transmittance * (v.color[ch] - behind[ch]);
                if (v.color_live[ch])
                    g_color[h.splat][ch] += gc[ch] * h.a * h.transmittance;
                behind[ch] = h.a * v.color[ch] + (1.0 - h.a) * behind[ch];
            }
            g_logit[h.splat] += dl_da * h.g * v.alpha * (1.0 - v.alpha);
            const double dl_du = dl_da * v.alpha * footprint_derivative(h.u);
            // u = d^T S^-1 d with d = pixel - mean.
            const double qx = v.conic[0] * h.d[0] + v.conic[1] * h.d[1];
            const double qy = v.conic[2] * h.d[0] + v.conic[3] * h.d[1];
            g_mean[h.splat][0] += dl_du * (-2.0 * qx);
            g_mean[h.splat][1] += dl_du * (-2.0 * qy);
            g_cov[h.splat][0] -= dl_du * qx * qx;
            g_cov[h.splat][1] -= dl_du * qx * qy;
            g_cov[h.splat][2] -= dl_du * qy * qy;
        }
    }

    // Pull back to scene parameters.
    const double k = cam.magnification();
    const double k2 = k * k;
    res.grads.blocks = BlockVectors(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Splat& s = scene.splats[i];
        res.grads[BlockKind::Position][2 * i] = k * g_mean[i][0];
        res.grads[BlockKind::Position][2 * i + 1] = k * g_mean[i][1];

        const double gm00 = k2 * g_cov[i][0];
        const double gm01 = k2 * g_cov[i][1];
        const double gm11 = k2 * g_cov[i][2];
        const Vec2 sc = s.scale();
        const double sx2 = sc[0] * sc[0], sy2 = sc[1] * sc[1];
        const double c = std::cos(s.rot), sn = std::sin(s.rot);
        res.grads[BlockKind::Scale][2 * i] = 2.0 * sx2 * (gm00 * c * c + 2.0 * gm01 * c * sn + gm11 * sn * sn);
        res.grads[BlockKind::Scale][2 * i + 1] = 2.0 * sy2 * (gm00 * sn * sn - 2.0 * gm01 * c * sn + gm11 * c * c);
        res.grads[BlockKind::Rotation][i] =
            (sx2 - sy2) * (-2.0 * c * sn * gm00 + 2.0 * (c * c - sn * sn) * gm01 + 2.0 * c * sn * gm11);
        res.grads[BlockKind::Opacity][i] = g_logit[i];
        for (std::size_t ch = 0; ch < 3; ++ch)
            res.grads[BlockKind::Color][3 * i + ch] = g_color[i][ch];
    }
    res.grads.view_id = cam.id;
    return res;
}

double view_loss(const SplatScene& scene, const CameraSpec& cam, const Image& target, const LossConfig& cfg)
{
    return photometric_loss(render(scene, cam), target, cfg);
}

long double view_loss_extended(const SplatScene& scene, const CameraSpec& cam, const Image& target,
                               const LossConfig& cfg)
{
    if (target.width != cam.width || target.height != cam.height)
        throw std::invalid_argument("view_loss_extended: target size does not match camera");
    cfg.validate();
    const auto img = kernels::render<long double>(scene, cam, depth_order(scene), kCovFloor);
    const std::vector<long double> tgt(target.pixels.begin(), target.pixels.end());
    return kernels::photometric<long double>(img, tgt, cam.width, cam.height, cfg, nullptr);
}

PerBlock<double> default_fd_steps() { return {1e-5, 1e-5, 1e-5, 1e-3, 1e-5}; }

GradientSet finite_diff_grad(const SplatScene& scene, const CameraSpec& cam, const Image& target,
                             const LossConfig& cfg, const PerBlock<double>& steps)
{
    for (double h : steps) {
        if (!(h > 0.0))
            throw std::invalid_argument("finite_diff_grad: step must be positive");
    }
    const BlockVectors base = pack(scene);
    GradientSet out;
    out.blocks = BlockVectors(scene.size());
    out.view_id = cam.id;
    BlockVectors probe = base;
    for (BlockKind kind : kAllBlocks) {
        const double h = steps[index_of(kind)];
        for (std::size_t j = 0; j < base[kind].size(); ++j) {
            probe[kind][j] = base[kind][j] + h;
            const long double lp = view_loss_extended(unpack(probe, scene), cam, target, cfg);
            probe[kind][j] = base[kind][j] - h;
            const long double lm = view_loss_extended(unpack(probe, scene), cam, target, cfg);
            probe[kind][j] = base[kind][j];
            // Divide by the step actually taken after rounding p +- h.
            const long double taken = static_cast<long double>(base[kind][j] + h) -
                                      static_cast<long double>(base[kind][j] - h);
            out[kind][j] = static_cast<double>((lp - lm) / taken);
        }
    }
    return out;
}

GradientSet finite_diff_grad(const SplatScene& scene, const CameraSpec& cam, const Image& target,
                             const LossConfig& cfg, double step)
{
    return finite_diff_grad(scene, cam, target, cfg, PerBlock<double>{step, step, step, step, step});
}

} // namespace rgrad

namespace rgrad {

TargetSet render_targets(const SplatScene& scene, std::span<const CameraSpec> cams)
{
    TargetSet out;
    for (const auto& cam : cams)
        out.emplace(cam.id, render(scene, cam));
    return out;
}

} // namespace rgrad
