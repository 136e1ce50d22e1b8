// Scalar-generic forward kernels shared by the double-precision renderer and
// the extended-precision finite-difference oracle.
#pragma once

#include "rgrad/metrics.hpp"
#include "rgrad/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

namespace rgrad::kernels {

inline constexpr double kCullU = 9.0;

template <class Real>
Real footprint(Real u)
{
    if (u >= Real(kCullU))
        return Real(0);
    const Real tail = std::exp(Real(-0.5) * Real(kCullU));
    const Real norm = Real(1) - tail * (Real(1) + Real(0.5) * Real(kCullU));
    return (std::exp(Real(-0.5) * u) - tail * (Real(1) + Real(0.5) * (Real(kCullU) - u))) / norm;
}

template <class Real>
Real footprint_derivative(Real u)
{
    if (u >= Real(kCullU))
        return Real(0);
    const Real tail = std::exp(Real(-0.5) * Real(kCullU));
    const Real norm = Real(1) - tail * (Real(1) + Real(0.5) * Real(kCullU));
    return Real(0.5) * (tail - std::exp(Real(-0.5) * u)) / norm;
}

template <class Real>
struct Projection {
    std::array<Real, 2> mean;
    std::array<Real, 4> cov; // row-major
};

template <class Real>
Projection<Real> project(const Splat& splat, const CameraSpec& cam, double cov_floor)
{
    const Real k = Real(cam.f) / Real(cam.r);
    Projection<Real> p;
    p.mean = {k * (Real(splat.mu[0]) - Real(cam.offset[0])) + Real(0.5) * Real(cam.width),
              k * (Real(splat.mu[1]) - Real(cam.offset[1])) + Real(0.5) * Real(cam.height)};
    const Real sx = std::exp(Real(splat.log_scale[0]));
    const Real sy = std::exp(Real(splat.log_scale[1]));
    const Real sx2 = sx * sx, sy2 = sy * sy;
    const Real c = std::cos(Real(splat.rot)), sn = std::sin(Real(splat.rot));
    const Real k2 = k * k;
    const Real m00 = c * c * sx2 + sn * sn * sy2;
    const Real m01 = c * sn * (sx2 - sy2);
    const Real m11 = sn * sn * sx2 + c * c * sy2;
    p.cov = {k2 * m00 + Real(cov_floor), k2 * m01, k2 * m01, k2 * m11 + Real(cov_floor)};
    return p;
}

template <class Real>
struct SplatView {
    Projection<Real> proj;
    std::array<Real, 4> conic{};
    Real half_w{}, half_h{};
    Real alpha{};
    std::array<Real, 3> color{};
    std::array<bool, 3> color_live{};
};

template <class Real>
std::vector<SplatView<Real>> prepare(const SplatScene& scene, const CameraSpec& cam, double cov_floor)
{
    cam.validate();
    std::vector<SplatView<Real>> views(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const Splat& s = scene.splats[i];
        SplatView<Real>& v = views[i];
        v.proj = project<Real>(s, cam, cov_floor);
        const auto& c = v.proj.cov;
        const Real det = c[0] * c[3] - c[1] * c[2];
        v.conic = {c[3] / det, -c[1] / det, -c[2] / det, c[0] / det};
        v.half_w = Real(3) * std::sqrt(c[0]);
        v.half_h = Real(3) * std::sqrt(c[3]);
        v.alpha = Real(1) / (Real(1) + std::exp(-Real(s.opacity_logit)));
        for (std::size_t ch = 0; ch < 3; ++ch) {
            v.color[ch] = std::clamp(Real(s.color[ch]), Real(0), Real(1));
            v.color_live[ch] = s.color[ch] > 0.0 && s.color[ch] < 1.0;
        }
    }
    return views;
}

template <class Real>
struct Hit {
    std::size_t splat;
    Real u;
    Real g;
    Real a;
    Real transmittance; // before this splat
    std::array<Real, 2> d;
};

/// Contributing splats at pixel center (cx, cy) in compositing order; returns
/// the residual transmittance.
template <class Real>
Real collect(const std::vector<SplatView<Real>>& views, const std::vector<std::size_t>& order, Real cx, Real cy,
             std::vector<Hit<Real>>& hits)
{
    hits.clear();
    Real T = 1;
    for (std::size_t i : order) {
        const SplatView<Real>& v = views[i];
        const Real dx = cx - v.proj.mean[0];
        const Real dy = cy - v.proj.mean[1];
        if (std::abs(dx) >= v.half_w || std::abs(dy) >= v.half_h)
            continue;
        const Real u = v.conic[0] * dx * dx + (v.conic[1] + v.conic[2]) * dx * dy + v.conic[3] * dy * dy;
        if (u >= Real(kCullU))
            continue;
        const Real g = footprint(u);
        const Real a = v.alpha * g;
        hits.push_back({i, u, g, a, T, {dx, dy}});
        T *= Real(1) - a;
    }
    return T;
}

/// Composited pixel value, clamped to [0,1]; `clamped` reports whether the clamp was active.
template <class Real>
Real shade(const std::vector<SplatView<Real>>& views, const std::vector<Hit<Real>>& hits, Real T, Real background,
           std::size_t ch, bool* clamped = nullptr)
{
    Real acc = 0;
    for (const Hit<Real>& h : hits)
        acc += views[h.splat].color[ch] * h.a * h.transmittance;
    acc += background * T;
    const Real v = std::clamp(acc, Real(0), Real(1));
    if (clamped)
        *clamped = v != acc;
    return v;
}

template <class Real>
std::vector<Real> render(const SplatScene& scene, const CameraSpec& cam, const std::vector<std::size_t>& order,
                         double cov_floor)
{
    const auto views = prepare<Real>(scene, cam, cov_floor);
    std::vector<Real> img(static_cast<std::size_t>(3 * cam.width * cam.height));
    std::vector<Hit<Real>> hits;
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const Real T = collect(views, order, Real(x) + Real(0.5), Real(y) + Real(0.5), hits);
            const std::size_t p = static_cast<std::size_t>(y * cam.width + x);
            for (std::size_t ch = 0; ch < 3; ++ch)
                img[3 * p + ch] = shade(views, hits, T, Real(scene.background[ch]), ch);
        }
    }
    return img;
}

/// Separable zero-padded Gaussian filter over one w*h plane. The kernel is
/// symmetric, so the filter is its own adjoint.
template <class Real>
class PlaneFilter {
  public:
    PlaneFilter(int w, int h, const LossConfig& cfg) : w_(w), h_(h), tmp_(static_cast<std::size_t>(w * h))
    {
        const int window = cfg.ssim_window;
        const int half = window / 2;
        taps_.resize(static_cast<std::size_t>(window));
        Real sum = 0;
        for (int i = 0; i < window; ++i) {
            const Real d = Real(i - half);
            taps_[static_cast<std::size_t>(i)] = std::exp(-d * d / (Real(2) * Real(cfg.ssim_sigma) * Real(cfg.ssim_sigma)));
            sum += taps_[static_cast<std::size_t>(i)];
        }
        for (Real& t : taps_)
            t /= sum;
    }

    std::vector<Real> apply(const std::vector<Real>& in)
    {
        const int half = static_cast<int>(taps_.size()) / 2;
        for (int y = 0; y < h_; ++y) {
            for (int x = 0; x < w_; ++x) {
                Real s = 0;
                for (int k = -half; k <= half; ++k) {
                    const int xx = x + k;
                    if (xx >= 0 && xx < w_)
                        s += taps_[static_cast<std::size_t>(k + half)] * in[static_cast<std::size_t>(y * w_ + xx)];
                }
                tmp_[static_cast<std::size_t>(y * w_ + x)] = s;
            }
        }
        std::vector<Real> out(in.size());
        for (int y = 0; y < h_; ++y) {
            for (int x = 0; x < w_; ++x) {
                Real s = 0;
                for (int k = -half; k <= half; ++k) {
                    const int yy = y + k;
                    if (yy >= 0 && yy < h_)
                        s += taps_[static_cast<std::size_t>(k + half)] * tmp_[static_cast<std::size_t>(yy * w_ + x)];
                }
                out[static_cast<std::size_t>(y * w_ + x)] = s;
            }
        }
        return out;
    }

  private:
    int w_, h_;
    std::vector<Real> taps_;
    std::vector<Real> tmp_;
};

/// Mean SSIM over pixels and channels of interleaved RGB buffers. When `grad`
/// is non-null it receives d(mean SSIM)/d(img).
template <class Real>
Real ssim(const std::vector<Real>& img, const std::vector<Real>& target, int w, int h, const LossConfig& cfg,
          std::vector<double>* grad)
{
    const std::size_t npx = static_cast<std::size_t>(w * h);
    const Real denom_all = Real(3) * Real(npx);
    const Real c1 = Real(kSsimC1), c2 = Real(kSsimC2);
    PlaneFilter<Real> filt(w, h, cfg);
    if (grad)
        grad->assign(img.size(), 0.0);

    Real total = 0;
    std::vector<Real> x(npx), t(npx), xx(npx), tt(npx), xt(npx);
    std::vector<Real> g_mu, g_exx, g_ext;
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t p = 0; p < npx; ++p) {
            x[p] = img[3 * p + c];
            t[p] = target[3 * p + c];
            xx[p] = x[p] * x[p];
            tt[p] = t[p] * t[p];
            xt[p] = x[p] * t[p];
        }
        const auto mx = filt.apply(x);
        const auto mt = filt.apply(t);
        const auto exx = filt.apply(xx);
        const auto ett = filt.apply(tt);
        const auto ext = filt.apply(xt);
        if (grad) {
            g_mu.assign(npx, 0);
            g_exx.assign(npx, 0);
            g_ext.assign(npx, 0);
        }
        for (std::size_t p = 0; p < npx; ++p) {
            const Real vx = exx[p] - mx[p] * mx[p];
            const Real vt = ett[p] - mt[p] * mt[p];
            const Real cxt = ext[p] - mx[p] * mt[p];
            const Real a1 = Real(2) * mx[p] * mt[p] + c1;
            const Real a2 = Real(2) * cxt + c2;
            const Real b1 = mx[p] * mx[p] + mt[p] * mt[p] + c1;
            const Real b2 = vx + vt + c2;
            const Real s = (a1 * a2) / (b1 * b2);
            total += s;
            if (grad) {
                // dS/dvx = -k r, dS/dcxt = 2k
                const Real k = a1 / (b1 * b2);
                const Real r = a2 / b2;
                const Real kr = k * r;
                g_mu[p] = r * Real(2) * (mt[p] * b1 - mx[p] * a1) / (b1 * b1) + Real(2) * mx[p] * kr -
                          Real(2) * mt[p] * k;
                g_exx[p] = -kr;
                g_ext[p] = Real(2) * k;
            }
        }
        if (grad) {
            const auto f_mu = filt.apply(g_mu);
            const auto f_exx = filt.apply(g_exx);
            const auto f_ext = filt.apply(g_ext);
            for (std::size_t p = 0; p < npx; ++p)
                (*grad)[3 * p + c] =
                    static_cast<double>((f_mu[p] + Real(2) * x[p] * f_exx[p] + t[p] * f_ext[p]) / denom_all);
        }
    }
    return total / denom_all;
}

/// (1 - lambda) L1 + lambda (1 - SSIM) / 2 on interleaved RGB buffers.
template <class Real>
Real photometric(const std::vector<Real>& img, const std::vector<Real>& target, int w, int h, const LossConfig& cfg,
                 std::vector<double>* grad)
{
    const Real n = Real(img.size());
    const Real lam = Real(cfg.lambda_ssim);
    const Real w1 = (Real(1) - lam) / n;
    if (grad)
        grad->assign(img.size(), 0.0);
    Real l1 = 0;
    for (std::size_t i = 0; i < img.size(); ++i) {
        const Real d = img[i] - target[i];
        l1 += std::abs(d);
        if (grad)
            (*grad)[i] = static_cast<double>(d > 0 ? w1 : (d < 0 ? -w1 : Real(0)));
    }
    l1 /= n;
    if (cfg.lambda_ssim == 0.0)
        return l1;
    std::vector<double> g_ssim;
    const Real s = ssim<Real>(img, target, w, h, cfg, grad ? &g_ssim : nullptr);
    if (grad) {
        const double k = -0.5 * cfg.lambda_ssim;
        for (std::size_t i = 0; i < grad->size(); ++i)
            (*grad)[i] += k * g_ssim[i];
    }
    return (Real(1) - lam) * l1 + lam * Real(0.5) * (Real(1) - s);
}

} // namespace rgrad::kernels
