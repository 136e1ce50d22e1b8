#include "rgrad/gradcheck.hpp"
#include "rgrad/image.hpp"
#include "rgrad/metrics.hpp"
#include "rgrad/renderer.hpp"
#include "rgrad/rng.hpp"
#include "rgrad/scene.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace rgrad;

namespace {

// Windowed SSIM evaluated pixel by pixel with explicit 2-D weights, zero
// padding, and long double accumulation.
long double brute_force_ssim(const Image& a, const Image& b, int window, double sigma)
{
    const int half = window / 2;
    std::vector<long double> taps(static_cast<std::size_t>(window));
    long double tsum = 0;
    for (int i = 0; i < window; ++i) {
        const long double d = i - half;
        taps[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0L * sigma * sigma));
        tsum += taps[static_cast<std::size_t>(i)];
    }
    for (auto& t : taps)
        t /= tsum;
    const long double c1 = 0.0001L, c2 = 0.0009L;
    long double total = 0;
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < a.height; ++y) {
            for (int x = 0; x < a.width; ++x) {
                long double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
                for (int dy = -half; dy <= half; ++dy) {
                    for (int dx = -half; dx <= half; ++dx) {
                        const int xx = x + dx, yy = y + dy;
                        if (xx < 0 || yy < 0 || xx >= a.width || yy >= a.height)
                            continue;
                        const long double w =
                            taps[static_cast<std::size_t>(dx + half)] * taps[static_cast<std::size_t>(dy + half)];
                        const long double va = a.at(xx, yy, c), vb = b.at(xx, yy, c);
                        mx += w * va;
                        my += w * vb;
                        sxx += w * va * va;
                        syy += w * vb * vb;
                        sxy += w * va * vb;
                    }
                }
                const long double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
                total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            }
        }
    }
    return total / (3.0L * a.width * a.height);
}

Image random_image(std::uint64_t seed, int w, int h, double lo = 0.0, double hi = 1.0)
{
    CounterRng rng(seed, 11);
    Image img(w, h);
    for (double& v : img.pixels)
        v = rng.uniform(lo, hi);
    return img;
}

Splat plain_splat(Vec2 mu, double sx, double sy, double rot = 0.0)
{
    Splat s;
    s.mu = mu;
    s.log_scale = {std::log(sx), std::log(sy)};
    s.rot = rot;
    s.opacity_logit = 0.0;
    s.color = {0.5, 0.5, 0.5};
    return s;
}

} // namespace

TEST_SUITE("renderer")
{
    TEST_CASE("projection centers the splat under the camera")
    {
        for (double r : {0.5, 1.0, 7.0}) {
            CameraSpec cam;
            cam.r = r;
            cam.offset = {0.3, -0.2};
            const Projected2D p = project(plain_splat({0.3, -0.2}, 0.1, 0.2, 0.4), cam);
            CHECK(p.mean_px[0] == 16.0);
            CHECK(p.mean_px[1] == 16.0);
        }
    }

    TEST_CASE("projected covariance follows the inverse-square law")
    {
        const Splat s = plain_splat({0.1, 0.2}, 0.1, 0.25);
        CameraSpec near_cam, far_cam;
        near_cam.r = 1.5;
        far_cam.r = 3.0;
        const auto a = project(s, near_cam).cov_px;
        const auto b = project(s, far_cam).cov_px;
        for (int i = 0; i < 4; ++i)
            CHECK(b[static_cast<std::size_t>(i)] == a[static_cast<std::size_t>(i)] / 4.0);

        CameraSpec c;
        c.f = 100.0;
        c.r = 50.0;
        const auto cov = project(plain_splat({0, 0}, 0.1, 0.2), c).cov_px;
        CHECK(cov[0] == doctest::Approx(0.04).epsilon(1e-14));
        CHECK(cov[3] == doctest::Approx(0.16).epsilon(1e-14));
        CHECK(cov[1] == 0.0);
        CHECK(cov[2] == 0.0);
        const auto fl = project(plain_splat({0, 0}, 0.1, 0.2), c).floored_cov();
        CHECK(fl[0] == cov[0] + kCovFloor);
    }

    TEST_CASE("norm of projected covariance times r^2 is constant")
    {
        const Splat s = plain_splat({0.0, 0.0}, 0.13, 0.31, 0.7);
        double ref = 0.0;
        for (double r : {1.0, 2.0, 4.0, 8.0}) {
            CameraSpec cam;
            cam.r = r;
            const auto cov = project(s, cam).cov_px;
            double fro = 0.0;
            for (double v : cov)
                fro += v * v;
            const double scaled = std::sqrt(fro) * r * r;
            if (ref == 0.0)
                ref = scaled;
            CHECK(std::abs(scaled - ref) <= 1e-12 * ref);
        }
    }

    TEST_CASE("footprint has unit peak and a C1 cutoff at Mahalanobis 3")
    {
        CHECK(footprint(0.0) == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(footprint(9.0) == 0.0);
        CHECK(footprint(12.0) == 0.0);
        CHECK(footprint_derivative(12.0) == 0.0);
        CHECK(std::abs(footprint(9.0 - 1e-9)) < 1e-15);
        CHECK(std::abs(footprint_derivative(9.0 - 1e-9)) < 1e-9);
        for (double u : {0.3, 1.0, 4.0, 8.5}) {
            const double h = 1e-6;
            const double fd = (footprint(u + h) - footprint(u - h)) / (2 * h);
            CHECK(footprint_derivative(u) == doctest::Approx(fd).epsilon(1e-7));
            CHECK(footprint(u) > 0.0);
            CHECK(footprint(u) < 1.0);
        }
    }

    TEST_CASE("transparent splats leave the background")
    {
        SplatScene s = make_synthetic_scene(3, 6, 0.5);
        for (auto& sp : s.splats)
            sp.opacity_logit = -30.0;
        CameraSpec cam;
        const Image img = render(s, cam);
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                for (int c = 0; c < 3; ++c)
                    CHECK(std::abs(img.at(x, y, c) - s.background[static_cast<std::size_t>(c)]) < 1e-9);
    }

    TEST_CASE("opaque white splat saturates its center pixel")
    {
        CameraSpec cam; // pixel (16,16) has center (16.5,16.5) at mu = 0.5 / 32
        double prev = 0.0;
        for (double logit : {0.0, 2.0, 5.0, 10.0, 20.0}) {
            SplatScene s;
            s.background = {0.0, 0.0, 0.0};
            Splat sp = plain_splat({0.5 / 32.0, 0.5 / 32.0}, 0.1, 0.1);
            sp.color = {1.0, 1.0, 1.0};
            sp.opacity_logit = logit;
            s.splats.push_back(sp);
            const double v = render(s, cam).at(16, 16, 0);
            CHECK(v > prev);
            prev = v;
        }
        CHECK(prev == doctest::Approx(1.0).epsilon(1e-8));
    }

    TEST_CASE("two overlapping splats composite front to back")
    {
        CameraSpec cam;
        SplatScene s;
        s.background = {0.0, 0.0, 0.0};
        Splat a = plain_splat({0.5 / 32.0, 0.5 / 32.0}, 0.1, 0.1);
        a.depth = 0.2;
        a.opacity_logit = 0.0; // alpha 0.5
        a.color = {1.0, 0.0, 0.0};
        Splat b = a;
        b.depth = 0.7;
        b.opacity_logit = 60.0; // alpha 1 in double
        b.color = {0.0, 0.0, 1.0};
        s.splats = {b, a}; // list order must not matter, depth does
        const Image img = render(s, cam);
        CHECK(img.at(16, 16, 0) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(img.at(16, 16, 1) == doctest::Approx(0.0));
        CHECK(img.at(16, 16, 2) == doctest::Approx(0.5).epsilon(1e-12));
    }

    TEST_CASE("depth ties composite by list index")
    {
        SplatScene s = make_synthetic_scene(4, 5, 1.0);
        for (auto& sp : s.splats)
            sp.depth = 0.5;
        s.splats[3].depth = 0.1;
        const auto order = depth_order(s);
        CHECK(order == std::vector<std::size_t>{3, 0, 1, 2, 4});
    }

    TEST_CASE("blending weights and residual transmittance sum to one")
    {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const SplatScene s = make_synthetic_scene(seed, 12, 0.6);
            CameraSpec cam;
            cam.r = 1.0 + static_cast<double>(seed);
            for (int y = 0; y < cam.height; y += 3) {
                for (int x = 0; x < cam.width; x += 3) {
                    const PixelComposite pc = composite_weights(s, cam, x, y);
                    double total = pc.transmittance;
                    for (const auto& [idx, w] : pc.weights) {
                        CHECK(w >= 0.0);
                        total += w;
                    }
                    CHECK(std::abs(total - 1.0) <= 1e-12);
                }
            }
        }
    }

    TEST_CASE("rendering is deterministic")
    {
        const SplatScene s = make_synthetic_scene(9, 16, 1.0);
        CameraSpec cam;
        cam.r = 2.5;
        CHECK(render(s, cam) == render(s, cam));
    }

    TEST_CASE("photometric loss basics")
    {
        const Image a = random_image(1, 16, 16);
        LossConfig cfg;
        CHECK(photometric_loss(a, a, cfg) == 0.0);

        LossConfig l1_only;
        l1_only.lambda_ssim = 0.0;
        CHECK(photometric_loss(Image(8, 8, 0.5), Image(8, 8, 0.0), l1_only) == doctest::Approx(0.5).epsilon(1e-15));

        CHECK_THROWS_AS(photometric_loss(Image(8, 8), Image(8, 9), cfg), std::invalid_argument);
        CHECK_THROWS_AS(ssim(Image(8, 8), Image(9, 8), cfg), std::invalid_argument);
        CHECK_THROWS_AS(psnr(Image(8, 8), Image(9, 8)), std::invalid_argument);

        LossConfig bad;
        bad.lambda_ssim = 1.5;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad = LossConfig{};
        bad.ssim_window = 6;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    }

    TEST_CASE("SSIM matches a brute-force windowed oracle")
    {
        LossConfig cfg;
        const Image target = random_image(2, 20, 17, 0.0, 0.9);
        Image offset = target;
        for (double& v : offset.pixels)
            v += 0.1;
        const long double ref = brute_force_ssim(offset, target, cfg.ssim_window, cfg.ssim_sigma);
        CHECK(std::abs(ssim(offset, target, cfg) - static_cast<double>(ref)) < 1e-10);

        // loss with lambda 0.2 against the same oracle
        long double l1 = 0;
        for (std::size_t i = 0; i < offset.pixels.size(); ++i)
            l1 += std::abs(static_cast<long double>(offset.pixels[i]) - target.pixels[i]);
        l1 /= static_cast<long double>(offset.pixels.size());
        const long double loss_ref = 0.8L * l1 + 0.2L * (1.0L - ref) / 2.0L;
        CHECK(std::abs(photometric_loss(offset, target, cfg) - static_cast<double>(loss_ref)) < 1e-10);

        const Image other = random_image(3, 20, 17);
        const long double ref2 = brute_force_ssim(other, target, cfg.ssim_window, cfg.ssim_sigma);
        CHECK(std::abs(ssim(other, target, cfg) - static_cast<double>(ref2)) < 1e-10);

        LossConfig wide;
        wide.ssim_window = 11;
        wide.ssim_sigma = 2.0;
        const long double ref3 = brute_force_ssim(other, target, 11, 2.0);
        CHECK(std::abs(ssim(other, target, wide) - static_cast<double>(ref3)) < 1e-10);
    }

    TEST_CASE("SSIM gradient matches central differences")
    {
        LossConfig cfg;
        const Image target = random_image(4, 9, 8);
        Image img = random_image(5, 9, 8);
        std::vector<double> grad;
        ssim_with_grad(img, target, cfg, grad);
        CounterRng rng(6);
        for (int k = 0; k < 30; ++k) {
            const std::size_t i = rng.below(img.pixels.size());
            const double h = 1e-6, v = img.pixels[i];
            img.pixels[i] = v + h;
            const double up = ssim(img, target, cfg);
            img.pixels[i] = v - h;
            const double dn = ssim(img, target, cfg);
            img.pixels[i] = v;
            CHECK(grad[i] == doctest::Approx((up - dn) / (2 * h)).epsilon(1e-5));
        }
    }

    TEST_CASE("PSNR and SSIM at known points")
    {
        const Image a = random_image(7, 12, 12, 0.0, 0.8);
        CHECK(psnr(a, a) == kPsnrCap);
        CHECK(ssim(a, a, LossConfig{}) == doctest::Approx(1.0).epsilon(1e-15));
        Image b = a;
        for (double& v : b.pixels)
            v += 0.1;
        CHECK(mse(a, b) == doctest::Approx(0.01).epsilon(1e-12));
        CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-10));
    }

    TEST_CASE("backward at the target has zero gradient")
    {
        const SplatScene s = make_synthetic_scene(5, 6, 0.8);
        CameraSpec cam;
        cam.r = 2.0;
        const Image target = render(s, cam);
        LossConfig cfg;
        const BackwardResult res = backward(s, cam, target, cfg);
        CHECK(res.loss == 0.0);
        for (BlockKind b : kAllBlocks)
            for (double g : res.grads[b])
                CHECK(g == 0.0);
        const GradientSet fd = finite_diff_grad(s, cam, target, cfg, 1e-7);
        for (BlockKind b : kAllBlocks)
            for (double g : fd[b])
                CHECK(std::abs(g) < 1e-7);
    }

    TEST_CASE("backward loss equals the forward loss")
    {
        const SplatScene s = make_synthetic_scene(6, 10, 1.0);
        CameraSpec cam;
        cam.r = 1.7;
        const Image target = render(make_synthetic_scene(60, 10, 1.0), cam);
        const BackwardResult res = backward(s, cam, target, LossConfig{});
        CHECK(res.loss == view_loss(s, cam, target, LossConfig{}));
        CHECK(res.rendered == render(s, cam));
    }

    TEST_CASE("culled splats receive exactly zero gradient")
    {
        SplatScene s = make_synthetic_scene(8, 5, 0.5);
        s.splats[2].mu = {40.0, -40.0};
        CameraSpec cam;
        const Image target = grad_check_target(make_synthetic_scene(80, 5, 0.5), cam);
        const BackwardResult res = backward(s, cam, target, LossConfig{});
        CHECK(res.grads[BlockKind::Position][4] == 0.0);
        CHECK(res.grads[BlockKind::Position][5] == 0.0);
        CHECK(res.grads[BlockKind::Scale][4] == 0.0);
        CHECK(res.grads[BlockKind::Rotation][2] == 0.0);
        CHECK(res.grads[BlockKind::Opacity][2] == 0.0);
        for (int c = 0; c < 3; ++c)
            CHECK(res.grads[BlockKind::Color][static_cast<std::size_t>(6 + c)] == 0.0);
        CHECK(res.grads.all_finite());
    }

    TEST_CASE("single splat L1 gradient matches the oracle at two step sizes")
    {
        SplatScene s;
        s.background = {0.2, 0.3, 0.4};
        s.splats.push_back(plain_splat({0.05, -0.04}, 0.12, 0.08, 0.3));
        CameraSpec cam;
        cam.r = 1.2;
        const Image target(cam.width, cam.height, 0.95);
        LossConfig cfg;
        cfg.lambda_ssim = 0.0;
        const GradientSet an = backward(s, cam, target, cfg).grads;
        for (double step : {1e-5, 2e-5}) {
            PerBlock<double> steps{step, step, step, 1e-3, step};
            const GradientSet fd = finite_diff_grad(s, cam, target, cfg, steps);
            for (BlockKind b : kAllBlocks) {
                for (std::size_t j = 0; j < an[b].size(); ++j) {
                    const double scale = std::max(std::abs(an[b][j]), 1e-8);
                    CHECK(std::abs(an[b][j] - fd[b][j]) / scale < 1e-6);
                }
            }
        }
    }

    TEST_CASE("central-difference error shrinks when the step is halved")
    {
        const SplatScene s = make_synthetic_scene(12, 4, 0.6);
        CameraSpec cam;
        cam.r = 2.0;
        const Image target = grad_check_target(make_synthetic_scene(13, 4, 0.6), cam);
        const GradientSet an = backward(s, cam, target, LossConfig{}).grads;
        const GradientSet coarse = finite_diff_grad(s, cam, target, LossConfig{}, 4e-3);
        const GradientSet fine = finite_diff_grad(s, cam, target, LossConfig{}, 2e-3);
        for (BlockKind b : {BlockKind::Position, BlockKind::Scale, BlockKind::Rotation}) {
            double e_coarse = 0.0, e_fine = 0.0;
            for (std::size_t j = 0; j < an[b].size(); ++j) {
                e_coarse += std::abs(coarse[b][j] - an[b][j]);
                e_fine += std::abs(fine[b][j] - an[b][j]);
            }
            CHECK(e_fine < e_coarse);
            CHECK(e_fine < 0.5 * e_coarse);
        }
    }

    TEST_CASE("L1 color gradient is piecewise constant in color")
    {
        const SplatScene s = make_synthetic_scene(14, 6, 0.7);
        CameraSpec cam;
        cam.r = 1.5;
        const Image target(cam.width, cam.height, 1.0);
        LossConfig cfg;
        cfg.lambda_ssim = 0.0;
        const auto g0 = backward(s, cam, target, cfg).grads[BlockKind::Color];
        SplatScene moved = s;
        for (auto& sp : moved.splats)
            for (double& c : sp.color)
                c += 1e-4;
        const auto g1 = backward(moved, cam, target, cfg).grads[BlockKind::Color];
        CHECK(g0 == g1);
    }

    TEST_CASE("gradient check on a few random draws")
    {
        GradCheckOptions opts;
        opts.seed = 77;
        opts.draws = 3;
        const GradCheckReport rep = grad_check(opts);
        CHECK(rep.pass());
        for (const auto& b : rep.blocks)
            CHECK(b.checked > 0);
        std::ostringstream csv;
        write_grad_check_csv(csv, rep);
        CHECK(csv.str().rfind("block,max_rel_error,max_abs_error,checked,failures\npos,", 0) == 0);
    }

    TEST_CASE("image dumps")
    {
        Image img(2, 1);
        img.pixels = {0.0, 0.5, 1.0, -0.2, 1.4, 0.2};
        std::ostringstream ppm;
        write_ppm(ppm, img);
        const std::string p = ppm.str();
        const std::string header = "P6\n2 1\n255\n";
        REQUIRE(p.size() == header.size() + 6);
        CHECK(p.substr(0, header.size()) == header);
        const auto* px = reinterpret_cast<const unsigned char*>(p.data() + header.size());
        CHECK(px[0] == 0);
        CHECK(px[1] == 128);
        CHECK(px[2] == 255);
        CHECK(px[3] == 0);
        CHECK(px[4] == 255);
        CHECK(px[5] == 51);

        const Image r = random_image(20, 5, 3);
        std::stringstream f32;
        write_imgf32(f32, r);
        CHECK(f32.str().rfind("IMGF32 v1 5 3\n", 0) == 0);
        const Image back = read_imgf32(f32);
        REQUIRE(back.same_size(r));
        for (std::size_t i = 0; i < r.pixels.size(); ++i)
            CHECK(back.pixels[i] == static_cast<double>(static_cast<float>(r.pixels[i])));
    }
}
