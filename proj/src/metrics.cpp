#include "rgrad/metrics.hpp"

#include "forward_kernels.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rgrad {

void LossConfig::validate() const
{
    if (!(lambda_ssim >= 0.0 && lambda_ssim <= 1.0))
        throw std::invalid_argument("lambda_ssim must lie in [0,1]");
    if (ssim_window < 1 || ssim_window % 2 == 0)
        throw std::invalid_argument("ssim_window must be a positive odd integer");
    if (!(ssim_sigma > 0.0))
        throw std::invalid_argument("ssim_sigma must be positive");
}

std::vector<double> gaussian_taps(int window, double sigma)
{
    std::vector<double> taps(static_cast<std::size_t>(window));
    const int half = window / 2;
    double sum = 0.0;
    for (int i = 0; i < window; ++i) {
        const double d = i - half;
        taps[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += taps[static_cast<std::size_t>(i)];
    }
    for (double& t : taps)
        t /= sum;
    return taps;
}

namespace {

void require_same_size(const Image& a, const Image& b, const char* what)
{
    if (!a.same_size(b))
        throw std::invalid_argument(std::string(what) + ": image dimensions differ");
}

} // namespace

double ssim(const Image& img, const Image& target, const LossConfig& cfg)
{
    require_same_size(img, target, "ssim");
    cfg.validate();
    return kernels::ssim<double>(img.pixels, target.pixels, img.width, img.height, cfg, nullptr);
}

double ssim_with_grad(const Image& img, const Image& target, const LossConfig& cfg, std::vector<double>& grad)
{
    require_same_size(img, target, "ssim");
    cfg.validate();
    return kernels::ssim<double>(img.pixels, target.pixels, img.width, img.height, cfg, &grad);
}

double mse(const Image& img, const Image& target)
{
    require_same_size(img, target, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        const double d = img.pixels[i] - target.pixels[i];
        s += d * d;
    }
    return s / static_cast<double>(img.pixels.size());
}

double psnr(const Image& img, const Image& target)
{
    const double m = mse(img, target);
    if (m < 1e-10)
        return kPsnrCap;
    return 10.0 * std::log10(1.0 / m);
}

double photometric_loss(const Image& img, const Image& target, const LossConfig& cfg)
{
    require_same_size(img, target, "photometric_loss");
    cfg.validate();
    return kernels::photometric<double>(img.pixels, target.pixels, img.width, img.height, cfg, nullptr);
}

double photometric_loss_with_grad(const Image& img, const Image& target, const LossConfig& cfg,
                                  std::vector<double>& grad)
{
    require_same_size(img, target, "photometric_loss");
    cfg.validate();
    return kernels::photometric<double>(img.pixels, target.pixels, img.width, img.height, cfg, &grad);
}

} // namespace rgrad
