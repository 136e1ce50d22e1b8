#pragma once

#include "rgrad/image.hpp"

#include <vector>

namespace rgrad {

struct LossConfig {
    double lambda_ssim = 0.2;
    int ssim_window = 7;
    double ssim_sigma = 1.5;

    /// Throws std::invalid_argument on lambda outside [0,1], even/nonpositive window, or sigma <= 0.
    void validate() const;
};

inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;
inline constexpr double kPsnrCap = 99.0;

/// Normalized 1-D Gaussian taps of length `window`.
std::vector<double> gaussian_taps(int window, double sigma);

/// Mean SSIM over all pixels and channels. Local statistics use a
/// Gaussian-weighted window with zero padding at the image border.
double ssim(const Image& img, const Image& target, const LossConfig& cfg);

/// SSIM and its gradient with respect to every channel of `img`.
double ssim_with_grad(const Image& img, const Image& target, const LossConfig& cfg, std::vector<double>& grad);

double mse(const Image& img, const Image& target);

/// 10 log10(1/MSE), reported as 99 dB when MSE < 1e-10.
double psnr(const Image& img, const Image& target);

/// (1 - lambda) * L1 + lambda * (1 - SSIM) / 2.
double photometric_loss(const Image& img, const Image& target, const LossConfig& cfg);

/// Loss and its gradient with respect to the rendered image. The L1 term uses
/// subgradient 0 where the residual is exactly zero.
double photometric_loss_with_grad(const Image& img, const Image& target, const LossConfig& cfg,
                                  std::vector<double>& grad);

} // namespace rgrad
