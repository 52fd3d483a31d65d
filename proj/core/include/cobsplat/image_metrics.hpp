#pragma once

#include <vector>

#include "cobsplat/image.hpp"

namespace cobsplat {

// Mean absolute difference over all pixels and channels.
double l1_loss(const Image& img, const Image& gt);

// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2,
// C2 = 0.03^2, reflect padding at borders.
double ssim(const Image& img, const Image& gt);

// (1 - mean SSIM) / 2.
double dssim_loss(const Image& img, const Image& gt);

// (1 - lambda) * L1 + lambda * D-SSIM.
double rgb_loss(const Image& img, const Image& gt, double lambda);

// Gradient of rgb_loss with respect to img, flattened H*W*C.
std::vector<double> rgb_loss_grad(const Image& img, const Image& gt, double lambda);

// 10*log10(1/MSE) in dB; +infinity when the images are identical.
double psnr(const Image& img, const Image& gt);

// Intersection over union of binary masks; empty-over-empty is 1.
double iou(const Mask& pred, const Mask& gt);
// Fraction of agreeing pixels.
double accuracy(const Mask& pred, const Mask& gt);

} // namespace cobsplat
