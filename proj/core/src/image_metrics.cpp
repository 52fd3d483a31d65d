#include "cobsplat/image_metrics.hpp"

#include <array>
#include <cmath>
#include <limits>

#include "cobsplat/error.hpp"

namespace cobsplat {

namespace {

constexpr int kWindow = 11;
constexpr int kHalf = kWindow / 2;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void check_dims(const Image& a, const Image& b, const char* who) {
    if (a.width != b.width || a.height != b.height || a.channels != b.channels)
        throw ValidationError(std::string(who) + ": image dimensions differ (" +
                              std::to_string(a.width) + "x" + std::to_string(a.height) + "x" +
                              std::to_string(a.channels) + " vs " + std::to_string(b.width) +
                              "x" + std::to_string(b.height) + "x" +
                              std::to_string(b.channels) + ")");
}

std::array<double, kWindow> gaussian_window() {
    std::array<double, kWindow> w{};
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
        const double d = i - kHalf;
        w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
}

// Reflect with edge duplication: -1 -> 0, n -> n-1.
int reflect(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

using Plane = std::vector<double>;

// Separable Gaussian filter with reflect padding.
Plane filter(const Plane& src, int w, int h) {
    static const auto win = gaussian_window();
    Plane tmp(src.size()), dst(src.size());
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            double acc = 0.0;
            for (int k = 0; k < kWindow; ++k)
                acc += win[k] * src[static_cast<size_t>(r) * w + reflect(c + k - kHalf, w)];
            tmp[static_cast<size_t>(r) * w + c] = acc;
        }
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            double acc = 0.0;
            for (int k = 0; k < kWindow; ++k)
                acc += win[k] * tmp[static_cast<size_t>(reflect(r + k - kHalf, h)) * w + c];
            dst[static_cast<size_t>(r) * w + c] = acc;
        }
    return dst;
}

// Adjoint of `filter`: scatter with the same reflect padding.
Plane filter_adjoint(const Plane& src, int w, int h) {
    static const auto win = gaussian_window();
    Plane tmp(src.size(), 0.0), dst(src.size(), 0.0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double v = src[static_cast<size_t>(r) * w + c];
            if (v == 0.0) continue;
            for (int k = 0; k < kWindow; ++k)
                tmp[static_cast<size_t>(reflect(r + k - kHalf, h)) * w + c] += win[k] * v;
        }
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double v = tmp[static_cast<size_t>(r) * w + c];
            if (v == 0.0) continue;
            for (int k = 0; k < kWindow; ++k)
                dst[static_cast<size_t>(r) * w + reflect(c + k - kHalf, w)] += win[k] * v;
        }
    return dst;
}

Plane channel_plane(const Image& img, int ch) {
    Plane p(static_cast<size_t>(img.width) * img.height);
    for (size_t i = 0; i < p.size(); ++i) p[i] = img.data[i * img.channels + ch];
    return p;
}

struct SsimMoments {
    Plane mu_x, mu_y, sigma_x, sigma_y, sigma_xy; // filtered stats per pixel
};

SsimMoments ssim_moments(const Plane& x, const Plane& y, int w, int h) {
    SsimMoments m;
    m.mu_x = filter(x, w, h);
    m.mu_y = filter(y, w, h);
    Plane xx(x.size()), yy(x.size()), xy(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    m.sigma_x = filter(xx, w, h);
    m.sigma_y = filter(yy, w, h);
    m.sigma_xy = filter(xy, w, h);
    for (size_t i = 0; i < x.size(); ++i) {
        m.sigma_x[i] -= m.mu_x[i] * m.mu_x[i];
        m.sigma_y[i] -= m.mu_y[i] * m.mu_y[i];
        m.sigma_xy[i] -= m.mu_x[i] * m.mu_y[i];
    }
    return m;
}

} // namespace

double l1_loss(const Image& img, const Image& gt) {
    check_dims(img, gt, "l1_loss");
    double acc = 0.0;
    for (size_t i = 0; i < img.data.size(); ++i) acc += std::abs(img.data[i] - gt.data[i]);
    return acc / static_cast<double>(img.data.size());
}

double ssim(const Image& img, const Image& gt) {
    check_dims(img, gt, "ssim");
    const int w = img.width, h = img.height;
    double total = 0.0;
    for (int ch = 0; ch < img.channels; ++ch) {
        const Plane x = channel_plane(img, ch);
        const Plane y = channel_plane(gt, ch);
        const SsimMoments m = ssim_moments(x, y, w, h);
        for (size_t i = 0; i < x.size(); ++i) {
            const double a1 = 2.0 * m.mu_x[i] * m.mu_y[i] + kC1;
            const double a2 = 2.0 * m.sigma_xy[i] + kC2;
            const double b1 = m.mu_x[i] * m.mu_x[i] + m.mu_y[i] * m.mu_y[i] + kC1;
            const double b2 = m.sigma_x[i] + m.sigma_y[i] + kC2;
            total += (a1 * a2) / (b1 * b2);
        }
    }
    return total / static_cast<double>(img.data.size());
}

double dssim_loss(const Image& img, const Image& gt) { return (1.0 - ssim(img, gt)) / 2.0; }

double rgb_loss(const Image& img, const Image& gt, double lambda) {
    return (1.0 - lambda) * l1_loss(img, gt) + lambda * dssim_loss(img, gt);
}

std::vector<double> rgb_loss_grad(const Image& img, const Image& gt, double lambda) {
    check_dims(img, gt, "rgb_loss_grad");
    const int w = img.width, h = img.height;
    const double inv_n = 1.0 / static_cast<double>(img.data.size());
    std::vector<double> grad(img.data.size(), 0.0);

    // L1 term; subgradient 0 at exact equality.
    for (size_t i = 0; i < img.data.size(); ++i) {
        const double d = img.data[i] - gt.data[i];
        if (d != 0.0) grad[i] = (1.0 - lambda) * inv_n * (d > 0.0 ? 1.0 : -1.0);
    }
    if (lambda == 0.0) return grad;

    // D-SSIM term: dL = -lambda/2 * d(mean SSIM).
    const double scale = -0.5 * lambda * inv_n;
    for (int ch = 0; ch < img.channels; ++ch) {
        const Plane x = channel_plane(img, ch);
        const Plane y = channel_plane(gt, ch);
        const SsimMoments m = ssim_moments(x, y, w, h);

        // Per-pixel partials of SSIM with respect to the filtered statistics.
        Plane d_mu(x.size()), d_sx(x.size()), d_sxy(x.size());
        for (size_t i = 0; i < x.size(); ++i) {
            const double a1 = 2.0 * m.mu_x[i] * m.mu_y[i] + kC1;
            const double a2 = 2.0 * m.sigma_xy[i] + kC2;
            const double b1 = m.mu_x[i] * m.mu_x[i] + m.mu_y[i] * m.mu_y[i] + kC1;
            const double b2 = m.sigma_x[i] + m.sigma_y[i] + kC2;
            const double denom = b1 * b2;
            const double ds_da1 = a2 / denom;
            const double ds_da2 = a1 / denom;
            const double ds_db1 = -a1 * a2 / (denom * b1);
            const double ds_db2 = -a1 * a2 / (denom * b2);
            // mu_x enters a1, b1 and the centered moments sigma_x, sigma_xy.
            d_mu[i] = ds_da1 * 2.0 * m.mu_y[i] + ds_db1 * 2.0 * m.mu_x[i] -
                      ds_db2 * 2.0 * m.mu_x[i] - ds_da2 * 2.0 * m.mu_y[i];
            d_sx[i] = ds_db2;       // raw second moment of x
            d_sxy[i] = ds_da2 * 2.0; // raw cross moment
        }

        const Plane g_mu = filter_adjoint(d_mu, w, h);
        const Plane g_sx = filter_adjoint(d_sx, w, h);
        const Plane g_sxy = filter_adjoint(d_sxy, w, h);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                const size_t i = static_cast<size_t>(r) * w + c;
                const double dx = g_mu[i] + 2.0 * x[i] * g_sx[i] + y[i] * g_sxy[i];
                grad[i * img.channels + ch] += scale * dx;
            }
    }
    return grad;
}

double psnr(const Image& img, const Image& gt) {
    check_dims(img, gt, "psnr");
    double mse = 0.0;
    for (size_t i = 0; i < img.data.size(); ++i) {
        const double d = img.data[i] - gt.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(img.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

double iou(const Mask& pred, const Mask& gt) {
    if (pred.width != gt.width || pred.height != gt.height)
        throw ValidationError("iou: mask dimensions differ");
    long inter = 0, uni = 0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        const bool a = pred.data[i] != 0, b = gt.data[i] != 0;
        inter += a && b;
        uni += a || b;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double accuracy(const Mask& pred, const Mask& gt) {
    if (pred.width != gt.width || pred.height != gt.height)
        throw ValidationError("accuracy: mask dimensions differ");
    long agree = 0;
    for (size_t i = 0; i < pred.data.size(); ++i)
        agree += (pred.data[i] != 0) == (gt.data[i] != 0);
    return static_cast<double>(agree) / static_cast<double>(pred.data.size());
}

} // namespace cobsplat
