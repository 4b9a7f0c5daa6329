#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tct/image.hpp"

namespace tct {

/// An empty ROI span means the whole image.
using RoiSpan = std::span<const std::uint8_t>;

double rmse(const SliceImage &a, const SliceImage &b, RoiSpan roi = {});

/// 20 log10(peak / rmse); +inf when the images agree on the ROI. Without a
/// peak the maximum of the reference @p b over the ROI is used.
double psnr(const SliceImage &a, const SliceImage &b, RoiSpan roi = {},
            std::optional<double> peak = std::nullopt);

struct SsimOptions {
    int window = 11; ///< odd
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    /// Defaults to the larger maximum of the two images over the ROI.
    std::optional<double> peak;
};

struct SsimResult {
    double value = 0.0;
    int window = 0;        ///< window actually used
    bool shrunk = false;   ///< the ROI could not host a full window
    std::size_t samples = 0;
};

/**
 * Mean local SSIM with a Gaussian window, over windows centred on ROI pixels
 * that fit inside the image. When none fits the window shrinks by two until
 * one does.
 */
SsimResult ssim_detail(const SliceImage &a, const SliceImage &b, RoiSpan roi = {},
                       const SsimOptions &opts = {});

double ssim(const SliceImage &a, const SliceImage &b, RoiSpan roi = {},
            const SsimOptions &opts = {});

struct MetricSample {
    double rmse = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
};

MetricSample evaluate(const SliceImage &result, const SliceImage &truth, RoiSpan roi = {},
                      std::optional<double> peak = std::nullopt);

struct MethodMetrics {
    std::string method;
    std::vector<MetricSample> samples;
};

/// One row per method: "method,n,rmse_mean,rmse_std,psnr_mean,..." with a
/// header line. Infinite PSNR values are left out of the PSNR columns.
std::string format_metrics_table(const std::vector<MethodMetrics> &rows, char delimiter = ',');

} // namespace tct
