#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "tct/geometry.hpp"
#include "tct/image.hpp"
#include "tct/sinogram.hpp"

namespace tct {

/**
 * Exchange files: a "key: value" text header closed by an "end" line, then a
 * binary body. The body holds rows * cols little-endian float32 values in
 * row-major order, then (if mask: 1) one byte per value, then (sinograms
 * only) n_views little-endian float64 view angles. The checksum is the
 * SHA-256 of the body.
 *
 * Sinogram mask bytes carry bit 0 measured, bit 1 estimated, bit 2 mirrored.
 * Image mask bytes are the ROI.
 */
inline constexpr const char *exchange_magic = "TCT-EXCHANGE";
inline constexpr int exchange_version = 1;

struct ExchangeHeader {
    std::string kind; ///< "image" or "sinogram"
    int rows = 0;     ///< side, or n_views
    int cols = 0;     ///< side, or n_bins
    double pixel_size = 0.0;
    std::optional<ScanGeometry> geometry;
    bool has_mask = false;
    std::string config_hash;
    std::string provenance;
    std::size_t body_bytes = 0;
    std::string checksum;
    std::map<std::string, std::string> extra; ///< unknown keys, kept verbatim
};

struct WriteInfo {
    std::string config_hash;
    std::string provenance;
    std::map<std::string, std::string> extra;
};

/// Parses the header only; the body is not read.
ExchangeHeader read_header(const std::filesystem::path &path);

void write_image(const std::filesystem::path &path, const SliceImage &img,
                 const WriteInfo &info = {});
SliceImage read_image(const std::filesystem::path &path, ExchangeHeader *header = nullptr);

void write_sinogram(const std::filesystem::path &path, const Sinogram &sino,
                    const WriteInfo &info = {});
Sinogram read_sinogram(const std::filesystem::path &path, ExchangeHeader *header = nullptr);

/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path &path, const std::string &bytes);

std::string sha256_hex(const void *data, std::size_t size);
inline std::string sha256_hex(const std::string &s) { return sha256_hex(s.data(), s.size()); }

/// 8-bit grey PNG of @p img mapped linearly from [lo, hi], clipped.
void write_png(const std::filesystem::path &path, const SliceImage &img, double lo, double hi);

} // namespace tct
