#include "tct/exchange_format.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

#include <openssl/sha.h>
#include <png.h>
#include <unistd.h>

#include "tct/error.hpp"

namespace tct {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big,
              "mixed-endian hosts are not supported");

template <typename T>
T to_little(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        std::reverse(b, b + sizeof(T));
        std::memcpy(&v, b, sizeof(T));
    }
    return v;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

double parse_double(const std::string &key, const std::string &text) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) {
            throw std::invalid_argument(text);
        }
        return v;
    } catch (const std::exception &) {
        throw FormatError("exchange: bad number for '" + key + "': " + text);
    }
}

int parse_int(const std::string &key, const std::string &text) {
    try {
        std::size_t used = 0;
        const long v = std::stol(text, &used);
        if (used != text.size() || v < 0 || v > (1L << 30)) {
            throw std::invalid_argument(text);
        }
        return static_cast<int>(v);
    } catch (const std::exception &) {
        throw FormatError("exchange: bad integer for '" + key + "': " + text);
    }
}

std::string one_line(const std::string &s) {
    std::string out = s;
    std::replace(out.begin(), out.end(), '\n', ' ');
    std::replace(out.begin(), out.end(), '\r', ' ');
    return out;
}

std::string geometry_text(const ScanGeometry &g) {
    std::ostringstream os;
    os << "sod=" << fmt(g.sod) << " sdd=" << fmt(g.sdd) << " n_bins=" << g.n_bins
       << " bin_pitch=" << fmt(g.bin_pitch) << " n_views_full=" << g.n_views_full
       << " angle_step=" << fmt(g.angle_step) << " detector_offset=" << fmt(g.detector_offset);
    return os.str();
}

ScanGeometry parse_geometry(const std::string &text) {
    ScanGeometry g;
    std::istringstream is(text);
    std::string item;
    int seen = 0;
    while (is >> item) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) {
            throw FormatError("exchange: bad geometry field '" + item + "'");
        }
        const std::string k = item.substr(0, eq);
        const std::string v = item.substr(eq + 1);
        if (k == "sod") {
            g.sod = parse_double(k, v);
        } else if (k == "sdd") {
            g.sdd = parse_double(k, v);
        } else if (k == "n_bins") {
            g.n_bins = parse_int(k, v);
        } else if (k == "bin_pitch") {
            g.bin_pitch = parse_double(k, v);
        } else if (k == "n_views_full") {
            g.n_views_full = parse_int(k, v);
        } else if (k == "angle_step") {
            g.angle_step = parse_double(k, v);
        } else if (k == "detector_offset") {
            g.detector_offset = parse_double(k, v);
        } else {
            throw FormatError("exchange: unknown geometry field '" + k + "'");
        }
        ++seen;
    }
    if (seen != 7) {
        throw FormatError("exchange: incomplete geometry");
    }
    try {
        g.validate();
    } catch (const GeometryError &e) {
        throw FormatError(std::string("exchange: ") + e.what());
    }
    return g;
}

std::string header_text(const ExchangeHeader &h) {
    std::ostringstream os;
    os << exchange_magic << ' ' << exchange_version << '\n';
    os << "kind: " << h.kind << '\n';
    os << "dims: " << h.rows << ' ' << h.cols << '\n';
    if (h.kind == "image") {
        os << "pixel_size: " << fmt(h.pixel_size) << '\n';
    }
    if (h.geometry) {
        os << "geometry: " << geometry_text(*h.geometry) << '\n';
    }
    os << "mask: " << (h.has_mask ? 1 : 0) << '\n';
    os << "config_hash: " << one_line(h.config_hash) << '\n';
    os << "provenance: " << one_line(h.provenance) << '\n';
    for (const auto &[k, v] : h.extra) {
        os << one_line(k) << ": " << one_line(v) << '\n';
    }
    os << "body_bytes: " << h.body_bytes << '\n';
    os << "checksum: sha256:" << h.checksum << '\n';
    os << "end\n";
    return os.str();
}

ExchangeHeader parse_header(std::istream &in, const fs::path &path) {
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError("exchange: empty file " + path.string());
    }
    {
        std::istringstream first(line);
        std::string magic;
        int version = 0;
        first >> magic >> version;
        if (magic != exchange_magic) {
            throw FormatError("exchange: not an exchange file: " + path.string());
        }
        if (version != exchange_version) {
            throw FormatError("exchange: unsupported version " + std::to_string(version));
        }
    }
    ExchangeHeader h;
    bool have_dims = false, have_body = false, have_sum = false, ended = false;
    while (std::getline(in, line)) {
        if (line == "end") {
            ended = true;
            break;
        }
        const auto colon = line.find(": ");
        if (colon == std::string::npos) {
            throw FormatError("exchange: malformed header line '" + line + "'");
        }
        const std::string key = line.substr(0, colon);
        const std::string val = line.substr(colon + 2);
        if (key == "kind") {
            h.kind = val;
        } else if (key == "dims") {
            std::istringstream is(val);
            std::string r, c, rest;
            if (!(is >> r >> c) || (is >> rest)) {
                throw FormatError("exchange: bad dims '" + val + "'");
            }
            h.rows = parse_int(key, r);
            h.cols = parse_int(key, c);
            have_dims = true;
        } else if (key == "pixel_size") {
            h.pixel_size = parse_double(key, val);
        } else if (key == "geometry") {
            h.geometry = parse_geometry(val);
        } else if (key == "mask") {
            h.has_mask = parse_int(key, val) != 0;
        } else if (key == "config_hash") {
            h.config_hash = val;
        } else if (key == "provenance") {
            h.provenance = val;
        } else if (key == "body_bytes") {
            h.body_bytes = static_cast<std::size_t>(std::stoull(val));
            have_body = true;
        } else if (key == "checksum") {
            if (val.rfind("sha256:", 0) != 0) {
                throw FormatError("exchange: unsupported checksum '" + val + "'");
            }
            h.checksum = val.substr(7);
            have_sum = true;
        } else {
            h.extra[key] = val;
        }
    }
    if (!ended || !have_dims || !have_body || !have_sum) {
        throw FormatError("exchange: incomplete header in " + path.string());
    }
    if (h.kind != "image" && h.kind != "sinogram") {
        throw FormatError("exchange: unknown kind '" + h.kind + "'");
    }
    if (h.rows < 1 || h.cols < 1) {
        throw FormatError("exchange: empty dimensions");
    }
    if (h.kind == "sinogram" && !h.geometry) {
        throw FormatError("exchange: sinogram without geometry");
    }
    if (h.kind == "sinogram" && h.geometry->n_bins != h.cols) {
        throw FormatError("exchange: dims disagree with the geometry's bin count");
    }
    if (h.kind == "image" && (h.rows != h.cols || !(h.pixel_size > 0.0))) {
        throw FormatError("exchange: image must be square with a positive pixel size");
    }
    const std::size_t n = static_cast<std::size_t>(h.rows) * h.cols;
    const std::size_t expected = n * 4 + (h.has_mask ? n : 0) +
                                 (h.kind == "sinogram" ? static_cast<std::size_t>(h.rows) * 8 : 0);
    if (h.body_bytes != expected) {
        throw FormatError("exchange: body size does not match the dimensions");
    }
    return h;
}

// Reads and verifies the body that follows the header.
std::vector<unsigned char> read_body(std::istream &in, const ExchangeHeader &h,
                                     const fs::path &path) {
    std::vector<unsigned char> body(h.body_bytes);
    in.read(reinterpret_cast<char *>(body.data()), static_cast<std::streamsize>(body.size()));
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got != body.size() || in.peek() != std::char_traits<char>::eof()) {
        throw FormatError("exchange: checksum failure in " + path.string() +
                          " (body length " + std::to_string(got) + ", expected " +
                          std::to_string(body.size()) + ")");
    }
    if (sha256_hex(body.data(), body.size()) != h.checksum) {
        throw FormatError("exchange: checksum failure in " + path.string());
    }
    return body;
}

void put_floats(std::string &out, const std::vector<double> &values) {
    for (double v : values) {
        const float f = to_little(static_cast<float>(v));
        out.append(reinterpret_cast<const char *>(&f), 4);
    }
}

std::vector<double> get_floats(const unsigned char *p, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        float f;
        std::memcpy(&f, p + 4 * i, 4);
        out[i] = static_cast<double>(to_little(f));
    }
    return out;
}

void write_exchange(const fs::path &path, ExchangeHeader h, const std::string &body) {
    h.body_bytes = body.size();
    h.checksum = sha256_hex(body.data(), body.size());
    write_file_atomic(path, header_text(h) + body);
}

std::ifstream open_for_read(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("exchange: cannot open " + path.string());
    }
    return in;
}

} // namespace

std::string sha256_hex(const void *data, std::size_t size) {
    unsigned char digest[SHA256_DIGEST_LENGTH];
    SHA256(static_cast<const unsigned char *>(data), size, digest);
    std::ostringstream os;
    os << std::hex << std::setfill('0');
    for (unsigned char c : digest) {
        os << std::setw(2) << static_cast<int>(c);
    }
    return os.str();
}

void write_file_atomic(const fs::path &path, const std::string &bytes) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    fs::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw FormatError("cannot write " + tmp.string());
        }
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            std::error_code ignored;
            fs::remove(tmp, ignored);
            throw FormatError("short write to " + tmp.string());
        }
    }
    fs::rename(tmp, path);
}

ExchangeHeader read_header(const fs::path &path) {
    auto in = open_for_read(path);
    return parse_header(in, path);
}

void write_image(const fs::path &path, const SliceImage &img, const WriteInfo &info) {
    if (img.side < 1 || img.values.size() != static_cast<std::size_t>(img.side) * img.side) {
        throw FormatError("exchange: image has inconsistent dimensions");
    }
    ExchangeHeader h;
    h.kind = "image";
    h.rows = h.cols = img.side;
    h.pixel_size = img.pixel_size;
    h.has_mask = img.has_roi();
    h.config_hash = info.config_hash;
    h.provenance = info.provenance;
    h.extra = info.extra;
    std::string body;
    body.reserve(img.size() * 5);
    put_floats(body, img.values);
    if (h.has_mask) {
        for (auto m : img.roi_mask) {
            body.push_back(m ? 1 : 0);
        }
    }
    write_exchange(path, h, body);
}

SliceImage read_image(const fs::path &path, ExchangeHeader *header) {
    auto in = open_for_read(path);
    const ExchangeHeader h = parse_header(in, path);
    if (h.kind != "image") {
        throw FormatError("exchange: " + path.string() + " holds a " + h.kind);
    }
    const auto body = read_body(in, h, path);
    const std::size_t n = static_cast<std::size_t>(h.rows) * h.cols;
    SliceImage img(h.rows, h.pixel_size);
    img.values = get_floats(body.data(), n);
    if (h.has_mask) {
        img.roi_mask.assign(body.begin() + static_cast<std::ptrdiff_t>(4 * n),
                            body.begin() + static_cast<std::ptrdiff_t>(5 * n));
    }
    if (header) {
        *header = h;
    }
    return img;
}

void write_sinogram(const fs::path &path, const Sinogram &sino, const WriteInfo &info) {
    sino.validate();
    ExchangeHeader h;
    h.kind = "sinogram";
    h.rows = sino.n_views;
    h.cols = sino.n_bins;
    h.geometry = sino.geom;
    h.has_mask = true;
    h.config_hash = info.config_hash;
    h.provenance = info.provenance;
    h.extra = info.extra;
    std::string body;
    body.reserve(sino.size() * 5 + sino.view_angles.size() * 8);
    put_floats(body, sino.values);
    for (std::size_t i = 0; i < sino.size(); ++i) {
        body.push_back(static_cast<char>((sino.measured[i] ? 1 : 0) | (sino.estimated[i] ? 2 : 0) |
                                         (sino.mirrored[i] ? 4 : 0)));
    }
    for (double a : sino.view_angles) {
        const double le = to_little(a);
        body.append(reinterpret_cast<const char *>(&le), 8);
    }
    write_exchange(path, h, body);
}

Sinogram read_sinogram(const fs::path &path, ExchangeHeader *header) {
    auto in = open_for_read(path);
    const ExchangeHeader h = parse_header(in, path);
    if (h.kind != "sinogram") {
        throw FormatError("exchange: " + path.string() + " holds a " + h.kind);
    }
    const auto body = read_body(in, h, path);
    const std::size_t n = static_cast<std::size_t>(h.rows) * h.cols;
    std::vector<double> angles(static_cast<std::size_t>(h.rows));
    const std::size_t angle_at = n * 4 + (h.has_mask ? n : 0);
    for (int v = 0; v < h.rows; ++v) {
        double a;
        std::memcpy(&a, body.data() + angle_at + 8 * static_cast<std::size_t>(v), 8);
        angles[v] = to_little(a);
    }
    Sinogram sino(*h.geometry, std::move(angles));
    sino.values = get_floats(body.data(), n);
    if (h.has_mask) {
        for (std::size_t i = 0; i < n; ++i) {
            const unsigned char m = body[4 * n + i];
            if (m > 7 || __builtin_popcount(m) > 1) {
                throw FormatError("exchange: invalid sample flags");
            }
            sino.measured[i] = m & 1;
            sino.estimated[i] = (m >> 1) & 1;
            sino.mirrored[i] = (m >> 2) & 1;
        }
    } else {
        std::fill(sino.measured.begin(), sino.measured.end(), 1);
    }
    sino.validate();
    if (header) {
        *header = h;
    }
    return sino;
}

void write_png(const fs::path &path, const SliceImage &img, double lo, double hi) {
    if (!(hi > lo)) {
        throw ConfigError("png: display window must have hi > lo");
    }
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    fs::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    FILE *fp = std::fopen(tmp.c_str(), "wb");
    if (!fp) {
        throw FormatError("cannot write " + tmp.string());
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw FormatError("png: encoder failure for " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.side), static_cast<png_uint_32>(img.side),
                 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<std::size_t>(img.side));
    // top of the picture is +y
    for (int r = img.side - 1; r >= 0; --r) {
        for (int c = 0; c < img.side; ++c) {
            const double t = std::clamp((img.at(r, c) - lo) / (hi - lo), 0.0, 1.0);
            row[c] = static_cast<png_byte>(std::lround(255.0 * t));
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    fs::rename(tmp, path);
}

} // namespace tct
