#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mmm/core/error.hpp"
#include "mmm/core/rng.hpp"
#include "mmm/core/tensor.hpp"

namespace mmm::encoders {

enum class MediaKind { image, audio };

inline const char* media_kind_name(MediaKind k) { return k == MediaKind::image ? "image" : "audio"; }

struct MediaRef {
    std::string path;
    MediaKind kind = MediaKind::image;
};

// Frozen encoder output: positions x feature dim. Values are always exactly
// representable in f32 so the on-disk format round-trips bit for bit. Never
// participates in gradient computation.
struct FeatureMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    bool operator==(const FeatureMatrix&) const = default;
};

struct EncoderConfig {
    std::size_t image_positions = 16;  // P
    std::size_t image_dim = 32;        // D_v
    std::size_t audio_positions = 1500; // L_a; default matches the Whisper encoder output length
    std::size_t audio_dim = 24;        // D_a
    std::uint64_t content_seed_salt = 0;

    void validate() const {
        if (!image_positions || !image_dim || !audio_positions || !audio_dim)
            throw ValidationError("encoder config: all dimensions must be positive");
    }
};

// Constant tensor view of a feature matrix. requires_grad stays false, so the
// registry refuses to treat features as trainable parameters.
inline core::Tensor to_tensor(const FeatureMatrix& m) {
    return core::Tensor({m.rows, m.cols}, m.values, false);
}

inline FeatureMatrix zero_features(std::size_t rows, std::size_t cols) {
    return FeatureMatrix{rows, cols, std::vector<double>(rows * cols, 0.0)};
}

namespace detail {

inline std::string read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("encoder: cannot read file '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (f.bad()) throw IoError("encoder: read failure on '" + path + "'");
    return bytes;
}

// Counter-based generator: element i of a matrix seeded with s is
// f32(2 * unit(mix64(s ^ golden*(i+1))) - 1), a pure function of (s, i).
inline FeatureMatrix synth_features(std::uint64_t seed, std::size_t rows, std::size_t cols) {
    FeatureMatrix m{rows, cols, std::vector<double>(rows * cols)};
    for (std::size_t i = 0; i < m.values.size(); ++i) {
        const std::uint64_t v = mix64(seed ^ (0x9E3779B97F4A7C15ull * (i + 1)));
        m.values[i] = static_cast<double>(static_cast<float>(2.0 * u64_to_unit(v) - 1.0));
    }
    return m;
}

} // namespace detail

// Deterministic stand-in for a frozen vision encoder: a pseudo-random
// projection keyed by a stable hash of the file bytes and the config salt.
inline FeatureMatrix mock_encode_image(const MediaRef& media, const EncoderConfig& cfg) {
    cfg.validate();
    const std::string bytes = detail::read_file_bytes(media.path);
    const std::uint64_t seed = mix64(fnv1a(bytes) ^ cfg.content_seed_salt ^ 0x1Au);
    return detail::synth_features(seed, cfg.image_positions, cfg.image_dim);
}

// Audio counterpart; rows default to the fixed encoder output length of 1500.
inline FeatureMatrix mock_encode_audio(const MediaRef& media, const EncoderConfig& cfg) {
    cfg.validate();
    const std::string bytes = detail::read_file_bytes(media.path);
    const std::uint64_t seed = mix64(fnv1a(bytes) ^ cfg.content_seed_salt ^ 0xA0u);
    return detail::synth_features(seed, cfg.audio_positions, cfg.audio_dim);
}

inline FeatureMatrix mock_encode(const MediaRef& media, const EncoderConfig& cfg) {
    return media.kind == MediaKind::image ? mock_encode_image(media, cfg)
                                          : mock_encode_audio(media, cfg);
}

// ---------------------------------------------------------------------------
// Feature file format
//
//   magic "MMMF" | version u8 = 1 | dtype u8 = 0 (f32) | ndim u8 | reserved u8
//   ndim x u32 dims (little endian) | row-major f32 payload (little endian)
//
// Trailing bytes are a format error. The format exists so real encoder
// features can be dropped in without code changes.
// ---------------------------------------------------------------------------

inline void save_features(const FeatureMatrix& m, const std::string& path) {
    if (m.values.size() != m.rows * m.cols)
        throw ValidationError("save_features: value count does not match rows x cols");
    std::string out;
    out.reserve(16 + m.values.size() * 4);
    out += "MMMF";
    bytes::put_u8(out, 1); // version
    bytes::put_u8(out, 0); // dtype f32
    bytes::put_u8(out, 2); // ndim
    bytes::put_u8(out, 0); // reserved
    bytes::put_u32(out, static_cast<std::uint32_t>(m.rows));
    bytes::put_u32(out, static_cast<std::uint32_t>(m.cols));
    for (double v : m.values) bytes::put_f32(out, static_cast<float>(v));
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("save_features: cannot open '" + path + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("save_features: write failure on '" + path + "'");
}

inline FeatureMatrix load_features(const std::string& path) {
    const std::string raw = detail::read_file_bytes(path);
    bytes::Reader r(raw, "feature file");
    if (r.str(4, "magic") != "MMMF")
        throw FormatError("feature file: bad magic at offset 0 in '" + path + "'");
    const std::uint8_t version = r.u8("version");
    if (version != 1)
        throw FormatError("feature file: unsupported version " + std::to_string(version) +
                          " at offset 4");
    const std::uint8_t dtype = r.u8("dtype");
    if (dtype != 0)
        throw FormatError("feature file: unsupported dtype " + std::to_string(dtype) +
                          " at offset 5");
    const std::uint8_t ndim = r.u8("ndim");
    if (ndim != 2)
        throw FormatError("feature file: expected 2 dims for a feature matrix, got " +
                          std::to_string(ndim) + " at offset 6");
    r.u8("reserved");
    const std::uint64_t rows = r.u32("rows");
    const std::uint64_t cols = r.u32("cols");
    if (rows * cols > (1ull << 31))
        throw FormatError("feature file: dimension overflow (" + std::to_string(rows) + " x " +
                          std::to_string(cols) + ") at offset 8");
    FeatureMatrix m{static_cast<std::size_t>(rows), static_cast<std::size_t>(cols), {}};
    m.values.resize(static_cast<std::size_t>(rows * cols));
    for (double& v : m.values) v = static_cast<double>(r.f32("payload"));
    r.expect_end();
    return m;
}

} // namespace mmm::encoders
