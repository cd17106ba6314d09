#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "mmm/core/ops.hpp"
#include "mmm/core/rng.hpp"
#include "mmm/core/tensor.hpp"
#include "mmm/encoders.hpp"

namespace mmm::projectors {

using core::Graph;
using core::Tensor;

struct ProjectorConfig {
    std::size_t vision_dim = 32;     // D_v, must match the encoder's image_dim
    std::size_t audio_dim = 24;      // D_a
    std::size_t audio_positions = 1500; // L_a expected on the audio path
    std::size_t d_model = 64;
    std::size_t hidden = 0;        // vision MLP width; 0 means d_model
    std::size_t conv_channels = 0; // audio conv output channels; 0 means d_model
    std::size_t kernel = 40;       // K
    std::size_t stride = 3;        // S
    std::size_t pad_left = 0;
    std::size_t pad_right = 0;
    double init_scale = 0.5;

    std::size_t hidden_width() const { return hidden ? hidden : d_model; }
    std::size_t channels() const { return conv_channels ? conv_channels : d_model; }

    void validate() const {
        if (!vision_dim || !audio_dim || !audio_positions || !d_model)
            throw ValidationError("projector config: dimensions must be positive");
        if (!kernel || !stride)
            throw ValidationError("projector config: kernel and stride must be positive");
        if (kernel > audio_positions + pad_left + pad_right)
            throw ValidationError("projector config: kernel exceeds padded audio length");
    }

    // Post-conv position count; 487 under the defaults (1500, K=40, S=3).
    std::size_t audio_out_positions() const {
        return (audio_positions + pad_left + pad_right - kernel) / stride + 1;
    }
};

// Two-layer MLP with GELU in the middle.
struct VisionProjectorParams {
    Tensor w1, b1; // D_v x H, H
    Tensor w2, b2; // H x D_model, D_model
    std::vector<std::pair<const char*, Tensor>> named() const {
        return {{"w1", w1}, {"b1", b1}, {"w2", w2}, {"b2", b2}};
    }
};

// Strided conv over the position axis, GELU, then a per-position linear map.
struct AudioProjectorParams {
    Tensor conv_w, conv_b; // C_out x D_a x K, C_out
    Tensor lin_w, lin_b;   // C_out x D_model, D_model
    std::vector<std::pair<const char*, Tensor>> named() const {
        return {{"conv_w", conv_w}, {"conv_b", conv_b}, {"lin_w", lin_w}, {"lin_b", lin_b}};
    }
};

// Scaled uniform init, bound init_scale / sqrt(fan_in), drawn in a fixed
// order from one stream so a seed pins every value.
inline std::pair<VisionProjectorParams, AudioProjectorParams> init_projectors(
    const ProjectorConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(mix64(seed ^ 0x70726F6Aull));
    const std::size_t h = cfg.hidden_width(), c = cfg.channels();
    auto draw = [&rng](core::Shape shape, std::size_t fan_in, double scale) {
        return Tensor::uniform(rng, std::move(shape), scale / std::sqrt(static_cast<double>(fan_in)),
                               true);
    };
    VisionProjectorParams v;
    v.w1 = draw({cfg.vision_dim, h}, cfg.vision_dim, cfg.init_scale);
    v.b1 = draw({h}, cfg.vision_dim, cfg.init_scale);
    v.w2 = draw({h, cfg.d_model}, h, cfg.init_scale);
    v.b2 = draw({cfg.d_model}, h, cfg.init_scale);

    AudioProjectorParams a;
    const std::size_t conv_fan = cfg.audio_dim * cfg.kernel;
    a.conv_w = draw({c, cfg.audio_dim, cfg.kernel}, conv_fan, cfg.init_scale);
    a.conv_b = draw({c}, conv_fan, cfg.init_scale);
    a.lin_w = draw({c, cfg.d_model}, c, cfg.init_scale);
    a.lin_b = draw({cfg.d_model}, c, cfg.init_scale);
    return {std::move(v), std::move(a)};
}

// feat: [P x D_v] -> [P x D_model]; linear -> GELU -> linear.
inline Tensor vision_project(Graph& g, const Tensor& feat, const VisionProjectorParams& p) {
    if (feat.rank() != 2 || feat.dim(1) != p.w1.dim(0))
        throw DimensionError("vision_project: features " + core::shape_str(feat.shape()) +
                             " do not match projector input width " + std::to_string(p.w1.dim(0)));
    Tensor mid = core::gelu(g, core::add_rowvec(g, core::matmul(g, feat, p.w1), p.b1));
    return core::add_rowvec(g, core::matmul(g, mid, p.w2), p.b2);
}

inline Tensor vision_project(Graph& g, const encoders::FeatureMatrix& feat,
                             const VisionProjectorParams& p) {
    return vision_project(g, encoders::to_tensor(feat), p);
}

// feat: [L_a x D_a] -> [L' x D_model]; conv(K, S) -> GELU -> per-position linear.
inline Tensor audio_project(Graph& g, const Tensor& feat, const AudioProjectorParams& p,
                            const ProjectorConfig& cfg) {
    cfg.validate();
    if (feat.rank() != 2 || feat.dim(0) != cfg.audio_positions || feat.dim(1) != cfg.audio_dim)
        throw DimensionError("audio_project: features " + core::shape_str(feat.shape()) +
                             " do not match configured [" + std::to_string(cfg.audio_positions) +
                             "x" + std::to_string(cfg.audio_dim) + "]");
    Tensor channels_first = core::transpose(g, feat); // D_a x L
    Tensor conv =
        core::conv1d(g, channels_first, p.conv_w, p.conv_b, cfg.stride, cfg.pad_left, cfg.pad_right);
    Tensor activated = core::gelu(g, conv);           // C_out x L'
    Tensor positions_first = core::transpose(g, activated);
    return core::add_rowvec(g, core::matmul(g, positions_first, p.lin_w), p.lin_b);
}

inline Tensor audio_project(Graph& g, const encoders::FeatureMatrix& feat,
                            const AudioProjectorParams& p, const ProjectorConfig& cfg) {
    return audio_project(g, encoders::to_tensor(feat), p, cfg);
}

} // namespace mmm::projectors
