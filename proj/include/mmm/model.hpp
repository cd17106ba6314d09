#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mmm/core/ops.hpp"
#include "mmm/core/rng.hpp"
#include "mmm/core/tensor.hpp"
#include "mmm/fusion.hpp"

namespace mmm::model {

using core::Graph;
using core::Tensor;

struct ModelConfig {
    std::size_t d_model = 64;
    std::size_t n_heads = 2;
    std::size_t n_layers = 2;
    std::size_t max_seq = 1024; // desk-scale default; full-scale systems run 8192
    double ln_eps = 1e-5;

    void validate() const {
        if (!d_model || !n_heads || !n_layers || !max_seq)
            throw ValidationError("model config: dimensions must be positive");
        if (d_model % n_heads != 0)
            throw ValidationError("model config: d_model must divide evenly into heads");
    }
};

// Desk-scale causal decoder: pre-norm blocks of masked multi-head attention
// and a GELU feed-forward, learned positional embeddings, tied to nothing.
// The head always reserves 4 logit columns for the marker tokens; the marker
// embedding rows only exist after extend_vocab().
class TinyDecoderLM {
public:
    TinyDecoderLM(const ModelConfig& cfg, std::size_t base_vocab, std::uint64_t seed)
        : cfg_(cfg), base_vocab_(base_vocab), rng_(mix64(seed ^ 0x6C6Dull)) {
        cfg_.validate();
        if (base_vocab_ < 1) throw ContractError("model: base vocabulary must be >= 1");
        const std::size_t d = cfg_.d_model;
        embed_base_ = draw_({base_vocab_, d}, d);
        pos_embed_ = draw_({cfg_.max_seq, d}, d);
        blocks_.resize(cfg_.n_layers);
        for (Block& b : blocks_) {
            b.ln1_gain = Tensor::full({d}, 1.0, true);
            b.ln1_shift = Tensor::zeros({d}, true);
            b.wq = draw_({d, d}, d);
            b.bq = Tensor::zeros({d}, true);
            b.wk = draw_({d, d}, d);
            b.bk = Tensor::zeros({d}, true);
            b.wv = draw_({d, d}, d);
            b.bv = Tensor::zeros({d}, true);
            b.wo = draw_({d, d}, d);
            b.bo = Tensor::zeros({d}, true);
            b.ln2_gain = Tensor::full({d}, 1.0, true);
            b.ln2_shift = Tensor::zeros({d}, true);
            b.ff_w1 = draw_({d, 4 * d}, d);
            b.ff_b1 = Tensor::zeros({4 * d}, true);
            b.ff_w2 = draw_({4 * d, d}, 4 * d);
            b.ff_b2 = Tensor::zeros({d}, true);
        }
        final_gain_ = Tensor::full({d}, 1.0, true);
        final_shift_ = Tensor::zeros({d}, true);
        head_w_ = draw_({d, vocab_size()}, d);
        head_b_ = Tensor::zeros({vocab_size()}, true);
    }

    // Appends the four marker rows (image open/close, audio open/close) as a
    // separate trainable tensor. Calling twice is a bug.
    fusion::SpecialTokens extend_vocab() {
        if (extended_)
            throw ContractError("extend_vocab: vocabulary already extended on this model");
        special_ = fusion::make_special_tokens(static_cast<int>(base_vocab_));
        embed_special_ = draw_({4, cfg_.d_model}, cfg_.d_model);
        extended_ = true;
        return special_;
    }

    bool extended() const { return extended_; }

    const fusion::SpecialTokens& special() const {
        if (!extended_) throw ContractError("model: vocabulary not extended yet");
        return special_;
    }

    std::size_t base_vocab() const { return base_vocab_; }
    std::size_t vocab_size() const { return base_vocab_ + 4; }
    const ModelConfig& config() const { return cfg_; }

    // Token embedding over base + marker rows, usable as the splice EmbedFn.
    Tensor embed_tokens(Graph& g, const std::vector<int>& ids) const {
        Tensor table = extended_ ? core::concat_rows(g, {embed_base_, embed_special_})
                                 : embed_base_;
        return core::embedding_lookup(g, table, ids);
    }

    fusion::EmbedFn embedder() const {
        return [this](Graph& g, const std::vector<int>& ids) { return embed_tokens(g, ids); };
    }

    // Logits [T x vocab] for a fused sequence. Positions with attention_mask 0
    // are invisible as keys everywhere, so their content cannot leak into any
    // attended position's output.
    Tensor forward(Graph& g, const fusion::FusedSequence& seq) const {
        const std::size_t t = seq.length();
        if (t == 0) throw ContractError("model: empty sequence");
        if (seq.embeddings.dim(0) != t)
            throw ContractError("model: embeddings/mask length mismatch");
        if (t > cfg_.max_seq)
            throw ContractError("model: sequence length " + std::to_string(t) +
                                " exceeds max_seq " + std::to_string(cfg_.max_seq));
        const std::size_t d = cfg_.d_model;
        if (seq.embeddings.dim(1) != d)
            throw DimensionError("model: embedding width " +
                                 std::to_string(seq.embeddings.dim(1)) + " != d_model " +
                                 std::to_string(d));

        // Causal + key-visibility additive mask, shared by all heads/layers.
        Tensor attn_mask = Tensor::zeros({t, t});
        for (std::size_t i = 0; i < t; ++i)
            for (std::size_t j = 0; j < t; ++j)
                if (j > i || seq.attention_mask[j] == 0) attn_mask.at(i, j) = core::kMaskDrop;

        Tensor x = core::add(g, seq.embeddings, core::slice_rows(g, pos_embed_, 0, t));
        const std::size_t dh = d / cfg_.n_heads;
        const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

        for (const Block& b : blocks_) {
            Tensor h = core::layernorm(g, x, b.ln1_gain, b.ln1_shift, cfg_.ln_eps);
            Tensor q = core::add_rowvec(g, core::matmul(g, h, b.wq), b.bq);
            Tensor k = core::add_rowvec(g, core::matmul(g, h, b.wk), b.bk);
            Tensor v = core::add_rowvec(g, core::matmul(g, h, b.wv), b.bv);

            std::vector<Tensor> head_rows; // transposed per-head outputs
            for (std::size_t hd = 0; hd < cfg_.n_heads; ++hd) {
                Tensor qh = core::slice_cols(g, q, hd * dh, (hd + 1) * dh);
                Tensor kh = core::slice_cols(g, k, hd * dh, (hd + 1) * dh);
                Tensor vh = core::slice_cols(g, v, hd * dh, (hd + 1) * dh);
                Tensor scores =
                    core::scale(g, core::matmul(g, qh, core::transpose(g, kh)), inv_sqrt_dh);
                Tensor probs = core::masked_softmax(g, scores, attn_mask);
                head_rows.push_back(core::transpose(g, core::matmul(g, probs, vh)));
            }
            Tensor merged = core::transpose(g, core::concat_rows(g, head_rows)); // [T x D]
            Tensor attn_out = core::add_rowvec(g, core::matmul(g, merged, b.wo), b.bo);
            x = core::add(g, x, attn_out);

            Tensor h2 = core::layernorm(g, x, b.ln2_gain, b.ln2_shift, cfg_.ln_eps);
            Tensor ff_mid = core::gelu(g, core::add_rowvec(g, core::matmul(g, h2, b.ff_w1), b.ff_b1));
            Tensor ff_out = core::add_rowvec(g, core::matmul(g, ff_mid, b.ff_w2), b.ff_b2);
            x = core::add(g, x, ff_out);
        }
        Tensor xf = core::layernorm(g, x, final_gain_, final_shift_, cfg_.ln_eps);
        return core::add_rowvec(g, core::matmul(g, xf, head_w_), head_b_);
    }

    // Registers every parameter under the "lm." prefix (plus "lm.embed.special"
    // once extended). Registration order is fixed and checkpoint-stable.
    void register_params(core::ParamRegistry& reg) const {
        reg.add("lm.embed.base", embed_base_);
        if (extended_) reg.add("lm.embed.special", embed_special_);
        reg.add("lm.pos", pos_embed_);
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            const Block& b = blocks_[i];
            const std::string p = "lm.block" + std::to_string(i) + ".";
            reg.add(p + "ln1.gain", b.ln1_gain);
            reg.add(p + "ln1.shift", b.ln1_shift);
            reg.add(p + "attn.wq", b.wq);
            reg.add(p + "attn.bq", b.bq);
            reg.add(p + "attn.wk", b.wk);
            reg.add(p + "attn.bk", b.bk);
            reg.add(p + "attn.wv", b.wv);
            reg.add(p + "attn.bv", b.bv);
            reg.add(p + "attn.wo", b.wo);
            reg.add(p + "attn.bo", b.bo);
            reg.add(p + "ln2.gain", b.ln2_gain);
            reg.add(p + "ln2.shift", b.ln2_shift);
            reg.add(p + "ff.w1", b.ff_w1);
            reg.add(p + "ff.b1", b.ff_b1);
            reg.add(p + "ff.w2", b.ff_w2);
            reg.add(p + "ff.b2", b.ff_b2);
        }
        reg.add("lm.final.gain", final_gain_);
        reg.add("lm.final.shift", final_shift_);
        reg.add("lm.head.w", head_w_);
        reg.add("lm.head.b", head_b_);
    }

private:
    struct Block {
        Tensor ln1_gain, ln1_shift;
        Tensor wq, bq, wk, bk, wv, bv, wo, bo;
        Tensor ln2_gain, ln2_shift;
        Tensor ff_w1, ff_b1, ff_w2, ff_b2;
    };

    Tensor draw_(core::Shape shape, std::size_t fan_in) {
        return Tensor::uniform(rng_, std::move(shape),
                               1.0 / std::sqrt(static_cast<double>(fan_in)), true);
    }

    ModelConfig cfg_;
    std::size_t base_vocab_;
    Rng rng_;
    bool extended_ = false;
    fusion::SpecialTokens special_;

    Tensor embed_base_, embed_special_, pos_embed_;
    std::vector<Block> blocks_;
    Tensor final_gain_, final_shift_, head_w_, head_b_;
};

} // namespace mmm::model
