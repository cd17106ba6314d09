#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mmm/core/ops.hpp"
#include "mmm/core/tensor.hpp"
#include "mmm/encoders.hpp"

namespace mmm::fusion {

using core::Graph;
using core::Tensor;
using encoders::MediaKind;

// The four marker ids appended after the base vocabulary, in fixed order.
struct SpecialTokens {
    int base_vocab = 0;
    int image_open = -1;
    int image_close = -1;
    int audio_open = -1;
    int audio_close = -1;

    bool is_open(int id) const { return id == image_open || id == audio_open; }
    bool is_marker(int id) const {
        return id == image_open || id == image_close || id == audio_open || id == audio_close;
    }
    int close_of(int open_id) const {
        return open_id == image_open ? image_close : audio_close;
    }
    MediaKind kind_of(int open_id) const {
        return open_id == image_open ? MediaKind::image : MediaKind::audio;
    }
    int open_id(MediaKind k) const { return k == MediaKind::image ? image_open : audio_open; }
    int close_id(MediaKind k) const { return k == MediaKind::image ? image_close : audio_close; }
};

inline SpecialTokens make_special_tokens(int base_vocab) {
    if (base_vocab < 1) throw ContractError("make_special_tokens: base vocabulary must be >= 1");
    SpecialTokens st;
    st.base_vocab = base_vocab;
    st.image_open = base_vocab;
    st.image_close = base_vocab + 1;
    st.audio_open = base_vocab + 2;
    st.audio_close = base_vocab + 3;
    return st;
}

// One media slot in an example. Placeholders carry no file; they exist so a
// modality's projector always participates in the loss graph.
struct Attachment {
    MediaKind kind = MediaKind::image;
    std::string path;
    bool placeholder = false;
};

// Tokenized conversation with adjacent (open, close) marker pairs and their
// attachments in reading order. assistant_spans are [start, end) token ranges
// carrying supervision.
struct RawExample {
    std::vector<int> token_ids;
    std::vector<Attachment> attachments;
    std::vector<std::pair<std::size_t, std::size_t>> assistant_spans;
};

enum class OriginKind { text, feature, placeholder, pad };

// Where a fused position came from: a text token, row `offset` of attachment
// `index`, or padding.
struct Origin {
    OriginKind kind = OriginKind::text;
    std::size_t index = 0;
    std::size_t offset = 0;

    bool operator==(const Origin&) const = default;
};

struct FusedSequence {
    Tensor embeddings;               // [T' x D_model]
    std::vector<int> attention_mask; // 1 = attend, 0 = hidden from attention
    std::vector<int> labels;         // token id at the position, or kIgnoreId
    std::vector<Origin> position_map;

    std::size_t length() const { return attention_mask.size(); }
    std::size_t supervised_count() const {
        std::size_t n = 0;
        for (int l : labels)
            if (l != core::kIgnoreId) ++n;
        return n;
    }
};

struct FusedBatch {
    std::vector<FusedSequence> members;
    std::size_t padded_length = 0;
};

// Token-id embedding bound to a graph; the model supplies one that covers
// both the base table and the marker rows.
using EmbedFn = std::function<Tensor(Graph&, const std::vector<int>&)>;

namespace detail {

struct MarkerPair {
    std::size_t open_index = 0; // close sits at open_index + 1
    MediaKind kind = MediaKind::image;
};

inline std::vector<MarkerPair> scan_marker_pairs(const std::vector<int>& ids,
                                                 const SpecialTokens& st) {
    std::vector<MarkerPair> pairs;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (st.is_open(ids[i])) {
            if (i + 1 >= ids.size() || ids[i + 1] != st.close_of(ids[i]))
                throw ValidationError("splice: marker pair at token " + std::to_string(i) +
                                      " is not an adjacent (open, close) pair");
            pairs.push_back({i, st.kind_of(ids[i])});
            ++i; // skip the close token
        } else if (st.is_marker(ids[i])) {
            throw ValidationError("splice: stray close marker at token " + std::to_string(i));
        }
    }
    return pairs;
}

} // namespace detail

// Span fill-in: inserts each projected feature block between its marker pair
// in embedding space. Text positions keep attention; placeholder spans
// (markers included) get attention_mask 0. Labels are ignore everywhere
// except assistant spans, which shift by the inserted lengths.
inline FusedSequence splice(Graph& g, const RawExample& ex, const std::vector<Tensor>& projected,
                            const SpecialTokens& st, const EmbedFn& embed) {
    const auto pairs = detail::scan_marker_pairs(ex.token_ids, st);
    if (pairs.size() != ex.attachments.size())
        throw ContractError("splice: " + std::to_string(pairs.size()) + " marker pairs vs " +
                            std::to_string(ex.attachments.size()) + " attachments");
    if (projected.size() != ex.attachments.size())
        throw ContractError("splice: " + std::to_string(projected.size()) +
                            " projected blocks vs " + std::to_string(ex.attachments.size()) +
                            " attachments");
    for (std::size_t i = 0; i < pairs.size(); ++i)
        if (pairs[i].kind != ex.attachments[i].kind)
            throw ContractError("splice: attachment " + std::to_string(i) + " is " +
                                encoders::media_kind_name(ex.attachments[i].kind) +
                                " but marker pair " + std::to_string(i) + " is " +
                                encoders::media_kind_name(pairs[i].kind));

    for (auto [s, e] : ex.assistant_spans) {
        if (s > e || e > ex.token_ids.size())
            throw ValidationError("splice: assistant span [" + std::to_string(s) + ", " +
                                  std::to_string(e) + ") out of bounds");
        for (const auto& p : pairs)
            if (p.open_index + 1 >= s && p.open_index < e)
                throw ValidationError("splice: assistant span [" + std::to_string(s) + ", " +
                                      std::to_string(e) + ") overlaps a marker pair");
    }

    Tensor token_emb = embed(g, ex.token_ids);

    std::vector<Tensor> pieces;
    std::vector<Origin> origins;
    std::vector<int> mask;
    std::vector<std::size_t> fused_of_text(ex.token_ids.size());

    std::size_t cursor = 0;    // next text token to emit
    std::size_t fused_len = 0;
    auto emit_text_range = [&](std::size_t from, std::size_t to, bool attended) {
        if (from == to) return;
        pieces.push_back(core::slice_rows(g, token_emb, from, to));
        for (std::size_t t = from; t < to; ++t) {
            fused_of_text[t] = fused_len++;
            origins.push_back({OriginKind::text, t, 0});
            mask.push_back(attended ? 1 : 0);
        }
    };

    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto& pair = pairs[p];
        const bool ph = ex.attachments[p].placeholder;
        emit_text_range(cursor, pair.open_index, true);

        const Tensor& block = projected[p];
        if (block.rank() != 2 || block.dim(1) != token_emb.dim(1))
            throw DimensionError("splice: projected block " + core::shape_str(block.shape()) +
                                 " does not match embedding width " +
                                 std::to_string(token_emb.dim(1)));

        emit_text_range(pair.open_index, pair.open_index + 1, !ph); // open marker
        pieces.push_back(block);
        for (std::size_t r = 0; r < block.dim(0); ++r) {
            origins.push_back({ph ? OriginKind::placeholder : OriginKind::feature, p, r});
            mask.push_back(ph ? 0 : 1);
            ++fused_len;
        }
        emit_text_range(pair.open_index + 1, pair.open_index + 2, !ph); // close marker
        cursor = pair.open_index + 2;
    }
    emit_text_range(cursor, ex.token_ids.size(), true);

    FusedSequence out;
    out.embeddings = core::concat_rows(g, pieces);
    out.attention_mask = std::move(mask);
    out.position_map = std::move(origins);
    out.labels.assign(fused_len, core::kIgnoreId);
    for (auto [s, e] : ex.assistant_spans)
        for (std::size_t t = s; t < e; ++t) out.labels[fused_of_text[t]] = ex.token_ids[t];
    return out;
}

// Appends an empty marker pair plus a zero-feature placeholder attachment for
// each modality the example lacks, so both projectors reach every loss.
inline RawExample add_empty_placeholders(RawExample ex, const SpecialTokens& st) {
    bool has_image = false, has_audio = false;
    for (const Attachment& a : ex.attachments) {
        if (a.kind == MediaKind::image) has_image = true;
        if (a.kind == MediaKind::audio) has_audio = true;
    }
    if (!has_image) {
        ex.token_ids.push_back(st.image_open);
        ex.token_ids.push_back(st.image_close);
        ex.attachments.push_back({MediaKind::image, "", true});
    }
    if (!has_audio) {
        ex.token_ids.push_back(st.audio_open);
        ex.token_ids.push_back(st.audio_close);
        ex.attachments.push_back({MediaKind::audio, "", true});
    }
    return ex;
}

// Right-pads every member to a common length (optionally a multiple of
// pad_to_multiple). Pad positions are unattended and unsupervised.
inline FusedBatch collate(Graph& g, std::vector<FusedSequence> batch,
                          std::optional<std::size_t> pad_to_multiple = std::nullopt) {
    if (batch.empty()) throw ContractError("collate: empty batch");
    std::size_t target = 0;
    for (const FusedSequence& s : batch) target = std::max(target, s.length());
    if (pad_to_multiple && *pad_to_multiple > 0)
        target = (target + *pad_to_multiple - 1) / *pad_to_multiple * *pad_to_multiple;

    for (FusedSequence& s : batch) {
        const std::size_t pad = target - s.length();
        if (pad == 0) continue;
        const std::size_t d = s.embeddings.dim(1);
        s.embeddings = core::concat_rows(g, {s.embeddings, Tensor::zeros({pad, d})});
        for (std::size_t i = 0; i < pad; ++i) {
            s.attention_mask.push_back(0);
            s.labels.push_back(core::kIgnoreId);
            s.position_map.push_back({OriginKind::pad, 0, i});
        }
    }
    return FusedBatch{std::move(batch), target};
}

} // namespace mmm::fusion
