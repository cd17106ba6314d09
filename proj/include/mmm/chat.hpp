#pragma once

#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mmm/core/error.hpp"
#include "mmm/core/rng.hpp"
#include "mmm/encoders.hpp"
#include "mmm/fusion.hpp"

namespace mmm::chat {

using encoders::MediaKind;
using encoders::MediaRef;

enum class Role { user, assistant };

inline const char* role_name(Role r) { return r == Role::user ? "user" : "assistant"; }

struct Turn {
    Role role = Role::user;
    std::string content;                    // may contain inline <image> / <audio> markers
    std::optional<std::string> content_ms;  // parallel Malay text
};

struct Conversation {
    std::vector<Turn> turns;
    std::vector<MediaRef> attachments; // matched to inline markers in reading order
};

using HistoryPair = std::pair<std::string, std::string>; // (user, assistant)

// Instruction-format prompt:
//   <s> [INST] {u} [/INST] {a}</s>  ... [INST] {message} [/INST]
// Spacing is byte-exact; golden tests pin it.
inline std::string format_prompt(const std::string& message,
                                 const std::vector<HistoryPair>& history) {
    std::string prompt = "<s>";
    for (const auto& [user_prompt, bot_response] : history) {
        prompt += "[INST] " + user_prompt + " [/INST]";
        prompt += " " + bot_response + "</s> ";
    }
    prompt += "[INST] " + message + " [/INST]";
    return prompt;
}

// History rendering terminated by a bare "[INST]", used to elicit the next
// user question from the backend.
inline std::string format_user(const std::vector<HistoryPair>& history) {
    if (history.empty()) throw ContractError("format_user: history must be nonempty");
    std::string prompt = "<s>";
    for (const auto& [user_prompt, bot_response] : history) {
        prompt += "[INST] " + user_prompt + " [/INST]";
        prompt += " " + bot_response + "</s> ";
    }
    prompt += "[INST]";
    return prompt;
}

// ---------------------------------------------------------------------------
// marker-aware content parsing
// ---------------------------------------------------------------------------

struct Segment {
    bool is_marker = false;
    MediaKind kind = MediaKind::image;
    std::string text; // only for non-marker segments
};

// Splits content into text pieces and modality markers. A bare `<image>`
// (the form raw datasets use) counts as one marker; an explicit
// `<image></image>` pair, optionally whitespace-separated, collapses into the
// same marker. A close tag with no preceding open tag is malformed.
inline std::vector<Segment> parse_segments(std::string_view text) {
    static constexpr struct {
        std::string_view open, close;
        MediaKind kind;
    } kTags[] = {
        {"<image>", "</image>", MediaKind::image},
        {"<audio>", "</audio>", MediaKind::audio},
    };

    std::vector<Segment> out;
    std::size_t pos = 0;
    auto flush_text = [&](std::size_t from, std::size_t to) {
        if (from < to) out.push_back({false, MediaKind::image, std::string(text.substr(from, to - from))});
    };
    while (pos < text.size()) {
        std::size_t best = std::string_view::npos;
        int best_tag = -1;
        bool best_is_close = false;
        for (int t = 0; t < 2; ++t) {
            const std::size_t o = text.find(kTags[t].open, pos);
            if (o < best) {
                best = o;
                best_tag = t;
                best_is_close = false;
            }
            const std::size_t c = text.find(kTags[t].close, pos);
            if (c < best) {
                best = c;
                best_tag = t;
                best_is_close = true;
            }
        }
        if (best == std::string_view::npos) {
            flush_text(pos, text.size());
            break;
        }
        if (best_is_close)
            throw ValidationError("parse_segments: stray close tag at byte " +
                                  std::to_string(best));
        flush_text(pos, best);
        std::size_t after = best + kTags[best_tag].open.size();
        // Absorb an explicit close tag separated by whitespace only.
        std::size_t probe = after;
        while (probe < text.size() && (text[probe] == ' ' || text[probe] == '\n' ||
                                       text[probe] == '\t' || text[probe] == '\r'))
            ++probe;
        if (text.compare(probe, kTags[best_tag].close.size(), kTags[best_tag].close) == 0)
            after = probe + kTags[best_tag].close.size();
        out.push_back({true, kTags[best_tag].kind, ""});
        pos = after;
    }
    return out;
}

// Marker kinds of a content string, in reading order.
inline std::vector<MediaKind> marker_kinds(std::string_view text) {
    std::vector<MediaKind> kinds;
    for (const Segment& s : parse_segments(text))
        if (s.is_marker) kinds.push_back(s.kind);
    return kinds;
}

// ---------------------------------------------------------------------------
// tokenizer
// ---------------------------------------------------------------------------

// Pluggable id-based tokenizer. Role/terminator ids delimit turns in the
// training template.
class Tokenizer {
public:
    virtual ~Tokenizer() = default;
    virtual std::vector<int> encode(std::string_view text) const = 0;
    virtual std::size_t vocab_size() const = 0;
    virtual int unk_id() const = 0;
    virtual int user_id() const = 0;
    virtual int assistant_id() const = 0;
    virtual int end_id() const = 0;
};

// Reference tokenizer: whitespace-split words, first-seen vocabulary order.
// Ids 0..3 are reserved for <unk>, <|user|>, <|assistant|>, <|end|>.
class WhitespaceTokenizer final : public Tokenizer {
public:
    WhitespaceTokenizer() {
        for (const char* w : {"<unk>", "<|user|>", "<|assistant|>", "<|end|>"}) intern_(w);
    }

    // Adds the text tokens of `text` to the vocabulary (markers are skipped).
    void fit(std::string_view text) {
        for (const Segment& seg : parse_segments(text)) {
            if (seg.is_marker) continue;
            for_each_word_(seg.text, [&](std::string_view w) { intern_(std::string(w)); });
        }
    }

    void fit(const Conversation& conv) {
        for (const Turn& t : conv.turns) {
            fit(t.content);
            if (t.content_ms) fit(*t.content_ms);
        }
    }

    std::vector<int> encode(std::string_view text) const override {
        std::vector<int> ids;
        for_each_word_(text, [&](std::string_view w) {
            auto it = vocab_.find(std::string(w));
            ids.push_back(it == vocab_.end() ? kUnk : it->second);
        });
        return ids;
    }

    std::size_t vocab_size() const override { return words_.size(); }
    int unk_id() const override { return kUnk; }
    int user_id() const override { return kUser; }
    int assistant_id() const override { return kAssistant; }
    int end_id() const override { return kEnd; }

    const std::string& word(int id) const { return words_.at(static_cast<std::size_t>(id)); }

    static constexpr int kUnk = 0, kUser = 1, kAssistant = 2, kEnd = 3;

private:
    template <typename Fn>
    static void for_each_word_(std::string_view text, Fn&& fn) {
        std::size_t i = 0;
        while (i < text.size()) {
            while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
            std::size_t j = i;
            while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
            if (j > i) fn(text.substr(i, j - i));
            i = j;
        }
    }

    int intern_(const std::string& w) {
        auto it = vocab_.find(w);
        if (it != vocab_.end()) return it->second;
        const int id = static_cast<int>(words_.size());
        vocab_.emplace(w, id);
        words_.push_back(w);
        return id;
    }

    std::unordered_map<std::string, int> vocab_;
    std::vector<std::string> words_;
};

// ---------------------------------------------------------------------------
// training-example rendering
// ---------------------------------------------------------------------------

enum class LangMode { en, ms, mixed };

inline LangMode lang_mode_from(const std::string& s) {
    if (s == "en") return LangMode::en;
    if (s == "ms") return LangMode::ms;
    if (s == "mixed") return LangMode::mixed;
    throw ValidationError("lang policy: unknown mode '" + s + "'");
}

// Language selection per turn. `mixed` flips a seeded coin per (record, turn)
// so re-rendering the same data reproduces the same choices.
struct LangPolicy {
    LangMode mode = LangMode::en;
    std::uint64_t seed = 0;

    const std::string& select(const Turn& t, std::uint64_t record_salt,
                              std::size_t turn_index) const {
        switch (mode) {
        case LangMode::en:
            return t.content;
        case LangMode::ms:
            return t.content_ms ? *t.content_ms : t.content;
        case LangMode::mixed: {
            const bool ms = (mix64(seed ^ (record_salt * 0x9E3779B97F4A7C15ull) ^ turn_index) & 1u) != 0;
            return ms && t.content_ms ? *t.content_ms : t.content;
        }
        }
        return t.content;
    }
};

// Renders a conversation into a RawExample using the repo's chat template:
//
//   <|user|> {content tokens} <|end|> <|assistant|> {content tokens} <|end|> ...
//
// Inline markers become adjacent (open, close) id pairs. Only assistant
// content tokens are supervised; role tags, terminators and markers never are.
inline fusion::RawExample render_training_example(const Conversation& conv, const Tokenizer& tok,
                                                  const fusion::SpecialTokens& special,
                                                  const LangPolicy& policy,
                                                  std::uint64_t record_salt = 0) {
    fusion::RawExample ex;
    std::vector<MediaKind> marker_order;

    for (std::size_t ti = 0; ti < conv.turns.size(); ++ti) {
        const Turn& turn = conv.turns[ti];
        const Role expected = (ti % 2 == 0) ? Role::user : Role::assistant;
        if (turn.role != expected)
            throw ValidationError("render: turn " + std::to_string(ti) + " has role " +
                                  role_name(turn.role) + ", expected " + role_name(expected));

        ex.token_ids.push_back(turn.role == Role::user ? tok.user_id() : tok.assistant_id());
        const std::string& text = policy.select(turn, record_salt, ti);
        for (const Segment& seg : parse_segments(text)) {
            if (seg.is_marker) {
                marker_order.push_back(seg.kind);
                ex.token_ids.push_back(special.open_id(seg.kind));
                ex.token_ids.push_back(special.close_id(seg.kind));
            } else {
                const std::vector<int> ids = tok.encode(seg.text);
                if (turn.role == Role::assistant && !ids.empty())
                    ex.assistant_spans.push_back(
                        {ex.token_ids.size(), ex.token_ids.size() + ids.size()});
                ex.token_ids.insert(ex.token_ids.end(), ids.begin(), ids.end());
            }
        }
        ex.token_ids.push_back(tok.end_id());
    }

    if (marker_order.size() != conv.attachments.size())
        throw ContractError("render: " + std::to_string(marker_order.size()) +
                            " inline markers vs " + std::to_string(conv.attachments.size()) +
                            " attachments");
    for (std::size_t i = 0; i < marker_order.size(); ++i) {
        if (marker_order[i] != conv.attachments[i].kind)
            throw ContractError("render: marker " + std::to_string(i) + " is " +
                                encoders::media_kind_name(marker_order[i]) + " but attachment is " +
                                encoders::media_kind_name(conv.attachments[i].kind));
        ex.attachments.push_back({conv.attachments[i].kind, conv.attachments[i].path, false});
    }
    return ex;
}

} // namespace mmm::chat
