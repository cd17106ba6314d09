#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mmm/chat.hpp"
#include "mmm/core/error.hpp"
#include "mmm/core/rng.hpp"

namespace mmm::synth {

using json = nlohmann::ordered_json; // insertion order keeps JSONL output byte-stable

// ---------------------------------------------------------------------------
// records
// ---------------------------------------------------------------------------

// Pseudolabeled transcription with its confidence score.
struct TranscriptRecord {
    std::string filename;
    std::string text;
    double score = 0.0;
};

// Relationship QA over a pair of media items.
struct PairRecord {
    std::array<std::string, 2> filename;
    std::array<std::string, 2> filename_description;
    std::string instruction;
    std::string answer;
    std::string instruction_ms;
    std::string answer_ms;
};

// Multiturn session over any number of attachments.
struct SessionRecord {
    std::vector<std::string> filename;
    std::vector<chat::Turn> conversations;
};

// ---------------------------------------------------------------------------
// text-generation backend
// ---------------------------------------------------------------------------

// Raised when a backend call fails; carries the prompt so the caller can retry.
struct BackendError : Error {
    BackendError(const std::string& msg, std::string prompt_)
        : Error(msg), prompt(std::move(prompt_)) {}
    std::string prompt;
};

class LLMBackend {
public:
    virtual ~LLMBackend() = default;
    virtual std::string generate(const std::string& prompt) = 0;
};

// Deterministic stand-in for the instruction-generating model: a pure
// function of (seed, prompt). The output is filler text, never meaningful;
// it exists so the pipelines are byte-reproducible end to end.
class MockBackend final : public LLMBackend {
public:
    explicit MockBackend(std::uint64_t seed = 0) : seed_(seed) {}

    std::string generate(const std::string& prompt) override {
        static const char* kWords[] = {
            "konteks",  "ini",     "mengenai", "perkara",  "yang",    "berlaku",
            "dalam",    "rakaman", "tersebut", "dan",      "jawapan", "ringkas",
            "berkaitan","topik",   "utama",    "dibincang","secara",  "umum",
            "mengapa",  "bagaimana"};
        constexpr std::size_t n_words = sizeof(kWords) / sizeof(kWords[0]);
        const std::uint64_t h = mix64(fnv1a(prompt) ^ mix64(seed_));
        const std::size_t len = 6 + (h % 7);
        std::string out;
        for (std::size_t i = 0; i < len; ++i) {
            if (i) out += ' ';
            out += kWords[mix64(h + i) % n_words];
        }
        return out;
    }

private:
    std::uint64_t seed_;
};

// Translation hook. Real machine translation stays out of scope; identity is
// the shipped default.
using Translator = std::function<std::string(const std::string&)>;

inline Translator identity_translator() {
    return [](const std::string& s) { return s; };
}

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

struct SynthConfig {
    std::size_t n_sessions = 4;
    int turns_min = 2; // segments per combined session, inclusive
    int turns_max = 4;
    double image_branch_threshold = 0.4; // draw > threshold takes the image branch
    int n_followups = 2;
    double score_threshold = 0.5;
    std::uint64_t rng_seed = 0;

    void validate() const {
        if (image_branch_threshold < 0.0 || image_branch_threshold > 1.0)
            throw ValidationError("synth config: image_branch_threshold must be in [0, 1]");
        if (score_threshold < 0.0 || score_threshold > 1.0)
            throw ValidationError("synth config: score_threshold must be in [0, 1]");
        if (turns_min < 1 || turns_min > turns_max)
            throw ValidationError("synth config: need 1 <= turns_min <= turns_max");
        if (n_followups < 0) throw ValidationError("synth config: n_followups must be >= 0");
    }
};

// ---------------------------------------------------------------------------
// operations
// ---------------------------------------------------------------------------

// Keeps records with score >= threshold, order preserved.
inline std::vector<TranscriptRecord> filter_by_score(const std::vector<TranscriptRecord>& records,
                                                     double threshold) {
    std::vector<TranscriptRecord> out;
    for (const TranscriptRecord& r : records) {
        if (r.score < 0.0 || r.score > 1.0)
            throw ValidationError("filter_by_score: record '" + r.filename + "' has score " +
                                  std::to_string(r.score) + " outside [0, 1]");
        if (r.score >= threshold) out.push_back(r);
    }
    return out;
}

// Multiturn audio QA over one transcript. The first user turn carries the
// <audio> marker; the transcript itself only feeds the generation prompts.
inline SessionRecord gen_audio_qa_session(const TranscriptRecord& context, LLMBackend& llm,
                                          int n_followups,
                                          const Translator& translate = identity_translator()) {
    if (context.text.empty())
        throw ValidationError("gen_audio_qa_session: empty transcript for '" + context.filename +
                              "'");
    SessionRecord rec;
    rec.filename.push_back(context.filename);

    const std::string seed_question =
        llm.generate(context.text + "\n\ngenerate questions based on context above");
    const std::string first_prompt = context.text + "\n" + seed_question;
    const std::string first_answer = llm.generate(chat::format_prompt(first_prompt, {}));

    std::vector<chat::HistoryPair> history{{first_prompt, first_answer}};
    rec.conversations.push_back(
        {chat::Role::user, "<audio>" + seed_question, "<audio>" + translate(seed_question)});
    rec.conversations.push_back({chat::Role::assistant, first_answer, translate(first_answer)});

    for (int i = 0; i < n_followups; ++i) {
        const std::string q = llm.generate(chat::format_user(history));
        const std::string a = llm.generate(chat::format_prompt(q, history));
        history.emplace_back(q, a);
        rec.conversations.push_back({chat::Role::user, q, translate(q)});
        rec.conversations.push_back({chat::Role::assistant, a, translate(a)});
    }
    return rec;
}

enum class PairKind { image_image, audio_audio, audio_image };

inline PairKind pair_kind_from(const std::string& s) {
    if (s == "image-image") return PairKind::image_image;
    if (s == "audio-audio") return PairKind::audio_audio;
    if (s == "audio-image") return PairKind::audio_image;
    throw ValidationError("pair kind: unknown '" + s + "'");
}

struct DescribedMedia {
    std::string filename;
    std::string description;
};

// Relationship prompt and record for one media pair. Prompt strings follow
// the generator scripts verbatim, including the trailing space after the
// first description and the period only on the picture-picture question.
inline PairRecord gen_pair_relation(const DescribedMedia& a, const DescribedMedia& b,
                                    PairKind kind, LLMBackend& llm,
                                    const Translator& translate = identity_translator()) {
    if (a.description.empty() || b.description.empty())
        throw ValidationError("gen_pair_relation: both items need descriptions");
    std::string prompt, instruction;
    switch (kind) {
    case PairKind::image_image:
        prompt = "\nPicture 1: " + a.description + " \nPicture 2: " + b.description +
                 "\nWhat is related between picture 1 and picture 2.\n";
        instruction = "What is related between picture 1 and picture 2";
        break;
    case PairKind::audio_audio:
        prompt = "\nAudio 1: " + a.description + " \nAudio 2: " + b.description +
                 "\nWhat is related between audio 1 and audio 2\n";
        instruction = "What is related between audio 1 and audio 2";
        break;
    case PairKind::audio_image:
        prompt = "\nAudio 1: " + a.description + " \nPicture 1: " + b.description +
                 "\nWhat is related between audio 1 and picture 1\n";
        instruction = "What is related between audio 1 and picture 1";
        break;
    }
    PairRecord rec;
    rec.filename = {a.filename, b.filename};
    rec.filename_description = {a.description, b.description};
    rec.instruction = instruction;
    rec.answer = llm.generate(prompt);
    rec.instruction_ms = translate(instruction);
    rec.answer_ms = translate(rec.answer);
    return rec;
}

// Combines single-modality sessions into multiturn multimodal ones: each
// output concatenates turns_min..turns_max segments, drawing the image pool
// when a uniform draw exceeds the threshold, without replacement across the
// whole run.
inline std::vector<SessionRecord> combine_sessions(const std::vector<SessionRecord>& visual_pool,
                                                   const std::vector<SessionRecord>& audio_pool,
                                                   const SynthConfig& cfg, Rng& rng) {
    cfg.validate();
    std::vector<std::size_t> visual_left(visual_pool.size()), audio_left(audio_pool.size());
    for (std::size_t i = 0; i < visual_left.size(); ++i) visual_left[i] = i;
    for (std::size_t i = 0; i < audio_left.size(); ++i) audio_left[i] = i;

    auto draw_from = [&rng](std::vector<std::size_t>& left, const std::vector<SessionRecord>& pool,
                            const char* name, std::size_t v_n, std::size_t a_n)
        -> const SessionRecord& {
        if (left.empty())
            throw CapacityError(std::string("combine_sessions: ") + name +
                                " pool exhausted (remaining visual " + std::to_string(v_n) +
                                ", audio " + std::to_string(a_n) + ")");
        const std::size_t pos =
            static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(left.size()) - 1));
        const std::size_t idx = left[pos];
        left.erase(left.begin() + static_cast<std::ptrdiff_t>(pos));
        return pool[idx];
    };

    std::vector<SessionRecord> out;
    out.reserve(cfg.n_sessions);
    for (std::size_t i = 0; i < cfg.n_sessions; ++i) {
        SessionRecord rec;
        const int segments = static_cast<int>(rng.uniform_int(cfg.turns_min, cfg.turns_max));
        for (int s = 0; s < segments; ++s) {
            const bool image_branch = rng.next_double() > cfg.image_branch_threshold;
            const SessionRecord& src =
                image_branch
                    ? draw_from(visual_left, visual_pool, "visual", visual_left.size(),
                                audio_left.size())
                    : draw_from(audio_left, audio_pool, "audio", visual_left.size(),
                                audio_left.size());
            rec.filename.insert(rec.filename.end(), src.filename.begin(), src.filename.end());
            rec.conversations.insert(rec.conversations.end(), src.conversations.begin(),
                                     src.conversations.end());
        }
        out.push_back(std::move(rec));
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSONL serialization
// ---------------------------------------------------------------------------

namespace detail {

inline json turn_to_json(const chat::Turn& t) {
    json j;
    j["role"] = chat::role_name(t.role);
    j["content"] = t.content;
    if (t.content_ms) j["content_ms"] = *t.content_ms;
    return j;
}

inline chat::Turn turn_from_json(const json& j) {
    chat::Turn t;
    const std::string role = j.at("role").get<std::string>();
    if (role == "user")
        t.role = chat::Role::user;
    else if (role == "assistant")
        t.role = chat::Role::assistant;
    else
        throw ValidationError("turn: unknown role '" + role + "'");
    t.content = j.at("content").get<std::string>();
    if (j.contains("content_ms")) t.content_ms = j.at("content_ms").get<std::string>();
    return t;
}

inline json to_json(const TranscriptRecord& r) {
    json j;
    j["filename"] = r.filename;
    j["text"] = r.text;
    j["score"] = r.score;
    return j;
}

inline json to_json(const PairRecord& r) {
    json j;
    j["filename"] = r.filename;
    j["filename_description"] = r.filename_description;
    j["instruction"] = r.instruction;
    j["answer"] = r.answer;
    j["instruction_ms"] = r.instruction_ms;
    j["answer_ms"] = r.answer_ms;
    return j;
}

inline json to_json(const SessionRecord& r) {
    json j;
    j["filename"] = r.filename;
    j["conversations"] = json::array();
    for (const chat::Turn& t : r.conversations) j["conversations"].push_back(turn_to_json(t));
    return j;
}

inline void from_json_record(const json& j, TranscriptRecord& r) {
    r.filename = j.at("filename").get<std::string>();
    r.text = j.at("text").get<std::string>();
    r.score = j.at("score").get<double>();
}

inline void from_json_record(const json& j, PairRecord& r) {
    const auto files = j.at("filename");
    const auto descs = j.at("filename_description");
    if (!files.is_array() || files.size() != 2 || !descs.is_array() || descs.size() != 2)
        throw ValidationError("pair record: filename/filename_description must be length-2 arrays");
    r.filename = {files[0].get<std::string>(), files[1].get<std::string>()};
    r.filename_description = {descs[0].get<std::string>(), descs[1].get<std::string>()};
    r.instruction = j.at("instruction").get<std::string>();
    r.answer = j.at("answer").get<std::string>();
    r.instruction_ms = j.value("instruction_ms", "");
    r.answer_ms = j.value("answer_ms", "");
}

inline void from_json_record(const json& j, SessionRecord& r) {
    r.filename = j.at("filename").get<std::vector<std::string>>();
    for (const json& t : j.at("conversations")) r.conversations.push_back(turn_from_json(t));
}

} // namespace detail

// One UTF-8 JSON object per line, fixed key order, byte-stable.
template <typename Record>
inline void write_jsonl(const std::vector<Record>& records, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("write_jsonl: cannot open '" + path + "' for writing");
    for (const Record& r : records) f << detail::to_json(r).dump() << '\n';
    if (!f) throw IoError("write_jsonl: write failure on '" + path + "'");
}

template <typename Record>
inline std::vector<Record> read_jsonl(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("read_jsonl: cannot open '" + path + "'");
    std::vector<Record> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("read_jsonl: " + path + ":" + std::to_string(lineno) + ": " +
                             e.what());
        }
        Record r;
        try {
            detail::from_json_record(j, r);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("read_jsonl: " + path + ":" + std::to_string(lineno) + ": " +
                             e.what());
        }
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// session validation & conversion
// ---------------------------------------------------------------------------

// Problems (empty when valid): marker/filename count agreement and role
// alternation. Used by dataset inspection and before training.
inline std::vector<std::string> validate_session(const SessionRecord& rec) {
    std::vector<std::string> problems;
    std::size_t markers = 0;
    for (std::size_t i = 0; i < rec.conversations.size(); ++i) {
        const chat::Turn& t = rec.conversations[i];
        try {
            markers += chat::marker_kinds(t.content).size();
        } catch (const ValidationError& e) {
            problems.push_back(std::string("turn ") + std::to_string(i) + ": " + e.what());
        }
    }
    if (markers != rec.filename.size())
        problems.push_back(std::to_string(markers) + " markers vs " +
                           std::to_string(rec.filename.size()) + " filenames");
    return problems;
}

// Derives the attachment list (path + kind) from the markers in reading
// order; marker j binds filename j.
inline chat::Conversation to_conversation(const SessionRecord& rec) {
    chat::Conversation conv;
    conv.turns = rec.conversations;
    std::vector<encoders::MediaKind> kinds;
    for (const chat::Turn& t : rec.conversations) {
        const auto k = chat::marker_kinds(t.content);
        kinds.insert(kinds.end(), k.begin(), k.end());
    }
    if (kinds.size() != rec.filename.size())
        throw ValidationError("to_conversation: " + std::to_string(kinds.size()) +
                              " markers vs " + std::to_string(rec.filename.size()) + " filenames");
    for (std::size_t i = 0; i < kinds.size(); ++i)
        conv.attachments.push_back({rec.filename[i], kinds[i]});
    return conv;
}

} // namespace mmm::synth
