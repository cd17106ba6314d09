#pragma once

// Remote chat-completions backend. Split from synth.hpp so only the CLI pays
// the compile cost; tests never construct one.

#include <cstdlib>
#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "mmm/synth.hpp"

namespace mmm::synth {

// Talks to a chat-completions style endpoint:
//
//   POST {MMM_LLM_ENDPOINT}/v1/chat/completions
//   Authorization: Bearer {MMM_LLM_KEY}
//   {"model": "...", "messages": [{"role": "user", "content": "<prompt>"}]}
//
// and returns choices[0].message.content.
class HttpBackend final : public LLMBackend {
public:
    HttpBackend(std::string base_url, std::string api_key, std::string model = "default")
        : base_url_(std::move(base_url)), api_key_(std::move(api_key)), model_(std::move(model)) {}

    static std::unique_ptr<HttpBackend> from_env() {
        const char* endpoint = std::getenv("MMM_LLM_ENDPOINT");
        if (!endpoint || !*endpoint)
            throw ValidationError("remote backend: MMM_LLM_ENDPOINT is not set");
        const char* key = std::getenv("MMM_LLM_KEY");
        return std::make_unique<HttpBackend>(endpoint, key ? key : "");
    }

    std::string generate(const std::string& prompt) override {
        httplib::Client client(base_url_);
        client.set_connection_timeout(30);
        client.set_read_timeout(120);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
        nlohmann::ordered_json body;
        body["model"] = model_;
        body["messages"] = nlohmann::ordered_json::array(
            {nlohmann::ordered_json{{"role", "user"}, {"content", prompt}}});
        auto res = client.Post("/v1/chat/completions", headers, body.dump(), "application/json");
        if (!res)
            throw BackendError("remote backend: no response from " + base_url_, prompt);
        if (res->status != 200)
            throw BackendError("remote backend: HTTP " + std::to_string(res->status) + " from " +
                                   base_url_,
                               prompt);
        try {
            const auto j = nlohmann::json::parse(res->body);
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw BackendError(std::string("remote backend: malformed response: ") + e.what(),
                               prompt);
        }
    }

private:
    std::string base_url_;
    std::string api_key_;
    std::string model_;
};

} // namespace mmm::synth
