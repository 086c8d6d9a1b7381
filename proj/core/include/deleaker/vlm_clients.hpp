#pragma once

#include "deleaker/evalkit.hpp"

#include <atomic>
#include <functional>
#include <string>

namespace deleaker {

// Deterministic in-process client driven by a handler; counts calls so
// tests can assert cache behaviour.
class MockVlmClient : public VlmClient {
public:
    using Handler = std::function<std::string(const VlmRequest&)>;
    explicit MockVlmClient(Handler handler) : handler_(std::move(handler)) {}

    std::string complete(const VlmRequest& request) override {
        calls_.fetch_add(1, std::memory_order_relaxed);
        return handler_(request);
    }
    int calls() const { return calls_.load(std::memory_order_relaxed); }

private:
    Handler handler_;
    std::atomic<int> calls_{0};
};

// Builds a mock handler from a JSON script:
//   {
//     "defaults": {"1.1": "...", "1.2": "...", "1.3": "...", "2": "...", "3": "Rank: 3"},
//     "cases": {
//       "<case id>": {"3": "Rank: 2maj", "fail_stage": "2",
//                      "rank_attempts": ["no rank", "Rank: 2min"]}
//     }
//   }
// Stage routing uses the request tag ("<stage>|<case id>|...").
MockVlmClient::Handler scripted_handler_from_json(const std::string& script_json);
MockVlmClient::Handler scripted_handler_from_file(const std::string& path);

// Handler used by the CLI when no script is given: canned step texts and a
// rank derived deterministically from the case id.
MockVlmClient::Handler default_mock_handler();

// POSTs {"parts": [...]} as JSON to the configured endpoint and expects
// {"text": "..."} back. Retries with exponential backoff (3 attempts).
// When auth_env is set and the variable exists, its value is sent as a
// bearer Authorization header.
class HttpVlmClient : public VlmClient {
public:
    HttpVlmClient(const std::string& endpoint, std::string auth_env = "DELEAKER_VLM_API_KEY");

    std::string complete(const VlmRequest& request) override;

private:
    std::string scheme_host_;
    std::string path_;
    std::string auth_env_;
};

} // namespace deleaker
