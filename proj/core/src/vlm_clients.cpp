#include "deleaker/vlm_clients.hpp"

#include <json.hpp>

#define CPPHTTPLIB_NO_EXCEPTIONS 0
#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace deleaker {

using nlohmann::json;

namespace {

struct TagParts {
    std::string stage;
    std::string case_id;
    int attempt = 0;
};

// Tags look like "<stage>|<case id>[|extra]|a<attempt>".
TagParts parse_tag(const std::string& tag) {
    TagParts t;
    const size_t s1 = tag.find('|');
    if (s1 == std::string::npos) {
        t.stage = tag;
        return t;
    }
    t.stage = tag.substr(0, s1);
    const size_t s2 = tag.find('|', s1 + 1);
    t.case_id = tag.substr(s1 + 1, s2 == std::string::npos ? std::string::npos : s2 - s1 - 1);
    const size_t last = tag.rfind('|');
    if (last != std::string::npos && last != s1 && last + 1 < tag.size() && tag[last + 1] == 'a')
        t.attempt = std::atoi(tag.c_str() + last + 2);
    return t;
}

std::string default_stage_text(const std::string& stage) {
    if (stage == "1.1")
        return "differences: coat pattern, ear shape, tail length";
    if (stage == "1.2")
        return "reference images show distinct coat patterns and head shapes";
    if (stage == "1.3")
        return "Coat: first entity: patterned. second entity: plain. Ears: first entity: rounded. second entity: pointed.";
    if (stage == "2")
        return "the entity looks fairly typical in this image";
    return "Rank: 3";
}

} // namespace

MockVlmClient::Handler scripted_handler_from_json(const std::string& script_json) {
    json script = json::parse(script_json);
    return [script](const VlmRequest& req) -> std::string {
        const TagParts tag = parse_tag(req.tag);
        const json* case_entry = nullptr;
        if (script.contains("cases")) {
            auto it = script["cases"].find(tag.case_id);
            if (it != script["cases"].end())
                case_entry = &*it;
        }
        if (case_entry) {
            if (case_entry->contains("fail_stage") &&
                (*case_entry)["fail_stage"].get<std::string>() == tag.stage)
                throw std::runtime_error("scripted failure at stage " + tag.stage);
            if (tag.stage == "3" && case_entry->contains("rank_attempts")) {
                const auto& attempts = (*case_entry)["rank_attempts"];
                const size_t idx = std::min(static_cast<size_t>(tag.attempt), attempts.size() - 1);
                return attempts[idx].get<std::string>();
            }
            if (case_entry->contains(tag.stage))
                return (*case_entry)[tag.stage].get<std::string>();
        }
        if (script.contains("defaults")) {
            auto it = script["defaults"].find(tag.stage);
            if (it != script["defaults"].end())
                return it->get<std::string>();
        }
        return default_stage_text(tag.stage);
    };
}

MockVlmClient::Handler scripted_handler_from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open mock script " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return scripted_handler_from_json(ss.str());
}

MockVlmClient::Handler default_mock_handler() {
    return [](const VlmRequest& req) -> std::string {
        const TagParts tag = parse_tag(req.tag);
        if (tag.stage != "3")
            return default_stage_text(tag.stage);
        // deterministic rank per case id
        std::uint64_t h = 1469598103934665603ull;
        for (char c : tag.case_id) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
        static const char* ranks[] = {"1min", "1maj", "2min", "2maj", "3"};
        return std::string("Considering both inspections step by step. Rank: ") + ranks[h % 5];
    };
}

HttpVlmClient::HttpVlmClient(const std::string& endpoint, std::string auth_env) : auth_env_(std::move(auth_env)) {
    const size_t scheme = endpoint.find("://");
    if (scheme == std::string::npos)
        throw std::invalid_argument("HttpVlmClient: endpoint must include a scheme, e.g. http://host:port/path");
    const size_t path_start = endpoint.find('/', scheme + 3);
    if (path_start == std::string::npos) {
        scheme_host_ = endpoint;
        path_ = "/";
    } else {
        scheme_host_ = endpoint.substr(0, path_start);
        path_ = endpoint.substr(path_start);
    }
}

std::string HttpVlmClient::complete(const VlmRequest& request) {
    json body;
    body["parts"] = json::array();
    for (const VlmPart& p : request.parts) {
        json part;
        part["type"] = (p.kind == VlmPart::Kind::Text) ? "text" : "image";
        if (p.kind == VlmPart::Kind::Text)
            part["text"] = p.content;
        else
            part["handle"] = p.content;
        body["parts"].push_back(std::move(part));
    }
    const std::string payload = body.dump();

    httplib::Client client(scheme_host_);
    client.set_connection_timeout(10, 0);
    client.set_read_timeout(60, 0);
    httplib::Headers headers;
    if (!auth_env_.empty()) {
        if (const char* key = std::getenv(auth_env_.c_str()))
            headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    std::string last_error;
    for (int attempt = 0; attempt < 3; ++attempt) {
        if (attempt > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(100 << attempt));
        auto res = client.Post(path_, headers, payload, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "http status " + std::to_string(res->status);
            continue;
        }
        const json reply = json::parse(res->body, nullptr, false);
        if (reply.is_discarded() || !reply.contains("text")) {
            last_error = "malformed response body";
            continue;
        }
        return reply["text"].get<std::string>();
    }
    throw std::runtime_error("HttpVlmClient: request failed after 3 attempts (" + last_error + ")");
}

} // namespace deleaker
