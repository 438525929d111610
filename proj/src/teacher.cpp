#include "okapi/teacher.hpp"

#include <chrono>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "okapi/jsonio.hpp"
#include "okapi/errors.hpp"

using nlohmann::json;

namespace okapi {

namespace {

// "http://host:port/path" -> (base, path)
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
    auto scheme = endpoint.find("://");
    if (scheme == std::string::npos)
        throw ConfigError("endpoint must look like http://host:port/path, got " + endpoint);
    auto slash = endpoint.find('/', scheme + 3);
    if (slash == std::string::npos) return {endpoint, "/"};
    return {endpoint.substr(0, slash), endpoint.substr(slash)};
}

bool retryable_status(int status) {
    return status >= 500 || status == 408 || status == 429;
}

} // namespace

ExternalTeacher::ExternalTeacher(std::string endpoint, std::string model, int timeout_ms,
                                 int max_retries, int backoff_ms)
    : endpoint_(std::move(endpoint)), model_(std::move(model)), timeout_ms_(timeout_ms),
      max_retries_(max_retries), backoff_ms_(backoff_ms) {
    split_endpoint(endpoint_); // validate eagerly
}

std::string ExternalTeacher::chat(const std::vector<ChatMessage>& dialog) {
    auto [base, path] = split_endpoint(endpoint_);
    json req;
    req["model"] = model_;
    req["messages"] = json::array();
    for (const ChatMessage& m : dialog)
        req["messages"].push_back({{"role", m.role}, {"content", m.content}});
    const std::string body = json_line(req);

    std::string last_error;
    for (int attempt = 0; attempt <= max_retries_; ++attempt) {
        if (attempt > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms_ << (attempt - 1)));

        httplib::Client client(base);
        client.set_connection_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);
        client.set_read_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);

        auto res = client.Post(path, body, "application/json");
        if (!res) {
            last_error = "transport failure: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 200) {
            try {
                json reply = json::parse(res->body);
                return reply.at("content").get<std::string>();
            } catch (const json::exception& e) {
                throw ProtocolError("teacher reply is not {\"content\": ...}: " +
                                    std::string(e.what()));
            }
        }
        if (!retryable_status(res->status))
            throw TransportError("teacher returned status " + std::to_string(res->status) +
                                 " (not retryable)");
        last_error = "status " + std::to_string(res->status);
    }
    throw TransportError("teacher unreachable after " + std::to_string(max_retries_ + 1) +
                         " attempts: " + last_error);
}

} // namespace okapi
