#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace okapi {

struct ChatMessage {
    std::string role; // "user" or "assistant"
    std::string content;
};

// A teacher answers the next turn of a dialog. Implementations must be
// deterministic given the dialog (plus their own seed) so corpus production
// is replayable.
class TeacherOracle {
public:
    virtual ~TeacherOracle() = default;
    virtual std::string chat(const std::vector<ChatMessage>& dialog) = 0;
    virtual std::string name() const = 0;
};

// HTTP-backed teacher. Sends POST {model, messages:[{role, content}...]} as
// JSON to the endpoint and expects 200 with a JSON body {"content": "..."}.
// Retries transport failures, 5xx, 408 and 429 with exponential backoff;
// any other 4xx fails immediately.
class ExternalTeacher : public TeacherOracle {
public:
    ExternalTeacher(std::string endpoint, std::string model, int timeout_ms = 30000,
                    int max_retries = 3, int backoff_ms = 200);

    std::string chat(const std::vector<ChatMessage>& dialog) override;
    std::string name() const override { return "external:" + model_; }

private:
    std::string endpoint_;
    std::string model_;
    int timeout_ms_;
    int max_retries_;
    int backoff_ms_;
};

} // namespace okapi
