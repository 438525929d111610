#pragma once

#include <string>

#include "json.hpp"

namespace okapi {

// Sampled model text is raw bytes and not always valid UTF-8; serialize with
// lossy U+FFFD replacement instead of throwing. Replacement is deterministic,
// so reruns still produce identical files.
inline std::string json_line(const nlohmann::json& j) {
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

inline std::string json_pretty(const nlohmann::json& j) {
    return j.dump(2, ' ', false, nlohmann::json::error_handler_t::replace);
}

} // namespace okapi
