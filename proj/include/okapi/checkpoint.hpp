#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace okapi {

struct ModelConfig {
    int n_layers = 4;
    int d_model = 64;
    int n_heads = 4;
    int context_len = 256;
    int vocab_size = 260;
    uint64_t seed = 0;

    void validate() const; // d_model divisible by n_heads, context_len >= 16
    int head_dim() const { return d_model / n_heads; }
    bool operator==(const ModelConfig&) const = default;
};

enum class Role { base, sft, reward, ppo };

std::string role_to_string(Role r);
Role role_from_string(const std::string& s);

// Legal role transitions: base -> sft -> {reward, ppo}.
void check_role_transition(Role from, Role to);

struct Param {
    std::vector<int> shape;
    std::vector<double> data;
};

// Model parameters plus config and training provenance. Immutable once
// written; trainers operate on private copies.
struct PolicyCheckpoint {
    ModelConfig config;
    Role role = Role::base;
    std::map<std::string, Param> params;
    std::vector<std::string> provenance;

    const Param& param(const std::string& name) const;
    Param& param(const std::string& name);
    bool has_param(const std::string& name) const { return params.count(name) != 0; }
};

// Fresh base-role checkpoint; weights drawn per-name from config.seed so the
// result is independent of initialization order.
PolicyCheckpoint init_base_checkpoint(const ModelConfig& config);

// On-disk layout: a directory with manifest.txt plus one little-endian
// float64 file per parameter. Byte-identical across reruns.
void save_checkpoint(const PolicyCheckpoint& ckpt, const std::string& dir);
PolicyCheckpoint load_checkpoint(const std::string& dir);

// FNV-1a fingerprint over config, role, and all parameter bytes.
std::string checkpoint_fingerprint(const PolicyCheckpoint& ckpt);

} // namespace okapi
