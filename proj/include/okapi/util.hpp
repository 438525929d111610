#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace okapi {

// Deterministic RNG with self-contained distributions, so identical seeds
// reproduce identical streams independent of the standard library's
// distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller, no internal cache.
    double normal();

    // [0, n)
    int uniform_int(int n);

    // Derive a sub-seed from (seed, tag); splitmix64-style mixing.
    static uint64_t mix(uint64_t a, uint64_t b);
    static uint64_t hash_str(const std::string& s); // FNV-1a 64

private:
    std::mt19937_64 gen_;
};

// FNV-1a 64 over raw bytes; used for content fingerprints in manifests.
uint64_t fnv1a64(const void* data, size_t len);
uint64_t fnv1a64(const std::string& s);
std::string hex64(uint64_t v);

std::string to_lower(const std::string& s);
std::string trim(const std::string& s);
std::vector<std::string> split_lines(const std::string& s);
std::vector<std::string> split_ws(const std::string& s); // whitespace tokens
bool starts_with(const std::string& s, const std::string& prefix);
std::string replace_all(std::string s, const std::string& from, const std::string& to);

// Shortest round-trippable decimal rendering of a double.
std::string format_double(double v);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

} // namespace okapi
