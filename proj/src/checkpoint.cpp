#include "okapi/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "okapi/errors.hpp"
#include "okapi/util.hpp"

namespace fs = std::filesystem;

namespace okapi {

void ModelConfig::validate() const {
    if (n_layers <= 0 || d_model <= 0 || n_heads <= 0 || vocab_size <= 0)
        throw ConfigError("ModelConfig: all dimensions must be positive");
    if (d_model % n_heads != 0)
        throw ConfigError("ModelConfig: d_model " + std::to_string(d_model) +
                          " not divisible by n_heads " + std::to_string(n_heads));
    if (context_len < 16)
        throw ConfigError("ModelConfig: context_len must be >= 16, got " +
                          std::to_string(context_len));
}

std::string role_to_string(Role r) {
    switch (r) {
    case Role::base: return "base";
    case Role::sft: return "sft";
    case Role::reward: return "reward";
    case Role::ppo: return "ppo";
    }
    throw Error("unknown role");
}

Role role_from_string(const std::string& s) {
    if (s == "base") return Role::base;
    if (s == "sft") return Role::sft;
    if (s == "reward") return Role::reward;
    if (s == "ppo") return Role::ppo;
    throw ParseError("unknown role: " + s);
}

void check_role_transition(Role from, Role to) {
    bool ok = (from == Role::base && to == Role::sft) ||
              (from == Role::sft && (to == Role::reward || to == Role::ppo));
    if (!ok)
        throw TrainError("illegal role transition " + role_to_string(from) + " -> " +
                         role_to_string(to));
}

const Param& PolicyCheckpoint::param(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw Error("checkpoint has no parameter '" + name + "'");
    return it->second;
}

Param& PolicyCheckpoint::param(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw Error("checkpoint has no parameter '" + name + "'");
    return it->second;
}

namespace {

Param init_param(uint64_t seed, const std::string& name, std::vector<int> shape, double std_dev,
                 double fill = 0.0) {
    Param p;
    p.shape = std::move(shape);
    size_t n = 1;
    for (int d : p.shape) n *= static_cast<size_t>(d);
    p.data.assign(n, fill);
    if (std_dev > 0.0) {
        Rng rng(Rng::mix(seed, Rng::hash_str(name)));
        for (auto& v : p.data) v = rng.normal() * std_dev;
    }
    return p;
}

} // namespace

PolicyCheckpoint init_base_checkpoint(const ModelConfig& config) {
    config.validate();
    PolicyCheckpoint ckpt;
    ckpt.config = config;
    ckpt.role = Role::base;
    const int d = config.d_model;
    const int h = 4 * d;
    const uint64_t s = config.seed;
    const double w = 0.02;

    ckpt.params["tok_emb"] = init_param(s, "tok_emb", {config.vocab_size, d}, w);
    ckpt.params["pos_emb"] = init_param(s, "pos_emb", {config.context_len, d}, w);
    for (int i = 0; i < config.n_layers; ++i) {
        std::string pfx = "layer" + std::to_string(i) + ".";
        ckpt.params[pfx + "ln1.gain"] = init_param(s, pfx + "ln1.gain", {d}, 0.0, 1.0);
        ckpt.params[pfx + "ln1.bias"] = init_param(s, pfx + "ln1.bias", {d}, 0.0);
        for (const char* m : {"wq", "wk", "wv", "wo"})
            ckpt.params[pfx + "attn." + m] = init_param(s, pfx + "attn." + m, {d, d}, w);
        for (const char* m : {"bq", "bk", "bv", "bo"})
            ckpt.params[pfx + "attn." + m] = init_param(s, pfx + "attn." + m, {d}, 0.0);
        ckpt.params[pfx + "ln2.gain"] = init_param(s, pfx + "ln2.gain", {d}, 0.0, 1.0);
        ckpt.params[pfx + "ln2.bias"] = init_param(s, pfx + "ln2.bias", {d}, 0.0);
        ckpt.params[pfx + "mlp.w1"] = init_param(s, pfx + "mlp.w1", {d, h}, w);
        ckpt.params[pfx + "mlp.b1"] = init_param(s, pfx + "mlp.b1", {h}, 0.0);
        ckpt.params[pfx + "mlp.w2"] = init_param(s, pfx + "mlp.w2", {h, d}, w);
        ckpt.params[pfx + "mlp.b2"] = init_param(s, pfx + "mlp.b2", {d}, 0.0);
    }
    ckpt.params["final_ln.gain"] = init_param(s, "final_ln.gain", {d}, 0.0, 1.0);
    ckpt.params["final_ln.bias"] = init_param(s, "final_ln.bias", {d}, 0.0);
    ckpt.params["lm_head.w"] = init_param(s, "lm_head.w", {d, config.vocab_size}, w);
    ckpt.params["lm_head.b"] = init_param(s, "lm_head.b", {config.vocab_size}, 0.0);
    ckpt.provenance.push_back("stage=init seed=" + std::to_string(s));
    return ckpt;
}

namespace {

void write_f64_file(const std::string& path, const std::vector<double>& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    static_assert(sizeof(double) == 8);
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size() * 8));
    } else {
        for (double v : data) {
            uint64_t bits;
            std::memcpy(&bits, &v, 8);
            char buf[8];
            for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
            out.write(buf, 8);
        }
    }
    if (!out) throw Error("write failed: " + path);
}

std::vector<double> read_f64_file(const std::string& path, size_t expect) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::vector<double> data(expect);
    if constexpr (std::endian::native == std::endian::little) {
        in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(expect * 8));
    } else {
        for (size_t k = 0; k < expect; ++k) {
            char buf[8];
            in.read(buf, 8);
            uint64_t bits = 0;
            for (int i = 0; i < 8; ++i)
                bits |= static_cast<uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
            std::memcpy(&data[k], &bits, 8);
        }
    }
    if (!in) throw ParseError("short read or failure: " + path);
    char extra;
    if (in.read(&extra, 1)) throw ParseError("trailing bytes in " + path);
    return data;
}

} // namespace

void save_checkpoint(const PolicyCheckpoint& ckpt, const std::string& dir) {
    ckpt.config.validate();
    fs::create_directories(dir);
    std::ostringstream m;
    m << "format=okapi-checkpoint-v1\n";
    m << "layout=little-endian float64, row-major, contiguous from byte offset 0\n";
    m << "role=" << role_to_string(ckpt.role) << "\n";
    m << "config.n_layers=" << ckpt.config.n_layers << "\n";
    m << "config.d_model=" << ckpt.config.d_model << "\n";
    m << "config.n_heads=" << ckpt.config.n_heads << "\n";
    m << "config.context_len=" << ckpt.config.context_len << "\n";
    m << "config.vocab_size=" << ckpt.config.vocab_size << "\n";
    m << "config.seed=" << ckpt.config.seed << "\n";
    for (size_t i = 0; i < ckpt.provenance.size(); ++i)
        m << "provenance." << i << "=" << ckpt.provenance[i] << "\n";
    for (const auto& [name, p] : ckpt.params) {
        m << "param=" << name << " shape=";
        for (size_t i = 0; i < p.shape.size(); ++i) m << (i ? "x" : "") << p.shape[i];
        m << " file=" << name << ".f64\n";
        write_f64_file((fs::path(dir) / (name + ".f64")).string(), p.data);
    }
    write_file((fs::path(dir) / "manifest.txt").string(), m.str());
}

PolicyCheckpoint load_checkpoint(const std::string& dir) {
    std::string manifest = read_file((fs::path(dir) / "manifest.txt").string());
    PolicyCheckpoint ckpt;
    struct Entry {
        std::string name;
        std::vector<int> shape;
        std::string file;
    };
    std::vector<Entry> entries;
    for (const std::string& raw : split_lines(manifest)) {
        std::string line = trim(raw);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("manifest line without '=': " + line);
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        if (key == "format") {
            if (val != "okapi-checkpoint-v1") throw ParseError("unknown checkpoint format: " + val);
        } else if (key == "layout") {
            // informational
        } else if (key == "role") {
            ckpt.role = role_from_string(val);
        } else if (key == "config.n_layers") {
            ckpt.config.n_layers = std::stoi(val);
        } else if (key == "config.d_model") {
            ckpt.config.d_model = std::stoi(val);
        } else if (key == "config.n_heads") {
            ckpt.config.n_heads = std::stoi(val);
        } else if (key == "config.context_len") {
            ckpt.config.context_len = std::stoi(val);
        } else if (key == "config.vocab_size") {
            ckpt.config.vocab_size = std::stoi(val);
        } else if (key == "config.seed") {
            ckpt.config.seed = std::stoull(val);
        } else if (starts_with(key, "provenance.")) {
            ckpt.provenance.push_back(val);
        } else if (key == "param") {
            Entry e;
            std::istringstream ss(val);
            std::string tok;
            ss >> e.name;
            while (ss >> tok) {
                if (starts_with(tok, "shape=")) {
                    std::string dims = tok.substr(6);
                    size_t pos = 0;
                    while (pos < dims.size()) {
                        size_t x = dims.find('x', pos);
                        std::string d = x == std::string::npos ? dims.substr(pos)
                                                               : dims.substr(pos, x - pos);
                        e.shape.push_back(std::stoi(d));
                        if (x == std::string::npos) break;
                        pos = x + 1;
                    }
                } else if (starts_with(tok, "file=")) {
                    e.file = tok.substr(5);
                }
            }
            if (e.name.empty() || e.shape.empty() || e.file.empty())
                throw ParseError("bad param manifest line: " + line);
            entries.push_back(std::move(e));
        } else {
            throw ParseError("unknown manifest key: " + key);
        }
    }
    ckpt.config.validate();
    for (const auto& e : entries) {
        size_t n = 1;
        for (int d : e.shape) n *= static_cast<size_t>(d);
        Param p;
        p.shape = e.shape;
        p.data = read_f64_file((fs::path(dir) / e.file).string(), n);
        ckpt.params[e.name] = std::move(p);
    }
    if (ckpt.params.empty()) throw ParseError("checkpoint has no parameters: " + dir);
    return ckpt;
}

std::string checkpoint_fingerprint(const PolicyCheckpoint& ckpt) {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mixin = [&h](const void* p, size_t n) { h = fnv1a64(p, n) ^ (h * 0x100000001b3ULL); };
    std::string head = role_to_string(ckpt.role) + "|" + std::to_string(ckpt.config.n_layers) +
                       "|" + std::to_string(ckpt.config.d_model) + "|" +
                       std::to_string(ckpt.config.n_heads) + "|" +
                       std::to_string(ckpt.config.context_len) + "|" +
                       std::to_string(ckpt.config.vocab_size) + "|" +
                       std::to_string(ckpt.config.seed);
    mixin(head.data(), head.size());
    for (const auto& [name, p] : ckpt.params) {
        mixin(name.data(), name.size());
        mixin(p.data.data(), p.data.size() * sizeof(double));
    }
    return hex64(h);
}

} // namespace okapi
