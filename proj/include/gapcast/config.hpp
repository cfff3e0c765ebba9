#pragma once

// Flat key=value run configuration. Every key has a default; unknown keys are
// rejected. The serialized form is the resolved-config snapshot written next
// to run outputs, and it parses back to an identical configuration.

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gapcast/trainer.hpp"

namespace gapcast {

struct RunConfig {
    std::string data;         // input CSV path
    std::string out_dir = "run_out";
    int64_t n = 9;            // history length
    int64_t k = 3;            // forecast horizon
    int64_t stride = 0;       // window stride; 0 means non-overlapping (n + k)
    double missing_p = 0.0;   // extra MCAR missingness applied before split
    TrainConfig train;

    int64_t effective_stride() const { return stride > 0 ? stride : n + k; }
};

namespace detail {

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline int64_t parse_i64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        int64_t r = std::stoll(v, &pos);
        if (pos == v.size()) return r;
    } catch (const std::exception&) {
    }
    throw std::runtime_error("config: key \"" + key + "\" expects an integer, got \"" + v + "\"");
}

inline double parse_f64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double r = std::stod(v, &pos);
        if (pos == v.size()) return r;
    } catch (const std::exception&) {
    }
    throw std::runtime_error("config: key \"" + key + "\" expects a number, got \"" + v + "\"");
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::runtime_error("config: key \"" + key + "\" expects true/false, got \"" + v + "\"");
}

}  // namespace detail

inline void config_set(RunConfig& c, const std::string& key, const std::string& value) {
    using detail::parse_bool;
    using detail::parse_f64;
    using detail::parse_i64;
    if (key == "data")
        c.data = value;
    else if (key == "out_dir")
        c.out_dir = value;
    else if (key == "n")
        c.n = parse_i64(key, value);
    else if (key == "k")
        c.k = parse_i64(key, value);
    else if (key == "stride")
        c.stride = parse_i64(key, value);
    else if (key == "missing_p")
        c.missing_p = parse_f64(key, value);
    else if (key == "k_prime")
        c.train.k_prime = parse_i64(key, value);
    else if (key == "lambda")
        c.train.lambda = parse_f64(key, value);
    else if (key == "memory_slots")
        c.train.memory_slots = parse_i64(key, value);
    else if (key == "memory_dim")
        c.train.memory_dim = parse_i64(key, value);
    else if (key == "hidden")
        c.train.hidden = parse_i64(key, value);
    else if (key == "learning_rate")
        c.train.learning_rate = parse_f64(key, value);
    else if (key == "clip_c")
        c.train.clip_c = parse_f64(key, value);
    else if (key == "critic_steps")
        c.train.critic_steps_per_gen = parse_i64(key, value);
    else if (key == "critic_batch")
        c.train.critic_batch = parse_i64(key, value);
    else if (key == "epochs")
        c.train.epochs = parse_i64(key, value);
    else if (key == "batch_size")
        c.train.batch_size = parse_i64(key, value);
    else if (key == "snippet_count")
        c.train.snippet_count = parse_i64(key, value);
    else if (key == "grad_clip_norm")
        c.train.grad_clip_norm = parse_f64(key, value);
    else if (key == "use_memory")
        c.train.use_memory = parse_bool(key, value);
    else if (key == "seed")
        c.train.seed = static_cast<uint64_t>(parse_i64(key, value));
    else
        throw std::runtime_error("config: unknown key \"" + key + "\"");
}

inline RunConfig parse_config_text(const std::string& text, RunConfig base = {}) {
    std::istringstream in(text);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: line " + std::to_string(line_no) +
                                     " is not key=value: \"" + t + "\"");
        config_set(base, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
    }
    return base;
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_config_text(text, base);
}

inline std::string serialize_config(const RunConfig& c) {
    using detail::fmt_double;
    std::ostringstream out;
    out << "data=" << c.data << '\n';
    out << "out_dir=" << c.out_dir << '\n';
    out << "n=" << c.n << '\n';
    out << "k=" << c.k << '\n';
    out << "stride=" << c.stride << '\n';
    out << "missing_p=" << fmt_double(c.missing_p) << '\n';
    out << "k_prime=" << c.train.k_prime << '\n';
    out << "lambda=" << fmt_double(c.train.lambda) << '\n';
    out << "memory_slots=" << c.train.memory_slots << '\n';
    out << "memory_dim=" << c.train.memory_dim << '\n';
    out << "hidden=" << c.train.hidden << '\n';
    out << "learning_rate=" << fmt_double(c.train.learning_rate) << '\n';
    out << "clip_c=" << fmt_double(c.train.clip_c) << '\n';
    out << "critic_steps=" << c.train.critic_steps_per_gen << '\n';
    out << "critic_batch=" << c.train.critic_batch << '\n';
    out << "epochs=" << c.train.epochs << '\n';
    out << "batch_size=" << c.train.batch_size << '\n';
    out << "snippet_count=" << c.train.snippet_count << '\n';
    out << "grad_clip_norm=" << fmt_double(c.train.grad_clip_norm) << '\n';
    out << "use_memory=" << (c.train.use_memory ? "true" : "false") << '\n';
    out << "seed=" << c.train.seed << '\n';
    return out.str();
}

}  // namespace gapcast
