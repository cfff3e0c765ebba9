#pragma once

// Binary checkpoint container: named 64-bit little-endian float arrays with a
// shape table and a format-version header. Round trips are bit-exact.
//
// Layout (all integers little-endian):
//   magic   "GCKP" (4 bytes)
//   version u32
//   count   u32
//   entries, each:
//     name_len u32, name bytes
//     rank     u32, dims u64[rank]
//     data     f64[product(dims)]

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "gapcast/tensor.hpp"

namespace gapcast {

inline constexpr uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f64(std::string& out, double d) {
    uint64_t bits;
    std::memcpy(&bits, &d, sizeof(bits));
    put_u64(out, bits);
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;
    const std::string& path;

    void need(size_t n) {
        if (pos + n > buf.size())
            throw std::runtime_error(path + ": truncated checkpoint");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
        return v;
    }
    double f64() {
        uint64_t bits = u64();
        double d;
        std::memcpy(&d, &bits, sizeof(d));
        return d;
    }
    std::string str(size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace detail

inline void save_checkpoint(const std::string& path,
                            const std::vector<std::pair<std::string, Tensor>>& entries) {
    std::string out;
    out += "GCKP";
    detail::put_u32(out, kCheckpointVersion);
    detail::put_u32(out, static_cast<uint32_t>(entries.size()));
    for (const auto& [name, t] : entries) {
        detail::put_u32(out, static_cast<uint32_t>(name.size()));
        out += name;
        detail::put_u32(out, static_cast<uint32_t>(t.shape().size()));
        for (int64_t d : t.shape()) detail::put_u64(out, static_cast<uint64_t>(d));
        for (int64_t i = 0; i < t.numel(); ++i) detail::put_f64(out, t.at(i));
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("failed writing checkpoint: " + path);
}

inline std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    detail::Reader r{buf, 0, path};
    if (r.str(4) != "GCKP") throw std::runtime_error(path + ": not a checkpoint file");
    uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw std::runtime_error(path + ": checkpoint version " + std::to_string(version) +
                                 " is not supported (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
    uint32_t count = r.u32();
    std::map<std::string, Tensor> out;
    for (uint32_t e = 0; e < count; ++e) {
        std::string name = r.str(r.u32());
        uint32_t rank = r.u32();
        Shape shape;
        for (uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<int64_t>(r.u64()));
        std::vector<double> vals(static_cast<size_t>(shape_numel(shape)));
        for (double& v : vals) v = r.f64();
        out.emplace(name, Tensor(shape, std::move(vals)));
    }
    return out;
}

}  // namespace gapcast
