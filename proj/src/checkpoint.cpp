#include "fxdl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace fxdl {

namespace {

constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = kFnvOffset;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
    put_u32(out, std::bit_cast<std::uint32_t>(v));
}

struct Reader {
    const std::string& bytes;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > bytes.size()) throw CorruptFile("checkpoint: truncated file");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i]))
                 << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i]))
                 << (8 * i);
        pos += 8;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str(std::size_t n) {
        need(n);
        std::string s = bytes.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

void save_checkpoint(const ParamSet<float>& params, const std::filesystem::path& path) {
    std::string buf;
    buf += "FXDL";
    put_u32(buf, kCheckpointVersion);
    put_u32(buf, static_cast<std::uint32_t>(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::string& name = params.name(i);
        const Tensor<float>& t = params[i];
        put_u32(buf, static_cast<std::uint32_t>(name.size()));
        buf += name;
        put_u32(buf, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape) put_u64(buf, d);
        for (float v : t.v) put_f32(buf, v);
    }
    put_u64(buf, fnv1a(buf));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CorruptFile("checkpoint: cannot open for writing: " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw CorruptFile("checkpoint: write failed: " + path.string());
}

ParamSet<float> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorruptFile("checkpoint: cannot open: " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 4 + 4 + 4 + 8) throw CorruptFile("checkpoint: truncated file");

    std::string payload = bytes.substr(0, bytes.size() - 8);
    Reader tail{bytes, bytes.size() - 8};
    if (tail.u64() != fnv1a(payload)) throw CorruptFile("checkpoint: checksum mismatch");

    Reader r{payload};
    if (r.str(4) != "FXDL") throw CorruptFile("checkpoint: bad magic");
    std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw CorruptFile("checkpoint: unsupported version " + std::to_string(version));
    std::uint32_t count = r.u32();

    ParamSet<float> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.str(r.u32());
        std::uint32_t rank = r.u32();
        if (rank > 4) throw CorruptFile("checkpoint: implausible rank");
        std::vector<std::size_t> shape;
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            std::uint64_t e = r.u64();
            if (e == 0 || e > (1u << 24)) throw CorruptFile("checkpoint: implausible extent");
            shape.push_back(static_cast<std::size_t>(e));
            numel *= static_cast<std::size_t>(e);
        }
        Tensor<float> t(shape);
        for (std::size_t j = 0; j < numel; ++j) t.v[j] = r.f32();
        out.add(name, std::move(t));
    }
    if (r.pos != payload.size()) throw CorruptFile("checkpoint: trailing bytes");
    return out;
}

}  // namespace fxdl
