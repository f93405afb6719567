#include "fednlp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "fednlp/errors.hpp"

namespace fednlp {

namespace {

constexpr char kMagic[8] = {'F', 'N', 'L', 'P', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

struct Reader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > bytes.size()) throw DataError("checkpoint truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
        pos += n;
        return s;
    }
};

}  // namespace

std::vector<std::uint8_t> serialize_param_set(const ParamSet& params) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + sizeof(kMagic));
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, tensor] : params) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
        for (std::int64_t d : tensor.shape()) put_u64(out, static_cast<std::uint64_t>(d));
        for (std::int64_t i = 0; i < tensor.numel(); ++i) {
            put_u64(out, std::bit_cast<std::uint64_t>(tensor[i]));
        }
    }
    return out;
}

ParamSet deserialize_param_set(const std::vector<std::uint8_t>& bytes) {
    Reader r{bytes};
    r.need(sizeof(kMagic));
    if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw DataError("checkpoint magic mismatch");
    }
    r.pos = sizeof(kMagic);
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint32_t count = r.u32();
    ParamSet params;
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::uint32_t name_len = r.u32();
        std::string name = r.str(name_len);
        const std::uint32_t rank = r.u32();
        std::vector<std::int64_t> shape(rank);
        std::int64_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            shape[d] = static_cast<std::int64_t>(r.u64());
            numel *= shape[d];
        }
        std::vector<double> data(static_cast<std::size_t>(numel));
        for (std::int64_t i = 0; i < numel; ++i) {
            data[static_cast<std::size_t>(i)] = std::bit_cast<double>(r.u64());
        }
        params.add(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    if (r.pos != bytes.size()) throw DataError("checkpoint has trailing bytes");
    return params;
}

void save_param_set(const std::string& path, const ParamSet& params) {
    const auto bytes = serialize_param_set(params);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing " + path);
}

ParamSet load_param_set(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return deserialize_param_set(bytes);
}

std::string digest_hex(const std::vector<std::uint8_t>& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[h & 0xF];
        h >>= 4;
    }
    return s;
}

std::string param_set_digest(const ParamSet& params) {
    return digest_hex(serialize_param_set(params));
}

}  // namespace fednlp
