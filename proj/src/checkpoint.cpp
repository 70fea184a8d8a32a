#include "psn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "psn/image_io.hpp"

namespace psn {

namespace {

void put_u32(std::ofstream& f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

struct Reader {
    std::ifstream f;
    std::string name;
    std::size_t pos = 0;

    [[noreturn]] void fail(const std::string& what) {
        throw DecodeError(name + ": " + what + " at byte offset " + std::to_string(pos));
    }
    void read(void* dst, std::size_t n) {
        f.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(f.gcount()) != n) fail("truncated file");
        pos += n;
    }
    std::uint32_t u32() {
        unsigned char b[4];
        read(b, 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }
    std::string str() {
        const std::uint32_t len = u32();
        if (len > (1u << 24)) fail("string length overflow");
        std::string s(len, '\0');
        if (len) read(s.data(), len);
        return s;
    }
};

}  // namespace

void save_checkpoint(const PsnModel& model, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f.write("PSN1", 4);
    put_u32(f, kCheckpointVersion);
    const std::string cfg = model.config.to_text();
    put_u32(f, static_cast<std::uint32_t>(cfg.size()));
    f.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    put_u32(f, static_cast<std::uint32_t>(model.params.values.size()));
    for (const auto& [name, t] : model.params.values) {
        put_u32(f, static_cast<std::uint32_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(f, 4);
        for (int d : t.dims()) put_u32(f, static_cast<std::uint32_t>(d));
        std::vector<float> buf(t.size());
        for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(t.vec()[i]);
        static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian host");
        f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    }
    if (!f) throw std::runtime_error("write failed for " + path.string());
}

PsnModel load_checkpoint(const std::filesystem::path& path) {
    Reader r;
    r.name = path.string();
    r.f.open(path, std::ios::binary);
    if (!r.f) throw DecodeError("cannot open " + path.string());
    char magic[4];
    r.read(magic, 4);
    if (std::memcmp(magic, "PSN1", 4) != 0) {
        r.pos = 0;
        r.fail("bad magic");
    }
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        r.fail("unsupported checkpoint version " + std::to_string(version));
    const std::string cfg_text = r.str();
    PsnModel model = init_psn_model(PsnConfig::from_text(cfg_text), 0);
    const std::uint32_t count = r.u32();
    if (count != model.params.values.size())
        r.fail("tensor count mismatch: file has " + std::to_string(count) + ", model expects " +
               std::to_string(model.params.values.size()));
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.str();
        auto it = model.params.values.find(name);
        if (it == model.params.values.end()) r.fail("unknown tensor name " + name);
        const std::uint32_t rank = r.u32();
        if (rank != 4) r.fail("unsupported tensor rank " + std::to_string(rank));
        std::array<int, 4> dims{};
        for (auto& d : dims) {
            const std::uint32_t v = r.u32();
            if (v > (1u << 20)) r.fail("dim overflow");
            d = static_cast<int>(v);
        }
        if (dims != it->second.dims()) r.fail("shape mismatch for tensor " + name);
        std::vector<float> buf(it->second.size());
        r.read(buf.data(), buf.size() * 4);
        for (std::size_t j = 0; j < buf.size(); ++j) it->second.vec()[j] = static_cast<real>(buf[j]);
    }
    return model;
}

}  // namespace psn
