#include "psn/image_io.hpp"

#include <cmath>
#include <fstream>
#include <vector>

namespace psn {

namespace {

struct ByteReader {
    std::vector<unsigned char> bytes;
    std::size_t pos = 0;
    std::string name;

    [[noreturn]] void fail(const std::string& what) const {
        throw DecodeError(name + ": " + what + " at byte offset " + std::to_string(pos));
    }
    int get() {
        if (pos >= bytes.size()) fail("unexpected end of file");
        return bytes[pos++];
    }
    void skip_ws_and_comments() {
        while (pos < bytes.size()) {
            const int c = bytes[pos];
            if (c == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
    }
    int read_int() {
        skip_ws_and_comments();
        if (pos >= bytes.size() || bytes[pos] < '0' || bytes[pos] > '9') fail("expected integer");
        long v = 0;
        while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
            v = v * 10 + (bytes[pos] - '0');
            if (v > 1 << 20) fail("integer out of range");
            ++pos;
        }
        return static_cast<int>(v);
    }
};

}  // namespace

Tensor read_image(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DecodeError("cannot open " + path.string());
    ByteReader r;
    r.name = path.string();
    r.bytes.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());

    const int m0 = r.get();
    const int m1 = r.get();
    if (m0 != 'P' || (m1 != '5' && m1 != '6')) {
        r.pos = 0;
        r.fail("not a binary PGM (P5) or PPM (P6) file");
    }
    const int channels = (m1 == '5') ? 1 : 3;
    const int w = r.read_int();
    const int h = r.read_int();
    const int maxval = r.read_int();
    if (w < 1 || h < 1) r.fail("bad image dimensions");
    if (maxval != 255) r.fail("unsupported maxval " + std::to_string(maxval) + " (only 255)");
    // single whitespace byte before payload
    const int ws = r.get();
    if (ws != ' ' && ws != '\t' && ws != '\r' && ws != '\n') r.fail("expected whitespace before pixel data");

    const std::size_t need = static_cast<std::size_t>(w) * h * channels;
    if (r.bytes.size() - r.pos < need) {
        r.pos = r.bytes.size();
        r.fail("truncated payload, need " + std::to_string(need) + " bytes");
    }
    Tensor out(1, channels, h, w);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int c = 0; c < channels; ++c)
                out.at(0, c, i, j) = static_cast<real>(r.bytes[r.pos + (static_cast<std::size_t>(i) * w + j) * channels + c]) / 255.0;
    return out;
}

void write_image(const Tensor& img, const std::filesystem::path& path) {
    if (img.n() != 1 || (img.c() != 1 && img.c() != 3))
        throw PreconditionError("write_image expects a 1xCxHxW tensor with C in {1,3}");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << (img.c() == 1 ? "P5" : "P6") << "\n" << img.w() << " " << img.h() << "\n255\n";
    std::vector<unsigned char> payload(static_cast<std::size_t>(img.w()) * img.h() * img.c());
    for (int i = 0; i < img.h(); ++i)
        for (int j = 0; j < img.w(); ++j)
            for (int c = 0; c < img.c(); ++c) {
                real v = img.at(0, c, i, j);
                v = std::clamp(v, 0.0, 1.0);
                payload[(static_cast<std::size_t>(i) * img.w() + j) * img.c() + c] =
                    static_cast<unsigned char>(std::floor(v * 255.0 + 0.5));
            }
    f.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
}

}  // namespace psn
