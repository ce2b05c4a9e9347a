#include "stsm/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace stsm {

namespace {

constexpr std::array<unsigned char, 8> kMagic = {'S', 'T', 'S', 'M', 'T', '5', 0x00, 0x01};

void put_u64_le(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64_le(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw FormatError("tensor file truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void save_tensor(const Tensor5& t, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open for writing: " + path.string());
    os.write(reinterpret_cast<const char*>(kMagic.data()), 8);
    const Dims5& d = t.dims();
    for (int i = 0; i < 5; ++i) put_u64_le(os, static_cast<std::uint64_t>(d[i]));
    for (index_t i = 0; i < t.size(); ++i) {
        put_u64_le(os, std::bit_cast<std::uint64_t>(t[i]));
    }
    if (!os) throw FormatError("write failed: " + path.string());
}

Tensor5 load_tensor(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open: " + path.string());
    std::array<unsigned char, 8> magic{};
    is.read(reinterpret_cast<char*>(magic.data()), 8);
    if (!is || magic != kMagic) throw FormatError("bad magic in tensor file: " + path.string());

    Dims5 d;
    d.n = static_cast<index_t>(get_u64_le(is));
    d.c = static_cast<index_t>(get_u64_le(is));
    d.t = static_cast<index_t>(get_u64_le(is));
    d.h = static_cast<index_t>(get_u64_le(is));
    d.w = static_cast<index_t>(get_u64_le(is));
    if (d.n < 1 || d.c < 1 || d.t < 1 || d.h < 1 || d.w < 1) {
        throw FormatError("tensor file has non-positive dims: " + path.string());
    }

    Tensor5 t;
    try {
        t = Tensor5(d, 0.0);
    } catch (const ShapeError& e) {
        throw FormatError(std::string("tensor file dims rejected: ") + e.what());
    }
    for (index_t i = 0; i < t.size(); ++i) {
        t[i] = std::bit_cast<double>(get_u64_le(is));
    }
    return t;
}

}  // namespace stsm
