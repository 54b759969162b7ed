#include "grcert/idx.hpp"

#include <cstdint>
#include <fstream>
#include <vector>

namespace grcert {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

struct IdxFile {
    std::uint32_t magic = 0;
    std::vector<std::uint32_t> dims;
    std::vector<unsigned char> payload;
};

std::string hex32(std::uint32_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out = "0x";
    for (int shift = 28; shift >= 0; shift -= 4) out.push_back(digits[(v >> shift) & 0xf]);
    return out;
}

IdxFile readIdx(const std::string& path, std::uint32_t wantMagic) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    auto word = [&](std::size_t off) -> std::uint32_t {
        return (std::uint32_t(bytes[off]) << 24) | (std::uint32_t(bytes[off + 1]) << 16) |
               (std::uint32_t(bytes[off + 2]) << 8) | std::uint32_t(bytes[off + 3]);
    };
    if (bytes.size() < 4) throw Error(path + " is too short for an IDX header");
    IdxFile f;
    f.magic = word(0);
    if (f.magic != wantMagic) {
        throw Error(path + " has magic " + hex32(f.magic) + ", expected " +
                    hex32(wantMagic));
    }
    const std::size_t nDims = f.magic & 0xff;
    if (bytes.size() < 4 + 4 * nDims) throw Error(path + " is truncated in its header");
    std::size_t expected = 1;
    for (std::size_t d = 0; d < nDims; ++d) {
        f.dims.push_back(word(4 + 4 * d));
        expected *= f.dims.back();
    }
    f.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(4 + 4 * nDims),
                     bytes.end());
    if (f.payload.size() != expected) {
        throw Error(path + " payload has " + std::to_string(f.payload.size()) +
                    " bytes, dimensions require " + std::to_string(expected));
    }
    return f;
}

}  // namespace

Dataset loadIdx(const std::string& imagesPath, const std::string& labelsPath,
                const std::string& split) {
    IdxFile images = readIdx(imagesPath, kImagesMagic);
    IdxFile labels = readIdx(labelsPath, kLabelsMagic);
    if (images.dims[0] != labels.dims[0]) {
        throw Error("image count " + std::to_string(images.dims[0]) +
                    " does not match label count " + std::to_string(labels.dims[0]));
    }
    const std::size_t n = images.dims[0];
    const std::size_t pixels = images.payload.size() / (n == 0 ? 1 : n);

    Dataset ds;
    ds.split = split;
    ds.inputs.reserve(n);
    ds.labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Vector v(static_cast<Eigen::Index>(pixels));
        for (std::size_t p = 0; p < pixels; ++p) {
            v(static_cast<Eigen::Index>(p)) = images.payload[i * pixels + p] / 255.0;
        }
        ds.inputs.push_back(std::move(v));
        ds.labels.push_back(static_cast<int>(labels.payload[i]));
    }
    return ds;
}

}  // namespace grcert
