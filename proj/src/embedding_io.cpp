#include "aupt/embedding_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "aupt/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "AUE1 i/o assumes a little-endian host");

namespace aupt {
namespace {

constexpr char kMagic[4] = {'A', 'U', 'E', '1'};
constexpr std::uint32_t kVersion = 1;

void append_u32(std::string& out, std::uint32_t v) {
    out.append(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(const std::string& bytes, std::size_t offset) {
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + offset, 4);
    return v;
}

} // namespace

void atomic_write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for write: " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed: " + path.string() + " (" + ec.message() + ")");
}

void quantize_to_f32(Tensor& t) {
    for (auto& v : t.values()) v = static_cast<double>(static_cast<float>(v));
}

void write_embeddings(const Tensor& matrix, const std::filesystem::path& path) {
    if (matrix.rank() != 2) {
        throw ShapeError("write_embeddings: expected matrix, got " + matrix.shape_str());
    }
    if (!matrix.all_finite()) {
        throw DomainError("write_embeddings: refusing to store non-finite values");
    }
    std::string bytes;
    bytes.reserve(kEmbeddingHeaderBytes + matrix.size() * 4);
    bytes.append(kMagic, 4);
    append_u32(bytes, kVersion);
    append_u32(bytes, static_cast<std::uint32_t>(matrix.dim(0)));
    append_u32(bytes, static_cast<std::uint32_t>(matrix.dim(1)));
    bytes.append(8, '\0');
    for (double v : matrix.values()) {
        float f = static_cast<float>(v);
        bytes.append(reinterpret_cast<const char*>(&f), 4);
    }
    atomic_write_file(path, bytes);
}

Tensor read_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < kEmbeddingHeaderBytes) {
        throw FormatError(path.string() + ": truncated header at byte offset " +
                          std::to_string(bytes.size()));
    }
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError(path.string() + ": bad magic at byte offset 0");
    }
    if (read_u32(bytes, 4) != kVersion) {
        throw FormatError(path.string() + ": unsupported version at byte offset 4");
    }
    std::size_t rows = read_u32(bytes, 8);
    std::size_t cols = read_u32(bytes, 12);
    std::size_t expect = kEmbeddingHeaderBytes + rows * cols * 4;
    if (bytes.size() != expect) {
        throw FormatError(path.string() + ": payload ends at byte offset " +
                          std::to_string(bytes.size()) + ", expected " + std::to_string(expect));
    }
    Tensor out = Tensor::zeros({rows, cols});
    for (std::size_t i = 0; i < rows * cols; ++i) {
        float f;
        std::memcpy(&f, bytes.data() + kEmbeddingHeaderBytes + i * 4, 4);
        out[i] = static_cast<double>(f);
    }
    if (!out.all_finite()) {
        throw FormatError(path.string() + ": non-finite payload value");
    }
    return out;
}

} // namespace aupt
