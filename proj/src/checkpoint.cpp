#include "aupt/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "aupt/embedding_io.hpp"
#include "aupt/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint i/o assumes a little-endian host");

namespace aupt {
namespace {

constexpr char kMagic[4] = {'A', 'U', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    out.append(reinterpret_cast<const char*>(&v), 4);
}

void put_tensor(std::string& out, const std::string& name, const Tensor& t) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    out.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(double));
}

struct Reader {
    const std::string& bytes;
    std::size_t pos = 0;
    std::string path;

    std::uint32_t u32() {
        need(4);
        std::uint32_t v;
        std::memcpy(&v, bytes.data() + pos, 4);
        pos += 4;
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s = bytes.substr(pos, n);
        pos += n;
        return s;
    }
    Tensor tensor_body() {
        std::uint32_t rank = u32();
        if (rank == 0 || rank > 3) throw FormatError(path + ": bad tensor rank");
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = u32();
        std::size_t n = shape_product(shape);
        need(n * sizeof(double));
        std::vector<double> data(n);
        std::memcpy(data.data(), bytes.data() + pos, n * sizeof(double));
        pos += n * sizeof(double);
        return Tensor(std::move(shape), std::move(data));
    }
    void need(std::size_t n) {
        if (pos + n > bytes.size()) {
            throw FormatError(path + ": truncated at byte offset " + std::to_string(pos));
        }
    }
};

} // namespace

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
    c.params.validate();
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(c.params.dim));
    put_u32(out, static_cast<std::uint32_t>(c.params.prompt_count));
    put_u32(out, static_cast<std::uint32_t>(c.params.class_count));
    put_u32(out, static_cast<std::uint32_t>(c.params.kernel_width));
    put_u32(out, static_cast<std::uint32_t>(c.params.hidden));
    put_u32(out, static_cast<std::uint32_t>(c.params.adapter.act));
    put_u32(out, static_cast<std::uint32_t>(c.params.kind));

    auto names = c.params.trainable_names();
    auto tensors = c.params.trainable();
    put_u32(out, static_cast<std::uint32_t>(names.size() + 2));
    for (std::size_t i = 0; i < names.size(); ++i) put_tensor(out, names[i], *tensors[i]);
    put_tensor(out, "prompts.raw", c.raw_prompts);
    put_tensor(out, "prompts.adapted", c.adapted_prompts);
    atomic_write_file(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r{bytes, 0, path.string()};

    r.need(8);
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError(path.string() + ": bad magic at byte offset 0");
    }
    r.pos = 4;
    if (r.u32() != kVersion) {
        throw FormatError(path.string() + ": unsupported version at byte offset 4");
    }

    Checkpoint c;
    c.params.dim = r.u32();
    c.params.prompt_count = r.u32();
    c.params.class_count = r.u32();
    c.params.kernel_width = r.u32();
    c.params.hidden = r.u32();
    c.params.adapter.act = static_cast<Activation>(r.u32());
    c.params.kind = static_cast<ClassifierKind>(r.u32());

    std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.str(r.u32());
        Tensor t = r.tensor_body();
        if (name == "adapter.w1") c.params.adapter.w1 = std::move(t);
        else if (name == "adapter.b1") c.params.adapter.b1 = std::move(t);
        else if (name == "adapter.w2") c.params.adapter.w2 = std::move(t);
        else if (name == "adapter.b2") c.params.adapter.b2 = std::move(t);
        else if (name == "temporal.kernel") c.params.temporal.kernel = std::move(t);
        else if (name == "temporal.bias") c.params.temporal.bias = std::move(t);
        else if (name == "classifier.w1") c.params.mlp.w1 = std::move(t);
        else if (name == "classifier.b1") c.params.mlp.b1 = std::move(t);
        else if (name == "classifier.w2") c.params.mlp.w2 = std::move(t);
        else if (name == "classifier.b2") c.params.mlp.b2 = std::move(t);
        else if (name == "head.m") c.params.head.m = std::move(t);
        else if (name == "head.b") c.params.head.b = std::move(t);
        else if (name == "prompts.raw") c.raw_prompts = std::move(t);
        else if (name == "prompts.adapted") c.adapted_prompts = std::move(t);
        else throw FormatError(path.string() + ": unknown tensor '" + name + "'");
    }
    if (r.pos != bytes.size()) {
        throw FormatError(path.string() + ": trailing bytes at offset " + std::to_string(r.pos));
    }
    c.params.mlp.act = Activation::kRelu;
    c.params.validate();
    if (c.raw_prompts.shape() != std::vector<std::size_t>{c.params.prompt_count, c.params.dim} ||
        !c.raw_prompts.same_shape(c.adapted_prompts)) {
        throw FormatError(path.string() + ": prompt matrices do not match model dims");
    }
    return c;
}

} // namespace aupt
