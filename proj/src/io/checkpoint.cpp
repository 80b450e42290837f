#include "upix/io/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace upix {

namespace {

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        auto b = static_cast<const std::uint8_t*>(p);
        out.insert(out.end(), b, b + n);
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    std::vector<std::uint8_t> out;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

    std::span<const std::uint8_t> take(std::size_t n, const char* what) {
        if (data_.size() - pos_ < n) {
            throw FormatError(std::string("checkpoint truncated while reading ") + what + " at byte " +
                              std::to_string(pos_));
        }
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint32_t u32(const char* what) {
        auto s = take(4, what);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | s[static_cast<std::size_t>(i)];
        return v;
    }
    std::uint64_t u64(const char* what) {
        auto s = take(8, what);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | s[static_cast<std::size_t>(i)];
        return v;
    }
    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

std::uint32_t narrow(std::size_t v, const char* what) {
    if (v > 0xFFFFFFFFu) throw std::invalid_argument(std::string("checkpoint: ") + what + " exceeds 32 bits");
    return static_cast<std::uint32_t>(v);
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const ModelConfig& config, const ParamTree& params) {
    check_parameters(config, params);
    Writer w;
    w.bytes(checkpoint_magic, 4);
    w.u32(checkpoint_version);
    for (auto v : {config.layers, config.dim, config.heads, config.mlp_ratio, config.patch, config.channels,
                   config.vocab, config.cond_stride, config.rope_split[0], config.rope_split[1],
                   config.rope_split[2]}) {
        w.u32(narrow(v, "config field"));
    }
    w.f64(config.rope_base);
    w.u32(narrow(params.size(), "tensor count"));
    for (const auto& [name, tensor] : params) {
        w.u32(narrow(name.size(), "name length"));
        w.bytes(name.data(), name.size());
        w.u32(narrow(tensor.rank(), "rank"));
        for (auto d : tensor.shape()) w.u64(d);
        for (double v : tensor.data()) w.f64(v);
    }
    return std::move(w.out);
}

std::pair<ModelConfig, ParamTree> parse_checkpoint(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    auto magic = r.take(4, "magic");
    if (std::memcmp(magic.data(), checkpoint_magic, 4) != 0) {
        throw FormatError("checkpoint: bad magic (expected \"UPIX\")");
    }
    auto version = r.u32("version");
    if (version != checkpoint_version) {
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    }
    ModelConfig config;
    config.layers = r.u32("config");
    config.dim = r.u32("config");
    config.heads = r.u32("config");
    config.mlp_ratio = r.u32("config");
    config.patch = r.u32("config");
    config.channels = r.u32("config");
    config.vocab = r.u32("config");
    config.cond_stride = r.u32("config");
    for (auto& s : config.rope_split) s = r.u32("config");
    config.rope_base = r.f64("config");
    std::map<std::string, Shape> expected;
    try {
        expected = expected_shapes(config);
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("checkpoint: invalid embedded config: ") + e.what());
    }

    auto count = r.u32("tensor count");
    if (count != expected.size()) {
        throw FormatError("checkpoint: " + std::to_string(count) + " tensors, config implies " +
                          std::to_string(expected.size()));
    }
    ParamTree params;
    for (std::uint32_t i = 0; i < count; ++i) {
        auto len = r.u32("name length");
        auto name_bytes = r.take(len, "name");
        std::string name(name_bytes.begin(), name_bytes.end());
        auto it = expected.find(name);
        if (it == expected.end()) throw FormatError("checkpoint: unexpected tensor '" + name + "'");
        auto rank = r.u32("rank");
        if (rank != it->second.size()) {
            throw FormatError("checkpoint: tensor '" + name + "' has rank " + std::to_string(rank) + ", expected " +
                              std::to_string(it->second.size()));
        }
        Shape shape(rank);
        for (auto& d : shape) d = r.u64("dims");
        if (shape != it->second) {
            throw FormatError("checkpoint: tensor '" + name + "' has shape " + shape_str(shape) + ", expected " +
                              shape_str(it->second));
        }
        auto n = shape_numel(shape);
        if (r.remaining() / 8 < n) throw FormatError("checkpoint truncated in payload of '" + name + "'");
        std::vector<double> values(n);
        for (auto& v : values) v = r.f64("payload");
        if (!params.emplace(name, Tensor::from_data(shape, std::move(values))).second) {
            throw FormatError("checkpoint: duplicate tensor '" + name + "'");
        }
    }
    if (r.remaining() != 0) {
        throw FormatError("checkpoint: " + std::to_string(r.remaining()) + " trailing bytes");
    }
    return {config, std::move(params)};
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write to '" + path + "' failed");
}

void save_checkpoint(const std::string& path, const ModelConfig& config, const ParamTree& params) {
    write_file(path, serialize_checkpoint(config, params));
}

std::pair<ModelConfig, ParamTree> load_checkpoint(const std::string& path) {
    return parse_checkpoint(read_file(path));
}

}  // namespace upix
