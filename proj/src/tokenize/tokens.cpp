#include "upix/tokenize/tokens.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "upix/core/ops.hpp"

namespace upix {

std::string_view kind_name(SegmentKind kind) {
    switch (kind) {
        case SegmentKind::condition:
            return "condition";
        case SegmentKind::text:
            return "text";
        case SegmentKind::timestep:
            return "timestep";
        case SegmentKind::generation:
            return "generation";
    }
    return "?";
}

std::size_t TokenSequence::count(SegmentKind kind) const {
    std::size_t n = 0;
    for (auto k : kinds) n += k == kind ? 1 : 0;
    return n;
}

std::pair<std::size_t, std::size_t> TokenSequence::block(SegmentKind kind) const {
    std::size_t first = kinds.size();
    std::size_t last = 0;
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        if (kinds[i] == kind) {
            first = std::min(first, i);
            last = i + 1;
        }
    }
    if (last == 0) return {0, 0};
    return {first, last};
}

void validate_sequence(const TokenSequence& seq) {
    if (seq.positions.size() != seq.kinds.size()) {
        throw std::invalid_argument("token sequence: positions and kinds differ in length");
    }
    if (!seq.empty() && (!seq.embeddings.defined() || seq.embeddings.rank() != 2 ||
                         seq.embeddings.dim(0) != seq.size())) {
        throw std::invalid_argument("token sequence: embeddings must be L x D");
    }
    if (seq.text_ids.size() != seq.count(SegmentKind::text)) {
        throw std::invalid_argument("token sequence: text ids not aligned with Text tokens");
    }
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (i > 0 && static_cast<int>(seq.kinds[i]) < static_cast<int>(seq.kinds[i - 1])) {
            throw std::invalid_argument("token sequence: kinds out of block order at " + std::to_string(i));
        }
        if (seq.positions[i].stream != static_cast<std::int64_t>(i)) {
            throw std::invalid_argument("token sequence: stream index must equal position " + std::to_string(i));
        }
        if (seq.kinds[i] == SegmentKind::generation && (seq.positions[i].row < 0 || seq.positions[i].col < 0)) {
            throw std::invalid_argument("token sequence: generation token without grid position");
        }
    }
}

// ---- text ----------------------------------------------------------------

std::vector<std::int32_t> text_to_ids(std::string_view bytes) {
    std::vector<std::int32_t> ids;
    ids.reserve(bytes.size() + 2);
    ids.push_back(bos_id);
    for (char c : bytes) ids.push_back(static_cast<std::int32_t>(static_cast<unsigned char>(c)));
    ids.push_back(eos_id);
    return ids;
}

std::string decode_text(std::span<const std::int32_t> ids) {
    std::string out;
    for (auto id : ids) {
        if (id < 0 || id >= static_cast<std::int32_t>(vocab_size)) {
            throw std::invalid_argument("decode_text: id " + std::to_string(id) + " outside the vocabulary");
        }
        if (id < 256) out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
    }
    return out;
}

TokenSequence encode_text(std::string_view text, const Tensor& embedding_table) {
    if (embedding_table.rank() != 2 || embedding_table.dim(0) != vocab_size) {
        throw ShapeError("encode_text: embedding table must be " + std::to_string(vocab_size) + " x D, got " +
                         shape_str(embedding_table.shape()));
    }
    std::size_t d = embedding_table.dim(1);
    TokenSequence seq;
    seq.text_ids = text_to_ids(text);
    auto index = std::make_shared<std::vector<std::int64_t>>();
    index->reserve(seq.text_ids.size() * d);
    for (std::size_t i = 0; i < seq.text_ids.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            index->push_back(static_cast<std::int64_t>(seq.text_ids[i]) * static_cast<std::int64_t>(d) +
                             static_cast<std::int64_t>(j));
        }
        seq.kinds.push_back(SegmentKind::text);
        seq.positions.push_back({static_cast<std::int64_t>(i), -1, -1});
    }
    seq.embeddings = gather(embedding_table, index, {seq.text_ids.size(), d});
    return seq;
}

// ---- images --------------------------------------------------------------

namespace {

void require_image(const Tensor& image, std::size_t divisor, const char* where) {
    if (image.rank() != 3) {
        throw ShapeError(std::string(where) + ": image must be H x W x C, got " + shape_str(image.shape()));
    }
    if (divisor == 0 || image.dim(0) % divisor != 0 || image.dim(1) % divisor != 0) {
        throw ShapeError(std::string(where) + ": spatial size " + shape_str(image.shape()) + " not divisible by " +
                         std::to_string(divisor));
    }
}

std::shared_ptr<const std::vector<std::int64_t>> patch_index(std::size_t h, std::size_t w, std::size_t c,
                                                             std::size_t p) {
    auto idx = std::make_shared<std::vector<std::int64_t>>();
    idx->reserve(h * w * c);
    for (std::size_t pr = 0; pr < h / p; ++pr)
        for (std::size_t pc = 0; pc < w / p; ++pc)
            for (std::size_t dy = 0; dy < p; ++dy)
                for (std::size_t dx = 0; dx < p; ++dx)
                    for (std::size_t ch = 0; ch < c; ++ch)
                        idx->push_back(static_cast<std::int64_t>(((pr * p + dy) * w + pc * p + dx) * c + ch));
    return idx;
}

}  // namespace

PatchGrid patchify(const Tensor& image, std::size_t patch) {
    require_image(image, patch, "patchify");
    std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
    PatchGrid grid;
    grid.rows = h / patch;
    grid.cols = w / patch;
    grid.patch = patch;
    grid.channels = c;
    grid.patches = gather(image, patch_index(h, w, c, patch), {grid.rows * grid.cols, patch * patch * c});
    return grid;
}

Tensor unpatchify(const PatchGrid& grid) {
    std::size_t p = grid.patch, c = grid.channels;
    if (p == 0 || c == 0 || grid.rows == 0 || grid.cols == 0 || !grid.patches.defined() ||
        grid.patches.shape() != Shape{grid.rows * grid.cols, p * p * c}) {
        throw ShapeError("unpatchify: patches " +
                         (grid.patches.defined() ? shape_str(grid.patches.shape()) : std::string("<undefined>")) +
                         " inconsistent with grid " + std::to_string(grid.rows) + "x" + std::to_string(grid.cols));
    }
    std::size_t h = grid.rows * p, w = grid.cols * p;
    auto forward = patch_index(h, w, c, p);
    auto inverse = std::make_shared<std::vector<std::int64_t>>(forward->size());
    for (std::size_t i = 0; i < forward->size(); ++i) {
        (*inverse)[static_cast<std::size_t>((*forward)[i])] = static_cast<std::int64_t>(i);
    }
    return gather(grid.patches, inverse, {h, w, c});
}

TokenSequence encode_condition(const Tensor& image, const ConditionEncoderWeights& weights) {
    require_image(image, condition_stride, "encode_condition");
    std::size_t h = image.dim(0), w = image.dim(1);
    auto hidden = weights.conv1.dim(1);
    auto level1 = silu(matmul(patchify(image, 2).patches, weights.conv1));
    auto grid1 = reshape(level1, {h / 2, w / 2, hidden});
    auto level2 = silu(matmul(patchify(grid1, 2).patches, weights.conv2));
    TokenSequence seq;
    seq.embeddings = matmul(level2, weights.projection);
    std::size_t rows = h / condition_stride, cols = w / condition_stride;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            seq.kinds.push_back(SegmentKind::condition);
            seq.positions.push_back(
                {static_cast<std::int64_t>(r * cols + c), static_cast<std::int64_t>(r), static_cast<std::int64_t>(c)});
        }
    }
    return seq;
}

Tensor interpolate(const Tensor& clean, const Tensor& noise, double t) {
    if (clean.shape() != noise.shape()) {
        throw ShapeError("interpolate: clean " + shape_str(clean.shape()) + " vs noise " + shape_str(noise.shape()));
    }
    return add(scale(clean, t), scale(noise, 1.0 - t));
}

TokenSequence generation_fragment(const Tensor& noisy, const Tensor& patch_embedding, std::size_t patch) {
    auto grid = patchify(noisy, patch);
    TokenSequence seq;
    seq.embeddings = matmul(grid.patches, patch_embedding);
    for (std::size_t r = 0; r < grid.rows; ++r) {
        for (std::size_t c = 0; c < grid.cols; ++c) {
            seq.kinds.push_back(SegmentKind::generation);
            seq.positions.push_back({static_cast<std::int64_t>(r * grid.cols + c), static_cast<std::int64_t>(r),
                                     static_cast<std::int64_t>(c)});
        }
    }
    return seq;
}

std::pair<DiffusionState, TokenSequence> make_generation_tokens(const Tensor& clean, const Tensor& noise, double t,
                                                                const Tensor& patch_embedding, std::size_t patch) {
    DiffusionState state{clean, noise, t, interpolate(clean, noise, t)};
    auto fragment = generation_fragment(state.noisy, patch_embedding, patch);
    return {std::move(state), std::move(fragment)};
}

// ---- timestep ------------------------------------------------------------

std::vector<double> timestep_frequencies(std::size_t dim) {
    if (dim < 2 || dim % 2 != 0) {
        throw std::invalid_argument("timestep features need an even dimension >= 2");
    }
    std::size_t k = dim / 2;
    std::vector<double> freqs(k, 1.0);
    for (std::size_t i = 1; i < k; ++i) {
        freqs[i] = std::pow(1000.0, static_cast<double>(i) / static_cast<double>(k - 1));
    }
    return freqs;
}

Tensor timestep_features(double t, std::size_t dim) {
    if (!(t >= 0.0 && t <= 1.0)) {
        throw std::invalid_argument("timestep " + std::to_string(t) + " outside [0, 1]");
    }
    auto freqs = timestep_frequencies(dim);
    std::vector<double> v(dim);
    for (std::size_t i = 0; i < freqs.size(); ++i) {
        v[2 * i] = std::sin(freqs[i] * t);
        v[2 * i + 1] = std::cos(freqs[i] * t);
    }
    return Tensor::from_data({1, dim}, std::move(v));
}

TokenSequence timestep_token(double t, const TimestepWeights& weights) {
    auto features = timestep_features(t, weights.fc1.dim(0));
    TokenSequence seq;
    seq.embeddings = matmul(silu(matmul(features, weights.fc1)), weights.fc2);
    seq.kinds.push_back(SegmentKind::timestep);
    seq.positions.push_back({0, -1, -1});
    return seq;
}

// ---- assembly ------------------------------------------------------------

TokenSequence concat_fragments(std::span<const TokenSequence> fragments) {
    TokenSequence out;
    std::vector<Tensor> parts;
    for (const auto& f : fragments) {
        if (f.empty()) continue;
        if (!out.empty() && f.kinds.front() != out.kinds.front()) {
            throw std::invalid_argument("concat_fragments: fragments of different kinds");
        }
        for (std::size_t i = 0; i < f.size(); ++i) {
            out.kinds.push_back(f.kinds[i]);
            auto pos = f.positions[i];
            pos.stream = static_cast<std::int64_t>(out.positions.size());
            out.positions.push_back(pos);
        }
        out.text_ids.insert(out.text_ids.end(), f.text_ids.begin(), f.text_ids.end());
        parts.push_back(f.embeddings);
    }
    if (!parts.empty()) {
        out.embeddings = parts.size() == 1 ? parts.front() : concat(parts, 0);
    }
    return out;
}

TokenSequence assemble_sequence(const TokenSequence& condition, const TokenSequence& text,
                                const TokenSequence& timestep, const TokenSequence& generation,
                                bool require_generation) {
    const std::pair<const TokenSequence*, SegmentKind> blocks[] = {{&condition, SegmentKind::condition},
                                                                   {&text, SegmentKind::text},
                                                                   {&timestep, SegmentKind::timestep},
                                                                   {&generation, SegmentKind::generation}};
    for (const auto& [frag, kind] : blocks) {
        for (auto k : frag->kinds) {
            if (k != kind) {
                throw std::invalid_argument("assemble_sequence: " + std::string(kind_name(k)) +
                                            " token supplied in the " + std::string(kind_name(kind)) + " block");
            }
        }
    }
    if (timestep.size() > 1) {
        throw std::invalid_argument("assemble_sequence: duplicate timestep tokens");
    }
    if (require_generation && generation.empty()) {
        throw std::invalid_argument("assemble_sequence: generation block is empty");
    }
    TokenSequence out;
    std::vector<Tensor> parts;
    std::size_t dim = 0;
    for (const auto& [frag, kind] : blocks) {
        if (frag->empty()) continue;
        if (dim != 0 && frag->embeddings.dim(1) != dim) {
            throw ShapeError("assemble_sequence: embedding widths differ");
        }
        dim = frag->embeddings.dim(1);
        for (std::size_t i = 0; i < frag->size(); ++i) {
            out.kinds.push_back(kind);
            auto pos = frag->positions[i];
            pos.stream = static_cast<std::int64_t>(out.positions.size());
            out.positions.push_back(pos);
        }
        out.text_ids.insert(out.text_ids.end(), frag->text_ids.begin(), frag->text_ids.end());
        parts.push_back(frag->embeddings);
    }
    if (parts.empty()) {
        throw std::invalid_argument("assemble_sequence: all blocks empty");
    }
    out.embeddings = parts.size() == 1 ? parts.front() : concat(parts, 0);
    return out;
}

}  // namespace upix
