#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "upix/core/tensor.hpp"

namespace upix {

enum class SegmentKind : std::uint8_t { condition, text, timestep, generation };

std::string_view kind_name(SegmentKind kind);

// Stream index plus grid row/column; row and column are -1 for non-spatial tokens.
struct TokenPosition {
    std::int64_t stream = 0;
    std::int64_t row = -1;
    std::int64_t col = -1;

    friend bool operator==(const TokenPosition&, const TokenPosition&) = default;
};

// A block of tokens in the shared embedding space. Fragments produced by the
// encoders are TokenSequences of a single kind; assemble_sequence joins them.
struct TokenSequence {
    Tensor embeddings;  // L x D, undefined when empty
    std::vector<SegmentKind> kinds;
    std::vector<TokenPosition> positions;
    std::vector<std::int32_t> text_ids;  // one per Text token

    std::size_t size() const { return kinds.size(); }
    bool empty() const { return kinds.empty(); }
    std::size_t count(SegmentKind kind) const;
    // [first, last) rows of the contiguous block of `kind`; {0,0} when absent.
    std::pair<std::size_t, std::size_t> block(SegmentKind kind) const;
};

// Throws std::invalid_argument when block order, stream indices or spatial
// positions break the sequence invariants.
void validate_sequence(const TokenSequence& seq);

struct DiffusionState {
    Tensor clean;
    Tensor noise;
    double t = 0.0;
    Tensor noisy;
};

struct PatchGrid {
    Tensor patches;  // N x (p*p*C), raster order over the grid
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t patch = 0;
    std::size_t channels = 0;
};

// ---- text ----------------------------------------------------------------

inline constexpr std::size_t vocab_size = 259;
inline constexpr std::int32_t bos_id = 256;
inline constexpr std::int32_t eos_id = 257;
inline constexpr std::int32_t pad_id = 258;

std::vector<std::int32_t> text_to_ids(std::string_view bytes);
// Inverse of text_to_ids; special ids are dropped.
std::string decode_text(std::span<const std::int32_t> ids);
TokenSequence encode_text(std::string_view text, const Tensor& embedding_table);

// ---- images --------------------------------------------------------------

// Image tensors are H x W x C, channel-last.
PatchGrid patchify(const Tensor& image, std::size_t patch);
Tensor unpatchify(const PatchGrid& grid);

struct ConditionEncoderWeights {
    Tensor conv1;       // (2*2*C) x Dc
    Tensor conv2;       // (2*2*Dc) x Dc
    Tensor projection;  // Dc x D
};

inline constexpr std::size_t condition_stride = 4;

// Two stride-2 convolutions (total stride 4) followed by a learned projection.
TokenSequence encode_condition(const Tensor& image, const ConditionEncoderWeights& weights);

// x_t = t * clean + (1 - t) * noise; differentiable in both images.
Tensor interpolate(const Tensor& clean, const Tensor& noise, double t);

TokenSequence generation_fragment(const Tensor& noisy, const Tensor& patch_embedding, std::size_t patch);

std::pair<DiffusionState, TokenSequence> make_generation_tokens(const Tensor& clean, const Tensor& noise, double t,
                                                                const Tensor& patch_embedding, std::size_t patch);

// ---- timestep ------------------------------------------------------------

struct TimestepWeights {
    Tensor fc1;  // D x D
    Tensor fc2;  // D x D
};

// Interleaved [sin(w_k t), cos(w_k t)] over dim/2 geometric frequencies from 1 to 1000.
std::vector<double> timestep_frequencies(std::size_t dim);
Tensor timestep_features(double t, std::size_t dim);
TokenSequence timestep_token(double t, const TimestepWeights& weights);

// ---- assembly ------------------------------------------------------------

// Joins fragments of one kind (e.g. several reference images) in input order.
TokenSequence concat_fragments(std::span<const TokenSequence> fragments);

TokenSequence assemble_sequence(const TokenSequence& condition, const TokenSequence& text,
                                const TokenSequence& timestep, const TokenSequence& generation,
                                bool require_generation = true);

}  // namespace upix
