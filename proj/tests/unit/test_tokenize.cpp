#include <doctest.h>

#include "support.hpp"
#include "upix/tokenize/tokens.hpp"

using namespace upix;

namespace {

ConditionEncoderWeights random_condition_weights(std::size_t channels, std::size_t dim, std::mt19937_64& rng) {
    return {Tensor::randn({4 * channels, dim}, 0.3, rng), Tensor::randn({4 * dim, dim}, 0.3, rng),
            Tensor::randn({dim, dim}, 0.3, rng)};
}

TokenSequence fragment_of(SegmentKind kind, std::size_t n, std::size_t dim, double fill) {
    TokenSequence f;
    f.embeddings = Tensor::full({n, dim}, fill);
    for (std::size_t i = 0; i < n; ++i) {
        f.kinds.push_back(kind);
        TokenPosition p{static_cast<std::int64_t>(i)};
        if (kind == SegmentKind::generation) p = {static_cast<std::int64_t>(i), 0, static_cast<std::int64_t>(i)};
        f.positions.push_back(p);
        if (kind == SegmentKind::text) f.text_ids.push_back(65);
    }
    return f;
}

}  // namespace

TEST_CASE("text ids wrap bytes in BOS and EOS") {
    CHECK(text_to_ids("") == std::vector<std::int32_t>{bos_id, eos_id});
    CHECK(text_to_ids("A") == std::vector<std::int32_t>{bos_id, 65, eos_id});
    CHECK(vocab_size == 259);
    CHECK(pad_id == 258);
}

TEST_CASE("text decode inverts encode for random byte strings") {
    std::mt19937_64 rng(42);
    for (int i = 0; i < 1000; ++i) {
        std::string s(rng() % 40, '\0');
        for (auto& c : s) c = static_cast<char>(rng() % 256);
        CHECK(decode_text(text_to_ids(s)) == s);
    }
}

TEST_CASE("text embeddings are table rows") {
    std::mt19937_64 rng(1);
    auto table = Tensor::randn({vocab_size, 8}, 1.0, rng);
    auto seq = encode_text("hi", table);
    REQUIRE(seq.size() == 4);
    CHECK(seq.embeddings.shape() == Shape{4, 8});
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 8; ++j) {
            CHECK(seq.embeddings.at(i * 8 + j) == table.at(static_cast<std::size_t>(seq.text_ids[i]) * 8 + j));
        }
        CHECK(seq.kinds[i] == SegmentKind::text);
        CHECK(seq.positions[i].row == -1);
    }
}

TEST_CASE("condition encoder emits one token per 4x4 block") {
    std::mt19937_64 rng(2);
    auto w = random_condition_weights(3, 8, rng);
    auto img = Tensor::randn({16, 16, 3}, 1.0, rng);
    auto seq = encode_condition(img, w);
    CHECK(seq.size() == 16);
    CHECK(seq.embeddings.shape() == Shape{16, 8});
    for (auto k : seq.kinds) CHECK(k == SegmentKind::condition);
    auto again = encode_condition(img, w);
    CHECK(bitwise_equal(seq.embeddings, again.embeddings));
    CHECK_THROWS_AS(encode_condition(Tensor::zeros({6, 8, 3}), w), ShapeError);
}

TEST_CASE("zero image through a zero projection gives zero condition tokens") {
    std::mt19937_64 rng(3);
    auto w = random_condition_weights(3, 8, rng);
    w.projection = Tensor::zeros({8, 8});
    auto seq = encode_condition(Tensor::zeros({8, 8, 3}), w);
    for (double v : seq.embeddings.data()) CHECK(v == 0.0);
}

TEST_CASE("patchify layout and shape arithmetic") {
    auto img = Tensor::zeros({4, 4, 1});
    img.mutable_data()[0] = 7.0;
    auto grid = patchify(img, 2);
    CHECK(grid.patches.shape() == Shape{4, 4});
    CHECK(grid.rows == 2);
    CHECK(grid.cols == 2);
    std::vector<double> expect(16, 0.0);
    expect[0] = 7.0;
    CHECK(std::vector<double>(grid.patches.data().begin(), grid.patches.data().end()) == expect);

    // Pixel (r, c) of a 4x4 ramp lands at patch (r/2, c/2), slot (r%2)*2 + c%2.
    auto ramp = Tensor::zeros({4, 4, 1});
    for (std::size_t i = 0; i < 16; ++i) ramp.mutable_data()[i] = static_cast<double>(i);
    auto g = patchify(ramp, 2);
    for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t c = 0; c < 4; ++c) {
            std::size_t patch = (r / 2) * 2 + c / 2;
            std::size_t slot = (r % 2) * 2 + c % 2;
            CHECK(g.patches.at(patch * 4 + slot) == static_cast<double>(r * 4 + c));
        }
    }
    CHECK_THROWS_AS(patchify(Tensor::zeros({5, 4, 1}), 2), ShapeError);
}

TEST_CASE("unpatchify inverts patchify bitwise") {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 100; ++i) {
        std::size_t p = 1 + rng() % 4;
        std::size_t h = p * (1 + rng() % 4), w = p * (1 + rng() % 4), c = 1 + rng() % 3;
        auto img = Tensor::randn({h, w, c}, 1.0, rng);
        CHECK(bitwise_equal(unpatchify(patchify(img, p)), img));
    }
}

TEST_CASE("interpolation endpoints and arithmetic") {
    std::mt19937_64 rng(5);
    auto clean = Tensor::randn({4, 4, 3}, 1.0, rng);
    auto noise = Tensor::randn({4, 4, 3}, 1.0, rng);
    CHECK(bitwise_equal(interpolate(clean, noise, 1.0), clean));
    CHECK(bitwise_equal(interpolate(clean, noise, 0.0), noise));
    auto x = interpolate(Tensor::full({1, 1, 1}, 2.0), Tensor::zeros({1, 1, 1}), 0.25);
    CHECK(x.item() == 0.5);
    for (double t : {0.1, 0.33, 0.5, 0.77, 0.999}) {
        auto xt = interpolate(clean, noise, t);
        for (std::size_t i = 0; i < xt.numel(); ++i) {
            CHECK(std::abs(xt.at(i) - (t * clean.at(i) + (1 - t) * noise.at(i))) <= 1e-12);
        }
    }
    CHECK_THROWS_AS(interpolate(clean, Tensor::zeros({4, 4, 1}), 0.5), ShapeError);
}

TEST_CASE("generation tokens carry grid positions") {
    std::mt19937_64 rng(6);
    auto clean = Tensor::randn({4, 6, 3}, 1.0, rng);
    auto noise = Tensor::randn({4, 6, 3}, 1.0, rng);
    auto embed = Tensor::randn({12, 8}, 0.5, rng);
    auto [state, frag] = make_generation_tokens(clean, noise, 0.3, embed, 2);
    CHECK(frag.size() == 6);
    CHECK(state.t == 0.3);
    CHECK(bitwise_equal(state.noisy, interpolate(clean, noise, 0.3)));
    CHECK(frag.positions[4].row == 1);
    CHECK(frag.positions[4].col == 1);
    for (auto k : frag.kinds) CHECK(k == SegmentKind::generation);
}

TEST_CASE("timestep features and token") {
    auto f = timestep_features(0.0, 8);
    auto w = timestep_frequencies(8);
    REQUIRE(w.size() == 4);
    CHECK(w[0] == 1.0);
    CHECK(f.at(0) == 0.0);
    CHECK(f.at(1) == 1.0);
    std::mt19937_64 rng(7);
    TimestepWeights tw{Tensor::randn({8, 8}, 0.5, rng), Tensor::randn({8, 8}, 0.5, rng)};
    auto a = timestep_token(0.0, tw);
    auto b = timestep_token(1.0, tw);
    CHECK(a.embeddings.shape() == Shape{1, 8});
    CHECK(max_abs_diff(a.embeddings, b.embeddings) > 0.0);
    CHECK(a.kinds[0] == SegmentKind::timestep);
    CHECK_THROWS_AS(timestep_features(1.5, 8), std::invalid_argument);
    CHECK_THROWS_AS(timestep_features(-0.1, 8), std::invalid_argument);
}

TEST_CASE("assembly concatenates blocks in fixed order") {
    auto seq = assemble_sequence(fragment_of(SegmentKind::condition, 3, 4, 1.0), fragment_of(SegmentKind::text, 5, 4, 2.0),
                                 fragment_of(SegmentKind::timestep, 1, 4, 3.0),
                                 fragment_of(SegmentKind::generation, 4, 4, 4.0));
    CHECK(seq.size() == 13);
    CHECK(seq.block(SegmentKind::condition) == std::pair<std::size_t, std::size_t>{0, 3});
    CHECK(seq.block(SegmentKind::text) == std::pair<std::size_t, std::size_t>{3, 8});
    CHECK(seq.block(SegmentKind::timestep) == std::pair<std::size_t, std::size_t>{8, 9});
    CHECK(seq.block(SegmentKind::generation) == std::pair<std::size_t, std::size_t>{9, 13});
    for (std::size_t i = 0; i < seq.size(); ++i) CHECK(seq.positions[i].stream == static_cast<std::int64_t>(i));
    CHECK(seq.embeddings.at(3 * 4) == 2.0);
    CHECK(seq.text_ids.size() == 5);
    CHECK_NOTHROW(validate_sequence(seq));
}

TEST_CASE("assembly without conditions and with several references") {
    auto plain = assemble_sequence({}, fragment_of(SegmentKind::text, 2, 4, 0.0), fragment_of(SegmentKind::timestep, 1, 4, 0.0),
                                   fragment_of(SegmentKind::generation, 2, 4, 0.0));
    CHECK(plain.kinds.front() == SegmentKind::text);
    CHECK(plain.count(SegmentKind::condition) == 0);

    std::vector<TokenSequence> refs{fragment_of(SegmentKind::condition, 2, 4, 1.0),
                                    fragment_of(SegmentKind::condition, 3, 4, 2.0)};
    auto cond = concat_fragments(refs);
    CHECK(cond.size() == 5);
    CHECK(cond.embeddings.at(0) == 1.0);
    CHECK(cond.embeddings.at(2 * 4) == 2.0);
}

TEST_CASE("assembly rejects wrong kinds, duplicates and empty generation") {
    auto text = fragment_of(SegmentKind::text, 2, 4, 0.0);
    auto time = fragment_of(SegmentKind::timestep, 1, 4, 0.0);
    auto gen = fragment_of(SegmentKind::generation, 2, 4, 0.0);
    CHECK_THROWS_AS(assemble_sequence(text, text, time, gen), std::invalid_argument);
    CHECK_THROWS_AS(assemble_sequence({}, text, fragment_of(SegmentKind::timestep, 2, 4, 0.0), gen),
                    std::invalid_argument);
    CHECK_THROWS_AS(assemble_sequence({}, text, time, {}), std::invalid_argument);
    CHECK_NOTHROW(assemble_sequence({}, text, time, {}, false));
}

TEST_CASE("swapping reference images swaps their condition blocks") {
    std::mt19937_64 rng(8);
    auto w = random_condition_weights(3, 8, rng);
    auto a = Tensor::randn({8, 8, 3}, 1.0, rng);
    auto b = Tensor::randn({8, 8, 3}, 1.0, rng);
    std::vector<TokenSequence> ab{encode_condition(a, w), encode_condition(b, w)};
    std::vector<TokenSequence> ba{encode_condition(b, w), encode_condition(a, w)};
    auto x = concat_fragments(ab);
    auto y = concat_fragments(ba);
    CHECK(bitwise_equal(slice(x.embeddings, 0, 0, 4), slice(y.embeddings, 0, 4, 8)));
    CHECK(bitwise_equal(slice(x.embeddings, 0, 4, 8), slice(y.embeddings, 0, 0, 4)));
}
