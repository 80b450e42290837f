#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "upix/attention/attention.hpp"

using namespace upix;

namespace {

// Pairwise evaluator: generation rows see everything, other rows see keys at or before them.
bool rule_allows(std::span<const SegmentKind> kinds, std::size_t i, std::size_t j) {
    if (kinds[i] == SegmentKind::generation) return true;
    return j <= i;
}

std::vector<SegmentKind> random_kinds(std::mt19937_64& rng) {
    std::size_t n = 1 + rng() % 32;
    std::vector<SegmentKind> kinds;
    // Block lengths for condition, text, timestep, generation in order.
    std::array<std::size_t, 4> len{};
    for (std::size_t i = 0; i < n; ++i) len[rng() % 4]++;
    for (std::size_t b = 0; b < 4; ++b) kinds.insert(kinds.end(), len[b], static_cast<SegmentKind>(b));
    return kinds;
}

std::vector<TokenPosition> random_positions(std::size_t n, std::mt19937_64& rng, std::int64_t range = 64) {
    std::vector<TokenPosition> pos(n);
    for (auto& p : pos) {
        p.stream = static_cast<std::int64_t>(rng() % range);
        p.row = static_cast<std::int64_t>(rng() % range);
        p.col = static_cast<std::int64_t>(rng() % range);
    }
    return pos;
}

double dot_rows(const Tensor& a, const Tensor& b, std::size_t row, std::size_t d) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += a.at(row * d + k) * b.at(row * d + k);
    return s;
}

}  // namespace

TEST_CASE("hybrid mask examples") {
    std::vector<SegmentKind> kinds{SegmentKind::text, SegmentKind::text, SegmentKind::generation};
    auto m = build_hybrid_mask(kinds);
    CHECK(*m.allowed == std::vector<std::uint8_t>{1, 0, 0, 1, 1, 0, 1, 1, 1});

    std::vector<SegmentKind> gen(5, SegmentKind::generation);
    auto full = build_hybrid_mask(gen);
    for (auto v : *full.allowed) CHECK(v == 1);

    std::vector<SegmentKind> text(6, SegmentKind::text);
    auto causal = build_hybrid_mask(text);
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < 6; ++j) CHECK(causal.at(i, j) == (j <= i));
    }
    CHECK_THROWS_AS(build_hybrid_mask(std::vector<SegmentKind>{}), std::invalid_argument);
}

TEST_CASE("hybrid mask matches the pairwise evaluator on random sequences") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 1000; ++trial) {
        auto kinds = random_kinds(rng);
        auto m = build_hybrid_mask(kinds);
        REQUIRE(m.size == kinds.size());
        bool same = true;
        for (std::size_t i = 0; i < kinds.size(); ++i) {
            bool any = false;
            for (std::size_t j = 0; j < kinds.size(); ++j) {
                same = same && m.at(i, j) == rule_allows(kinds, i, j);
                any = any || m.at(i, j);
            }
            same = same && any && m.at(i, i);
        }
        CHECK(same);
    }
}

TEST_CASE("rope split defaults and validation") {
    auto p = RopeParams::for_head_dim(16);
    CHECK(p.split == std::array<std::size_t, 3>{8, 4, 4});
    CHECK_NOTHROW(p.validate());
    CHECK_THROWS(RopeParams{10000.0, {3, 2, 2}}.validate());
    CHECK_THROWS(RopeParams{10000.0, {4, 0, 2}}.validate());
    std::mt19937_64 rng(1);
    auto x = Tensor::randn({1, 2, 10}, 1.0, rng);
    std::vector<TokenPosition> pos(2);
    CHECK_THROWS_AS(apply_rope(x, pos, p), ShapeError);
}

TEST_CASE("rope at position zero is the identity") {
    std::mt19937_64 rng(12);
    auto params = RopeParams::for_head_dim(16);
    auto x = Tensor::randn({2, 5, 16}, 1.0, rng);
    std::vector<TokenPosition> zero(5, TokenPosition{0, 0, 0});
    CHECK(bitwise_equal(apply_rope(x, zero, params), x));
    std::vector<TokenPosition> nonspatial(5, TokenPosition{0, -1, -1});
    CHECK(bitwise_equal(apply_rope(x, nonspatial, params), x));
}

TEST_CASE("rope preserves per-token norms") {
    std::mt19937_64 rng(13);
    auto params = RopeParams::for_head_dim(16);
    for (int trial = 0; trial < 100; ++trial) {
        auto x = Tensor::randn({2, 6, 16}, 1.0, rng);
        auto y = apply_rope(x, random_positions(6, rng, 1000), params);
        for (std::size_t r = 0; r < 12; ++r) {
            CHECK(std::abs(std::sqrt(dot_rows(x, x, r, 16)) - std::sqrt(dot_rows(y, y, r, 16))) <= 1e-12);
        }
    }
}

TEST_CASE("rope dot products depend only on relative position") {
    std::mt19937_64 rng(14);
    auto params = RopeParams::for_head_dim(16);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        auto q = Tensor::randn({1, 1, 16}, 1.0, rng);
        auto k = Tensor::randn({1, 1, 16}, 1.0, rng);
        auto p = random_positions(1, rng);
        auto r = random_positions(1, rng);
        auto s = random_positions(1, rng);
        std::vector<TokenPosition> ps{{p[0].stream + s[0].stream, p[0].row + s[0].row, p[0].col + s[0].col}};
        std::vector<TokenPosition> rs{{r[0].stream + s[0].stream, r[0].row + s[0].row, r[0].col + s[0].col}};
        double base = dot_rows(apply_rope(q, p, params), apply_rope(k, r, params), 0, 16);
        double shifted = dot_rows(apply_rope(q, ps, params), apply_rope(k, rs, params), 0, 16);
        worst = std::max(worst, std::abs(base - shifted));
    }
    CHECK(worst <= 1e-9);
}

TEST_CASE("attention examples") {
    std::mt19937_64 rng(15);
    {
        auto q = Tensor::randn({2, 1, 4}, 1.0, rng), k = Tensor::randn({2, 1, 4}, 1.0, rng);
        auto v = Tensor::randn({2, 1, 4}, 1.0, rng);
        std::vector<SegmentKind> one{SegmentKind::text};
        CHECK(max_abs_diff(attention_forward(q, k, v, build_hybrid_mask(one)), v) == 0.0);
    }
    {
        auto q = Tensor::randn({1, 4, 4}, 1.0, rng), k = Tensor::randn({1, 4, 4}, 1.0, rng);
        auto v = Tensor::randn({1, 4, 4}, 1.0, rng);
        auto allowed = std::make_shared<std::vector<std::uint8_t>>(16, 0);
        for (std::size_t i = 0; i < 4; ++i) (*allowed)[i * 4 + i] = 1;
        CHECK(max_abs_diff(attention_forward(q, k, v, {4, allowed}), v) == 0.0);
    }
    {
        auto q = Tensor::randn({1, 5, 4}, 1.0, rng);
        auto key = Tensor::randn({1, 1, 4}, 1.0, rng);
        auto k = concat({key, key, key, key, key}, 1);
        auto v = Tensor::randn({1, 5, 4}, 1.0, rng);
        std::vector<SegmentKind> gen(5, SegmentKind::generation);
        auto out = attention_forward(q, k, v, build_hybrid_mask(gen));
        for (std::size_t i = 0; i < 5; ++i) {
            for (std::size_t c = 0; c < 4; ++c) {
                double m = 0.0;
                for (std::size_t j = 0; j < 5; ++j) m += v.at(j * 4 + c);
                CHECK(std::abs(out.at(i * 4 + c) - m / 5) <= 1e-12);
            }
        }
    }
}

TEST_CASE("masked keys contribute nothing") {
    std::mt19937_64 rng(16);
    for (int trial = 0; trial < 50; ++trial) {
        auto kinds = random_kinds(rng);
        std::size_t n = kinds.size();
        auto mask = build_hybrid_mask(kinds);
        auto q = Tensor::randn({2, n, 4}, 1.0, rng), k = Tensor::randn({2, n, 4}, 1.0, rng);
        auto v = Tensor::randn({2, n, 4}, 1.0, rng);
        auto base = attention_forward(q, k, v, mask);
        std::size_t j = rng() % n;
        auto v2 = v.clone();
        for (std::size_t h = 0; h < 2; ++h) {
            for (std::size_t c = 0; c < 4; ++c) v2.mutable_data()[(h * n + j) * 4 + c] += 100.0;
        }
        auto out = attention_forward(q, k, v2, mask);
        for (std::size_t i = 0; i < n; ++i) {
            if (mask.at(i, j)) continue;
            for (std::size_t h = 0; h < 2; ++h) {
                for (std::size_t c = 0; c < 4; ++c) {
                    CHECK(out.at((h * n + i) * 4 + c) == base.at((h * n + i) * 4 + c));
                }
            }
        }
    }
}

TEST_CASE("attention is invariant to a per-row logit shift") {
    std::mt19937_64 rng(17);
    std::vector<SegmentKind> kinds{SegmentKind::text, SegmentKind::text, SegmentKind::timestep,
                                   SegmentKind::generation, SegmentKind::generation};
    auto mask = build_hybrid_mask(kinds);
    auto logits = Tensor::randn({2, 5, 5}, 1.0, rng);
    auto v = Tensor::randn({2, 5, 3}, 1.0, rng);
    auto shifted = logits.clone();
    for (std::size_t h = 0; h < 2; ++h) {
        for (std::size_t i = 0; i < 5; ++i) {
            double c = std::normal_distribution<double>(0.0, 5.0)(rng);
            for (std::size_t j = 0; j < 5; ++j) shifted.mutable_data()[(h * 5 + i) * 5 + j] += c;
        }
    }
    CHECK(max_abs_diff(attend_logits(logits, v, mask), attend_logits(shifted, v, mask)) <= 1e-12);
}

TEST_CASE("attention rejects mismatched masks") {
    std::mt19937_64 rng(18);
    auto q = Tensor::randn({1, 3, 4}, 1.0, rng);
    std::vector<SegmentKind> kinds(2, SegmentKind::text);
    CHECK_THROWS_AS(attention_forward(q, q, q, build_hybrid_mask(kinds)), ShapeError);
}
