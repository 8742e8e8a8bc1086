#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <type_traits>

#include "rltc/baselines.hpp"
#include "support/test_support.hpp"

using namespace rltc;
using namespace rltc::baselines;

// the no-floating-point design contract for the coding loops
static_assert(std::is_integral_v<RangeCoderTraits::low_type>);
static_assert(std::is_integral_v<RangeCoderTraits::range_type>);
static_assert(std::is_integral_v<RangeCoderTraits::freq_type>);
static_assert(std::is_integral_v<ArithmeticCoderTraits::state_type>);
static_assert(std::is_integral_v<ArithmeticCoderTraits::product_type>);

TEST_CASE("entropy") {
    double one[] = {1.0};
    CHECK(entropy(one) == 0.0);
    double half[] = {0.5, 0.5};
    CHECK(entropy(half) == doctest::Approx(1.0).epsilon(1e-12));
    double mixed[] = {0.5, 0.25, 0.25};
    CHECK(entropy(mixed) == doctest::Approx(1.5).epsilon(1e-12));
    double with_zero[] = {0.5, 0.5, 0.0};
    CHECK(entropy(with_zero) == doctest::Approx(1.0).epsilon(1e-12));
    double bernoulli[] = {0.9, 0.1};
    CHECK(entropy(bernoulli) == doctest::Approx(0.469).epsilon(1e-3));

    double bad_sum[] = {0.5, 0.6};
    CHECK_THROWS_AS(entropy(bad_sum), NotADistribution);
    double negative[] = {1.5, -0.5};
    CHECK_THROWS_AS(entropy(negative), NotADistribution);
}

namespace {

// O(n^2 * lookahead) reference parser straight from the definition: longest
// match wins, ties to the smallest offset, matches below the minimum length
// become literals.
std::vector<Lz77Token> lz77_brute_force(std::span<const uint8_t> data, int window, int lookahead) {
    std::vector<Lz77Token> out;
    size_t pos = 0;
    while (pos < data.size()) {
        size_t best_len = 0, best_off = 0;
        size_t max_len = std::min<size_t>(lookahead, data.size() - pos);
        for (size_t off = 1; off <= std::min<size_t>(window, pos); ++off) {
            size_t len = 0;
            while (len < max_len && data[pos - off + len] == data[pos + len]) ++len;
            if (len > best_len) {
                best_len = len;
                best_off = off;
            }
        }
        if (best_len >= kLz77MinMatch) {
            out.push_back({static_cast<uint32_t>(best_off), static_cast<uint32_t>(best_len), 0});
            pos += best_len;
        } else {
            out.push_back({0, 0, data[pos]});
            pos += 1;
        }
    }
    return out;
}

bool tokens_equal(const std::vector<Lz77Token>& a, const std::vector<Lz77Token>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i)
        if (a[i].offset != b[i].offset || a[i].length != b[i].length ||
            a[i].literal != b[i].literal)
            return false;
    return true;
}

} // namespace

TEST_CASE("lz77 worked examples") {
    CHECK(lz77_tokenize({}, 64, 16).empty());
    CHECK(lz77_reconstruct({}).empty());

    std::vector<uint8_t> abab{'a', 'b', 'a', 'b'};
    auto tokens = lz77_tokenize(abab, 64, 16);
    REQUIRE(tokens.size() == 3);
    CHECK(tokens[0].offset == 0);
    CHECK(tokens[0].literal == 'a');
    CHECK(tokens[1].offset == 0);
    CHECK(tokens[1].literal == 'b');
    CHECK(tokens[2].offset == 2);
    CHECK(tokens[2].length == 2);
    CHECK(lz77_reconstruct(tokens) == abab);

    std::vector<uint8_t> aaaa{'a', 'a', 'a', 'a'};
    auto overlap = lz77_tokenize(aaaa, 64, 16);
    REQUIRE(overlap.size() == 2);
    CHECK(overlap[0].offset == 0);
    CHECK(overlap[0].literal == 'a');
    CHECK(overlap[1].offset == 1);
    CHECK(overlap[1].length == 3);
    CHECK(lz77_reconstruct(overlap) == aaaa);
}

TEST_CASE("lz77 matches the brute-force oracle up to length 256") {
    Rng rng(1001);
    for (int trial = 0; trial < 300; ++trial) {
        size_t len = rng.below(257);
        int window = 1 + static_cast<int>(rng.below(300));
        int lookahead = 1 + static_cast<int>(rng.below(80));
        std::vector<uint8_t> data;
        // low-alphabet data maximizes matches
        switch (rng.below(3)) {
        case 0:
            data = testsupport::adversarial_bytes(rng, len);
            break;
        case 1: {
            data.resize(len);
            for (auto& b : data) b = static_cast<uint8_t>('a' + rng.below(3));
            break;
        }
        default:
            data = testsupport::repetitive_bytes(rng, len);
            break;
        }
        auto fast = lz77_tokenize(data, window, lookahead);
        auto slow = lz77_brute_force(data, window, lookahead);
        REQUIRE(tokens_equal(fast, slow));
        REQUIRE(lz77_reconstruct(fast) == data);
    }
}

TEST_CASE("lz77_reconstruct error taxonomy") {
    CHECK_THROWS_AS(lz77_reconstruct(std::vector<Lz77Token>{{5, 2, 0}}), DanglingOffset);
    CHECK_THROWS_AS(lz77_reconstruct(std::vector<Lz77Token>{{0, 3, 'x'}}), DanglingOffset);
    CHECK_THROWS_AS(lz77_reconstruct(std::vector<Lz77Token>{{0, 0, 'x'}, {1, 0, 0}}),
                    DanglingOffset);
}

TEST_CASE("bit writer/reader identity") {
    Rng rng(4);
    BitWriter w;
    std::vector<std::pair<uint32_t, int>> fields;
    for (int i = 0; i < 500; ++i) {
        int width = 1 + static_cast<int>(rng.below(24));
        uint32_t value = static_cast<uint32_t>(rng.below(1ull << width));
        fields.emplace_back(value, width);
        w.put_bits(value, width);
    }
    auto bytes = w.finish();
    BitReader r(bytes);
    for (auto [value, width] : fields) REQUIRE(r.read_bits(width) == value);
}

TEST_CASE("frequency model invariants") {
    FrequencyModel m(true);
    CHECK(m.total() == 257);
    uint32_t lo, hi;
    m.symbol_range(0, lo, hi);
    CHECK(lo == 0);
    CHECK(hi == 1);
    m.record(65);
    m.symbol_range(65, lo, hi);
    CHECK(hi - lo == 1 + FrequencyModel::kIncrement);
    CHECK(m.total() == 257 + FrequencyModel::kIncrement);

    // heavy updates force rescaling; counts stay >= 1 and cumulative sums stay
    // strictly increasing
    for (int i = 0; i < 20000; ++i) m.record(static_cast<int>(i % 7));
    CHECK(m.total() <= FrequencyModel::kMaxTotal);
    uint32_t prev_hi = 0;
    for (int s = 0; s < FrequencyModel::kAlphabet; ++s) {
        m.symbol_range(s, lo, hi);
        CHECK(lo == prev_hi);
        CHECK(hi > lo);
        prev_hi = hi;
    }
    CHECK(prev_hi == m.total());

    FrequencyModel frozen(false);
    frozen.record(65);
    CHECK(frozen.total() == 257);
}

TEST_CASE("arithmetic coder round trips") {
    Rng rng(31415);
    SUBCASE("empty message costs only the end marker, under 16 bits") {
        BitBuffer coded = ac_encode({}, true);
        CHECK(coded.bit_count < 16);
        CHECK(ac_decode(coded.bytes, true).empty());
    }
    SUBCASE("fuzzed round trips, adaptive and static") {
        for (int trial = 0; trial < 120; ++trial) {
            size_t len = rng.below(2000);
            auto data = testsupport::adversarial_bytes(rng, len);
            bool adaptive = trial % 2 == 0;
            BitBuffer coded = ac_encode(data, adaptive);
            REQUIRE(ac_decode(coded.bytes, adaptive) == data);
        }
    }
    SUBCASE("corrupt stream raises instead of looping") {
        auto data = testsupport::random_bytes(rng, 64);
        BitBuffer coded = ac_encode(data, true);
        std::vector<uint8_t> cut(coded.bytes.begin(), coded.bytes.begin() + 2);
        CHECK_THROWS_AS(
            [&] {
                auto out = ac_decode(cut, true);
                if (out == data) throw std::logic_error("unreachable");
            }(),
            std::exception);
    }
}

TEST_CASE("range coder round trips") {
    Rng rng(2718);
    for (int trial = 0; trial < 120; ++trial) {
        size_t len = rng.below(2000);
        auto data = testsupport::adversarial_bytes(rng, len);
        bool adaptive = trial % 2 == 0;
        auto coded = range_encode(data, adaptive);
        REQUIRE(range_decode(coded, adaptive) == data);
    }
    CHECK(range_decode(range_encode({}, true), true).empty());
}

TEST_CASE("coded size sits near the entropy for iid data") {
    // Bernoulli(0.9) bytes under the pinned seed; bound from Eq: n*H + 64 bits
    Rng rng(20);
    const int n = 10000;
    std::vector<uint8_t> data(n);
    int ones = 0;
    for (auto& b : data) {
        b = rng.uniform() < 0.9 ? 0 : 1;
        ones += b;
    }
    INFO("ones drawn: " << ones);
    double p[] = {0.9, 0.1};
    double h = entropy(p);
    CHECK(h == doctest::Approx(0.469).epsilon(1e-3));

    BitBuffer ac = ac_encode(data, true);
    INFO("ac bits: " << ac.bit_count << " bound " << n * h + 64);
    CHECK(static_cast<double>(ac.bit_count) <= n * h + 64.0);

    auto rc = range_encode(data, true);
    INFO("range bits: " << rc.size() * 8 << " bound " << n * h + 64);
    CHECK(static_cast<double>(rc.size()) * 8.0 <= n * h + 64.0);
}

TEST_CASE("arithmetic and range coders agree within half a percent on 1 MB") {
    Rng rng(515151);
    auto data = testsupport::english_like_text(rng, 1 << 20);
    BitBuffer ac = ac_encode(data, true);
    auto rc = range_encode(data, true);
    double ac_bytes = static_cast<double>(ac.bytes.size());
    double rc_bytes = static_cast<double>(rc.size());
    CHECK(std::abs(ac_bytes - rc_bytes) / ac_bytes < 0.005);
    // both genuinely compress English-like text
    CHECK(ac_bytes < data.size() * 0.8);
    REQUIRE(ac_decode(ac.bytes, true) == data);
    REQUIRE(range_decode(rc, true) == data);
}

TEST_CASE("baseline file format round trips and rejects corruption") {
    Rng rng(62);
    auto data = testsupport::repetitive_bytes(rng, 3000);
    for (BaselineCodec codec :
         {BaselineCodec::Lz77, BaselineCodec::Arithmetic, BaselineCodec::Range}) {
        auto file = baseline_compress(codec, data);
        REQUIRE(baseline_decompress(file) == data);
    }
    std::vector<uint8_t> junk{'R', 'L', 'T', 'X', 1};
    CHECK_THROWS_AS(baseline_decompress(junk), CorruptBitstream);
}
