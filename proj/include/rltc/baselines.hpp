#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace rltc::baselines {

struct NotADistribution : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DanglingOffset : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CorruptBitstream : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shannon entropy in bits; zero-probability terms contribute nothing.
// Requires p_i >= 0 and sum(p) == 1 within 1e-9.
double entropy(std::span<const double> p);

// ---------------------------------------------------------------------------
// LZ77

// offset == 0 && length == 0 marks a literal; match tokens carry
// (offset, length) with possibly overlapping sources.
struct Lz77Token {
    uint32_t offset = 0;
    uint32_t length = 0;
    uint8_t literal = 0;
};

inline constexpr int kLz77MinMatch = 2;
inline constexpr int kLz77Window = 32768;  // file-format default, offset-1 in 15 bits
inline constexpr int kLz77Lookahead = 257; // file-format default, length-2 in 8 bits

// Greedy longest-match parse; ties break toward the smallest offset; matches
// shorter than kLz77MinMatch become literals.
std::vector<Lz77Token> lz77_tokenize(std::span<const uint8_t> data, int window, int lookahead);
std::vector<uint8_t> lz77_reconstruct(std::span<const Lz77Token> tokens);

// ---------------------------------------------------------------------------
// Bit I/O (MSB-first within bytes)

class BitWriter {
public:
    void put_bit(int bit) {
        acc_ = (acc_ << 1) | static_cast<uint32_t>(bit & 1);
        if (++nbits_ == 8) flush_byte();
        ++bit_count_;
    }
    void put_bits(uint32_t value, int n) {
        for (int i = n - 1; i >= 0; --i) put_bit(static_cast<int>((value >> i) & 1));
    }
    uint64_t bit_count() const { return bit_count_; }
    // zero-pads the final partial byte
    std::vector<uint8_t> finish() {
        std::vector<uint8_t> out = std::move(bytes_);
        if (nbits_ > 0) {
            out.push_back(static_cast<uint8_t>(acc_ << (8 - nbits_)));
            acc_ = 0;
            nbits_ = 0;
        }
        bytes_.clear();
        return out;
    }

private:
    void flush_byte() {
        bytes_.push_back(static_cast<uint8_t>(acc_));
        acc_ = 0;
        nbits_ = 0;
    }
    std::vector<uint8_t> bytes_;
    uint32_t acc_ = 0;
    int nbits_ = 0;
    uint64_t bit_count_ = 0;
};

class BitReader {
public:
    explicit BitReader(std::span<const uint8_t> bytes) : bytes_(bytes) {}

    // strict read; CorruptBitstream past the end
    int read_bit() {
        if (pos_ >= bytes_.size() * 8) throw CorruptBitstream("bit stream exhausted");
        return read_bit_padded();
    }
    uint32_t read_bits(int n) {
        uint32_t v = 0;
        for (int i = 0; i < n; ++i) v = (v << 1) | static_cast<uint32_t>(read_bit());
        return v;
    }
    // padded read; bits past the end are zero (consumption still counted)
    int read_bit_padded() {
        int bit = 0;
        if (pos_ < bytes_.size() * 8)
            bit = (bytes_[pos_ / 8] >> (7 - pos_ % 8)) & 1;
        ++pos_;
        return bit;
    }
    uint64_t bits_consumed() const { return pos_; }

private:
    std::span<const uint8_t> bytes_;
    uint64_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Adaptive order-0 frequency model (bytes + end-of-stream)

// Laplace-smoothed counts (all start at 1). Adaptive updates add kIncrement
// to the coded symbol; when the total would exceed kMaxTotal the counts are
// halved, never below 1.
class FrequencyModel {
public:
    static constexpr int kAlphabet = 257;
    static constexpr int kEosSymbol = 256;
    static constexpr uint32_t kIncrement = 512;
    static constexpr uint32_t kMaxTotal = 1u << 21;

    explicit FrequencyModel(bool adaptive) : adaptive_(adaptive) { reset(); }

    void reset();
    uint32_t total() const { return cum_[kAlphabet]; }
    // cumulative range [lo, hi) of the symbol
    void symbol_range(int symbol, uint32_t& lo, uint32_t& hi) const;
    // symbol whose cumulative range contains cum
    int find(uint32_t cum, uint32_t& lo, uint32_t& hi) const;
    // adaptive update (no-op for the static model)
    void record(int symbol);

private:
    void rescale();
    std::vector<uint32_t> cum_; // cum_[i] = sum of counts below symbol i
    bool adaptive_;
};

// ---------------------------------------------------------------------------
// Arithmetic coder (interval coder with bit renormalization)

struct BitBuffer {
    std::vector<uint8_t> bytes;
    uint64_t bit_count = 0;
};

BitBuffer ac_encode(std::span<const uint8_t> symbols, bool adaptive);
std::vector<uint8_t> ac_decode(std::span<const uint8_t> bytes, bool adaptive);

// ---------------------------------------------------------------------------
// Range coder (integer low/range state, byte-wise renormalization with
// carry propagation; no floating point anywhere in the coding loop)

std::vector<uint8_t> range_encode(std::span<const uint8_t> symbols, bool adaptive);
std::vector<uint8_t> range_decode(std::span<const uint8_t> bytes, bool adaptive);

// state types exposed so the no-floating-point design contract is checkable
struct RangeCoderTraits {
    using low_type = uint64_t;
    using range_type = uint32_t;
    using freq_type = uint32_t;
};
struct ArithmeticCoderTraits {
    using state_type = uint32_t;
    using product_type = uint64_t;
    using freq_type = uint32_t;
};

// ---------------------------------------------------------------------------
// Baseline file format: "RLTB", codec id u8, original length u64 (LE), payload

enum class BaselineCodec : uint8_t { Lz77 = 1, Arithmetic = 2, Range = 3 };

std::vector<uint8_t> baseline_compress(BaselineCodec codec, std::span<const uint8_t> data);
std::vector<uint8_t> baseline_decompress(std::span<const uint8_t> file);

} // namespace rltc::baselines
