#include "rltc/baselines.hpp"

namespace rltc::baselines {

// ---------------------------------------------------------------------------
// Arithmetic coder: 32-bit low/high interval with bit renormalization and
// underflow counting; subdivision uses exact 64-bit products so the per-symbol
// truncation loss stays below one part in 2^9 of a count.

namespace {

constexpr uint32_t kAcHalf = 0x80000000u;
constexpr uint32_t kAcQuarter = 0x40000000u;
constexpr uint32_t kAcThreeQuarters = 0xC0000000u;

static_assert(FrequencyModel::kMaxTotal <= (1u << 22), "total must leave headroom in u64 products");

class AcEncoder {
public:
    void encode(uint32_t lo, uint32_t hi, uint32_t total) {
        uint64_t range = static_cast<uint64_t>(high_ - low_) + 1;
        high_ = low_ + static_cast<uint32_t>(range * hi / total - 1);
        low_ = low_ + static_cast<uint32_t>(range * lo / total);
        for (;;) {
            if (high_ < kAcHalf) {
                emit(0);
            } else if (low_ >= kAcHalf) {
                emit(1);
                low_ -= kAcHalf;
                high_ -= kAcHalf;
            } else if (low_ >= kAcQuarter && high_ < kAcThreeQuarters) {
                ++pending_;
                low_ -= kAcQuarter;
                high_ -= kAcQuarter;
            } else {
                break;
            }
            low_ <<= 1;
            high_ = (high_ << 1) | 1;
        }
    }

    BitBuffer finish() {
        ++pending_;
        emit(low_ < kAcQuarter ? 0 : 1);
        BitBuffer out;
        out.bit_count = writer_.bit_count();
        out.bytes = writer_.finish();
        return out;
    }

private:
    void emit(int bit) {
        writer_.put_bit(bit);
        for (; pending_ > 0; --pending_) writer_.put_bit(bit ^ 1);
    }

    ArithmeticCoderTraits::state_type low_ = 0;
    ArithmeticCoderTraits::state_type high_ = 0xFFFFFFFFu;
    uint64_t pending_ = 0;
    BitWriter writer_;
};

class AcDecoder {
public:
    explicit AcDecoder(std::span<const uint8_t> bytes) : reader_(bytes) {
        for (int i = 0; i < 32; ++i)
            code_ = (code_ << 1) | static_cast<uint32_t>(reader_.read_bit_padded());
    }

    uint32_t decode_target(uint32_t total) const {
        uint64_t range = static_cast<uint64_t>(high_ - low_) + 1;
        return static_cast<uint32_t>(
            ((static_cast<uint64_t>(code_ - low_) + 1) * total - 1) / range);
    }

    void consume(uint32_t lo, uint32_t hi, uint32_t total) {
        uint64_t range = static_cast<uint64_t>(high_ - low_) + 1;
        high_ = low_ + static_cast<uint32_t>(range * hi / total - 1);
        low_ = low_ + static_cast<uint32_t>(range * lo / total);
        for (;;) {
            if (high_ < kAcHalf) {
                // nothing to subtract
            } else if (low_ >= kAcHalf) {
                low_ -= kAcHalf;
                high_ -= kAcHalf;
                code_ -= kAcHalf;
            } else if (low_ >= kAcQuarter && high_ < kAcThreeQuarters) {
                low_ -= kAcQuarter;
                high_ -= kAcQuarter;
                code_ -= kAcQuarter;
            } else {
                break;
            }
            low_ <<= 1;
            high_ = (high_ << 1) | 1;
            code_ = (code_ << 1) | static_cast<uint32_t>(reader_.read_bit_padded());
        }
    }

    uint64_t bits_consumed() const { return reader_.bits_consumed(); }

private:
    ArithmeticCoderTraits::state_type low_ = 0;
    ArithmeticCoderTraits::state_type high_ = 0xFFFFFFFFu;
    ArithmeticCoderTraits::state_type code_ = 0;
    BitReader reader_;
};

} // namespace

BitBuffer ac_encode(std::span<const uint8_t> symbols, bool adaptive) {
    FrequencyModel model(adaptive);
    AcEncoder enc;
    auto put = [&](int sym) {
        uint32_t lo, hi;
        model.symbol_range(sym, lo, hi);
        enc.encode(lo, hi, model.total());
        model.record(sym);
    };
    for (uint8_t b : symbols) put(b);
    put(FrequencyModel::kEosSymbol);
    return enc.finish();
}

std::vector<uint8_t> ac_decode(std::span<const uint8_t> bytes, bool adaptive) {
    FrequencyModel model(adaptive);
    AcDecoder dec(bytes);
    std::vector<uint8_t> out;
    const uint64_t bit_budget = bytes.size() * 8 + 64;
    // a symbol with count c costs at least -log2(1 - 255/total) bits, so a
    // legitimate stream can carry at most ~5.7k symbols per coded bit
    const uint64_t symbol_budget = bit_budget * 6000;
    for (;;) {
        if (dec.bits_consumed() > bit_budget || out.size() > symbol_budget)
            throw CorruptBitstream("no end-of-stream marker within the bit stream");
        uint32_t target = dec.decode_target(model.total());
        uint32_t lo, hi;
        int sym = model.find(target, lo, hi);
        dec.consume(lo, hi, model.total());
        model.record(sym);
        if (sym == FrequencyModel::kEosSymbol) break;
        out.push_back(static_cast<uint8_t>(sym));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Range coder: 32-bit range with a 64-bit low accumulating carries, byte-wise
// renormalization. The leading byte of the classic scheme is provably zero
// and is elided; trailing zero bytes are trimmed (the decoder zero-pads).

namespace {

constexpr uint32_t kRangeBottom = 1u << 24;

class RangeEncoder {
public:
    void encode(uint32_t lo, uint32_t hi, uint32_t total) {
        uint64_t r = range_;
        uint64_t off_lo = r * lo / total;
        uint64_t off_hi = r * hi / total;
        low_ += off_lo;
        range_ = static_cast<uint32_t>(off_hi - off_lo);
        while (range_ < kRangeBottom) {
            shift_low();
            range_ <<= 8;
        }
    }

    std::vector<uint8_t> finish() {
        // pick the code point with a zero 24-bit tail inside [low, low+range)
        uint64_t rounded = (low_ + kRangeBottom - 1) & ~static_cast<uint64_t>(kRangeBottom - 1);
        low_ = rounded;
        for (int i = 0; i < 5; ++i) shift_low();
        while (!out_.empty() && out_.back() == 0) out_.pop_back();
        return std::move(out_);
    }

private:
    void shift_low() {
        uint32_t carry = static_cast<uint32_t>(low_ >> 32);
        if (carry != 0 || static_cast<uint32_t>(low_) < 0xFF000000u) {
            if (has_cache_) out_.push_back(static_cast<uint8_t>(cache_ + carry));
            for (; pending_ff_ > 0; --pending_ff_)
                out_.push_back(static_cast<uint8_t>(0xFFu + carry));
            cache_ = static_cast<uint8_t>(static_cast<uint32_t>(low_) >> 24);
            has_cache_ = true;
        } else {
            ++pending_ff_;
        }
        low_ = static_cast<uint64_t>(static_cast<uint32_t>(low_) << 8);
    }

    RangeCoderTraits::low_type low_ = 0;
    RangeCoderTraits::range_type range_ = 0xFFFFFFFFu;
    uint8_t cache_ = 0;
    bool has_cache_ = false;
    uint64_t pending_ff_ = 0;
    std::vector<uint8_t> out_;
};

class RangeDecoder {
public:
    explicit RangeDecoder(std::span<const uint8_t> bytes) : bytes_(bytes) {
        for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
    }

    uint32_t decode_target(uint32_t total) const {
        uint64_t r = range_;
        return static_cast<uint32_t>(((static_cast<uint64_t>(code_) + 1) * total - 1) / r);
    }

    void consume(uint32_t lo, uint32_t hi, uint32_t total) {
        uint64_t r = range_;
        uint64_t off_lo = r * lo / total;
        uint64_t off_hi = r * hi / total;
        code_ -= static_cast<uint32_t>(off_lo);
        range_ = static_cast<uint32_t>(off_hi - off_lo);
        while (range_ < kRangeBottom) {
            code_ = (code_ << 8) | next_byte();
            range_ <<= 8;
        }
    }

    uint64_t bytes_consumed() const { return consumed_; }

private:
    uint32_t next_byte() {
        uint32_t b = consumed_ < bytes_.size() ? bytes_[consumed_] : 0;
        ++consumed_;
        return b;
    }

    std::span<const uint8_t> bytes_;
    RangeCoderTraits::range_type range_ = 0xFFFFFFFFu;
    RangeCoderTraits::range_type code_ = 0;
    uint64_t consumed_ = 0;
};

} // namespace

std::vector<uint8_t> range_encode(std::span<const uint8_t> symbols, bool adaptive) {
    FrequencyModel model(adaptive);
    RangeEncoder enc;
    auto put = [&](int sym) {
        uint32_t lo, hi;
        model.symbol_range(sym, lo, hi);
        enc.encode(lo, hi, model.total());
        model.record(sym);
    };
    for (uint8_t b : symbols) put(b);
    put(FrequencyModel::kEosSymbol);
    return enc.finish();
}

std::vector<uint8_t> range_decode(std::span<const uint8_t> bytes, bool adaptive) {
    FrequencyModel model(adaptive);
    RangeDecoder dec(bytes);
    std::vector<uint8_t> out;
    const uint64_t byte_budget = bytes.size() + 16;
    const uint64_t symbol_budget = (byte_budget + 8) * 8 * 6000;
    for (;;) {
        if (dec.bytes_consumed() > byte_budget || out.size() > symbol_budget)
            throw CorruptBitstream("no end-of-stream marker within the byte stream");
        uint32_t target = dec.decode_target(model.total());
        uint32_t lo, hi;
        int sym = model.find(target, lo, hi);
        dec.consume(lo, hi, model.total());
        model.record(sym);
        if (sym == FrequencyModel::kEosSymbol) break;
        out.push_back(static_cast<uint8_t>(sym));
    }
    return out;
}

} // namespace rltc::baselines
