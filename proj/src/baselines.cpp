#include "rltc/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace rltc::baselines {

double entropy(std::span<const double> p) {
    double sum = 0.0;
    for (double v : p) {
        if (v < 0.0 || !std::isfinite(v)) throw NotADistribution("negative or non-finite mass");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw NotADistribution("probabilities sum to " + std::to_string(sum));
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log2(v);
    return h;
}

// ---------------------------------------------------------------------------
// LZ77
//
// Greedy longest-match with exact 2-byte hash heads; candidates are visited
// most-recent-first, which is exactly ascending offset order, so a strict
// improvement test reproduces the smallest-offset tie break of the
// brute-force definition.

std::vector<Lz77Token> lz77_tokenize(std::span<const uint8_t> data, int window, int lookahead) {
    if (window < 1 || lookahead < 1) throw std::invalid_argument("window/lookahead must be >= 1");
    const size_t n = data.size();
    std::vector<Lz77Token> out;
    std::vector<int64_t> head(65536, -1);
    std::vector<int64_t> prev(n, -1);
    auto key = [&](size_t i) { return static_cast<int>(data[i]) | (static_cast<int>(data[i + 1]) << 8); };
    auto insert = [&](size_t i) {
        if (i + 1 < n) {
            int k = key(i);
            prev[i] = head[k];
            head[k] = static_cast<int64_t>(i);
        }
    };

    size_t pos = 0;
    while (pos < n) {
        const size_t max_len = std::min<size_t>(lookahead, n - pos);
        size_t best_len = 0;
        size_t best_off = 0;
        if (max_len >= kLz77MinMatch) {
            int64_t cand = head[key(pos)];
            while (cand >= 0 && pos - static_cast<size_t>(cand) <= static_cast<size_t>(window)) {
                size_t len = 0;
                const size_t c = static_cast<size_t>(cand);
                while (len < max_len && data[c + len] == data[pos + len]) ++len;
                if (len > best_len) {
                    best_len = len;
                    best_off = pos - c;
                    if (len == max_len) break;
                }
                cand = prev[c];
            }
        }
        if (best_len >= kLz77MinMatch) {
            out.push_back({static_cast<uint32_t>(best_off), static_cast<uint32_t>(best_len), 0});
            for (size_t k = 0; k < best_len; ++k) insert(pos + k);
            pos += best_len;
        } else {
            out.push_back({0, 0, data[pos]});
            insert(pos);
            pos += 1;
        }
    }
    return out;
}

std::vector<uint8_t> lz77_reconstruct(std::span<const Lz77Token> tokens) {
    std::vector<uint8_t> out;
    for (const Lz77Token& t : tokens) {
        if (t.offset == 0) {
            if (t.length != 0) throw DanglingOffset("literal token with nonzero length");
            out.push_back(t.literal);
        } else {
            if (t.length == 0) throw DanglingOffset("match token with zero length");
            if (t.offset > out.size())
                throw DanglingOffset("offset " + std::to_string(t.offset) + " exceeds output size " +
                                     std::to_string(out.size()));
            size_t start = out.size() - t.offset;
            for (uint32_t i = 0; i < t.length; ++i) out.push_back(out[start + i]);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Frequency model

void FrequencyModel::reset() {
    cum_.resize(kAlphabet + 1);
    for (int i = 0; i <= kAlphabet; ++i) cum_[i] = static_cast<uint32_t>(i);
}

void FrequencyModel::symbol_range(int symbol, uint32_t& lo, uint32_t& hi) const {
    lo = cum_[symbol];
    hi = cum_[symbol + 1];
}

int FrequencyModel::find(uint32_t cum, uint32_t& lo, uint32_t& hi) const {
    if (cum >= total()) cum = total() - 1;
    int s = static_cast<int>(std::upper_bound(cum_.begin(), cum_.end(), cum) - cum_.begin()) - 1;
    s = std::clamp(s, 0, kAlphabet - 1);
    symbol_range(s, lo, hi);
    return s;
}

void FrequencyModel::record(int symbol) {
    if (!adaptive_) return;
    if (total() + kIncrement > kMaxTotal) rescale();
    for (int i = symbol + 1; i <= kAlphabet; ++i) cum_[i] += kIncrement;
}

void FrequencyModel::rescale() {
    uint32_t acc = 0;
    std::vector<uint32_t> next(kAlphabet + 1);
    next[0] = 0;
    for (int s = 0; s < kAlphabet; ++s) {
        uint32_t count = cum_[s + 1] - cum_[s];
        acc += (count + 1) / 2;
        next[s + 1] = acc;
    }
    cum_ = std::move(next);
}

// ---------------------------------------------------------------------------
// Baseline file format

namespace {

constexpr char kBaselineMagic[4] = {'R', 'L', 'T', 'B'};

void put_u64le(std::vector<uint8_t>& b, uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

uint64_t get_u64le(std::span<const uint8_t> b) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

std::vector<uint8_t> lz77_file_payload(std::span<const uint8_t> data) {
    auto tokens = lz77_tokenize(data, kLz77Window, kLz77Lookahead);
    BitWriter w;
    for (const Lz77Token& t : tokens) {
        if (t.offset == 0) {
            w.put_bit(0);
            w.put_bits(t.literal, 8);
        } else {
            w.put_bit(1);
            w.put_bits(t.offset - 1, 15);
            w.put_bits(t.length - kLz77MinMatch, 8);
        }
    }
    return w.finish();
}

std::vector<uint8_t> lz77_file_decode(std::span<const uint8_t> payload, uint64_t original_len) {
    BitReader r(payload);
    std::vector<uint8_t> out;
    out.reserve(original_len);
    while (out.size() < original_len) {
        if (r.read_bit() == 0) {
            out.push_back(static_cast<uint8_t>(r.read_bits(8)));
        } else {
            uint32_t offset = r.read_bits(15) + 1;
            uint32_t length = r.read_bits(8) + kLz77MinMatch;
            if (offset > out.size()) throw CorruptBitstream("match offset before stream start");
            size_t start = out.size() - offset;
            for (uint32_t i = 0; i < length; ++i) out.push_back(out[start + i]);
        }
    }
    if (out.size() != original_len) throw CorruptBitstream("decoded length mismatch");
    return out;
}

} // namespace

std::vector<uint8_t> baseline_compress(BaselineCodec codec, std::span<const uint8_t> data) {
    std::vector<uint8_t> out;
    out.insert(out.end(), kBaselineMagic, kBaselineMagic + 4);
    out.push_back(static_cast<uint8_t>(codec));
    put_u64le(out, data.size());
    std::vector<uint8_t> payload;
    switch (codec) {
    case BaselineCodec::Lz77:
        payload = lz77_file_payload(data);
        break;
    case BaselineCodec::Arithmetic:
        payload = ac_encode(data, true).bytes;
        break;
    case BaselineCodec::Range:
        payload = range_encode(data, true);
        break;
    default:
        throw std::invalid_argument("unknown baseline codec");
    }
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

std::vector<uint8_t> baseline_decompress(std::span<const uint8_t> file) {
    if (file.size() < 13 || std::memcmp(file.data(), kBaselineMagic, 4) != 0)
        throw CorruptBitstream("not an RLTB baseline file");
    uint8_t codec = file[4];
    uint64_t original_len = get_u64le(file.subspan(5, 8));
    auto payload = file.subspan(13);
    std::vector<uint8_t> out;
    switch (static_cast<BaselineCodec>(codec)) {
    case BaselineCodec::Lz77:
        out = lz77_file_decode(payload, original_len);
        break;
    case BaselineCodec::Arithmetic:
        out = ac_decode(payload, true);
        break;
    case BaselineCodec::Range:
        out = range_decode(payload, true);
        break;
    default:
        throw CorruptBitstream("unknown baseline codec id");
    }
    if (out.size() != original_len) throw CorruptBitstream("decoded length mismatch");
    return out;
}

} // namespace rltc::baselines
