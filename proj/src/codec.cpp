#include "rltc/codec.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <functional>
#include <mutex>
#include <thread>
#include <unordered_map>

namespace rltc {

int token_bit_width(int vocab) {
    if (vocab < 2) throw std::invalid_argument("vocab too small");
    int w = 1;
    while ((1 << w) < vocab) ++w;
    return w;
}

std::vector<uint8_t> pack_tokens(const TokenSequence& tokens, int vocab) {
    const int w = token_bit_width(vocab);
    std::vector<uint8_t> out;
    out.reserve((tokens.size() * w + 7) / 8);
    uint32_t acc = 0;
    int nbits = 0;
    for (int tok : tokens) {
        if (tok < 0 || tok >= vocab)
            throw TokenOutOfRange("token " + std::to_string(tok) + " out of range");
        acc = (acc << w) | static_cast<uint32_t>(tok);
        nbits += w;
        while (nbits >= 8) {
            out.push_back(static_cast<uint8_t>(acc >> (nbits - 8)));
            nbits -= 8;
            acc &= (1u << nbits) - 1;
        }
    }
    if (nbits > 0) out.push_back(static_cast<uint8_t>(acc << (8 - nbits)));
    return out;
}

TokenSequence unpack_tokens(std::span<const uint8_t> payload, int n_tokens, int vocab) {
    const int w = token_bit_width(vocab);
    const size_t need = (static_cast<size_t>(n_tokens) * w + 7) / 8;
    if (payload.size() != need)
        throw PayloadTruncated("payload is " + std::to_string(payload.size()) + " bytes, expected " +
                               std::to_string(need));
    TokenSequence out(n_tokens);
    uint32_t acc = 0;
    int nbits = 0;
    size_t pos = 0;
    for (int i = 0; i < n_tokens; ++i) {
        while (nbits < w) {
            acc = (acc << 8) | payload[pos++];
            nbits += 8;
        }
        uint32_t tok = (acc >> (nbits - w)) & ((1u << w) - 1);
        nbits -= w;
        acc &= (1u << nbits) - 1;
        if (tok >= static_cast<uint32_t>(vocab))
            throw TokenOutOfRange("packed token " + std::to_string(tok) + " out of range");
        out[i] = static_cast<int>(tok);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Chunk-level compress / decompress
//
// Both directions drive the decoder through the same incremental decode_step
// path, feeding the true (resp. corrected) prefix, so the prediction stream
// is reproduced exactly at decompression time.

ChunkRecord compress_chunk(const ModelParams& compressor, const ModelParams& decompressor,
                           const Chunk& chunk) {
    if (compressor.cfg.vocab != decompressor.cfg.vocab)
        throw VocabMismatch("compressor/decompressor vocabulary mismatch");
    ChunkRecord rec;

    // greedy autoregressive compression
    {
        Mat enc = forward_encoder(compressor, chunk);
        DecodeState st = decode_begin(compressor, enc, chunk.valid_len);
        int token = vocab::kBos;
        for (int t = 0; t < chunk.valid_len; ++t) {
            DecodeStepResult out = decode_step(compressor, st, token);
            int action = argmax_token(out.logits);
            rec.tokens.push_back(action);
            if (action == vocab::kStop) break;
            token = action;
        }
    }

    // teacher-forced predictions; mismatches become corrections
    {
        Chunk enc_in{rec.tokens, static_cast<int>(rec.tokens.size())};
        Mat enc = forward_encoder(decompressor, enc_in);
        DecodeState st = decode_begin(decompressor, enc, enc_in.valid_len);
        int prev = vocab::kBos;
        for (int t = 0; t < chunk.valid_len; ++t) {
            DecodeStepResult out = decode_step(decompressor, st, prev);
            int predicted = argmax_token(out.logits);
            int truth = chunk.tokens[t];
            if (predicted != truth)
                rec.corrections.emplace_back(static_cast<uint16_t>(t),
                                             static_cast<uint16_t>(truth));
            prev = truth;
        }
    }
    return rec;
}

Chunk decompress_chunk(const ModelParams& decompressor, const ChunkRecord& rec, int chunk_len,
                       int valid_len) {
    if (valid_len < 0 || valid_len > chunk_len) throw MalformedRecord("bad valid_len");
    std::unordered_map<int, int> fix;
    for (auto [pos, tok] : rec.corrections) {
        if (pos >= valid_len) throw MalformedRecord("correction position out of range");
        if (!fix.emplace(pos, tok).second) throw MalformedRecord("duplicate correction position");
    }

    Chunk out;
    out.tokens.assign(chunk_len, vocab::kPad);
    out.valid_len = valid_len;
    if (valid_len == 0) {
        if (!rec.corrections.empty()) throw MalformedRecord("corrections on empty chunk");
        return out;
    }

    if (rec.tokens.empty()) {
        // degenerate record: reconstruction comes entirely from corrections
        for (int t = 0; t < valid_len; ++t) {
            auto it = fix.find(t);
            if (it != fix.end()) out.tokens[t] = it->second;
        }
        return out;
    }

    Chunk enc_in{rec.tokens, static_cast<int>(rec.tokens.size())};
    Mat enc = forward_encoder(decompressor, enc_in);
    DecodeState st = decode_begin(decompressor, enc, enc_in.valid_len);
    int prev = vocab::kBos;
    for (int t = 0; t < valid_len; ++t) {
        DecodeStepResult step = decode_step(decompressor, st, prev);
        int tok = argmax_token(step.logits);
        auto it = fix.find(t);
        if (it != fix.end()) tok = it->second;
        out.tokens[t] = tok;
        prev = tok;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Container serialization

namespace {

constexpr char kMagic[4] = {'R', 'L', 'T', 'C'};
constexpr uint8_t kVersion = 1;

void put_u16(std::vector<uint8_t>& b, uint16_t v) {
    b.push_back(static_cast<uint8_t>(v & 0xff));
    b.push_back(static_cast<uint8_t>(v >> 8));
}
void put_u32(std::vector<uint8_t>& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}
void put_u64(std::vector<uint8_t>& b, uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

struct ByteReader {
    std::span<const uint8_t> data;
    size_t off = 0;

    void need(size_t k) const {
        if (off + k > data.size()) throw CorruptContainer("container truncated");
    }
    uint8_t u8() {
        need(1);
        return data[off++];
    }
    uint16_t u16() {
        need(2);
        uint16_t v = static_cast<uint16_t>(data[off] | (data[off + 1] << 8));
        off += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data[off + i]) << (8 * i);
        off += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data[off + i]) << (8 * i);
        off += 8;
        return v;
    }
    std::span<const uint8_t> bytes(size_t k) {
        need(k);
        auto s = data.subspan(off, k);
        off += k;
        return s;
    }
};

int last_chunk_valid_len(const CompressedContainer& c, size_t index) {
    if (index + 1 < c.chunks.size()) return c.chunk_len;
    uint64_t tail = c.original_byte_len - c.chunk_len * (c.chunks.size() - 1);
    return static_cast<int>(tail);
}

} // namespace

std::vector<uint8_t> serialize_container(const CompressedContainer& c, SizeReport* report) {
    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(kVersion);
    put_u32(out, c.vocab);
    put_u16(out, c.chunk_len);
    put_u64(out, c.original_byte_len);
    put_u32(out, static_cast<uint32_t>(c.chunks.size()));

    uint64_t payload_bytes = 0;
    uint64_t corr_bytes = 0;
    for (const ChunkRecord& rec : c.chunks) {
        if (rec.tokens.size() > c.chunk_len)
            throw MalformedRecord("chunk record longer than chunk_len");
        put_u16(out, static_cast<uint16_t>(rec.tokens.size()));
        std::vector<uint8_t> packed = pack_tokens(rec.tokens, static_cast<int>(c.vocab));
        out.insert(out.end(), packed.begin(), packed.end());
        payload_bytes += 2 + packed.size();
        put_u16(out, static_cast<uint16_t>(rec.corrections.size()));
        for (auto [pos, tok] : rec.corrections) {
            put_u16(out, pos);
            put_u16(out, tok);
        }
        corr_bytes += 2 + 4 * rec.corrections.size();
    }
    if (report) {
        report->original_bytes = c.original_byte_len;
        report->container_bytes = out.size();
        report->header_bytes = kContainerHeaderBytes;
        report->token_payload_bytes = payload_bytes;
        report->corrections_bytes = corr_bytes;
    }
    return out;
}

CompressedContainer parse_container(std::span<const uint8_t> bytes) {
    ByteReader r{bytes};
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw BadMagic("not an RLTC container");
    r.off = 4;
    uint8_t version = r.u8();
    if (version != kVersion)
        throw VersionUnsupported("container version " + std::to_string(version));

    CompressedContainer c;
    c.vocab = r.u32();
    c.chunk_len = r.u16();
    c.original_byte_len = r.u64();
    uint32_t n_chunks = r.u32();

    if (c.vocab < 2 || c.chunk_len < 1) throw CorruptContainer("bad header fields");
    uint64_t expected_chunks =
        (c.original_byte_len + c.chunk_len - 1) / c.chunk_len;
    if (expected_chunks != n_chunks) throw CorruptContainer("chunk count mismatch");

    const int w = token_bit_width(static_cast<int>(c.vocab));
    c.chunks.resize(n_chunks);
    for (uint32_t i = 0; i < n_chunks; ++i) {
        ChunkRecord& rec = c.chunks[i];
        uint16_t n_tokens = r.u16();
        if (n_tokens > c.chunk_len) throw CorruptContainer("record longer than chunk_len");
        size_t payload_len = (static_cast<size_t>(n_tokens) * w + 7) / 8;
        auto payload = r.bytes(payload_len);
        try {
            rec.tokens = unpack_tokens(payload, n_tokens, static_cast<int>(c.vocab));
        } catch (const TokenOutOfRange& e) {
            throw CorruptContainer(e.what());
        }
        uint16_t n_corr = r.u16();
        rec.corrections.reserve(n_corr);
        for (uint16_t j = 0; j < n_corr; ++j) {
            uint16_t pos = r.u16();
            uint16_t tok = r.u16();
            rec.corrections.emplace_back(pos, tok);
        }
    }
    if (r.off != bytes.size()) throw CorruptContainer("trailing bytes after container");
    return c;
}

// ---------------------------------------------------------------------------
// Stream pipeline

namespace {

void parallel_for(size_t count, int jobs, const std::function<void(size_t)>& fn) {
    if (jobs <= 1 || count <= 1) {
        for (size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= count) return;
            fn(i);
        }
    };
    std::vector<std::thread> threads;
    int n_threads = std::min<int>(jobs, static_cast<int>(count));
    threads.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
}

} // namespace

std::vector<uint8_t> compress_stream(const ModelParams& compressor,
                                     const ModelParams& decompressor,
                                     std::span<const uint8_t> data, int chunk_len,
                                     SizeReport* report, int jobs) {
    if (chunk_len < 1 || chunk_len > 128)
        throw std::invalid_argument("chunk_len must be in [1, 128]");
    if (compressor.cfg.vocab != decompressor.cfg.vocab)
        throw VocabMismatch("compressor/decompressor vocabulary mismatch");
    if (chunk_len + 2 > compressor.cfg.max_pos)
        throw ShapeMismatch("chunk_len exceeds model max_pos");

    CompressedContainer c;
    c.vocab = static_cast<uint32_t>(compressor.cfg.vocab);
    c.chunk_len = static_cast<uint16_t>(chunk_len);
    c.original_byte_len = data.size();

    std::vector<Chunk> chunks = chunk_stream(encode_bytes(data), chunk_len);
    c.chunks.resize(chunks.size());
    std::exception_ptr failure;
    std::mutex failure_mutex;
    parallel_for(chunks.size(), jobs, [&](size_t i) {
        try {
            c.chunks[i] = compress_chunk(compressor, decompressor, chunks[i]);
        } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    });
    if (failure) std::rethrow_exception(failure);
    return serialize_container(c, report);
}

std::vector<uint8_t> decompress_stream(const ModelParams& decompressor,
                                       std::span<const uint8_t> container, int jobs) {
    CompressedContainer c = parse_container(container);
    if (c.vocab != static_cast<uint32_t>(decompressor.cfg.vocab))
        throw VocabMismatch("container vocab " + std::to_string(c.vocab) +
                            " does not match model vocab " +
                            std::to_string(decompressor.cfg.vocab));

    std::vector<uint8_t> out(c.original_byte_len);
    std::exception_ptr failure;
    std::mutex failure_mutex;
    parallel_for(c.chunks.size(), jobs, [&](size_t i) {
        try {
            int valid = last_chunk_valid_len(c, i);
            Chunk chunk;
            try {
                chunk = decompress_chunk(decompressor, c.chunks[i], c.chunk_len, valid);
            } catch (const MalformedRecord& e) {
                throw CorruptContainer(e.what());
            }
            TokenSequence payload(chunk.tokens.begin(), chunk.tokens.begin() + valid);
            std::vector<uint8_t> bytes;
            try {
                bytes = decode_tokens(payload);
            } catch (const SpecialTokenInPayload& e) {
                throw CorruptContainer(e.what());
            }
            std::copy(bytes.begin(), bytes.end(), out.begin() + i * c.chunk_len);
        } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    });
    if (failure) std::rethrow_exception(failure);
    return out;
}

} // namespace rltc
