#include "rltc/tokenizer.hpp"

namespace rltc {

TokenSequence encode_bytes(std::span<const uint8_t> data) {
    TokenSequence out(data.size());
    for (size_t i = 0; i < data.size(); ++i) out[i] = data[i];
    return out;
}

std::vector<uint8_t> decode_tokens(const TokenSequence& seq) {
    std::vector<uint8_t> out(seq.size());
    for (size_t i = 0; i < seq.size(); ++i) {
        if (seq[i] < 0 || seq[i] > 255)
            throw SpecialTokenInPayload("token " + std::to_string(seq[i]) +
                                        " at position " + std::to_string(i) +
                                        " is not a byte");
        out[i] = static_cast<uint8_t>(seq[i]);
    }
    return out;
}

std::vector<Chunk> chunk_stream(const TokenSequence& seq, int chunk_len) {
    if (chunk_len < 1) throw ZeroChunkSize("chunk_len must be >= 1");
    std::vector<Chunk> chunks;
    size_t n = seq.size();
    chunks.reserve((n + chunk_len - 1) / chunk_len);
    for (size_t off = 0; off < n; off += chunk_len) {
        Chunk c;
        c.valid_len = static_cast<int>(std::min<size_t>(chunk_len, n - off));
        c.tokens.assign(chunk_len, vocab::kPad);
        for (int i = 0; i < c.valid_len; ++i) c.tokens[i] = seq[off + i];
        chunks.push_back(std::move(c));
    }
    return chunks;
}

} // namespace rltc
