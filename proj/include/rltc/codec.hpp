#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rltc/model.hpp"
#include "rltc/tokenizer.hpp"

namespace rltc {

struct TokenOutOfRange : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct PayloadTruncated : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MalformedRecord : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct BadMagic : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct VersionUnsupported : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct VocabMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CorruptContainer : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ceil(log2(vocab)) - fixed bits per packed token
int token_bit_width(int vocab);

// Fixed-width packing, most-significant-bit first within bytes; the final
// partial byte is zero-padded. Throws TokenOutOfRange on ids >= vocab.
std::vector<uint8_t> pack_tokens(const TokenSequence& tokens, int vocab);

// Exact inverse; payload must be exactly ceil(n_tokens * width / 8) bytes.
TokenSequence unpack_tokens(std::span<const uint8_t> payload, int n_tokens, int vocab);

// One chunk of the container: the compressed tokens plus the residual
// corrections that force exact reconstruction.
struct ChunkRecord {
    TokenSequence tokens;                                    // includes STOP when emitted
    std::vector<std::pair<uint16_t, uint16_t>> corrections;  // (position, true token)
};

struct SizeReport {
    uint64_t original_bytes = 0;
    uint64_t container_bytes = 0;
    uint64_t token_payload_bytes = 0; // per-chunk n_tokens field + packed payload
    uint64_t corrections_bytes = 0;   // per-chunk n_corrections field + pairs
    uint64_t header_bytes = 0;
};

struct CompressedContainer {
    uint32_t vocab = vocab::kSize;
    uint16_t chunk_len = 0;
    uint64_t original_byte_len = 0;
    std::vector<ChunkRecord> chunks;
};

inline constexpr uint64_t kContainerHeaderBytes = 4 + 1 + 4 + 2 + 8 + 4;

// Greedy (argmax) compression of one chunk: the compressor emits tokens until
// STOP or valid_len; the decompressor's teacher-forced predictions are diffed
// against the chunk to produce corrections.
ChunkRecord compress_chunk(const ModelParams& compressor, const ModelParams& decompressor,
                           const Chunk& chunk);

// Reconstructs the chunk: greedy decode from the record's tokens with
// corrections overlaid position by position. valid_len is dictated by the
// container (chunk_len except possibly for the final chunk).
Chunk decompress_chunk(const ModelParams& decompressor, const ChunkRecord& rec, int chunk_len,
                       int valid_len);

// Normative "RLTC" v1 byte layout; all integers little-endian, token payload
// bits packed MSB-first. When report is given, fills the size accounting.
std::vector<uint8_t> serialize_container(const CompressedContainer& c, SizeReport* report = nullptr);
CompressedContainer parse_container(std::span<const uint8_t> bytes);

// Whole-stream pipeline. Chunks are processed independently (optionally in
// parallel over jobs workers); the container layout does not depend on jobs.
std::vector<uint8_t> compress_stream(const ModelParams& compressor,
                                     const ModelParams& decompressor,
                                     std::span<const uint8_t> data, int chunk_len,
                                     SizeReport* report = nullptr, int jobs = 1);
std::vector<uint8_t> decompress_stream(const ModelParams& decompressor,
                                       std::span<const uint8_t> container, int jobs = 1);

} // namespace rltc
