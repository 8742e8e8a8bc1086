#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace rltc {

// Byte-level vocabulary: ids 0..255 are the bytes themselves, followed by
// four reserved control ids. EOS is reserved but unused by the pipeline.
namespace vocab {
inline constexpr int kSize = 260;
inline constexpr int kPad = 256;
inline constexpr int kBos = 257;
inline constexpr int kEos = 258;
inline constexpr int kStop = 259;

inline constexpr bool is_byte(int id) { return id >= 0 && id <= 255; }
inline constexpr bool is_special(int id) { return id >= kPad && id < kSize; }
} // namespace vocab

using TokenSequence = std::vector<int>;

struct SpecialTokenInPayload : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ZeroChunkSize : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A fixed-length group of tokens; positions >= valid_len are PAD.
struct Chunk {
    TokenSequence tokens;
    int valid_len = 0;

    int size() const { return static_cast<int>(tokens.size()); }
};

// Identity byte->token mapping; |out| == |data|.
TokenSequence encode_bytes(std::span<const uint8_t> data);

// Inverse of encode_bytes. Throws SpecialTokenInPayload on any id >= 256.
std::vector<uint8_t> decode_tokens(const TokenSequence& seq);

// Splits seq into ceil(|seq|/chunk_len) chunks of exactly chunk_len tokens,
// PAD-filling the tail of the last one. Throws ZeroChunkSize on chunk_len < 1.
std::vector<Chunk> chunk_stream(const TokenSequence& seq, int chunk_len);

} // namespace rltc
