#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rltc/model.hpp"

namespace rltc::bench {

struct FileUnreadable : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ZeroCompressedSize : std::runtime_error {
    using std::runtime_error::runtime_error;
};

uint64_t fnv1a64(std::span<const uint8_t> data);

struct CorpusSlice {
    std::string source_path;
    uint64_t offset = 0;
    std::vector<uint8_t> data;
    uint64_t content_hash = 0;
};

// Loads min(limit_bytes, file size) bytes from the head of the file and
// records the content hash.
CorpusSlice ingest_corpus(const std::string& path, uint64_t limit_bytes);

// original / compressed; tables round to 2 decimals
double compression_ratio(uint64_t original_bytes, uint64_t compressed_bytes);

// ---------------------------------------------------------------------------
// Chunk-size sweep

struct SweepRow {
    int chunk_size = 0;
    uint64_t compressed_bytes = 0;
    double ratio = 0.0;
    double latency_s = 0.0;      // median wall-clock seconds per batch
    double throughput_tps = 0.0; // tokens per second at that latency
};

// Compresses the slice once per size (round-trip verified before the row is
// recorded), then times per-batch compression: 2 warm-up batches, median of
// 5 measured ones.
std::vector<SweepRow> sweep_chunk_sizes(const ModelParams& compressor,
                                        const ModelParams& decompressor, const CorpusSlice& slice,
                                        const std::vector<int>& sizes, int batch, int jobs = 1);

std::string sweep_csv(const std::vector<SweepRow>& rows);

// ---------------------------------------------------------------------------
// Table 1-shaped baseline report

struct TableRow {
    std::string program;
    uint64_t compressed_bytes = 0;
    double ratio = 0.0;
    bool verified = false;  // byte-exact round trip confirmed
    bool available = true;  // false when an external tool is missing
    std::string note;
};

// Native LZ77 / arithmetic / range rows, the learned codec when checkpoints
// are supplied, and system gzip/xz when installed. Every emitted row is
// backed by a verified reconstruction; missing tools degrade to a note.
std::vector<TableRow> baseline_table(const CorpusSlice& slice,
                                     const ModelParams* compressor = nullptr,
                                     const ModelParams* decompressor = nullptr, int chunk_len = 64,
                                     int jobs = 1);

// schema: program,compressed_bytes,ratio,verified (unavailable rows skipped)
std::string table_csv(const std::vector<TableRow>& rows);

// ---------------------------------------------------------------------------
// Reference ratio arithmetic on the published enwik8 byte counts

struct PublishedRow {
    std::string program;
    uint64_t compressed_bytes = 0;
    double reported_ratio = 0.0;
    int reported_decimals = 1;
    double computed_ratio = 0.0;
    bool discrepancy = false; // computed disagrees with the report at its own precision
};

std::vector<PublishedRow> published_reference_table();
std::string published_reference_report();

} // namespace rltc::bench
