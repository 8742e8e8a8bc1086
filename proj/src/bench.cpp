#include "rltc/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "rltc/baselines.hpp"
#include "rltc/codec.hpp"
#include "rltc/io_util.hpp"
#include "rltc/tokenizer.hpp"

namespace rltc::bench {

uint64_t fnv1a64(std::span<const uint8_t> data) {
    uint64_t h = 1469598103934665603ULL;
    for (uint8_t b : data) {
        h ^= b;
        h *= 1099511628211ULL;
    }
    return h;
}

CorpusSlice ingest_corpus(const std::string& path, uint64_t limit_bytes) {
    if (limit_bytes < 1) throw std::invalid_argument("limit_bytes must be >= 1");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileUnreadable("cannot open corpus " + path);
    in.seekg(0, std::ios::end);
    auto file_size = in.tellg();
    if (file_size < 0) throw FileUnreadable("cannot stat corpus " + path);
    in.seekg(0, std::ios::beg);

    CorpusSlice slice;
    slice.source_path = path;
    slice.offset = 0;
    slice.data.resize(std::min<uint64_t>(limit_bytes, static_cast<uint64_t>(file_size)));
    if (!slice.data.empty() &&
        !in.read(reinterpret_cast<char*>(slice.data.data()),
                 static_cast<std::streamsize>(slice.data.size())))
        throw FileUnreadable("short read on corpus " + path);
    slice.content_hash = fnv1a64(slice.data);
    return slice;
}

double compression_ratio(uint64_t original_bytes, uint64_t compressed_bytes) {
    if (compressed_bytes == 0) throw ZeroCompressedSize("compressed size is zero");
    return static_cast<double>(original_bytes) / static_cast<double>(compressed_bytes);
}

// ---------------------------------------------------------------------------
// Sweep

namespace {

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

} // namespace

std::vector<SweepRow> sweep_chunk_sizes(const ModelParams& compressor,
                                        const ModelParams& decompressor, const CorpusSlice& slice,
                                        const std::vector<int>& sizes, int batch, int jobs) {
    if (batch < 1) throw std::invalid_argument("batch must be >= 1");
    for (int s : sizes)
        if (s < 1 || s > 128) throw std::invalid_argument("chunk sizes must lie in [1, 128]");

    std::vector<SweepRow> rows;
    rows.reserve(sizes.size());
    for (int size : sizes) {
        SweepRow row;
        row.chunk_size = size;

        // size + verification pass
        std::vector<uint8_t> container =
            compress_stream(compressor, decompressor, slice.data, size, nullptr, jobs);
        std::vector<uint8_t> back = decompress_stream(decompressor, container, jobs);
        if (back != slice.data) throw CorruptContainer("sweep round-trip mismatch");
        row.compressed_bytes = container.size();
        row.ratio = compression_ratio(slice.data.size(), container.size());

        // timing pass over per-batch chunk groups: 2 warm-ups, median of 5
        std::vector<Chunk> chunks = chunk_stream(encode_bytes(slice.data), size);
        if (!chunks.empty()) {
            auto run_batch = [&](size_t batch_index) {
                size_t begin = (batch_index * batch) % chunks.size();
                for (int i = 0; i < batch; ++i)
                    compress_chunk(compressor, decompressor, chunks[(begin + i) % chunks.size()]);
            };
            for (int w = 0; w < 2; ++w) run_batch(w);
            std::vector<double> times(5);
            for (int i = 0; i < 5; ++i) {
                double t0 = now_seconds();
                run_batch(2 + i);
                times[i] = now_seconds() - t0;
            }
            std::sort(times.begin(), times.end());
            row.latency_s = times[2];
            row.throughput_tps =
                row.latency_s > 0.0 ? static_cast<double>(batch) * size / row.latency_s : 0.0;
        }
        rows.push_back(row);
    }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::string out = "chunk_size,compressed_bytes,ratio,latency_s,throughput_tps\n";
    char buf[160];
    for (const SweepRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%llu,%.2f,%.6f,%.1f\n", r.chunk_size,
                      static_cast<unsigned long long>(r.compressed_bytes), r.ratio, r.latency_s,
                      r.throughput_tps);
        out += buf;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Baseline table

namespace {

bool tool_available(const std::string& tool) {
    std::string cmd = "command -v " + tool + " >/dev/null 2>&1";
    return std::system(cmd.c_str()) == 0;
}

struct ExternalResult {
    bool ok = false;
    uint64_t compressed_bytes = 0;
    std::string note;
};

// Compress with the system tool and verify the round trip through temp files.
ExternalResult run_external(const std::string& tool, const CorpusSlice& slice) {
    ExternalResult res;
    if (!tool_available(tool)) {
        res.note = tool + " not installed";
        return res;
    }
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() /
                   ("rltc-bench-" + std::to_string(fnv1a64(slice.data) & 0xFFFFFF));
    std::error_code ec;
    fs::create_directories(dir, ec);
    fs::path raw = dir / "input.bin";
    fs::path packed = dir / (tool == "gzip" ? "input.bin.gz" : "input.bin.xz");
    fs::path back = dir / "output.bin";
    write_file_atomic(raw.string(), slice.data);

    std::string compress_cmd = tool + " -9 -c " + raw.string() + " > " + packed.string();
    std::string decompress_cmd = tool + " -dc " + packed.string() + " > " + back.string();
    if (std::system(compress_cmd.c_str()) != 0) {
        res.note = tool + " compression failed";
        return res;
    }
    res.compressed_bytes = fs::file_size(packed, ec);
    if (ec || res.compressed_bytes == 0) {
        res.note = tool + " produced no output";
        return res;
    }
    if (std::system(decompress_cmd.c_str()) != 0) {
        res.note = tool + " decompression failed";
        return res;
    }
    std::vector<uint8_t> round = read_file(back.string());
    if (round != slice.data) {
        res.note = tool + " round-trip mismatch";
        return res;
    }
    res.ok = true;
    fs::remove_all(dir, ec);
    return res;
}

} // namespace

std::vector<TableRow> baseline_table(const CorpusSlice& slice, const ModelParams* compressor,
                                     const ModelParams* decompressor, int chunk_len, int jobs) {
    std::vector<TableRow> rows;
    const uint64_t original = slice.data.size();

    auto native_row = [&](const std::string& name, baselines::BaselineCodec codec) {
        TableRow row;
        row.program = name;
        std::vector<uint8_t> packed = baselines::baseline_compress(codec, slice.data);
        std::vector<uint8_t> back = baselines::baseline_decompress(packed);
        row.verified = back == slice.data;
        row.compressed_bytes = packed.size();
        row.ratio = compression_ratio(original, packed.size());
        if (!row.verified) row.note = "round-trip mismatch";
        return row;
    };
    rows.push_back(native_row("lz77-fixed", baselines::BaselineCodec::Lz77));
    rows.push_back(native_row("arith-order0", baselines::BaselineCodec::Arithmetic));
    rows.push_back(native_row("range-order0", baselines::BaselineCodec::Range));

    if (compressor && decompressor) {
        TableRow row;
        row.program = "rltc-learned";
        std::vector<uint8_t> container =
            compress_stream(*compressor, *decompressor, slice.data, chunk_len, nullptr, jobs);
        std::vector<uint8_t> back = decompress_stream(*decompressor, container, jobs);
        row.verified = back == slice.data;
        row.compressed_bytes = container.size();
        row.ratio = compression_ratio(original, container.size());
        if (!row.verified) row.note = "round-trip mismatch";
        rows.push_back(row);
    }

    for (const std::string tool : {"gzip", "xz"}) {
        TableRow row;
        row.program = tool;
        ExternalResult res = run_external(tool, slice);
        if (!res.ok) {
            row.available = false;
            row.note = res.note;
        } else {
            row.verified = true;
            row.compressed_bytes = res.compressed_bytes;
            row.ratio = compression_ratio(original, res.compressed_bytes);
        }
        rows.push_back(row);
    }
    return rows;
}

std::string table_csv(const std::vector<TableRow>& rows) {
    std::string out = "program,compressed_bytes,ratio,verified\n";
    char buf[160];
    for (const TableRow& r : rows) {
        if (!r.available || !r.verified) continue;
        std::snprintf(buf, sizeof(buf), "%s,%llu,%.2f,%s\n", r.program.c_str(),
                      static_cast<unsigned long long>(r.compressed_bytes), r.ratio,
                      r.verified ? "yes" : "no");
        out += buf;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reference ratio arithmetic

std::vector<PublishedRow> published_reference_table() {
    constexpr uint64_t kEnwik8 = 100000000ULL;
    struct Entry {
        const char* program;
        uint64_t bytes;
        double reported;
        int decimals;
    };
    const Entry entries[] = {
        {"NNCP", 14915298ULL, 6.7, 1},
        {"rltc-published", 24141013ULL, 4.12, 2},
        {"XZ", 24865244ULL, 4.0, 1},
        {"GZIP", 36445248ULL, 2.7, 1},
    };
    std::vector<PublishedRow> rows;
    for (const Entry& e : entries) {
        PublishedRow row;
        row.program = e.program;
        row.compressed_bytes = e.bytes;
        row.reported_ratio = e.reported;
        row.reported_decimals = e.decimals;
        row.computed_ratio = compression_ratio(kEnwik8, e.bytes);
        double scale = std::pow(10.0, e.decimals);
        double rounded = std::round(row.computed_ratio * scale) / scale;
        row.discrepancy = std::abs(rounded - e.reported) > 1e-9;
        rows.push_back(row);
    }
    return rows;
}

std::string published_reference_report() {
    std::string out = "program,compressed_bytes,reported_ratio,computed_ratio,agrees\n";
    char buf[200];
    for (const PublishedRow& r : published_reference_table()) {
        std::snprintf(buf, sizeof(buf), "%s,%llu,%.*f,%.2f,%s\n", r.program.c_str(),
                      static_cast<unsigned long long>(r.compressed_bytes), r.reported_decimals,
                      r.reported_ratio, r.computed_ratio, r.discrepancy ? "NO (flagged)" : "yes");
        out += buf;
    }
    return out;
}

} // namespace rltc::bench
