#include "rltc/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "rltc/baselines.hpp"
#include "rltc/bench.hpp"
#include "rltc/codec.hpp"
#include "rltc/io_util.hpp"
#include "rltc/model.hpp"
#include "rltc/rl_trainer.hpp"
#include "rltc/tokenizer.hpp"

namespace rltc {

namespace {

struct TrainArgs {
    std::string corpus;
    uint64_t limit_bytes = 1 << 20;
    std::string out_dir;
    int chunk_len = 32;
    uint64_t seed = 1;
    int steps = 0;
    int pretrain_steps = 0;
    int batch = 16;
    double lr = 3e-4;
    double gamma = 0.99;
    int warmup = 0;
    double temperature = 1.0;
    int d_model = 64;
    int n_heads = 4;
    int n_layers = 2;
    int d_ff = 256;
};

struct CompressArgs {
    std::string input;
    std::string out;
    std::string compressor;
    std::string decompressor;
    int chunk_len = 64;
    int jobs = 1;
};

struct DecompressArgs {
    std::string input;
    std::string out;
    std::string decompressor;
    int jobs = 1;
};

struct BenchArgs {
    std::string corpus;
    uint64_t limit_bytes = 1 << 20;
    std::string out;
    std::string compressor;
    std::string decompressor;
    int chunk_len = 64;
    int jobs = 1;
    bool table = false;
};

struct SweepArgs {
    std::string corpus;
    uint64_t limit_bytes = 256 << 10;
    std::vector<int> sizes{16, 32, 64, 128};
    int batch = 4;
    std::string out;
    std::string compressor;
    std::string decompressor;
    int jobs = 1;
};

int cmd_train(const TrainArgs& a) {
    bench::CorpusSlice slice = bench::ingest_corpus(a.corpus, a.limit_bytes);
    std::vector<Chunk> corpus = chunk_stream(encode_bytes(slice.data), a.chunk_len);
    if (corpus.empty()) throw EmptyCorpus("corpus slice is empty");

    ModelConfig mcfg;
    mcfg.d_model = a.d_model;
    mcfg.n_heads = a.n_heads;
    mcfg.n_layers_enc = a.n_layers;
    mcfg.n_layers_dec = a.n_layers;
    mcfg.d_ff = a.d_ff;
    mcfg.validate();

    TrainRunConfig rc;
    rc.trainer.batch_size = a.batch;
    rc.trainer.gamma = a.gamma;
    rc.trainer.lr = a.lr;
    rc.trainer.temperature = a.temperature;
    rc.schedule.warmup_steps = a.warmup;
    rc.pretrain_steps = a.pretrain_steps;
    rc.steps = a.steps;
    rc.seed = a.seed;
    rc.out_dir = a.out_dir;

    TrainRunResult result = run_training(corpus, mcfg, rc);
    if (!result.metrics.empty()) {
        const TrainMetrics& last = result.metrics.back();
        std::printf("final step %lld: L_D=%.4f mean|c|=%.2f reward=%.3f\n",
                    static_cast<long long>(last.step), last.l_d, last.mean_c_len, last.raw_reward);
    }
    std::printf("checkpoints written to %s\n", a.out_dir.c_str());
    return kExitOk;
}

int cmd_compress(const CompressArgs& a) {
    ModelParams comp = load_checkpoint(a.compressor);
    ModelParams decomp = load_checkpoint(a.decompressor);
    std::vector<uint8_t> data = read_file(a.input);
    SizeReport report;
    std::vector<uint8_t> container =
        compress_stream(comp, decomp, data, a.chunk_len, &report, a.jobs);
    write_file_atomic(a.out, container);
    std::printf("%llu -> %llu bytes (payload %llu, corrections %llu, header %llu)\n",
                static_cast<unsigned long long>(report.original_bytes),
                static_cast<unsigned long long>(report.container_bytes),
                static_cast<unsigned long long>(report.token_payload_bytes),
                static_cast<unsigned long long>(report.corrections_bytes),
                static_cast<unsigned long long>(report.header_bytes));
    return kExitOk;
}

int cmd_decompress(const DecompressArgs& a) {
    ModelParams decomp = load_checkpoint(a.decompressor);
    std::vector<uint8_t> container = read_file(a.input);
    std::vector<uint8_t> data = decompress_stream(decomp, container, a.jobs);
    write_file_atomic(a.out, data);
    std::printf("restored %llu bytes\n", static_cast<unsigned long long>(data.size()));
    return kExitOk;
}

int cmd_bench(const BenchArgs& a) {
    bench::CorpusSlice slice = bench::ingest_corpus(a.corpus, a.limit_bytes);

    ModelParams comp, decomp;
    const ModelParams* comp_ptr = nullptr;
    const ModelParams* decomp_ptr = nullptr;
    if (!a.compressor.empty() && !a.decompressor.empty()) {
        comp = load_checkpoint(a.compressor);
        decomp = load_checkpoint(a.decompressor);
        comp_ptr = &comp;
        decomp_ptr = &decomp;
    }

    auto rows = bench::baseline_table(slice, comp_ptr, decomp_ptr, a.chunk_len, a.jobs);
    std::string csv = bench::table_csv(rows);
    std::fputs(csv.c_str(), stdout);
    for (const auto& row : rows)
        if (!row.available || !row.verified)
            std::fprintf(stderr, "note: %s skipped (%s)\n", row.program.c_str(), row.note.c_str());

    if (a.table) {
        std::fputs("\nreference ratios from published enwik8 byte counts:\n", stdout);
        std::fputs(bench::published_reference_report().c_str(), stdout);
    }
    if (!a.out.empty()) write_file_atomic(a.out, csv);
    return kExitOk;
}

int cmd_sweep(const SweepArgs& a) {
    bench::CorpusSlice slice = bench::ingest_corpus(a.corpus, a.limit_bytes);
    ModelParams comp = load_checkpoint(a.compressor);
    ModelParams decomp = load_checkpoint(a.decompressor);
    auto rows = bench::sweep_chunk_sizes(comp, decomp, slice, a.sizes, a.batch, a.jobs);
    std::string csv = bench::sweep_csv(rows);
    std::fputs(csv.c_str(), stdout);
    if (!a.out.empty()) write_file_atomic(a.out, csv);
    return kExitOk;
}

int dispatch(const std::function<int()>& fn) {
    try {
        return fn();
    } catch (const BadMagic& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitBadMagic;
    } catch (const VocabMismatch& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitVocabMismatch;
    } catch (const VersionUnsupported& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitCorruptContainer;
    } catch (const CorruptContainer& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitCorruptContainer;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIoError;
    } catch (const bench::FileUnreadable& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIoError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitFailure;
    }
}

} // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"RL token compressor laboratory"};
    app.require_subcommand(1);

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "identity pre-training followed by A2C training");
    train->add_option("--corpus", train_args.corpus, "corpus file")
        ->envname("RLTC_CORPUS")
        ->required();
    train->add_option("--limit-bytes", train_args.limit_bytes, "corpus prefix size");
    train->add_option("--out", train_args.out_dir, "run directory")->required();
    train->add_option("--chunk-len", train_args.chunk_len)->check(CLI::Range(1, 128));
    train->add_option("--seed", train_args.seed);
    train->add_option("--steps", train_args.steps, "A2C steps")->check(CLI::NonNegativeNumber);
    train->add_option("--pretrain-steps", train_args.pretrain_steps)->check(CLI::NonNegativeNumber);
    train->add_option("--batch", train_args.batch)->check(CLI::PositiveNumber);
    train->add_option("--lr", train_args.lr);
    train->add_option("--gamma", train_args.gamma);
    train->add_option("--warmup", train_args.warmup, "token-cost warmup steps");
    train->add_option("--temperature", train_args.temperature);
    train->add_option("--d-model", train_args.d_model);
    train->add_option("--n-heads", train_args.n_heads);
    train->add_option("--n-layers", train_args.n_layers);
    train->add_option("--d-ff", train_args.d_ff);

    CompressArgs comp_args;
    auto* comp = app.add_subcommand("compress", "compress a file into an RLTC container");
    comp->add_option("input", comp_args.input, "input file")->required();
    comp->add_option("--out", comp_args.out)->required();
    comp->add_option("--compressor", comp_args.compressor)->required();
    comp->add_option("--decompressor", comp_args.decompressor)->required();
    comp->add_option("--chunk-len", comp_args.chunk_len)->check(CLI::Range(1, 128));
    comp->add_option("--jobs", comp_args.jobs)->check(CLI::PositiveNumber);

    DecompressArgs dec_args;
    auto* dec = app.add_subcommand("decompress", "restore a file from an RLTC container");
    dec->add_option("input", dec_args.input, "container file")->required();
    dec->add_option("--out", dec_args.out)->required();
    dec->add_option("--decompressor", dec_args.decompressor)->required();
    dec->add_option("--jobs", dec_args.jobs)->check(CLI::PositiveNumber);

    BenchArgs bench_args;
    auto* bench_cmd = app.add_subcommand("bench", "baseline ratio table on a corpus slice");
    bench_cmd->add_option("--corpus", bench_args.corpus)->envname("RLTC_CORPUS")->required();
    bench_cmd->add_option("--limit-bytes", bench_args.limit_bytes);
    bench_cmd->add_option("--out", bench_args.out, "write the table CSV here");
    bench_cmd->add_option("--compressor", bench_args.compressor);
    bench_cmd->add_option("--decompressor", bench_args.decompressor);
    bench_cmd->add_option("--chunk-len", bench_args.chunk_len)->check(CLI::Range(1, 128));
    bench_cmd->add_option("--jobs", bench_args.jobs)->check(CLI::PositiveNumber);
    bench_cmd->add_flag("--table", bench_args.table, "include published-ratio reference table");

    SweepArgs sweep_args;
    auto* sweep = app.add_subcommand("sweep", "chunk-size sweep (ratio, latency, throughput)");
    sweep->add_option("--corpus", sweep_args.corpus)->envname("RLTC_CORPUS")->required();
    sweep->add_option("--limit-bytes", sweep_args.limit_bytes);
    sweep->add_option("--sizes", sweep_args.sizes)->delimiter(',');
    sweep->add_option("--batch", sweep_args.batch)->check(CLI::PositiveNumber);
    sweep->add_option("--out", sweep_args.out, "write the sweep CSV here");
    sweep->add_option("--compressor", sweep_args.compressor)->required();
    sweep->add_option("--decompressor", sweep_args.decompressor)->required();
    sweep->add_option("--jobs", sweep_args.jobs)->check(CLI::PositiveNumber);

    std::vector<std::string> argv_like = args;
    try {
        std::reverse(argv_like.begin(), argv_like.end());
        app.parse(argv_like);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    if (train->parsed()) return dispatch([&] { return cmd_train(train_args); });
    if (comp->parsed()) return dispatch([&] { return cmd_compress(comp_args); });
    if (dec->parsed()) return dispatch([&] { return cmd_decompress(dec_args); });
    if (bench_cmd->parsed()) return dispatch([&] { return cmd_bench(bench_args); });
    if (sweep->parsed()) return dispatch([&] { return cmd_sweep(sweep_args); });
    return kExitUsage;
}

} // namespace rltc
