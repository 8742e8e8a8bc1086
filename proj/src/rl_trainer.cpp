#include "rltc/rl_trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "rltc/io_util.hpp"

namespace rltc {

namespace {

// Reduced-vocabulary test models have no room for the byte-level special ids;
// id 0 stands in as the sequence-start token there.
int bos_for(const ModelConfig& cfg) { return cfg.vocab > vocab::kBos ? vocab::kBos : 0; }

TokenSequence decoder_input_for(std::span<const int> targets, int bos) {
    TokenSequence in(targets.size());
    in[0] = bos;
    for (size_t i = 0; i + 1 < targets.size(); ++i) in[i + 1] = targets[i];
    return in;
}

} // namespace

void TrainerConfig::validate(int chunk_len) const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in (0, 1]");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (max_compress_len > chunk_len)
        throw std::invalid_argument("max_compress_len must not exceed the chunk length");
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
    if (critic_loss_weight < 0.0) throw std::invalid_argument("critic_loss_weight must be >= 0");
}

// ---------------------------------------------------------------------------
// Trajectory arithmetic

void assign_rewards(Trajectory& traj, double l_d, double cost_per_token) {
    const int n = traj.length();
    if (n < 1) throw std::invalid_argument("trajectory has no actions");
    if (!std::isfinite(l_d)) throw std::invalid_argument("l_d must be finite");
    traj.rewards.assign(n, -cost_per_token);
    traj.rewards[n - 1] = -cost_per_token - l_d;
    traj.episode_reward = -(cost_per_token * n + l_d);
}

void compute_advantages(Trajectory& traj, double gamma) {
    const int n = traj.length();
    if (static_cast<int>(traj.rewards.size()) != n || static_cast<int>(traj.values.size()) != n)
        throw std::invalid_argument("rewards/values not populated");
    traj.advantages.resize(n);
    for (int t = 0; t < n; ++t) {
        double v_next = (t + 1 < n) ? traj.values[t + 1] : 0.0;
        traj.advantages[t] = traj.rewards[t] + gamma * v_next - traj.values[t];
    }
}

double actor_loss(const Trajectory& traj) {
    const int n = traj.length();
    if (static_cast<int>(traj.advantages.size()) != n)
        throw std::invalid_argument("advantages not populated");
    double total = 0.0;
    for (int t = 0; t < n; ++t) total += -traj.logprobs[t] * traj.advantages[t];
    return total / n;
}

double critic_loss(const Trajectory& traj, double gamma) {
    const int n = traj.length();
    if (static_cast<int>(traj.rewards.size()) != n || static_cast<int>(traj.values.size()) != n)
        throw std::invalid_argument("rewards/values not populated");
    double total = 0.0;
    for (int t = 0; t < n; ++t) {
        double v_next = (t + 1 < n) ? traj.values[t + 1] : 0.0;
        double td = traj.rewards[t] + gamma * v_next - traj.values[t];
        total += td * td;
    }
    return total / n;
}

// ---------------------------------------------------------------------------
// Rollouts

Trajectory rollout_compress(const ModelParams& p, const Chunk& chunk, const TrainerConfig& cfg,
                            Rng& rng) {
    cfg.validate(chunk.size());
    const int cap = std::min(cfg.max_compress_len > 0 ? cfg.max_compress_len : chunk.size(),
                             chunk.size());
    Mat enc = forward_encoder(p, chunk);
    DecodeState st = decode_begin(p, enc, chunk.valid_len);

    Trajectory traj;
    int token = bos_for(p.cfg);
    for (int t = 0; t < cap; ++t) {
        DecodeStepResult out = decode_step(p, st, token);
        Vec lsm = log_softmax(out.logits / cfg.temperature);
        int action = sample_token(out.logits, cfg.temperature, rng);
        traj.actions.push_back(action);
        traj.logprobs.push_back(lsm(action));
        traj.values.push_back(out.value);
        if (action == vocab::kStop) break;
        token = action;
    }
    return traj;
}

void teacher_forced_eval(const ModelParams& p, const Chunk& chunk, const TokenSequence& actions,
                         double temperature, std::vector<double>& logprobs,
                         std::vector<double>& values) {
    const int n = static_cast<int>(actions.size());
    if (n < 1) throw std::invalid_argument("no actions to evaluate");
    Mat enc = forward_encoder(p, chunk);
    TokenSequence dec_in = decoder_input_for(actions, bos_for(p.cfg));
    DecoderResult res = forward_decoder(p, enc, chunk.valid_len, dec_in);
    logprobs.resize(n);
    values.resize(n);
    for (int t = 0; t < n; ++t) {
        Vec lsm = log_softmax(res.logits.row(t).transpose() / temperature);
        logprobs[t] = lsm(actions[t]);
        values[t] = res.values(t);
    }
}

// ---------------------------------------------------------------------------
// Objective gradients

double seq2seq_lm_gradients(const ModelParams& p, const Chunk& enc_input,
                            std::span<const int> targets, double grad_weight, GradientStore* g) {
    EncoderTape etape;
    DecoderTape dtape;
    Mat enc = forward_encoder(p, enc_input, g ? &etape : nullptr);
    TokenSequence dec_in = decoder_input_for(targets, bos_for(p.cfg));
    DecoderResult res = forward_decoder(p, enc, enc_input.valid_len, dec_in, g ? &dtape : nullptr);
    double loss = lm_loss(res.logits, targets);
    if (g) {
        Mat dlogits = lm_loss_backward(res.logits, targets) * grad_weight;
        Vec dvalues = Vec::Zero(res.values.size());
        Mat denc = backward_decoder(p, dtape, dlogits, dvalues, *g);
        backward_encoder(p, etape, denc, *g);
    }
    return loss;
}

namespace {

struct ObjectiveSeeds {
    CompressorObjective losses;
    Mat dlogits;
    Vec dvalues;
};

// actor: mean_t -logpi(a_t) * A_t              (A frozen)
// critic: mean_t (v_t - y_t)^2 with y frozen;  y_t = r_t + gamma * v'_t
ObjectiveSeeds objective_eval(const ModelParams& p, const Chunk& chunk, const Trajectory& traj,
                              double temperature, double gamma, double critic_weight,
                              double grad_weight, bool want_grads, DecoderResult& res,
                              EncoderTape* etape, DecoderTape* dtape) {
    const int n = traj.length();
    if (n < 1) throw std::invalid_argument("empty trajectory");
    if (static_cast<int>(traj.advantages.size()) != n)
        throw std::invalid_argument("advantages not populated");

    Mat enc = forward_encoder(p, chunk, etape);
    TokenSequence dec_in = decoder_input_for(traj.actions, bos_for(p.cfg));
    res = forward_decoder(p, enc, chunk.valid_len, dec_in, dtape);

    ObjectiveSeeds out;
    if (want_grads) {
        out.dlogits = Mat::Zero(res.logits.rows(), res.logits.cols());
        out.dvalues = Vec::Zero(res.values.size());
    }
    for (int t = 0; t < n; ++t) {
        Vec scaled = res.logits.row(t).transpose() / temperature;
        Vec lsm = log_softmax(scaled);
        out.losses.actor += -lsm(traj.actions[t]) * traj.advantages[t] / n;

        double v_next = (t + 1 < n) ? traj.values[t + 1] : 0.0;
        double target = traj.rewards[t] + gamma * v_next;
        double diff = res.values(t) - target;
        out.losses.critic += diff * diff / n;

        if (want_grads) {
            // d(-logpi(a))/dlogits = (softmax(logits/T) - onehot)/T
            Vec probs = lsm.array().exp();
            double coeff = grad_weight * traj.advantages[t] / (n * temperature);
            out.dlogits.row(t) += (probs * coeff).transpose();
            out.dlogits(t, traj.actions[t]) -= coeff;
            out.dvalues(t) = grad_weight * critic_weight * 2.0 * diff / n;
        }
    }
    return out;
}

} // namespace

CompressorObjective compressor_objective(const ModelParams& p, const Chunk& chunk,
                                         const Trajectory& traj, double temperature, double gamma) {
    DecoderResult res;
    return objective_eval(p, chunk, traj, temperature, gamma, 0.0, 0.0, false, res, nullptr,
                          nullptr)
        .losses;
}

CompressorObjective compressor_objective_gradients(const ModelParams& p, const Chunk& chunk,
                                                   const Trajectory& traj, double temperature,
                                                   double gamma, double critic_weight,
                                                   double grad_weight, GradientStore& g) {
    EncoderTape etape;
    DecoderTape dtape;
    DecoderResult res;
    ObjectiveSeeds seeds = objective_eval(p, chunk, traj, temperature, gamma, critic_weight,
                                          grad_weight, true, res, &etape, &dtape);
    Mat denc = backward_decoder(p, dtape, seeds.dlogits, seeds.dvalues, g);
    backward_encoder(p, etape, denc, g);
    return seeds.losses;
}

// ---------------------------------------------------------------------------
// Training

std::vector<double> pretrain_identity(ModelParams& p, OptimizerState& opt,
                                      const std::vector<Chunk>& corpus, int steps, int batch_size,
                                      Rng& rng) {
    if (corpus.empty()) throw EmptyCorpus("pre-training corpus is empty");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    std::vector<double> losses;
    losses.reserve(steps);
    for (int step = 0; step < steps; ++step) {
        GradientStore g = ModelParams::zeros(p.cfg);
        double loss = 0.0;
        for (int b = 0; b < batch_size; ++b) {
            const Chunk& c = corpus[rng.below(corpus.size())];
            loss += seq2seq_lm_gradients(p, c, c.tokens, 1.0 / batch_size, &g) / batch_size;
        }
        adam_step(p, g, opt);
        losses.push_back(loss);
    }
    return losses;
}

TrainMetrics train_step(ModelParams& compressor, OptimizerState& comp_opt,
                        ModelParams& decompressor, OptimizerState& dec_opt,
                        const std::vector<Chunk>& batch, const TrainerConfig& cfg,
                        const RewardSchedule& schedule, RewardNormalizer& normalizer, int64_t step,
                        const Rng& master_rng) {
    if (batch.empty()) throw EmptyCorpus("empty batch");
    if (compressor.cfg.vocab != vocab::kSize || decompressor.cfg.vocab != vocab::kSize)
        throw ShapeMismatch("trainer requires the byte-level vocabulary");
    const int b = static_cast<int>(batch.size());

    // line 3: compress each chunk, recording values
    std::vector<Trajectory> trajs(b);
    for (int i = 0; i < b; ++i) {
        Rng chunk_rng = master_rng.split(static_cast<uint64_t>(step), static_cast<uint64_t>(i));
        trajs[i] = rollout_compress(compressor, batch[i], cfg, chunk_rng);
    }

    // lines 4-6: reconstruct, measure L_D, update the decompressor
    std::vector<double> l_d(b);
    GradientStore dec_grads = ModelParams::zeros(decompressor.cfg);
    for (int i = 0; i < b; ++i) {
        Chunk enc_in{trajs[i].actions, trajs[i].length()};
        l_d[i] =
            seq2seq_lm_gradients(decompressor, enc_in, batch[i].tokens, 1.0 / b, &dec_grads);
    }
    adam_step(decompressor, dec_grads, dec_opt);

    // line 7 plus scheduling and reward scaling: the scaled episode reward is
    // decomposed per step so that the per-step sum equals (raw - mean)/std.
    const double cost = schedule.cost(step);
    TrainMetrics m;
    m.step = step;
    m.cost_per_token = cost;
    for (int i = 0; i < b; ++i) {
        const int n = trajs[i].length();
        double raw = -(cost * n + l_d[i]);
        RewardNormalizer::Scaling s = normalizer.current();
        normalizer.update(raw);
        assign_rewards(trajs[i], l_d[i] / s.divisor, (cost + s.mean / n) / s.divisor);
        compute_advantages(trajs[i], cfg.gamma);
        m.raw_reward += raw / b;
        m.scaled_reward += trajs[i].episode_reward / b;
        m.l_d += l_d[i] / b;
        m.mean_c_len += static_cast<double>(n) / b;
    }

    // lines 8-10: actor/critic losses and the compressor update
    GradientStore comp_grads = ModelParams::zeros(compressor.cfg);
    for (int i = 0; i < b; ++i) {
        CompressorObjective obj =
            compressor_objective_gradients(compressor, batch[i], trajs[i], cfg.temperature,
                                           cfg.gamma, cfg.critic_loss_weight, 1.0 / b, comp_grads);
        m.actor_loss += obj.actor / b;
        m.critic_loss += obj.critic / b;
    }
    adam_step(compressor, comp_grads, comp_opt);
    return m;
}

std::string metrics_csv_header() {
    return "step,L_D,mean_c_len,actor_loss,critic_loss,raw_reward,scaled_reward,cost_per_token";
}

std::string metrics_csv_row(const TrainMetrics& m) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%lld,%.8g,%.8g,%.8g,%.8g,%.8g,%.8g,%.8g",
                  static_cast<long long>(m.step), m.l_d, m.mean_c_len, m.actor_loss, m.critic_loss,
                  m.raw_reward, m.scaled_reward, m.cost_per_token);
    return buf;
}

TrainRunResult run_training(const std::vector<Chunk>& corpus, const ModelConfig& mcfg,
                            const TrainRunConfig& rc) {
    if (corpus.empty()) throw EmptyCorpus("training corpus is empty");
    const int chunk_len = corpus.front().size();
    rc.trainer.validate(chunk_len);

    Rng root(rc.seed);
    Rng init_c = root.split(1, 0);
    Rng init_d = root.split(1, 1);
    TrainRunResult out{ModelParams::init(mcfg, init_c), ModelParams::init(mcfg, init_d), {}};
    OptimizerState comp_opt = OptimizerState::create(mcfg, rc.trainer.lr);
    OptimizerState dec_opt = OptimizerState::create(mcfg, rc.trainer.lr);

    const bool emit = !rc.out_dir.empty();
    std::ofstream metrics_file, pretrain_file;
    if (emit) {
        namespace fs = std::filesystem;
        fs::create_directories(rc.out_dir);
        auto empty_or_missing = [](const std::string& p) {
            std::error_code ec;
            auto size = fs::file_size(p, ec);
            return ec || size == 0;
        };
        bool metrics_header = empty_or_missing(rc.out_dir + "/metrics.csv");
        bool pretrain_header = empty_or_missing(rc.out_dir + "/pretrain.csv");
        metrics_file.open(rc.out_dir + "/metrics.csv", std::ios::app);
        if (metrics_header) metrics_file << metrics_csv_header() << "\n";
        pretrain_file.open(rc.out_dir + "/pretrain.csv", std::ios::app);
        if (pretrain_header) pretrain_file << "step,model,lm_loss\n";
    }

    Rng pre_c = root.split(2, 0);
    auto curve_c =
        pretrain_identity(out.compressor, comp_opt, corpus, rc.pretrain_steps,
                          rc.trainer.batch_size, pre_c);
    Rng pre_d = root.split(2, 1);
    auto curve_d =
        pretrain_identity(out.decompressor, dec_opt, corpus, rc.pretrain_steps,
                          rc.trainer.batch_size, pre_d);
    if (emit) {
        for (size_t i = 0; i < curve_c.size(); ++i)
            pretrain_file << i << ",compressor," << curve_c[i] << "\n";
        for (size_t i = 0; i < curve_d.size(); ++i)
            pretrain_file << i << ",decompressor," << curve_d[i] << "\n";
        pretrain_file.flush();
    }

    RewardNormalizer normalizer;
    Rng batch_rng = root.split(3, 0);
    Rng a2c_master = root.split(4, 0);
    out.metrics.reserve(rc.steps);
    for (int step = 0; step < rc.steps; ++step) {
        std::vector<Chunk> batch;
        batch.reserve(rc.trainer.batch_size);
        for (int i = 0; i < rc.trainer.batch_size; ++i)
            batch.push_back(corpus[batch_rng.below(corpus.size())]);
        TrainMetrics m = train_step(out.compressor, comp_opt, out.decompressor, dec_opt, batch,
                                    rc.trainer, rc.schedule, normalizer, step, a2c_master);
        out.metrics.push_back(m);
        if (emit) metrics_file << metrics_csv_row(m) << "\n";
    }
    if (emit) metrics_file.flush();

    if (emit) {
        save_checkpoint(out.compressor, rc.out_dir + "/compressor.rltm");
        save_checkpoint(out.decompressor, rc.out_dir + "/decompressor.rltm");
        std::string cfgtext;
        auto kv = [&](const std::string& k, const std::string& v) { cfgtext += k + "=" + v + "\n"; };
        kv("seed", std::to_string(rc.seed));
        kv("pretrain_steps", std::to_string(rc.pretrain_steps));
        kv("steps", std::to_string(rc.steps));
        kv("chunk_len", std::to_string(chunk_len));
        kv("batch_size", std::to_string(rc.trainer.batch_size));
        kv("gamma", std::to_string(rc.trainer.gamma));
        kv("lr", std::to_string(rc.trainer.lr));
        kv("temperature", std::to_string(rc.trainer.temperature));
        kv("critic_loss_weight", std::to_string(rc.trainer.critic_loss_weight));
        kv("max_compress_len", std::to_string(rc.trainer.max_compress_len));
        kv("warmup_steps", std::to_string(rc.schedule.warmup_steps));
        kv("final_cost_per_token", std::to_string(rc.schedule.final_cost_per_token));
        kv("d_model", std::to_string(mcfg.d_model));
        kv("n_heads", std::to_string(mcfg.n_heads));
        kv("n_layers_enc", std::to_string(mcfg.n_layers_enc));
        kv("n_layers_dec", std::to_string(mcfg.n_layers_dec));
        kv("d_ff", std::to_string(mcfg.d_ff));
        kv("vocab", std::to_string(mcfg.vocab));
        kv("max_pos", std::to_string(mcfg.max_pos));
        kv("activation", mcfg.activation == Activation::GELU ? "gelu" : "relu");
        write_file_atomic(rc.out_dir + "/config.txt", cfgtext);
    }
    return out;
}

} // namespace rltc
