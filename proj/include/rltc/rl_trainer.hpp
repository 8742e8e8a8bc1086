#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "rltc/model.hpp"
#include "rltc/tokenizer.hpp"

namespace rltc {

struct EmptyCorpus : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One compression episode. All per-step vectors share length n = |actions|,
// counting the terminating STOP when one was emitted.
struct Trajectory {
    TokenSequence actions;
    std::vector<double> logprobs;
    std::vector<double> values;
    std::vector<double> rewards;
    std::vector<double> advantages;
    double episode_reward = 0.0;

    int length() const { return static_cast<int>(actions.size()); }
};

// Linear ramp from 0 to final_cost_per_token over warmup_steps, exact at the
// endpoint and constant afterwards.
struct RewardSchedule {
    double final_cost_per_token = std::log2(260.0);
    int64_t warmup_steps = 0;

    double cost(int64_t step) const {
        if (step >= warmup_steps) return final_cost_per_token;
        if (step <= 0) return 0.0;
        return final_cost_per_token * static_cast<double>(step) /
               static_cast<double>(warmup_steps);
    }
};

// Streaming episode-reward statistics (Welford). Scaling is the identity
// until two episodes have been recorded.
class RewardNormalizer {
public:
    static constexpr double kEps = 1e-8;

    struct Scaling {
        double mean = 0.0;
        double divisor = 1.0;
    };

    Scaling current() const {
        if (count_ < 2) return {};
        return {mean_, std::max(std::sqrt(variance()), kEps)};
    }

    // (r - mean)/max(std, eps) with the pre-update statistics, then updates
    // the statistics with the raw r.
    double scale(double r) {
        Scaling s = current();
        double out = (r - s.mean) / s.divisor;
        update(r);
        return out;
    }

    void update(double r) {
        ++count_;
        double d = r - mean_;
        mean_ += d / static_cast<double>(count_);
        m2_ += d * (r - mean_);
    }

    int64_t count() const { return count_; }
    double mean() const { return mean_; }
    double variance() const {
        return count_ >= 2 ? m2_ / static_cast<double>(count_ - 1) : 0.0;
    }

private:
    int64_t count_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

struct TrainerConfig {
    double gamma = 0.99;
    int batch_size = 16;
    int max_compress_len = 0; // 0 means the chunk length S
    double temperature = 1.0;
    double critic_loss_weight = 0.5;
    double lr = 3e-4;

    void validate(int chunk_len) const;
};

// ---------------------------------------------------------------------------
// Trajectory arithmetic

// Per-step decomposition of the episode reward: -cost for every step, with
// the reconstruction loss added at the terminal step. The per-step rewards
// telescope back to -(cost*n + l_d).
void assign_rewards(Trajectory& traj, double l_d, double cost_per_token);

// A_t = r_t + gamma*v_{t+1} - v_t with v_n = 0.
void compute_advantages(Trajectory& traj, double gamma);

// mean over steps of -logprob_t * A_t, advantages treated as constants
double actor_loss(const Trajectory& traj);

// mean squared TD error with frozen targets
double critic_loss(const Trajectory& traj, double gamma);

// ---------------------------------------------------------------------------
// Rollouts

// Autoregressive sampling from the policy head starting at BOS; the episode
// ends at a STOP emission or after max_compress_len tokens. Actions, per-step
// log-probabilities, and critic values are recorded; rewards/advantages stay
// empty.
Trajectory rollout_compress(const ModelParams& p, const Chunk& chunk, const TrainerConfig& cfg,
                            Rng& rng);

// Recomputes logprobs/values by teacher-forcing previously sampled actions in
// one parallel pass (the consistency oracle for rollout_compress).
void teacher_forced_eval(const ModelParams& p, const Chunk& chunk, const TokenSequence& actions,
                         double temperature, std::vector<double>& logprobs,
                         std::vector<double>& values);

// ---------------------------------------------------------------------------
// Objective gradients

// Teacher-forced seq2seq LM step: encoder consumes enc_input, the decoder is
// fed [BOS, targets...] and scored against targets (PAD ignored). Returns the
// loss; when g is non-null, accumulates grad_weight * d(loss)/d(params).
double seq2seq_lm_gradients(const ModelParams& p, const Chunk& enc_input,
                            std::span<const int> targets, double grad_weight, GradientStore* g);

struct CompressorObjective {
    double actor = 0.0;
    double critic = 0.0;
};

// Evaluates actor + critic objectives for a fixed trajectory by teacher-
// forcing its actions through the current parameters. Advantages and TD
// targets come from the trajectory and are treated as constants.
CompressorObjective compressor_objective(const ModelParams& p, const Chunk& chunk,
                                         const Trajectory& traj, double temperature, double gamma);

// Same objective plus reverse-mode gradients of
// grad_weight * (actor + critic_weight * critic) accumulated into g.
CompressorObjective compressor_objective_gradients(const ModelParams& p, const Chunk& chunk,
                                                   const Trajectory& traj, double temperature,
                                                   double gamma, double critic_weight,
                                                   double grad_weight, GradientStore& g);

// ---------------------------------------------------------------------------
// Training

// Supervised identity pre-training (target = input). Returns the per-step
// loss curve. Zero steps leaves params untouched.
std::vector<double> pretrain_identity(ModelParams& p, OptimizerState& opt,
                                      const std::vector<Chunk>& corpus, int steps, int batch_size,
                                      Rng& rng);

struct TrainMetrics {
    int64_t step = 0;
    double l_d = 0.0;
    double mean_c_len = 0.0;
    double actor_loss = 0.0;
    double critic_loss = 0.0;
    double raw_reward = 0.0;
    double scaled_reward = 0.0;
    double cost_per_token = 0.0;
};

// One Algorithm-1 iteration over a batch of chunks: sample rollouts, update
// the decompressor on the reconstruction loss, derive scaled per-step
// rewards, and update the compressor on the actor+critic objective.
TrainMetrics train_step(ModelParams& compressor, OptimizerState& comp_opt,
                        ModelParams& decompressor, OptimizerState& dec_opt,
                        const std::vector<Chunk>& batch, const TrainerConfig& cfg,
                        const RewardSchedule& schedule, RewardNormalizer& normalizer, int64_t step,
                        const Rng& master_rng);

// metrics.csv header written by run_training
std::string metrics_csv_header();
std::string metrics_csv_row(const TrainMetrics& m);

struct TrainRunConfig {
    TrainerConfig trainer;
    RewardSchedule schedule;
    int pretrain_steps = 0;
    int steps = 0;
    uint64_t seed = 1;
    std::string out_dir;
};

struct TrainRunResult {
    ModelParams compressor;
    ModelParams decompressor;
    std::vector<TrainMetrics> metrics;
};

// Full training driver: identity pre-training for both models, then A2C.
// When out_dir is non-empty, writes metrics.csv / pretrain.csv / config.txt
// and the two checkpoints there.
TrainRunResult run_training(const std::vector<Chunk>& corpus, const ModelConfig& mcfg,
                            const TrainRunConfig& rc);

} // namespace rltc
