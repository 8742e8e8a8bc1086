#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rltc/rng.hpp"
#include "rltc/tokenizer.hpp"

namespace rltc {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct ShapeMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EmptyTarget : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Activation : uint8_t { ReLU = 0, GELU = 1 };

struct ModelConfig {
    int d_model = 64;
    int n_heads = 4;
    int n_layers_enc = 2;
    int n_layers_dec = 2;
    int d_ff = 256;
    int vocab = vocab::kSize;
    int max_pos = 130;
    Activation activation = Activation::GELU;

    int head_dim() const { return d_model / n_heads; }
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

// All parameters are MatrixXd; vectors are stored as [n x 1] columns.
struct AttnParams {
    Mat wq, wk, wv, wo; // each [d_model x d_model]
};
struct LnParams {
    Mat scale, offset; // [d_model x 1]
};
struct FfnParams {
    Mat w1, b1, w2, b2; // [d x d_ff], [d_ff x 1], [d_ff x d], [d x 1]
};
struct EncLayerParams {
    LnParams ln1;
    AttnParams attn;
    LnParams ln2;
    FfnParams ffn;
};
struct DecLayerParams {
    LnParams ln1;
    AttnParams self_attn;
    LnParams ln2;
    AttnParams cross_attn;
    LnParams ln3;
    FfnParams ffn;
};

struct ModelParams {
    ModelConfig cfg;
    Mat tok_emb; // [vocab x d_model]
    Mat pos_emb; // [max_pos x d_model]
    std::vector<EncLayerParams> enc;
    LnParams enc_ln_f;
    std::vector<DecLayerParams> dec;
    LnParams dec_ln_f;
    Mat lm_head;    // [d_model x vocab]
    Mat value_head; // [d_model x 1]

    static ModelParams zeros(const ModelConfig& cfg);
    static ModelParams init(const ModelConfig& cfg, Rng& rng);

    bool all_finite() const;
};

// Gradients share the parameter layout; build with ModelParams::zeros.
using GradientStore = ModelParams;

struct TensorRef {
    std::string name;
    Mat* mat;
};
struct ConstTensorRef {
    std::string name;
    const Mat* mat;
};
// Fixed-order enumeration of every named tensor; the order is the
// serialization order of the checkpoint format.
std::vector<TensorRef> named_tensors(ModelParams& p);
std::vector<ConstTensorRef> named_tensors(const ModelParams& p);

// ---------------------------------------------------------------------------
// Attention masking

enum class MaskKind { FullyVisible, Causal };

struct AttentionMask {
    MaskKind kind = MaskKind::FullyVisible;
    int valid_len = 0; // keys at positions >= valid_len are never attended

    // number of attendable key positions for the query at `pos`
    int key_limit(int pos) const {
        int lim = valid_len;
        if (kind == MaskKind::Causal && pos + 1 < lim) lim = pos + 1;
        return lim;
    }
};

// ---------------------------------------------------------------------------
// Forward tapes (activation caches consumed by the backward pass)

struct LnCache {
    Mat x_hat;   // [T x d]
    Vec inv_std; // [T]
};
struct AttnCache {
    Mat xq, xkv;            // layer-norm'd query input, key/value input
    Mat q, k, v;            // projections
    std::vector<Mat> probs; // per head [Tq x Tk], exact zeros beyond the mask
    Mat concat;             // heads concatenated, pre-output-projection
    AttentionMask mask;
};
struct FfnCache {
    Mat x;   // input [T x d]
    Mat pre; // [T x d_ff]
    Mat act; // [T x d_ff]
};
struct EncLayerCache {
    LnCache ln1;
    AttnCache attn;
    LnCache ln2;
    FfnCache ffn;
};
struct DecLayerCache {
    LnCache ln1;
    AttnCache self_attn;
    LnCache ln2;
    AttnCache cross_attn;
    LnCache ln3;
    FfnCache ffn;
};

struct EncoderTape {
    std::vector<int> ids;
    int valid_len = 0;
    std::vector<EncLayerCache> layers;
    LnCache ln_f;
};
struct DecoderTape {
    std::vector<int> ids;
    int enc_valid_len = 0;
    std::vector<DecLayerCache> layers;
    LnCache ln_f;
    Mat h_final; // [T x d], after the final layer norm
};

// ---------------------------------------------------------------------------
// Forward / backward

// Returns hidden states [chunk.size() x d_model]. PAD positions are computed
// but are never attendable as keys, so valid rows are PAD-opaque.
Mat forward_encoder(const ModelParams& p, const Chunk& chunk, EncoderTape* tape = nullptr);

struct DecoderResult {
    Mat logits; // [T x vocab]
    Vec values; // [T]
};
// Causal self-attention over dec_ids, fully visible cross-attention over the
// first enc_valid_len rows of enc_out.
DecoderResult forward_decoder(const ModelParams& p, const Mat& enc_out, int enc_valid_len,
                              std::span<const int> dec_ids, DecoderTape* tape = nullptr);

// Reverse-mode pass seeded with d(objective)/d(logits) and /d(values).
// Accumulates into g; returns d(objective)/d(enc_out).
Mat backward_decoder(const ModelParams& p, const DecoderTape& tape, const Mat& dlogits,
                     const Vec& dvalues, GradientStore& g);
void backward_encoder(const ModelParams& p, const EncoderTape& tape, const Mat& denc,
                      GradientStore& g);

// Mean cross-entropy (nats) over non-ignored targets. |targets| must equal
// logits rows. Throws EmptyTarget if every position is ignored.
double lm_loss(const Mat& logits, std::span<const int> targets, int ignore_id = vocab::kPad);
// d(lm_loss)/d(logits) for a unit upstream gradient.
Mat lm_loss_backward(const Mat& logits, std::span<const int> targets, int ignore_id = vocab::kPad);

// ---------------------------------------------------------------------------
// Optimizer

struct OptimizerState {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t step = 0;
    ModelParams m, v;

    static OptimizerState create(const ModelConfig& cfg, double lr);
};
void adam_step(ModelParams& params, const GradientStore& grads, OptimizerState& st);

// ---------------------------------------------------------------------------
// Sampling

// Draw from softmax(logits / temperature); temperature -> 0 degenerates to
// argmax. Deterministic given the rng state.
int sample_token(const Vec& logits, double temperature, Rng& rng);
int argmax_token(const Vec& logits);
Vec log_softmax(const Vec& logits);

// ---------------------------------------------------------------------------
// Incremental (KV-cached) decoding
//
// decode_step is the single normative arithmetic path for token-by-token
// decoding: feeding the same tokens always reproduces bitwise-identical
// logits, which the codec's correction stream relies on.

struct DecodeState {
    int len = 0;
    std::vector<Mat> self_k, self_v;   // per layer [max_pos x d], rows < len valid
    std::vector<Mat> cross_k, cross_v; // per layer [enc_valid x d]
    int enc_valid_len = 0;
};

DecodeState decode_begin(const ModelParams& p, const Mat& enc_out, int enc_valid_len);

struct DecodeStepResult {
    Vec logits; // [vocab]
    double value = 0.0;
};
DecodeStepResult decode_step(const ModelParams& p, DecodeState& st, int token);

// ---------------------------------------------------------------------------
// Checkpoints ("RLTM" format, bit-exact round trip; atomic write)

void save_checkpoint(const ModelParams& p, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

} // namespace rltc
