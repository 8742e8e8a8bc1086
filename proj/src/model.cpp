#include "rltc/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <unordered_map>

#include "rltc/io_util.hpp"

namespace rltc {

namespace {

constexpr double kLnEps = 1e-5;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
    double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
    double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    return cdf + x * pdf;
}

Mat activation_fwd(const Mat& pre, Activation act) {
    if (act == Activation::ReLU) return pre.cwiseMax(0.0);
    return pre.unaryExpr([](double v) { return gelu(v); });
}

Mat activation_grad(const Mat& pre, Activation act) {
    if (act == Activation::ReLU)
        return pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
    return pre.unaryExpr([](double v) { return gelu_grad(v); });
}

Mat layer_norm(const Mat& x, const LnParams& ln, LnCache* cache) {
    const int rows = static_cast<int>(x.rows());
    const int d = static_cast<int>(x.cols());
    Mat xhat(rows, d);
    Vec inv_std(rows);
    for (int t = 0; t < rows; ++t) {
        double mu = x.row(t).mean();
        double var = (x.row(t).array() - mu).square().mean();
        double is = 1.0 / std::sqrt(var + kLnEps);
        xhat.row(t) = (x.row(t).array() - mu) * is;
        inv_std(t) = is;
    }
    Eigen::RowVectorXd scale = ln.scale.col(0).transpose();
    Eigen::RowVectorXd offset = ln.offset.col(0).transpose();
    Mat y(rows, d);
    for (int t = 0; t < rows; ++t) y.row(t) = xhat.row(t).cwiseProduct(scale) + offset;
    if (cache) {
        cache->x_hat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
    }
    return y;
}

Mat layer_norm_backward(const Mat& dy, const LnCache& c, const LnParams& ln, LnParams& g) {
    const int rows = static_cast<int>(dy.rows());
    const int d = static_cast<int>(dy.cols());
    Eigen::RowVectorXd scale = ln.scale.col(0).transpose();
    Mat dx(rows, d);
    for (int t = 0; t < rows; ++t) {
        g.offset.col(0) += dy.row(t).transpose();
        g.scale.col(0) += dy.row(t).cwiseProduct(c.x_hat.row(t)).transpose();
        Eigen::RowVectorXd dxhat = dy.row(t).cwiseProduct(scale);
        double m1 = dxhat.mean();
        double m2 = dxhat.cwiseProduct(c.x_hat.row(t)).mean();
        dx.row(t) = (dxhat.array() - m1 - c.x_hat.row(t).array() * m2) * c.inv_std(t);
    }
    return dx;
}

// Multi-head attention. Key positions beyond mask.key_limit(t) are never
// touched for query t, so masked inputs cannot perturb unmasked outputs even
// at the bit level.
Mat attention(const Mat& xq, const Mat& xkv, const AttnParams& w, const AttentionMask& mask,
              int n_heads, AttnCache* cache) {
    const int tq = static_cast<int>(xq.rows());
    const int tk = static_cast<int>(xkv.rows());
    const int d = static_cast<int>(xq.cols());
    const int hd = d / n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

    Mat q = xq * w.wq;
    Mat k = xkv * w.wk;
    Mat v = xkv * w.wv;
    Mat concat(tq, d);
    if (cache) cache->probs.assign(n_heads, Mat());

    for (int h = 0; h < n_heads; ++h) {
        auto qh = q.middleCols(h * hd, hd);
        auto kh = k.middleCols(h * hd, hd);
        auto vh = v.middleCols(h * hd, hd);
        Mat p;
        if (cache) p = Mat::Zero(tq, tk);
        for (int t = 0; t < tq; ++t) {
            const int limit = mask.key_limit(t);
            Eigen::RowVectorXd scores = qh.row(t) * kh.topRows(limit).transpose() * inv_sqrt;
            double mx = scores.maxCoeff();
            Eigen::RowVectorXd e = (scores.array() - mx).exp();
            e /= e.sum();
            concat.block(t, h * hd, 1, hd) = e * vh.topRows(limit);
            if (cache) p.row(t).head(limit) = e;
        }
        if (cache) cache->probs[h] = std::move(p);
    }
    Mat out = concat * w.wo;
    if (cache) {
        cache->xq = xq;
        cache->xkv = xkv;
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->concat = std::move(concat);
        cache->mask = mask;
    }
    return out;
}

// Returns d(obj)/d(xq); adds d(obj)/d(xkv) into dxkv.
Mat attention_backward(const Mat& dout, const AttnCache& c, const AttnParams& w, int n_heads,
                       AttnParams& g, Mat& dxkv) {
    const int tq = static_cast<int>(c.xq.rows());
    const int tk = static_cast<int>(c.xkv.rows());
    const int d = static_cast<int>(c.xq.cols());
    const int hd = d / n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

    g.wo += c.concat.transpose() * dout;
    Mat dconcat = dout * w.wo.transpose();

    Mat dq = Mat::Zero(tq, d);
    Mat dk = Mat::Zero(tk, d);
    Mat dv = Mat::Zero(tk, d);

    for (int h = 0; h < n_heads; ++h) {
        auto qh = c.q.middleCols(h * hd, hd);
        auto kh = c.k.middleCols(h * hd, hd);
        auto vh = c.v.middleCols(h * hd, hd);
        auto dqh = dq.middleCols(h * hd, hd);
        auto dkh = dk.middleCols(h * hd, hd);
        auto dvh = dv.middleCols(h * hd, hd);
        const Mat& p = c.probs[h];
        for (int t = 0; t < tq; ++t) {
            const int limit = c.mask.key_limit(t);
            Eigen::RowVectorXd doh = dconcat.block(t, h * hd, 1, hd);
            Eigen::RowVectorXd prow = p.row(t).head(limit);
            Eigen::RowVectorXd dp = doh * vh.topRows(limit).transpose();
            dvh.topRows(limit).noalias() += prow.transpose() * doh;
            double dot = dp.cwiseProduct(prow).sum();
            Eigen::RowVectorXd ds = prow.cwiseProduct((dp.array() - dot).matrix());
            dqh.row(t).noalias() += ds * kh.topRows(limit) * inv_sqrt;
            dkh.topRows(limit).noalias() += ds.transpose() * (qh.row(t) * inv_sqrt);
        }
    }
    g.wq += c.xq.transpose() * dq;
    g.wk += c.xkv.transpose() * dk;
    g.wv += c.xkv.transpose() * dv;
    dxkv += dk * w.wk.transpose() + dv * w.wv.transpose();
    return dq * w.wq.transpose();
}

Mat ffn_forward(const Mat& x, const FfnParams& w, Activation act, FfnCache* cache) {
    Mat pre = x * w.w1;
    pre.rowwise() += w.b1.col(0).transpose();
    Mat a = activation_fwd(pre, act);
    Mat y = a * w.w2;
    y.rowwise() += w.b2.col(0).transpose();
    if (cache) {
        cache->x = x;
        cache->pre = std::move(pre);
        cache->act = std::move(a);
    }
    return y;
}

Mat ffn_backward(const Mat& dy, const FfnCache& c, const FfnParams& w, Activation act,
                 FfnParams& g) {
    g.b2.col(0) += dy.colwise().sum().transpose();
    g.w2 += c.act.transpose() * dy;
    Mat dact = dy * w.w2.transpose();
    Mat dpre = dact.cwiseProduct(activation_grad(c.pre, act));
    g.b1.col(0) += dpre.colwise().sum().transpose();
    g.w1 += c.x.transpose() * dpre;
    return dpre * w.w1.transpose();
}

Mat embed(const ModelParams& p, std::span<const int> ids) {
    Mat x(static_cast<int>(ids.size()), p.cfg.d_model);
    for (size_t t = 0; t < ids.size(); ++t) {
        if (ids[t] < 0 || ids[t] >= p.cfg.vocab)
            throw ShapeMismatch("token id " + std::to_string(ids[t]) + " out of vocab");
        x.row(static_cast<int>(t)) = p.tok_emb.row(ids[t]) + p.pos_emb.row(static_cast<int>(t));
    }
    return x;
}

void scatter_embedding_grads(const ModelParams& p, std::span<const int> ids, const Mat& dx,
                             GradientStore& g) {
    (void)p;
    for (size_t t = 0; t < ids.size(); ++t) {
        g.tok_emb.row(ids[t]) += dx.row(static_cast<int>(t));
        g.pos_emb.row(static_cast<int>(t)) += dx.row(static_cast<int>(t));
    }
}

// Single-row layer norm used by the incremental decoder.
Eigen::RowVectorXd row_ln(const Eigen::RowVectorXd& x, const LnParams& ln) {
    double mu = x.mean();
    double var = (x.array() - mu).square().mean();
    double is = 1.0 / std::sqrt(var + kLnEps);
    Eigen::RowVectorXd xhat = (x.array() - mu) * is;
    return xhat.cwiseProduct(ln.scale.col(0).transpose()) + ln.offset.col(0).transpose();
}

Eigen::RowVectorXd row_attention(const Eigen::RowVectorXd& h, const AttnParams& w, const Mat& kmat,
                                 const Mat& vmat, int limit, int n_heads) {
    const int d = static_cast<int>(h.cols());
    const int hd = d / n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
    Eigen::RowVectorXd q = h * w.wq;
    Eigen::RowVectorXd concat(d);
    for (int hh = 0; hh < n_heads; ++hh) {
        auto qh = q.segment(hh * hd, hd);
        auto kh = kmat.block(0, hh * hd, limit, hd);
        auto vh = vmat.block(0, hh * hd, limit, hd);
        Eigen::RowVectorXd scores = qh * kh.transpose() * inv_sqrt;
        double mx = scores.maxCoeff();
        Eigen::RowVectorXd e = (scores.array() - mx).exp();
        e /= e.sum();
        concat.segment(hh * hd, hd) = e * vh;
    }
    return concat * w.wo;
}

Eigen::RowVectorXd row_ffn(const Eigen::RowVectorXd& x, const FfnParams& w, Activation act) {
    Eigen::RowVectorXd pre = x * w.w1 + w.b1.col(0).transpose();
    Eigen::RowVectorXd a;
    if (act == Activation::ReLU)
        a = pre.cwiseMax(0.0);
    else
        a = pre.unaryExpr([](double v) { return gelu(v); });
    return a * w.w2 + w.b2.col(0).transpose();
}

} // namespace

// ---------------------------------------------------------------------------
// Parameter plumbing

void ModelConfig::validate() const {
    if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0)
        throw ShapeMismatch("d_model must be a positive multiple of n_heads");
    if (n_layers_enc < 1 || n_layers_dec < 1) throw ShapeMismatch("need at least one layer per stack");
    if (d_ff < 1) throw ShapeMismatch("d_ff must be positive");
    if (vocab < 2) throw ShapeMismatch("vocab too small");
    if (max_pos < 1) throw ShapeMismatch("max_pos must be positive");
}

ModelParams ModelParams::zeros(const ModelConfig& cfg) {
    cfg.validate();
    ModelParams p;
    p.cfg = cfg;
    const int d = cfg.d_model;
    auto ln = [&] { return LnParams{Mat::Zero(d, 1), Mat::Zero(d, 1)}; };
    auto attn = [&] {
        return AttnParams{Mat::Zero(d, d), Mat::Zero(d, d), Mat::Zero(d, d), Mat::Zero(d, d)};
    };
    auto ffn = [&] {
        return FfnParams{Mat::Zero(d, cfg.d_ff), Mat::Zero(cfg.d_ff, 1), Mat::Zero(cfg.d_ff, d),
                         Mat::Zero(d, 1)};
    };
    p.tok_emb = Mat::Zero(cfg.vocab, d);
    p.pos_emb = Mat::Zero(cfg.max_pos, d);
    p.enc.reserve(cfg.n_layers_enc);
    for (int i = 0; i < cfg.n_layers_enc; ++i) p.enc.push_back({ln(), attn(), ln(), ffn()});
    p.enc_ln_f = ln();
    p.dec.reserve(cfg.n_layers_dec);
    for (int i = 0; i < cfg.n_layers_dec; ++i)
        p.dec.push_back({ln(), attn(), ln(), attn(), ln(), ffn()});
    p.dec_ln_f = ln();
    p.lm_head = Mat::Zero(d, cfg.vocab);
    p.value_head = Mat::Zero(d, 1);
    return p;
}

namespace {

void collect(std::vector<TensorRef>& out, const std::string& prefix, LnParams& ln) {
    out.push_back({prefix + ".scale", &ln.scale});
    out.push_back({prefix + ".offset", &ln.offset});
}
void collect(std::vector<TensorRef>& out, const std::string& prefix, AttnParams& a) {
    out.push_back({prefix + ".wq", &a.wq});
    out.push_back({prefix + ".wk", &a.wk});
    out.push_back({prefix + ".wv", &a.wv});
    out.push_back({prefix + ".wo", &a.wo});
}
void collect(std::vector<TensorRef>& out, const std::string& prefix, FfnParams& f) {
    out.push_back({prefix + ".w1", &f.w1});
    out.push_back({prefix + ".b1", &f.b1});
    out.push_back({prefix + ".w2", &f.w2});
    out.push_back({prefix + ".b2", &f.b2});
}

} // namespace

std::vector<TensorRef> named_tensors(ModelParams& p) {
    std::vector<TensorRef> out;
    out.push_back({"tok_emb", &p.tok_emb});
    out.push_back({"pos_emb", &p.pos_emb});
    for (size_t i = 0; i < p.enc.size(); ++i) {
        std::string base = "enc." + std::to_string(i);
        collect(out, base + ".ln1", p.enc[i].ln1);
        collect(out, base + ".attn", p.enc[i].attn);
        collect(out, base + ".ln2", p.enc[i].ln2);
        collect(out, base + ".ffn", p.enc[i].ffn);
    }
    collect(out, "enc.ln_f", p.enc_ln_f);
    for (size_t i = 0; i < p.dec.size(); ++i) {
        std::string base = "dec." + std::to_string(i);
        collect(out, base + ".ln1", p.dec[i].ln1);
        collect(out, base + ".self", p.dec[i].self_attn);
        collect(out, base + ".ln2", p.dec[i].ln2);
        collect(out, base + ".cross", p.dec[i].cross_attn);
        collect(out, base + ".ln3", p.dec[i].ln3);
        collect(out, base + ".ffn", p.dec[i].ffn);
    }
    collect(out, "dec.ln_f", p.dec_ln_f);
    out.push_back({"lm_head", &p.lm_head});
    out.push_back({"value_head", &p.value_head});
    return out;
}

std::vector<ConstTensorRef> named_tensors(const ModelParams& p) {
    auto refs = named_tensors(const_cast<ModelParams&>(p));
    std::vector<ConstTensorRef> out;
    out.reserve(refs.size());
    for (auto& r : refs) out.push_back({std::move(r.name), r.mat});
    return out;
}

ModelParams ModelParams::init(const ModelConfig& cfg, Rng& rng) {
    ModelParams p = zeros(cfg);
    auto fill_normal = [&](Mat& m, double sigma) {
        for (int r = 0; r < m.rows(); ++r)
            for (int c = 0; c < m.cols(); ++c) m(r, c) = sigma * rng.normal();
    };
    for (auto& ref : named_tensors(p)) {
        const std::string& n = ref.name;
        auto ends_with = [&](const char* suffix) { return n.ends_with(suffix); };
        if (n == "tok_emb" || n == "pos_emb" || n == "lm_head" || n == "value_head") {
            fill_normal(*ref.mat, 0.02);
        } else if (ends_with(".scale")) {
            ref.mat->setOnes();
        } else if (ends_with(".offset") || ends_with(".b1") || ends_with(".b2")) {
            // stays zero
        } else {
            double fan_in = static_cast<double>(ref.mat->rows());
            double fan_out = static_cast<double>(ref.mat->cols());
            fill_normal(*ref.mat, std::sqrt(2.0 / (fan_in + fan_out)));
        }
    }
    return p;
}

bool ModelParams::all_finite() const {
    for (const auto& ref : named_tensors(*this))
        if (!ref.mat->allFinite()) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Encoder / decoder forward

Mat forward_encoder(const ModelParams& p, const Chunk& chunk, EncoderTape* tape) {
    const int s = chunk.size();
    if (s < 1) throw ShapeMismatch("empty chunk");
    if (s > p.cfg.max_pos) throw ShapeMismatch("chunk length exceeds max_pos");
    if (chunk.valid_len < 1 || chunk.valid_len > s) throw ShapeMismatch("bad valid_len");

    Mat x = embed(p, chunk.tokens);
    AttentionMask mask{MaskKind::FullyVisible, chunk.valid_len};
    if (tape) {
        tape->ids = chunk.tokens;
        tape->valid_len = chunk.valid_len;
        tape->layers.resize(p.enc.size());
    }
    for (size_t l = 0; l < p.enc.size(); ++l) {
        EncLayerCache* lc = tape ? &tape->layers[l] : nullptr;
        Mat h1 = layer_norm(x, p.enc[l].ln1, lc ? &lc->ln1 : nullptr);
        Mat a = attention(h1, h1, p.enc[l].attn, mask, p.cfg.n_heads, lc ? &lc->attn : nullptr);
        Mat x2 = x + a;
        Mat h2 = layer_norm(x2, p.enc[l].ln2, lc ? &lc->ln2 : nullptr);
        Mat f = ffn_forward(h2, p.enc[l].ffn, p.cfg.activation, lc ? &lc->ffn : nullptr);
        x = x2 + f;
    }
    return layer_norm(x, p.enc_ln_f, tape ? &tape->ln_f : nullptr);
}

DecoderResult forward_decoder(const ModelParams& p, const Mat& enc_out, int enc_valid_len,
                              std::span<const int> dec_ids, DecoderTape* tape) {
    const int t_len = static_cast<int>(dec_ids.size());
    if (t_len < 1) throw ShapeMismatch("empty decoder input");
    if (t_len > p.cfg.max_pos) throw ShapeMismatch("decoder input exceeds max_pos");
    if (enc_valid_len < 1 || enc_valid_len > enc_out.rows())
        throw ShapeMismatch("bad encoder valid length");
    if (enc_out.cols() != p.cfg.d_model) throw ShapeMismatch("encoder width mismatch");

    Mat x = embed(p, dec_ids);
    AttentionMask self_mask{MaskKind::Causal, t_len};
    AttentionMask cross_mask{MaskKind::FullyVisible, enc_valid_len};
    if (tape) {
        tape->ids.assign(dec_ids.begin(), dec_ids.end());
        tape->enc_valid_len = enc_valid_len;
        tape->layers.resize(p.dec.size());
    }
    for (size_t l = 0; l < p.dec.size(); ++l) {
        DecLayerCache* lc = tape ? &tape->layers[l] : nullptr;
        Mat h1 = layer_norm(x, p.dec[l].ln1, lc ? &lc->ln1 : nullptr);
        Mat a =
            attention(h1, h1, p.dec[l].self_attn, self_mask, p.cfg.n_heads, lc ? &lc->self_attn : nullptr);
        Mat x2 = x + a;
        Mat h2 = layer_norm(x2, p.dec[l].ln2, lc ? &lc->ln2 : nullptr);
        Mat c = attention(h2, enc_out, p.dec[l].cross_attn, cross_mask, p.cfg.n_heads,
                          lc ? &lc->cross_attn : nullptr);
        Mat x3 = x2 + c;
        Mat h3 = layer_norm(x3, p.dec[l].ln3, lc ? &lc->ln3 : nullptr);
        Mat f = ffn_forward(h3, p.dec[l].ffn, p.cfg.activation, lc ? &lc->ffn : nullptr);
        x = x3 + f;
    }
    Mat h = layer_norm(x, p.dec_ln_f, tape ? &tape->ln_f : nullptr);
    DecoderResult out;
    out.logits = h * p.lm_head;
    out.values = h * p.value_head;
    if (tape) tape->h_final = std::move(h);
    return out;
}

// ---------------------------------------------------------------------------
// Backward

Mat backward_decoder(const ModelParams& p, const DecoderTape& tape, const Mat& dlogits,
                     const Vec& dvalues, GradientStore& g) {
    const int t_len = static_cast<int>(tape.ids.size());
    if (dlogits.rows() != t_len || dvalues.size() != t_len)
        throw ShapeMismatch("objective gradient shape mismatch");

    g.lm_head += tape.h_final.transpose() * dlogits;
    g.value_head += tape.h_final.transpose() * dvalues;
    Mat dh = dlogits * p.lm_head.transpose();
    dh += dvalues * p.value_head.transpose();

    Mat dx = layer_norm_backward(dh, tape.ln_f, p.dec_ln_f, g.dec_ln_f);
    Mat denc = Mat::Zero(0, 0);
    for (int l = static_cast<int>(p.dec.size()) - 1; l >= 0; --l) {
        const DecLayerCache& lc = tape.layers[l];
        // x_out = x3 + ffn(ln3(x3))
        Mat dh3 = ffn_backward(dx, lc.ffn, p.dec[l].ffn, p.cfg.activation, g.dec[l].ffn);
        Mat dx3 = dx + layer_norm_backward(dh3, lc.ln3, p.dec[l].ln3, g.dec[l].ln3);
        // x3 = x2 + cross(ln2(x2), enc_out)
        if (denc.size() == 0) denc = Mat::Zero(lc.cross_attn.xkv.rows(), lc.cross_attn.xkv.cols());
        Mat dh2 = attention_backward(dx3, lc.cross_attn, p.dec[l].cross_attn, p.cfg.n_heads,
                                     g.dec[l].cross_attn, denc);
        Mat dx2 = dx3 + layer_norm_backward(dh2, lc.ln2, p.dec[l].ln2, g.dec[l].ln2);
        // x2 = x + self(ln1(x))
        Mat dself_kv = Mat::Zero(t_len, p.cfg.d_model);
        Mat dh1 = attention_backward(dx2, lc.self_attn, p.dec[l].self_attn, p.cfg.n_heads,
                                     g.dec[l].self_attn, dself_kv);
        dh1 += dself_kv;
        dx = dx2 + layer_norm_backward(dh1, lc.ln1, p.dec[l].ln1, g.dec[l].ln1);
    }
    scatter_embedding_grads(p, tape.ids, dx, g);
    return denc;
}

void backward_encoder(const ModelParams& p, const EncoderTape& tape, const Mat& denc,
                      GradientStore& g) {
    Mat dx = layer_norm_backward(denc, tape.ln_f, p.enc_ln_f, g.enc_ln_f);
    for (int l = static_cast<int>(p.enc.size()) - 1; l >= 0; --l) {
        const EncLayerCache& lc = tape.layers[l];
        Mat dh2 = ffn_backward(dx, lc.ffn, p.enc[l].ffn, p.cfg.activation, g.enc[l].ffn);
        Mat dx2 = dx + layer_norm_backward(dh2, lc.ln2, p.enc[l].ln2, g.enc[l].ln2);
        Mat dkv = Mat::Zero(dx2.rows(), dx2.cols());
        Mat dh1 = attention_backward(dx2, lc.attn, p.enc[l].attn, p.cfg.n_heads, g.enc[l].attn, dkv);
        dh1 += dkv;
        dx = dx2 + layer_norm_backward(dh1, lc.ln1, p.enc[l].ln1, g.enc[l].ln1);
    }
    scatter_embedding_grads(p, tape.ids, dx, g);
}

// ---------------------------------------------------------------------------
// Losses

double lm_loss(const Mat& logits, std::span<const int> targets, int ignore_id) {
    if (static_cast<int>(targets.size()) != logits.rows())
        throw ShapeMismatch("targets do not match logit rows");
    int n = 0;
    double total = 0.0;
    for (int t = 0; t < logits.rows(); ++t) {
        if (targets[t] == ignore_id) continue;
        if (targets[t] < 0 || targets[t] >= logits.cols())
            throw ShapeMismatch("target id out of vocab");
        double mx = logits.row(t).maxCoeff();
        double lse = mx + std::log((logits.row(t).array() - mx).exp().sum());
        total += lse - logits(t, targets[t]);
        ++n;
    }
    if (n == 0) throw EmptyTarget("all target positions ignored");
    return total / n;
}

Mat lm_loss_backward(const Mat& logits, std::span<const int> targets, int ignore_id) {
    if (static_cast<int>(targets.size()) != logits.rows())
        throw ShapeMismatch("targets do not match logit rows");
    int n = 0;
    for (int t = 0; t < logits.rows(); ++t)
        if (targets[t] != ignore_id) ++n;
    if (n == 0) throw EmptyTarget("all target positions ignored");

    Mat d = Mat::Zero(logits.rows(), logits.cols());
    for (int t = 0; t < logits.rows(); ++t) {
        if (targets[t] == ignore_id) continue;
        double mx = logits.row(t).maxCoeff();
        Eigen::RowVectorXd e = (logits.row(t).array() - mx).exp();
        d.row(t) = e / e.sum() / n;
        d(t, targets[t]) -= 1.0 / n;
    }
    return d;
}

// ---------------------------------------------------------------------------
// Optimizer

OptimizerState OptimizerState::create(const ModelConfig& cfg, double lr) {
    OptimizerState st;
    st.lr = lr;
    st.m = ModelParams::zeros(cfg);
    st.v = ModelParams::zeros(cfg);
    return st;
}

void adam_step(ModelParams& params, const GradientStore& grads, OptimizerState& st) {
    st.step += 1;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    auto ps = named_tensors(params);
    auto gs = named_tensors(grads);
    auto ms = named_tensors(st.m);
    auto vs = named_tensors(st.v);
    for (size_t i = 0; i < ps.size(); ++i) {
        Mat& p = *ps[i].mat;
        const Mat& g = *gs[i].mat;
        Mat& m = *ms[i].mat;
        Mat& v = *vs[i].mat;
        if (p.rows() != g.rows() || p.cols() != g.cols())
            throw ShapeMismatch("gradient shape mismatch at " + ps[i].name);
        m = st.beta1 * m + (1.0 - st.beta1) * g;
        v = st.beta2 * v + (1.0 - st.beta2) * g.cwiseProduct(g);
        p.array() -= st.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + st.eps);
    }
}

// ---------------------------------------------------------------------------
// Sampling

int sample_token(const Vec& logits, double temperature, Rng& rng) {
    const int n = static_cast<int>(logits.size());
    Vec z = (logits.array() - logits.maxCoeff()) / temperature;
    Vec pr = z.array().exp();
    double total = pr.sum();
    double u = rng.uniform() * total;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        acc += pr(i);
        if (u < acc) return i;
    }
    return n - 1;
}

int argmax_token(const Vec& logits) {
    Eigen::Index idx = 0;
    logits.maxCoeff(&idx);
    return static_cast<int>(idx);
}

Vec log_softmax(const Vec& logits) {
    double mx = logits.maxCoeff();
    double lse = mx + std::log((logits.array() - mx).exp().sum());
    return logits.array() - lse;
}

// ---------------------------------------------------------------------------
// Incremental decoding

DecodeState decode_begin(const ModelParams& p, const Mat& enc_out, int enc_valid_len) {
    if (enc_valid_len < 1 || enc_valid_len > enc_out.rows())
        throw ShapeMismatch("bad encoder valid length");
    DecodeState st;
    const int layers = p.cfg.n_layers_dec;
    st.enc_valid_len = enc_valid_len;
    st.self_k.assign(layers, Mat::Zero(p.cfg.max_pos, p.cfg.d_model));
    st.self_v.assign(layers, Mat::Zero(p.cfg.max_pos, p.cfg.d_model));
    st.cross_k.resize(layers);
    st.cross_v.resize(layers);
    for (int l = 0; l < layers; ++l) {
        st.cross_k[l] = enc_out.topRows(enc_valid_len) * p.dec[l].cross_attn.wk;
        st.cross_v[l] = enc_out.topRows(enc_valid_len) * p.dec[l].cross_attn.wv;
    }
    return st;
}

DecodeStepResult decode_step(const ModelParams& p, DecodeState& st, int token) {
    const int pos = st.len;
    if (pos >= p.cfg.max_pos) throw ShapeMismatch("decode position exceeds max_pos");
    if (token < 0 || token >= p.cfg.vocab) throw ShapeMismatch("token id out of vocab");

    Eigen::RowVectorXd x = p.tok_emb.row(token) + p.pos_emb.row(pos);
    for (size_t l = 0; l < p.dec.size(); ++l) {
        const DecLayerParams& lp = p.dec[l];
        Eigen::RowVectorXd h1 = row_ln(x, lp.ln1);
        st.self_k[l].row(pos) = h1 * lp.self_attn.wk;
        st.self_v[l].row(pos) = h1 * lp.self_attn.wv;
        x += row_attention(h1, lp.self_attn, st.self_k[l], st.self_v[l], pos + 1, p.cfg.n_heads);
        Eigen::RowVectorXd h2 = row_ln(x, lp.ln2);
        x += row_attention(h2, lp.cross_attn, st.cross_k[l], st.cross_v[l], st.enc_valid_len,
                           p.cfg.n_heads);
        Eigen::RowVectorXd h3 = row_ln(x, lp.ln3);
        x += row_ffn(h3, lp.ffn, p.cfg.activation);
    }
    Eigen::RowVectorXd h = row_ln(x, p.dec_ln_f);
    DecodeStepResult out;
    out.logits = (h * p.lm_head).transpose();
    out.value = (h * p.value_head)(0);
    st.len = pos + 1;
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

void put_u8(std::string& b, uint8_t v) { b.push_back(static_cast<char>(v)); }
void put_u16(std::string& b, uint16_t v) {
    for (int i = 0; i < 2; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u32(std::string& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& b, uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f64(std::string& b, double v) { put_u64(b, std::bit_cast<uint64_t>(v)); }

struct ByteReader {
    const uint8_t* p;
    size_t n;
    size_t off = 0;

    bool eof() const { return off >= n; }
    void need(size_t k, const char* what) const {
        if (off + k > n) throw CheckpointError(std::string("truncated checkpoint: ") + what);
    }
    uint8_t u8() {
        need(1, "u8");
        return p[off++];
    }
    uint16_t u16() {
        need(2, "u16");
        uint16_t v = static_cast<uint16_t>(p[off]) | static_cast<uint16_t>(p[off + 1]) << 8;
        off += 2;
        return v;
    }
    uint32_t u32() {
        need(4, "u32");
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[off + i]) << (8 * i);
        off += 4;
        return v;
    }
    uint64_t u64() {
        need(8, "u64");
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[off + i]) << (8 * i);
        off += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string bytes(size_t k) {
        need(k, "name");
        std::string s(reinterpret_cast<const char*>(p + off), k);
        off += k;
        return s;
    }
};

constexpr char kCheckpointMagic[4] = {'R', 'L', 'T', 'M'};
constexpr uint8_t kCheckpointVersion = 1;

} // namespace

void save_checkpoint(const ModelParams& p, const std::string& path) {
    std::string buf;
    buf.append(kCheckpointMagic, 4);
    put_u8(buf, kCheckpointVersion);
    put_u32(buf, static_cast<uint32_t>(p.cfg.d_model));
    put_u32(buf, static_cast<uint32_t>(p.cfg.n_heads));
    put_u32(buf, static_cast<uint32_t>(p.cfg.n_layers_enc));
    put_u32(buf, static_cast<uint32_t>(p.cfg.n_layers_dec));
    put_u32(buf, static_cast<uint32_t>(p.cfg.d_ff));
    put_u32(buf, static_cast<uint32_t>(p.cfg.vocab));
    put_u32(buf, static_cast<uint32_t>(p.cfg.max_pos));
    put_u8(buf, static_cast<uint8_t>(p.cfg.activation));
    for (const auto& ref : named_tensors(p)) {
        put_u16(buf, static_cast<uint16_t>(ref.name.size()));
        buf += ref.name;
        const Mat& m = *ref.mat;
        put_u64(buf, static_cast<uint64_t>(m.size()));
        for (int r = 0; r < m.rows(); ++r)
            for (int c = 0; c < m.cols(); ++c) put_f64(buf, m(r, c));
    }
    write_file_atomic(path, buf);
}

ModelParams load_checkpoint(const std::string& path) {
    std::vector<uint8_t> data;
    try {
        data = read_file(path);
    } catch (const IoError& e) {
        throw CheckpointError(e.what());
    }
    ByteReader r{data.data(), data.size()};
    r.need(4, "magic");
    if (std::memcmp(r.p, kCheckpointMagic, 4) != 0) throw CheckpointError("bad checkpoint magic");
    r.off += 4;
    if (r.u8() != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version");

    ModelConfig cfg;
    cfg.d_model = static_cast<int>(r.u32());
    cfg.n_heads = static_cast<int>(r.u32());
    cfg.n_layers_enc = static_cast<int>(r.u32());
    cfg.n_layers_dec = static_cast<int>(r.u32());
    cfg.d_ff = static_cast<int>(r.u32());
    cfg.vocab = static_cast<int>(r.u32());
    cfg.max_pos = static_cast<int>(r.u32());
    uint8_t act = r.u8();
    if (act > 1) throw CheckpointError("unknown activation id");
    cfg.activation = static_cast<Activation>(act);
    try {
        cfg.validate();
    } catch (const ShapeMismatch& e) {
        throw CheckpointError(std::string("invalid config: ") + e.what());
    }

    ModelParams params = ModelParams::zeros(cfg);
    std::unordered_map<std::string, Mat*> by_name;
    for (auto& ref : named_tensors(params)) by_name.emplace(ref.name, ref.mat);
    std::unordered_map<std::string, bool> seen;

    while (!r.eof()) {
        uint16_t name_len = r.u16();
        std::string name = r.bytes(name_len);
        uint64_t count = r.u64();
        auto it = by_name.find(name);
        if (it == by_name.end()) throw CheckpointError("unknown tensor " + name);
        Mat& m = *it->second;
        if (count != static_cast<uint64_t>(m.size()))
            throw CheckpointError("element count mismatch for " + name);
        if (seen[name]) throw CheckpointError("duplicate tensor " + name);
        seen[name] = true;
        for (int row = 0; row < m.rows(); ++row)
            for (int col = 0; col < m.cols(); ++col) m(row, col) = r.f64();
    }
    if (seen.size() != by_name.size()) throw CheckpointError("checkpoint is missing tensors");
    return params;
}

} // namespace rltc
