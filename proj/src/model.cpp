#include "pixeldoc/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <set>

#include "model_internal.hpp"
#include "pixeldoc/common.hpp"
#include "pixeldoc/kernels.hpp"
#include "pixeldoc/rng.hpp"

namespace pixeldoc {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInitStd = 0.02;

bool ends_with(std::string_view name, std::string_view suffix) {
    return name.size() >= suffix.size() &&
           name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Norm parameters and biases are excluded from weight decay.
bool is_decayed(std::string_view name) {
    return !(ends_with(name, ".bias") || ends_with(name, ".gamma") || ends_with(name, ".beta"));
}

void add_bias_rows(double* x, const double* bias, int rows, int cols) {
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) x[static_cast<std::size_t>(r) * cols + c] += bias[c];
}

void add_colsum(double* acc, const double* dy, int rows, int cols) {
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) acc[c] += dy[static_cast<std::size_t>(r) * cols + c];
}

void add_inplace(double* x, const double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] += y[i];
}

// Copy head columns [col0, col0+width) of src (rows x cols) into a dense
// rows x width buffer, and the reverse accumulation.
void gather_cols(double* dst, const double* src, int rows, int cols, int col0, int width) {
    for (int r = 0; r < rows; ++r)
        std::memcpy(dst + static_cast<std::size_t>(r) * width,
                    src + static_cast<std::size_t>(r) * cols + col0,
                    static_cast<std::size_t>(width) * sizeof(double));
}

void scatter_cols(double* dst, const double* src, int rows, int cols, int col0, int width) {
    for (int r = 0; r < rows; ++r)
        std::memcpy(dst + static_cast<std::size_t>(r) * cols + col0,
                    src + static_cast<std::size_t>(r) * width,
                    static_cast<std::size_t>(width) * sizeof(double));
}

void scatter_add_cols(double* dst, const double* src, int rows, int cols, int col0, int width) {
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < width; ++c)
            dst[static_cast<std::size_t>(r) * cols + col0 + c] +=
                src[static_cast<std::size_t>(r) * width + c];
}

// y[rows x out] = x[rows x in] * W^T + b, with W stored [out x in].
void linear_forward(double* y, const double* x, const Tensor& w, const Tensor* b, int rows) {
    const int out = w.shape[0];
    const int in = w.shape[1];
    kernels::matmul_nt(y, x, w.data.data(), rows, in, out);
    if (b) add_bias_rows(y, b->data.data(), rows, out);
}

// dx (+)= dy * W; dW += dy^T * x; db += column sums of dy.
void linear_backward(double* dx, Tensor& dw, Tensor* db, const double* dy, const double* x,
                     const Tensor& w, int rows, bool accumulate_dx) {
    const int out = w.shape[0];
    const int in = w.shape[1];
    if (dx) kernels::matmul(dx, dy, w.data.data(), rows, out, in, accumulate_dx);
    kernels::matmul_tn(dw.data.data(), dy, x, rows, out, in, /*accumulate=*/true);
    if (db) add_colsum(db->data.data(), dy, rows, out);
}

struct LnFwd {
    std::vector<double> x;     // input copy, rows x cols
    std::vector<double> out;   // rows x cols
    std::vector<double> mean;  // rows
    std::vector<double> rstd;  // rows
};

void ln_forward(LnFwd& c, const double* x, const Tensor& gamma, const Tensor& beta, int rows,
                int cols) {
    c.x.assign(x, x + static_cast<std::size_t>(rows) * cols);
    c.out.resize(static_cast<std::size_t>(rows) * cols);
    c.mean.resize(rows);
    c.rstd.resize(rows);
    kernels::layernorm_forward(c.out.data(), c.mean.data(), c.rstd.data(), c.x.data(),
                               gamma.data.data(), beta.data.data(), rows, cols, kLnEps);
}

// Adds the input-side gradient of the norm into `dx_accum`.
void ln_backward_into(double* dx_accum, Parameters& grads, const LnFwd& c,
                      const Parameters& params, const std::string& prefix, const double* dy,
                      int rows, int cols) {
    std::vector<double> dx(static_cast<std::size_t>(rows) * cols);
    kernels::layernorm_backward(dx.data(), grads.at(prefix + "gamma").data.data(),
                                grads.at(prefix + "beta").data.data(), dy, c.x.data(),
                                params.at(prefix + "gamma").data.data(), c.mean.data(),
                                c.rstd.data(), rows, cols);
    add_inplace(dx_accum, dx.data(), dx.size());
}

struct AttnFwd {
    LnFwd ln;                   // over the query-side residual stream
    std::vector<double> q;      // Tq x d
    std::vector<double> k;      // Tk x d
    std::vector<double> v;      // Tk x d
    std::vector<double> probs;  // n_heads x Tq x Tk, post-softmax
    std::vector<double> ctx;    // Tq x d, concatenated head outputs
    int tq = 0;
    int tk = 0;
};

// Multi-head scaled dot-product attention. q_src/kv_src are already
// normalized inputs; writes the sublayer output (W_o ctx + b_o) to `out`.
void attn_core_forward(AttnFwd& c, double* out, const double* q_src, const double* kv_src,
                       int tq, int tk, bool causal, const ModelConfig& cfg,
                       const Parameters& params, const std::string& prefix) {
    const int d = cfg.d_model;
    const int h = cfg.n_heads;
    const int dh = d / h;
    c.tq = tq;
    c.tk = tk;
    c.q.resize(static_cast<std::size_t>(tq) * d);
    c.k.resize(static_cast<std::size_t>(tk) * d);
    c.v.resize(static_cast<std::size_t>(tk) * d);
    linear_forward(c.q.data(), q_src, params.at(prefix + "wq.weight"),
                   &params.at(prefix + "wq.bias"), tq);
    linear_forward(c.k.data(), kv_src, params.at(prefix + "wk.weight"),
                   &params.at(prefix + "wk.bias"), tk);
    linear_forward(c.v.data(), kv_src, params.at(prefix + "wv.weight"),
                   &params.at(prefix + "wv.bias"), tk);

    c.probs.resize(static_cast<std::size_t>(h) * tq * tk);
    c.ctx.assign(static_cast<std::size_t>(tq) * d, 0.0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<double> qh(static_cast<std::size_t>(tq) * dh);
    std::vector<double> kh(static_cast<std::size_t>(tk) * dh);
    std::vector<double> vh(static_cast<std::size_t>(tk) * dh);
    std::vector<double> ctxh(static_cast<std::size_t>(tq) * dh);
    for (int head = 0; head < h; ++head) {
        const int col0 = head * dh;
        gather_cols(qh.data(), c.q.data(), tq, d, col0, dh);
        gather_cols(kh.data(), c.k.data(), tk, d, col0, dh);
        gather_cols(vh.data(), c.v.data(), tk, d, col0, dh);

        double* scores = c.probs.data() + static_cast<std::size_t>(head) * tq * tk;
        kernels::matmul_nt(scores, qh.data(), kh.data(), tq, dh, tk);
        for (std::size_t i = 0; i < static_cast<std::size_t>(tq) * tk; ++i) scores[i] *= scale;
        if (causal) {
            for (int t = 0; t < tq; ++t)
                for (int s = t + 1; s < tk; ++s)
                    scores[static_cast<std::size_t>(t) * tk + s] =
                        -std::numeric_limits<double>::infinity();
        }
        kernels::softmax_rows(scores, tq, tk);
        kernels::matmul(ctxh.data(), scores, vh.data(), tq, tk, dh);
        scatter_cols(c.ctx.data(), ctxh.data(), tq, d, col0, dh);
    }
    linear_forward(out, c.ctx.data(), params.at(prefix + "wo.weight"),
                   &params.at(prefix + "wo.bias"), tq);
}

// Accumulates gradients into d_q_src and d_kv_src (both +=). For
// self-attention the two pointers may alias the same buffer.
void attn_core_backward(double* d_q_src, double* d_kv_src, Parameters& grads, const AttnFwd& c,
                        const double* q_src, const double* kv_src, const double* dout,
                        const ModelConfig& cfg, const Parameters& params,
                        const std::string& prefix) {
    const int d = cfg.d_model;
    const int h = cfg.n_heads;
    const int dh = d / h;
    const int tq = c.tq;
    const int tk = c.tk;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    // Output projection.
    std::vector<double> dctx(static_cast<std::size_t>(tq) * d);
    linear_backward(dctx.data(), grads.at(prefix + "wo.weight"), &grads.at(prefix + "wo.bias"),
                    dout, c.ctx.data(), params.at(prefix + "wo.weight"), tq,
                    /*accumulate_dx=*/false);

    std::vector<double> dq(static_cast<std::size_t>(tq) * d, 0.0);
    std::vector<double> dk(static_cast<std::size_t>(tk) * d, 0.0);
    std::vector<double> dv(static_cast<std::size_t>(tk) * d, 0.0);

    std::vector<double> qh(static_cast<std::size_t>(tq) * dh);
    std::vector<double> kh(static_cast<std::size_t>(tk) * dh);
    std::vector<double> vh(static_cast<std::size_t>(tk) * dh);
    std::vector<double> dctxh(static_cast<std::size_t>(tq) * dh);
    std::vector<double> dprobs(static_cast<std::size_t>(tq) * tk);
    std::vector<double> dqh(static_cast<std::size_t>(tq) * dh);
    std::vector<double> dkh(static_cast<std::size_t>(tk) * dh);
    std::vector<double> dvh(static_cast<std::size_t>(tk) * dh);
    for (int head = 0; head < h; ++head) {
        const int col0 = head * dh;
        gather_cols(qh.data(), c.q.data(), tq, d, col0, dh);
        gather_cols(kh.data(), c.k.data(), tk, d, col0, dh);
        gather_cols(vh.data(), c.v.data(), tk, d, col0, dh);
        gather_cols(dctxh.data(), dctx.data(), tq, d, col0, dh);
        const double* probs = c.probs.data() + static_cast<std::size_t>(head) * tq * tk;

        // ctx_h = probs * v_h
        kernels::matmul_nt(dprobs.data(), dctxh.data(), vh.data(), tq, dh, tk);
        kernels::matmul_tn(dvh.data(), probs, dctxh.data(), tq, tk, dh);

        // Softmax backward per row: ds = p * (dp - sum(p * dp)); masked
        // entries have p == 0 and so stay zero. The 1/sqrt(dh) scale of the
        // raw scores folds in here.
        for (int t = 0; t < tq; ++t) {
            const double* p = probs + static_cast<std::size_t>(t) * tk;
            double* dp = dprobs.data() + static_cast<std::size_t>(t) * tk;
            double dot = 0.0;
            for (int s = 0; s < tk; ++s) dot += p[s] * dp[s];
            for (int s = 0; s < tk; ++s) dp[s] = p[s] * (dp[s] - dot) * scale;
        }

        kernels::matmul(dqh.data(), dprobs.data(), kh.data(), tq, tk, dh);
        kernels::matmul_tn(dkh.data(), dprobs.data(), qh.data(), tq, tk, dh);
        scatter_add_cols(dq.data(), dqh.data(), tq, d, col0, dh);
        scatter_add_cols(dk.data(), dkh.data(), tk, d, col0, dh);
        scatter_add_cols(dv.data(), dvh.data(), tk, d, col0, dh);
    }

    linear_backward(d_q_src, grads.at(prefix + "wq.weight"), &grads.at(prefix + "wq.bias"),
                    dq.data(), q_src, params.at(prefix + "wq.weight"), tq,
                    /*accumulate_dx=*/true);
    linear_backward(d_kv_src, grads.at(prefix + "wk.weight"), &grads.at(prefix + "wk.bias"),
                    dk.data(), kv_src, params.at(prefix + "wk.weight"), tk,
                    /*accumulate_dx=*/true);
    linear_backward(d_kv_src, grads.at(prefix + "wv.weight"), &grads.at(prefix + "wv.bias"),
                    dv.data(), kv_src, params.at(prefix + "wv.weight"), tk,
                    /*accumulate_dx=*/true);
}

struct MlpFwd {
    LnFwd ln;
    std::vector<double> h1;  // T x d_ff, pre-activation
    std::vector<double> g;   // T x d_ff, post-GELU
};

void mlp_forward(MlpFwd& c, double* out, const double* x, int rows, const ModelConfig& cfg,
                 const Parameters& params, const std::string& ln_prefix,
                 const std::string& mlp_prefix) {
    ln_forward(c.ln, x, params.at(ln_prefix + "gamma"), params.at(ln_prefix + "beta"), rows,
               cfg.d_model);
    c.h1.resize(static_cast<std::size_t>(rows) * cfg.d_ff);
    c.g.resize(c.h1.size());
    linear_forward(c.h1.data(), c.ln.out.data(), params.at(mlp_prefix + "fc1.weight"),
                   &params.at(mlp_prefix + "fc1.bias"), rows);
    kernels::gelu_forward(c.g.data(), c.h1.data(), c.h1.size());
    linear_forward(out, c.g.data(), params.at(mlp_prefix + "fc2.weight"),
                   &params.at(mlp_prefix + "fc2.bias"), rows);
}

void mlp_backward(double* dstream, Parameters& grads, const MlpFwd& c, const double* dout,
                  int rows, const ModelConfig& cfg, const Parameters& params,
                  const std::string& ln_prefix, const std::string& mlp_prefix) {
    std::vector<double> dg(static_cast<std::size_t>(rows) * cfg.d_ff);
    linear_backward(dg.data(), grads.at(mlp_prefix + "fc2.weight"),
                    &grads.at(mlp_prefix + "fc2.bias"), dout, c.g.data(),
                    params.at(mlp_prefix + "fc2.weight"), rows, /*accumulate_dx=*/false);
    std::vector<double> dh1(dg.size());
    kernels::gelu_backward(dh1.data(), c.h1.data(), dg.data(), dg.size());
    std::vector<double> dln(static_cast<std::size_t>(rows) * cfg.d_model, 0.0);
    linear_backward(dln.data(), grads.at(mlp_prefix + "fc1.weight"),
                    &grads.at(mlp_prefix + "fc1.bias"), dh1.data(), c.ln.out.data(),
                    params.at(mlp_prefix + "fc1.weight"), rows, /*accumulate_dx=*/true);
    ln_backward_into(dstream, grads, c.ln, params, ln_prefix, dln.data(), rows, cfg.d_model);
}

// One self-attention + MLP block (encoder and the reconstruction decoder).
struct SelfBlockFwd {
    AttnFwd attn;
    MlpFwd mlp;
};

void self_block_forward(SelfBlockFwd& c, std::vector<double>& stream, int rows,
                        const ModelConfig& cfg, const Parameters& params,
                        const std::string& layer_prefix) {
    std::vector<double> sub(stream.size());
    ln_forward(c.attn.ln, stream.data(), params.at(layer_prefix + "ln1.gamma"),
               params.at(layer_prefix + "ln1.beta"), rows, cfg.d_model);
    attn_core_forward(c.attn, sub.data(), c.attn.ln.out.data(), c.attn.ln.out.data(), rows,
                      rows, /*causal=*/false, cfg, params, layer_prefix + "attn.");
    add_inplace(stream.data(), sub.data(), stream.size());
    mlp_forward(c.mlp, sub.data(), stream.data(), rows, cfg, params, layer_prefix + "ln2.",
                layer_prefix + "mlp.");
    add_inplace(stream.data(), sub.data(), stream.size());
}

void self_block_backward(std::vector<double>& dstream, Parameters& grads, const SelfBlockFwd& c,
                         int rows, const ModelConfig& cfg, const Parameters& params,
                         const std::string& layer_prefix) {
    mlp_backward(dstream.data(), grads, c.mlp, dstream.data(), rows, cfg, params,
                 layer_prefix + "ln2.", layer_prefix + "mlp.");
    std::vector<double> dln(dstream.size(), 0.0);
    attn_core_backward(dln.data(), dln.data(), grads, c.attn, c.attn.ln.out.data(),
                       c.attn.ln.out.data(), dstream.data(), cfg, params,
                       layer_prefix + "attn.");
    ln_backward_into(dstream.data(), grads, c.attn.ln, params, layer_prefix + "ln1.",
                     dln.data(), rows, cfg.d_model);
}

struct EncoderFwd {
    int n_patches = 0;
    std::vector<char> masked;            // per patch position
    std::vector<int> unmasked_rows;      // gathered row order
    std::vector<double> patch_mat;       // |unmasked| x 588
    std::vector<SelfBlockFwd> blocks;
    LnFwd final_ln;
    std::vector<double> out;             // n_patches x d_model
};

void validate_patch_sequence(const ModelConfig& cfg, const PatchSequence& seq) {
    const int n = static_cast<int>(seq.patches.size());
    if (n < 1) throw_data("patch sequence is empty");
    if (n > cfg.max_patches) throw_data("patch sequence too long");
    for (const auto& p : seq.patches)
        if (static_cast<int>(p.size()) != kPatchDim) throw_data("patch dimension mismatch");
}

void validate_mask_indices(const std::vector<int>& mask, int n_patches) {
    std::set<int> seen;
    for (int idx : mask) {
        if (idx < 0 || idx >= n_patches) throw_data("patch mask index out of range");
        if (!seen.insert(idx).second) throw_data("patch mask index repeated");
    }
}

void encoder_forward(EncoderFwd& c, const ModelConfig& cfg, const Parameters& params,
                     const PatchSequence& seq, const std::vector<int>* mae_mask) {
    validate_patch_sequence(cfg, seq);
    const int n = static_cast<int>(seq.patches.size());
    const int d = cfg.d_model;
    c.n_patches = n;
    c.masked.assign(n, 0);
    if (mae_mask) {
        validate_mask_indices(*mae_mask, n);
        for (int idx : *mae_mask) c.masked[idx] = 1;
    }

    c.unmasked_rows.clear();
    for (int i = 0; i < n; ++i)
        if (!c.masked[i]) c.unmasked_rows.push_back(i);
    const int nu = static_cast<int>(c.unmasked_rows.size());
    c.patch_mat.resize(static_cast<std::size_t>(nu) * kPatchDim);
    for (int r = 0; r < nu; ++r)
        std::memcpy(c.patch_mat.data() + static_cast<std::size_t>(r) * kPatchDim,
                    seq.patches[static_cast<std::size_t>(c.unmasked_rows[r])].data(),
                    kPatchDim * sizeof(double));

    // Patch projection for visible patches, learned embedding for masked
    // ones, sinusoidal position added everywhere.
    std::vector<double> proj(static_cast<std::size_t>(nu) * d);
    if (nu > 0)
        linear_forward(proj.data(), c.patch_mat.data(), params.at("patch_proj.weight"),
                       &params.at("patch_proj.bias"), nu);
    const auto pos = sinusoidal_pos_emb(n, d);
    const auto& mask_emb = params.at("mask_patch.embedding").data;
    std::vector<double> stream(static_cast<std::size_t>(n) * d);
    int next_unmasked = 0;
    for (int i = 0; i < n; ++i) {
        double* row = stream.data() + static_cast<std::size_t>(i) * d;
        const double* src = c.masked[i]
                                ? mask_emb.data()
                                : proj.data() + static_cast<std::size_t>(next_unmasked++) * d;
        for (int j = 0; j < d; ++j) row[j] = src[j] + pos[static_cast<std::size_t>(i)][j];
    }

    c.blocks.resize(cfg.n_encoder_layers);
    for (int l = 0; l < cfg.n_encoder_layers; ++l)
        self_block_forward(c.blocks[static_cast<std::size_t>(l)], stream, n, cfg, params,
                           "enc." + std::to_string(l) + ".");
    ln_forward(c.final_ln, stream.data(), params.at("enc.final_ln.gamma"),
               params.at("enc.final_ln.beta"), n, d);
    c.out = c.final_ln.out;
}

void encoder_backward(Parameters& grads, const EncoderFwd& c, const ModelConfig& cfg,
                      const Parameters& params, const std::vector<double>& d_states) {
    const int n = c.n_patches;
    const int d = cfg.d_model;
    std::vector<double> dstream(static_cast<std::size_t>(n) * d, 0.0);
    ln_backward_into(dstream.data(), grads, c.final_ln, params, "enc.final_ln.",
                     d_states.data(), n, d);
    for (int l = cfg.n_encoder_layers - 1; l >= 0; --l)
        self_block_backward(dstream, grads, c.blocks[static_cast<std::size_t>(l)], n, cfg,
                            params, "enc." + std::to_string(l) + ".");

    // Embedding backward: visible rows feed the patch projection, masked
    // rows feed the learned mask embedding. Positions are fixed.
    auto& d_mask_emb = grads.at("mask_patch.embedding").data;
    const int nu = static_cast<int>(c.unmasked_rows.size());
    std::vector<double> d_proj(static_cast<std::size_t>(nu) * d);
    int next_unmasked = 0;
    for (int i = 0; i < n; ++i) {
        const double* row = dstream.data() + static_cast<std::size_t>(i) * d;
        if (c.masked[i]) {
            for (int j = 0; j < d; ++j) d_mask_emb[static_cast<std::size_t>(j)] += row[j];
        } else {
            std::memcpy(d_proj.data() + static_cast<std::size_t>(next_unmasked++) * d, row,
                        static_cast<std::size_t>(d) * sizeof(double));
        }
    }
    if (nu > 0)
        linear_backward(nullptr, grads.at("patch_proj.weight"), &grads.at("patch_proj.bias"),
                        d_proj.data(), c.patch_mat.data(), params.at("patch_proj.weight"), nu,
                        false);
}

struct DecoderBlockFwd {
    AttnFwd self_attn;
    AttnFwd cross_attn;
    MlpFwd mlp;
};

struct DecoderFwd {
    std::vector<TokenId> tokens;
    std::vector<DecoderBlockFwd> blocks;
    LnFwd final_ln;
    std::vector<double> hidden;  // T x d_model, post final norm
    std::vector<double> logits;  // T x vocab
};

void decoder_forward(DecoderFwd& c, const ModelConfig& cfg, const Parameters& params,
                     const std::vector<double>& enc_states, int n_patches,
                     const std::vector<TokenId>& tokens) {
    const int t_len = static_cast<int>(tokens.size());
    const int d = cfg.d_model;
    if (t_len < 1) throw_data("decoder input is empty");
    if (t_len > cfg.max_text_len) throw_data("text sequence too long");
    if (n_patches < 1 || enc_states.size() != static_cast<std::size_t>(n_patches) * d)
        throw_data("encoder state shape mismatch");
    const auto& emb = params.at("token_emb.weight");
    for (TokenId id : tokens)
        if (id < 0 || id >= cfg.vocab_size) throw_data("token id outside vocabulary");

    c.tokens = tokens;
    const auto pos = sinusoidal_pos_emb(t_len, d);
    std::vector<double> stream(static_cast<std::size_t>(t_len) * d);
    for (int t = 0; t < t_len; ++t)
        for (int j = 0; j < d; ++j)
            stream[static_cast<std::size_t>(t) * d + j] =
                emb.data[static_cast<std::size_t>(tokens[static_cast<std::size_t>(t)]) * d + j] +
                pos[static_cast<std::size_t>(t)][j];

    c.blocks.resize(cfg.n_decoder_layers);
    std::vector<double> sub(stream.size());
    for (int l = 0; l < cfg.n_decoder_layers; ++l) {
        auto& blk = c.blocks[static_cast<std::size_t>(l)];
        const std::string prefix = "dec." + std::to_string(l) + ".";
        ln_forward(blk.self_attn.ln, stream.data(), params.at(prefix + "ln1.gamma"),
                   params.at(prefix + "ln1.beta"), t_len, d);
        attn_core_forward(blk.self_attn, sub.data(), blk.self_attn.ln.out.data(),
                          blk.self_attn.ln.out.data(), t_len, t_len, /*causal=*/true, cfg,
                          params, prefix + "self_attn.");
        add_inplace(stream.data(), sub.data(), stream.size());

        ln_forward(blk.cross_attn.ln, stream.data(), params.at(prefix + "ln2.gamma"),
                   params.at(prefix + "ln2.beta"), t_len, d);
        attn_core_forward(blk.cross_attn, sub.data(), blk.cross_attn.ln.out.data(),
                          enc_states.data(), t_len, n_patches, /*causal=*/false, cfg, params,
                          prefix + "cross_attn.");
        add_inplace(stream.data(), sub.data(), stream.size());

        mlp_forward(blk.mlp, sub.data(), stream.data(), t_len, cfg, params, prefix + "ln3.",
                    prefix + "mlp.");
        add_inplace(stream.data(), sub.data(), stream.size());
    }
    ln_forward(c.final_ln, stream.data(), params.at("dec.final_ln.gamma"),
               params.at("dec.final_ln.beta"), t_len, d);
    c.hidden = c.final_ln.out;
    c.logits.resize(static_cast<std::size_t>(t_len) * cfg.vocab_size);
    linear_forward(c.logits.data(), c.hidden.data(), params.at("lm_head.weight"), nullptr,
                   t_len);
}

// d_enc_states accumulates (+=) the gradient flowing into the encoder.
void decoder_backward(Parameters& grads, std::vector<double>& d_enc_states, const DecoderFwd& c,
                      const ModelConfig& cfg, const Parameters& params,
                      const std::vector<double>& enc_states, const std::vector<double>& dlogits) {
    const int t_len = static_cast<int>(c.tokens.size());
    const int d = cfg.d_model;
    std::vector<double> dhidden(static_cast<std::size_t>(t_len) * d);
    linear_backward(dhidden.data(), grads.at("lm_head.weight"), nullptr, dlogits.data(),
                    c.hidden.data(), params.at("lm_head.weight"), t_len,
                    /*accumulate_dx=*/false);

    std::vector<double> dstream(static_cast<std::size_t>(t_len) * d, 0.0);
    ln_backward_into(dstream.data(), grads, c.final_ln, params, "dec.final_ln.",
                     dhidden.data(), t_len, d);

    std::vector<double> dln(dstream.size());
    for (int l = cfg.n_decoder_layers - 1; l >= 0; --l) {
        const auto& blk = c.blocks[static_cast<std::size_t>(l)];
        const std::string prefix = "dec." + std::to_string(l) + ".";
        mlp_backward(dstream.data(), grads, blk.mlp, dstream.data(), t_len, cfg, params,
                     prefix + "ln3.", prefix + "mlp.");

        std::fill(dln.begin(), dln.end(), 0.0);
        attn_core_backward(dln.data(), d_enc_states.data(), grads, blk.cross_attn,
                           blk.cross_attn.ln.out.data(), enc_states.data(), dstream.data(),
                           cfg, params, prefix + "cross_attn.");
        ln_backward_into(dstream.data(), grads, blk.cross_attn.ln, params, prefix + "ln2.",
                         dln.data(), t_len, d);

        std::fill(dln.begin(), dln.end(), 0.0);
        attn_core_backward(dln.data(), dln.data(), grads, blk.self_attn,
                           blk.self_attn.ln.out.data(), blk.self_attn.ln.out.data(),
                           dstream.data(), cfg, params, prefix + "self_attn.");
        ln_backward_into(dstream.data(), grads, blk.self_attn.ln, params, prefix + "ln1.",
                         dln.data(), t_len, d);
    }

    auto& d_emb = grads.at("token_emb.weight").data;
    for (int t = 0; t < t_len; ++t)
        for (int j = 0; j < d; ++j)
            d_emb[static_cast<std::size_t>(c.tokens[static_cast<std::size_t>(t)]) * d + j] +=
                dstream[static_cast<std::size_t>(t) * d + j];
}

struct MaeFwd {
    std::vector<SelfBlockFwd> blocks;
    LnFwd final_ln;
    std::vector<double> masked_hidden;  // M x d_model, gathered masked rows
    std::vector<double> pred;           // M x 588
    std::vector<double> target;         // M x 588, normalized clean patches
};

// Per-patch normalization target: (p - mean) / sqrt(var + floor), population
// statistics over the 588 values.
void normalized_patch_target(double* out, const std::vector<double>& patch, double floor) {
    double mean = 0.0;
    for (double v : patch) mean += v;
    mean /= static_cast<double>(patch.size());
    double var = 0.0;
    for (double v : patch) var += (v - mean) * (v - mean);
    var /= static_cast<double>(patch.size());
    const double rstd = 1.0 / std::sqrt(var + floor);
    for (std::size_t i = 0; i < patch.size(); ++i) out[i] = (patch[i] - mean) * rstd;
}

double mae_forward(MaeFwd& c, const ModelConfig& cfg, const Parameters& params,
                   const std::vector<double>& enc_states, int n_patches,
                   const std::vector<int>& mae_mask,
                   const std::vector<std::vector<double>>& original_patches) {
    if (mae_mask.empty()) throw_data("patch mask is empty");
    validate_mask_indices(mae_mask, n_patches);
    if (static_cast<int>(original_patches.size()) != n_patches)
        throw_data("original patch count mismatch");
    for (const auto& p : original_patches)
        if (static_cast<int>(p.size()) != kPatchDim) throw_data("patch dimension mismatch");

    const int d = cfg.d_model;
    const int m = static_cast<int>(mae_mask.size());
    std::vector<double> stream = enc_states;
    c.blocks.resize(cfg.n_mae_decoder_layers);
    for (int l = 0; l < cfg.n_mae_decoder_layers; ++l)
        self_block_forward(c.blocks[static_cast<std::size_t>(l)], stream, n_patches, cfg,
                           params, "mae." + std::to_string(l) + ".");
    ln_forward(c.final_ln, stream.data(), params.at("mae.final_ln.gamma"),
               params.at("mae.final_ln.beta"), n_patches, d);

    c.masked_hidden.resize(static_cast<std::size_t>(m) * d);
    for (int r = 0; r < m; ++r)
        std::memcpy(c.masked_hidden.data() + static_cast<std::size_t>(r) * d,
                    c.final_ln.out.data() + static_cast<std::size_t>(mae_mask[
                        static_cast<std::size_t>(r)]) * d,
                    static_cast<std::size_t>(d) * sizeof(double));
    c.pred.resize(static_cast<std::size_t>(m) * kPatchDim);
    linear_forward(c.pred.data(), c.masked_hidden.data(), params.at("pixel_head.weight"),
                   &params.at("pixel_head.bias"), m);

    c.target.resize(c.pred.size());
    for (int r = 0; r < m; ++r)
        normalized_patch_target(
            c.target.data() + static_cast<std::size_t>(r) * kPatchDim,
            original_patches[static_cast<std::size_t>(mae_mask[static_cast<std::size_t>(r)])],
            cfg.variance_floor);

    double loss = 0.0;
    for (std::size_t i = 0; i < c.pred.size(); ++i) {
        const double diff = c.pred[i] - c.target[i];
        loss += diff * diff;
    }
    return loss / static_cast<double>(c.pred.size());
}

// `loss_scale` multiplies the reconstruction loss gradient (role weight and
// batch averaging). Accumulates into d_enc_states.
void mae_backward(Parameters& grads, std::vector<double>& d_enc_states, const MaeFwd& c,
                  const ModelConfig& cfg, const Parameters& params, int n_patches,
                  const std::vector<int>& mae_mask, double loss_scale) {
    const int d = cfg.d_model;
    const int m = static_cast<int>(mae_mask.size());
    std::vector<double> dpred(c.pred.size());
    const double coeff = 2.0 * loss_scale / static_cast<double>(c.pred.size());
    for (std::size_t i = 0; i < c.pred.size(); ++i)
        dpred[i] = coeff * (c.pred[i] - c.target[i]);

    std::vector<double> d_masked(static_cast<std::size_t>(m) * d);
    linear_backward(d_masked.data(), grads.at("pixel_head.weight"),
                    &grads.at("pixel_head.bias"), dpred.data(), c.masked_hidden.data(),
                    params.at("pixel_head.weight"), m, /*accumulate_dx=*/false);

    std::vector<double> dhidden(static_cast<std::size_t>(n_patches) * d, 0.0);
    for (int r = 0; r < m; ++r)
        add_inplace(dhidden.data() +
                        static_cast<std::size_t>(mae_mask[static_cast<std::size_t>(r)]) * d,
                    d_masked.data() + static_cast<std::size_t>(r) * d,
                    static_cast<std::size_t>(d));

    std::vector<double> dstream(dhidden.size(), 0.0);
    ln_backward_into(dstream.data(), grads, c.final_ln, params, "mae.final_ln.",
                     dhidden.data(), n_patches, d);
    for (int l = cfg.n_mae_decoder_layers - 1; l >= 0; --l)
        self_block_backward(dstream, grads, c.blocks[static_cast<std::size_t>(l)], n_patches,
                            cfg, params, "mae." + std::to_string(l) + ".");
    add_inplace(d_enc_states.data(), dstream.data(), dstream.size());
}

void check_gradients_finite(const Parameters& grads) {
    for (const auto& t : grads.tensors)
        for (double v : t.data)
            if (!std::isfinite(v)) throw_numeric("numerical failure in gradient of " + t.name);
}

double role_weighted_total(const LossWeights& w, const LossBreakdown& b) {
    return w.mae * b.mae + w.ocr * b.ocr + w.mlm * b.mlm + w.qa * b.qa + w.bb * b.bb;
}

double& breakdown_field(LossBreakdown& b, LossRole role) {
    switch (role) {
        case LossRole::OCR: return b.ocr;
        case LossRole::MLM: return b.mlm;
        case LossRole::QA: return b.qa;
        case LossRole::BB: return b.bb;
        case LossRole::IGNORE: break;
    }
    throw_data("role carries no loss");
}

}  // namespace

namespace detail {

// Registers every tensor with its shape (zero-filled), in the fixed order
// shared by initialization, the optimizer, and the checkpoint layout.
Parameters parameter_shapes(const ModelConfig& cfg) {
    Parameters p;
    const int d = cfg.d_model;
    auto add_ln = [&](const std::string& prefix) {
        p.add(prefix + "gamma", {d});
        p.add(prefix + "beta", {d});
    };
    auto add_attn = [&](const std::string& prefix) {
        for (const char* w : {"wq", "wk", "wv", "wo"}) {
            p.add(prefix + w + std::string(".weight"), {d, d});
            p.add(prefix + w + std::string(".bias"), {d});
        }
    };
    auto add_mlp = [&](const std::string& prefix) {
        p.add(prefix + "fc1.weight", {cfg.d_ff, d});
        p.add(prefix + "fc1.bias", {cfg.d_ff});
        p.add(prefix + "fc2.weight", {d, cfg.d_ff});
        p.add(prefix + "fc2.bias", {d});
    };

    p.add("patch_proj.weight", {d, kPatchDim});
    p.add("patch_proj.bias", {d});
    p.add("mask_patch.embedding", {d});
    p.add("token_emb.weight", {cfg.vocab_size, d});
    for (int l = 0; l < cfg.n_encoder_layers; ++l) {
        const std::string prefix = "enc." + std::to_string(l) + ".";
        add_ln(prefix + "ln1.");
        add_attn(prefix + "attn.");
        add_ln(prefix + "ln2.");
        add_mlp(prefix + "mlp.");
    }
    add_ln("enc.final_ln.");
    for (int l = 0; l < cfg.n_decoder_layers; ++l) {
        const std::string prefix = "dec." + std::to_string(l) + ".";
        add_ln(prefix + "ln1.");
        add_attn(prefix + "self_attn.");
        add_ln(prefix + "ln2.");
        add_attn(prefix + "cross_attn.");
        add_ln(prefix + "ln3.");
        add_mlp(prefix + "mlp.");
    }
    add_ln("dec.final_ln.");
    p.add("lm_head.weight", {cfg.vocab_size, d});
    for (int l = 0; l < cfg.n_mae_decoder_layers; ++l) {
        const std::string prefix = "mae." + std::to_string(l) + ".";
        add_ln(prefix + "ln1.");
        add_attn(prefix + "attn.");
        add_ln(prefix + "ln2.");
        add_mlp(prefix + "mlp.");
    }
    add_ln("mae.final_ln.");
    p.add("pixel_head.weight", {kPatchDim, d});
    p.add("pixel_head.bias", {kPatchDim});
    return p;
}

void validate_params_structure(const ModelConfig& cfg, const Parameters& params) {
    const Parameters expected = parameter_shapes(cfg);
    if (params.tensors.size() != expected.tensors.size())
        throw_data("parameter structure mismatch: tensor count");
    for (std::size_t i = 0; i < expected.tensors.size(); ++i) {
        const auto& a = expected.tensors[i];
        const auto& b = params.tensors[i];
        if (a.name != b.name || a.shape != b.shape || a.data.size() != b.data.size())
            throw_data("parameter structure mismatch: " + a.name);
    }
}

}  // namespace detail

namespace {

PatchGrid grid_for_image(const ModelConfig& cfg, const PixelImage& image) {
    if (image.width % kPatchPx != 0 || image.height % kPatchPx != 0)
        throw_data("image size is not patch-aligned");
    PatchGrid grid{image.height / kPatchPx, image.width / kPatchPx};
    if (grid.n_patches() > cfg.max_patches) throw_data("patch sequence too long");
    return grid;
}

// Shared forward (and optional backward) pass over one batch.
LossBreakdown run_batch(const ModelConfig& cfg, const Parameters& params,
                        const std::vector<TrainingExample>& batch, const LossWeights& weights,
                        Parameters* grads) {
    cfg.validate();
    detail::validate_params_structure(cfg, params);
    if (batch.empty()) throw_data("empty batch");
    for (const auto& ex : batch) ex.validate();
    for (const auto& ex : batch)
        if (ex.image.width != batch.front().image.width ||
            ex.image.height != batch.front().image.height)
            throw_data("heterogeneous batch resolutions");

    const PatchGrid grid = grid_for_image(cfg, batch.front().image);
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    LossBreakdown breakdown;

    for (const auto& ex : batch) {
        const PatchSequence seq = patchify(ex.image, grid);
        EncoderFwd enc;
        const std::vector<int>* mask =
            ex.task_tag == TaskTag::MAE ? &ex.mae_mask : nullptr;
        encoder_forward(enc, cfg, params, seq, mask);

        std::vector<double> d_enc(enc.out.size(), 0.0);
        if (ex.task_tag == TaskTag::MAE) {
            MaeFwd mae;
            const double loss =
                mae_forward(mae, cfg, params, enc.out, enc.n_patches, ex.mae_mask, seq.patches);
            breakdown.mae += loss * inv_b;
            if (grads) {
                mae_backward(*grads, d_enc, mae, cfg, params, enc.n_patches, ex.mae_mask,
                             weights.mae * inv_b);
                encoder_backward(*grads, enc, cfg, params, d_enc);
            }
            continue;
        }

        // Generative path: teacher forcing over prefix + shifted target.
        std::vector<TokenId> tokens = ex.prefix_tokens;
        if (tokens.empty()) throw_data("prefix must be non-empty");
        tokens.insert(tokens.end(), ex.target_tokens.begin(), ex.target_tokens.end() - 1);
        DecoderFwd dec;
        decoder_forward(dec, cfg, params, enc.out, enc.n_patches, tokens);

        const int first_scored = static_cast<int>(ex.prefix_tokens.size()) - 1;
        const int n_targets = static_cast<int>(ex.target_tokens.size());
        const int v = cfg.vocab_size;

        std::map<LossRole, int> counts;
        for (const auto role : ex.roles)
            if (role != LossRole::IGNORE) ++counts[role];

        std::vector<double> dlogits;
        if (grads) dlogits.assign(dec.logits.size(), 0.0);
        std::map<LossRole, double> role_sums;
        for (int j = 0; j < n_targets; ++j) {
            const LossRole role = ex.roles[static_cast<std::size_t>(j)];
            if (role == LossRole::IGNORE) continue;
            const TokenId target = ex.target_tokens[static_cast<std::size_t>(j)];
            if (target < 0 || target >= v) throw_data("target token outside vocabulary");
            const double* row =
                dec.logits.data() + static_cast<std::size_t>(first_scored + j) * v;
            double max_logit = row[0];
            for (int i = 1; i < v; ++i) max_logit = std::max(max_logit, row[i]);
            double sum_exp = 0.0;
            for (int i = 0; i < v; ++i) sum_exp += std::exp(row[i] - max_logit);
            const double lse = max_logit + std::log(sum_exp);
            role_sums[role] += lse - row[target];

            if (grads) {
                const double coeff = weights.for_role(role) * inv_b /
                                     static_cast<double>(counts.at(role));
                double* drow =
                    dlogits.data() + static_cast<std::size_t>(first_scored + j) * v;
                for (int i = 0; i < v; ++i)
                    drow[i] = coeff * std::exp(row[i] - lse);
                drow[target] -= coeff;
            }
        }
        for (const auto& [role, sum] : role_sums)
            breakdown_field(breakdown, role) +=
                sum / static_cast<double>(counts.at(role)) * inv_b;

        if (grads) {
            decoder_backward(*grads, d_enc, dec, cfg, params, enc.out, dlogits);
            encoder_backward(*grads, enc, cfg, params, d_enc);
        }
    }

    breakdown.total = role_weighted_total(weights, breakdown);
    if (!std::isfinite(breakdown.total)) throw_numeric("numerical failure: total loss");
    if (grads) check_gradients_finite(*grads);
    return breakdown;
}

}  // namespace

void ModelConfig::validate() const {
    if (d_model < 1 || n_heads < 1 || n_encoder_layers < 1 || n_decoder_layers < 1 ||
        n_mae_decoder_layers < 1 || d_ff < 1 || vocab_size < 1 || max_patches < 1 ||
        max_text_len < 1)
        throw_data("model dimensions must be at least 1");
    if (d_model % n_heads != 0) throw_data("d_model must be divisible by n_heads");
    if (d_model % 2 != 0) throw_data("d_model must be even");
    if (patch_px != kPatchPx) throw_data("unsupported patch size");
    if (max_patches > 4096) throw_data("max_patches exceeds the 4096 ceiling");
    if (!(variance_floor > 0.0)) throw_data("variance floor must be positive");
}

void Hyperparameters::validate() const {
    if (!(learning_rate > 0.0)) throw_data("learning rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0))
        throw_data("betas must be inside (0, 1)");
    if (warmup_steps < 0) throw_data("warmup steps must be non-negative");
    if (batch_size < 1) throw_data("batch size must be at least 1");
    if (!(weight_decay >= 0.0)) throw_data("weight decay must be non-negative");
    if (!(adam_epsilon > 0.0)) throw_data("epsilon must be positive");
}

Tensor& Parameters::add(std::string name, std::vector<int> shape) {
    if (has(name)) throw_data("duplicate tensor name: " + name);
    std::size_t n = 1;
    for (int dim : shape) {
        if (dim < 1) throw_data("tensor dimensions must be at least 1");
        n *= static_cast<std::size_t>(dim);
    }
    tensors.push_back({std::move(name), std::move(shape), std::vector<double>(n, 0.0)});
    return tensors.back();
}

Tensor& Parameters::at(std::string_view name) {
    for (auto& t : tensors)
        if (t.name == name) return t;
    throw_data("unknown tensor: " + std::string(name));
}

const Tensor& Parameters::at(std::string_view name) const {
    for (const auto& t : tensors)
        if (t.name == name) return t;
    throw_data("unknown tensor: " + std::string(name));
}

bool Parameters::has(std::string_view name) const {
    for (const auto& t : tensors)
        if (t.name == name) return true;
    return false;
}

std::size_t Parameters::total_size() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
}

Parameters zeros_like(const Parameters& params) {
    Parameters out;
    for (const auto& t : params.tensors)
        out.tensors.push_back({t.name, t.shape, std::vector<double>(t.data.size(), 0.0)});
    return out;
}

Parameters init_params(const ModelConfig& config) {
    config.validate();
    Parameters params = detail::parameter_shapes(config);
    Rng rng(config.seed);
    for (auto& t : params.tensors) {
        if (ends_with(t.name, ".gamma")) {
            std::fill(t.data.begin(), t.data.end(), 1.0);
        } else if (ends_with(t.name, ".beta") || ends_with(t.name, ".bias")) {
            // already zero
        } else {
            for (double& v : t.data) v = rng.normal(0.0, kInitStd);
        }
    }
    return params;
}

double LossWeights::for_role(LossRole role) const {
    switch (role) {
        case LossRole::OCR: return ocr;
        case LossRole::MLM: return mlm;
        case LossRole::QA: return qa;
        case LossRole::BB: return bb;
        case LossRole::IGNORE: return 0.0;
    }
    throw_data("unknown loss role");
}

std::vector<double> encode_image(const ModelConfig& config, const Parameters& params,
                                 const PatchSequence& seq, const std::vector<int>* mae_mask) {
    config.validate();
    detail::validate_params_structure(config, params);
    EncoderFwd enc;
    encoder_forward(enc, config, params, seq, mae_mask);
    return enc.out;
}

std::vector<double> decode_text(const ModelConfig& config, const Parameters& params,
                                const std::vector<double>& encoder_states, int n_patches,
                                const std::vector<TokenId>& tokens) {
    config.validate();
    detail::validate_params_structure(config, params);
    DecoderFwd dec;
    decoder_forward(dec, config, params, encoder_states, n_patches, tokens);
    return dec.logits;
}

double mae_loss(const ModelConfig& config, const Parameters& params, const PatchSequence& seq,
                const std::vector<int>& mae_mask,
                const std::vector<std::vector<double>>& original_patches) {
    config.validate();
    detail::validate_params_structure(config, params);
    EncoderFwd enc;
    encoder_forward(enc, config, params, seq, &mae_mask);
    MaeFwd mae;
    return mae_forward(mae, config, params, enc.out, enc.n_patches, mae_mask, original_patches);
}

GenLossResult gen_loss(const std::vector<double>& logits, int vocab_size,
                       const std::vector<TokenId>& target_tokens,
                       const std::vector<LossRole>& roles, const LossWeights& weights) {
    if (vocab_size < 1) throw_data("vocabulary must be non-empty");
    if (roles.size() != target_tokens.size()) throw_data("roles/target length mismatch");
    if (logits.size() != target_tokens.size() * static_cast<std::size_t>(vocab_size))
        throw_data("logits/target length mismatch");

    std::map<LossRole, double> sums;
    std::map<LossRole, int> counts;
    for (std::size_t j = 0; j < target_tokens.size(); ++j) {
        const LossRole role = roles[j];
        if (role == LossRole::IGNORE) continue;
        const TokenId target = target_tokens[j];
        if (target < 0 || target >= vocab_size) throw_data("target token outside vocabulary");
        const double* row = logits.data() + j * static_cast<std::size_t>(vocab_size);
        double max_logit = row[0];
        for (int i = 1; i < vocab_size; ++i) max_logit = std::max(max_logit, row[i]);
        double sum_exp = 0.0;
        for (int i = 0; i < vocab_size; ++i) sum_exp += std::exp(row[i] - max_logit);
        sums[role] += max_logit + std::log(sum_exp) - row[target];
        ++counts[role];
    }

    GenLossResult result;
    for (const auto& [role, sum] : sums) {
        const double mean = sum / static_cast<double>(counts.at(role));
        result.per_role[role] = mean;
        result.total += weights.for_role(role) * mean;
    }
    return result;
}

ForwardBackwardResult forward_backward(const ModelConfig& config, const Parameters& params,
                                       const std::vector<TrainingExample>& batch,
                                       const LossWeights& weights) {
    ForwardBackwardResult result;
    result.grads = zeros_like(params);
    result.losses = run_batch(config, params, batch, weights, &result.grads);
    return result;
}

LossBreakdown batch_loss(const ModelConfig& config, const Parameters& params,
                         const std::vector<TrainingExample>& batch,
                         const LossWeights& weights) {
    return run_batch(config, params, batch, weights, nullptr);
}

AdamState AdamState::zeros_for(const Parameters& params) {
    AdamState state;
    for (const auto& t : params.tensors) {
        state.m.emplace_back(t.data.size(), 0.0);
        state.v.emplace_back(t.data.size(), 0.0);
    }
    return state;
}

void adamw_step(Parameters& params, const Parameters& grads, AdamState& state,
                const Hyperparameters& hyper, int step_index) {
    hyper.validate();
    if (step_index < 1) throw_data("step index starts at 1");
    if (grads.tensors.size() != params.tensors.size() ||
        state.m.size() != params.tensors.size() || state.v.size() != params.tensors.size())
        throw_data("optimizer state shape mismatch");

    const double lr =
        hyper.learning_rate *
        (hyper.warmup_steps > 0
             ? std::min(1.0, static_cast<double>(step_index) /
                                 static_cast<double>(hyper.warmup_steps))
             : 1.0);
    const double bc1 = 1.0 - std::pow(hyper.beta1, step_index);
    const double bc2 = 1.0 - std::pow(hyper.beta2, step_index);

    for (std::size_t ti = 0; ti < params.tensors.size(); ++ti) {
        auto& theta = params.tensors[ti];
        const auto& g = grads.tensors[ti];
        if (g.name != theta.name || g.data.size() != theta.data.size())
            throw_data("optimizer state shape mismatch");
        auto& m = state.m[ti];
        auto& v = state.v[ti];
        const double decay = is_decayed(theta.name) ? hyper.weight_decay : 0.0;
        for (std::size_t i = 0; i < theta.data.size(); ++i) {
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g.data[i];
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g.data[i] * g.data[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            theta.data[i] -=
                lr * (m_hat / (std::sqrt(v_hat) + hyper.adam_epsilon) + decay * theta.data[i]);
        }
    }
}

std::vector<TokenId> generate_greedy(const ModelConfig& config, const Parameters& params,
                                     const PixelImage& image,
                                     const std::vector<TokenId>& prefix_tokens, int max_len) {
    config.validate();
    detail::validate_params_structure(config, params);
    if (prefix_tokens.empty()) throw_data("prefix must be non-empty");
    if (max_len < 0) throw_data("max_len must be non-negative");

    const PatchGrid grid = grid_for_image(config, image);
    const PatchSequence seq = patchify(image, grid);
    EncoderFwd enc;
    encoder_forward(enc, config, params, seq, nullptr);

    std::vector<TokenId> tokens = prefix_tokens;
    std::vector<TokenId> emitted;
    while (static_cast<int>(emitted.size()) < max_len) {
        DecoderFwd dec;
        decoder_forward(dec, config, params, enc.out, enc.n_patches, tokens);
        const double* row = dec.logits.data() +
                            (tokens.size() - 1) * static_cast<std::size_t>(config.vocab_size);
        TokenId best = 0;
        for (int i = 1; i < config.vocab_size; ++i)
            if (row[i] > row[best]) best = i;  // strict: ties keep the lowest id
        emitted.push_back(best);
        tokens.push_back(best);
        if (best == tok::kEnd) break;
    }
    return emitted;
}

}  // namespace pixeldoc
