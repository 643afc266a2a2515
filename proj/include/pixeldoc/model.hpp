#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "pixeldoc/patchify.hpp"
#include "pixeldoc/targets.hpp"
#include "pixeldoc/tokenizer.hpp"

namespace pixeldoc {

// Flattened pixel count of one patch: 14 x 14 x RGB.
inline constexpr int kPatchDim = kPatchPx * kPatchPx * 3;

struct ModelConfig {
    int d_model = 32;
    int n_heads = 4;
    int n_encoder_layers = 2;
    int n_decoder_layers = 2;
    int n_mae_decoder_layers = 1;
    int d_ff = 64;
    int patch_px = kPatchPx;  // the build supports exactly 14
    int vocab_size = tok::kVocabSize;
    int max_patches = 4096;
    int max_text_len = 512;
    double variance_floor = 1e-6;
    std::uint64_t seed = 0;

    void validate() const;  // throws a data error on any broken invariant
    std::string to_json() const;
    static ModelConfig from_json(std::string_view text);
    bool operator==(const ModelConfig&) const = default;
};

struct Hyperparameters {
    double learning_rate = 1e-4;
    int warmup_steps = 10000;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    int batch_size = 8;
    double adam_epsilon = 1e-8;

    void validate() const;
};

struct Tensor {
    std::string name;
    std::vector<int> shape;
    std::vector<double> data;  // row-major

    std::size_t size() const { return data.size(); }
};

// Named parameter tensors in a fixed creation order (the order also fixes
// the initialization draw sequence and the checkpoint layout).
struct Parameters {
    std::vector<Tensor> tensors;

    Tensor& add(std::string name, std::vector<int> shape);
    Tensor& at(std::string_view name);
    const Tensor& at(std::string_view name) const;
    bool has(std::string_view name) const;
    std::size_t total_size() const;
};

// Same names and shapes, all values zero.
Parameters zeros_like(const Parameters& params);

// Seeded-deterministic init: weights ~ normal(0, 0.02), norm scales 1,
// biases and norm shifts 0.
Parameters init_params(const ModelConfig& config);

// Per-role loss weights used to combine the cross-entropy heads.
struct LossWeights {
    double mae = 1.0;
    double ocr = 1.0;
    double mlm = 1.0;
    double qa = 1.0;
    double bb = 1.0;

    double for_role(LossRole role) const;
};

// Batch-mean loss per head plus their weighted total.
struct LossBreakdown {
    double total = 0.0;
    double mae = 0.0;
    double ocr = 0.0;
    double mlm = 0.0;
    double qa = 0.0;
    double bb = 0.0;
};

// --- Standalone forward operations (used by tests and evaluation) ---

// Patch projection (masked positions use the learned mask embedding instead
// of their pixels) + sinusoidal positions + pre-norm encoder stack.
// Returns the encoder states, n_patches x d_model row-major.
std::vector<double> encode_image(const ModelConfig& config, const Parameters& params,
                                 const PatchSequence& seq,
                                 const std::vector<int>* mae_mask = nullptr);

// Causal decoder with cross-attention over the encoder states. `tokens` is
// the full decoder input (prompt plus shifted targets); returns next-token
// logits for every position, tokens.size() x vocab_size row-major.
std::vector<double> decode_text(const ModelConfig& config, const Parameters& params,
                                const std::vector<double>& encoder_states, int n_patches,
                                const std::vector<TokenId>& tokens);

// Normalized-MSE reconstruction loss over the masked patches only. The
// reconstruction target of patch p is (p - mean(p)) / sqrt(var(p) + floor)
// with per-patch statistics over all 588 values; `original_patches` supplies
// the clean pixels (the sequence's own patches under no masking).
double mae_loss(const ModelConfig& config, const Parameters& params, const PatchSequence& seq,
                const std::vector<int>& mae_mask,
                const std::vector<std::vector<double>>& original_patches);

// Token-level cross-entropy per loss role. IGNORE positions are excluded;
// per-role means are reported and total = sum of weight(role) * mean(role).
struct GenLossResult {
    double total = 0.0;
    std::map<LossRole, double> per_role;  // roles present in the batch only
};
GenLossResult gen_loss(const std::vector<double>& logits, int vocab_size,
                       const std::vector<TokenId>& target_tokens,
                       const std::vector<LossRole>& roles, const LossWeights& weights = {});

// --- Training ---

struct ForwardBackwardResult {
    LossBreakdown losses;
    Parameters grads;  // same names/shapes as the parameters
};

// Analytic gradients of the batch-mean total loss. All examples must share
// one image resolution, aligned to whole patches.
ForwardBackwardResult forward_backward(const ModelConfig& config, const Parameters& params,
                                       const std::vector<TrainingExample>& batch,
                                       const LossWeights& weights = {});

// Forward-only evaluation of the same batch-mean total loss.
LossBreakdown batch_loss(const ModelConfig& config, const Parameters& params,
                         const std::vector<TrainingExample>& batch,
                         const LossWeights& weights = {});

// First and second Adam moment accumulators, aligned with Parameters order.
struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    static AdamState zeros_for(const Parameters& params);
};

// One AdamW update (decoupled decay on weight matrices and embeddings, none
// on biases or norm parameters) with linear warmup and bias-corrected
// moments. step_index starts at 1.
void adamw_step(Parameters& params, const Parameters& grads, AdamState& state,
                const Hyperparameters& hyper, int step_index);

// Greedy argmax decoding (ties break toward the lowest token id) until the
// end token appears or max_len tokens have been emitted. The image must be
// aligned to whole patches. Returns only the generated suffix.
std::vector<TokenId> generate_greedy(const ModelConfig& config, const Parameters& params,
                                     const PixelImage& image,
                                     const std::vector<TokenId>& prefix_tokens, int max_len);

// --- Checkpoints ---

// Versioned binary: magic "PDFG", format version, config JSON, then every
// named tensor with its shape and little-endian 64-bit values. Round trips
// bit-exactly.
void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const Parameters& params);

struct Checkpoint {
    ModelConfig config;
    Parameters params;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace pixeldoc
