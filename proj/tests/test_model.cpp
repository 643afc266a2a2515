#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <limits>

#include "doctest.h"
#include "pixeldoc/kernels.hpp"
#include "pixeldoc/model.hpp"
#include "pixeldoc/patchify.hpp"
#include "pixeldoc/rng.hpp"
#include "pixeldoc/targets.hpp"
#include "pixeldoc/tokenizer.hpp"

using namespace pixeldoc;

namespace {

// Small-but-complete model used throughout: every component present, tiny
// dimensions so finite differences stay fast.
ModelConfig small_config() {
    ModelConfig cfg;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.n_encoder_layers = 1;
    cfg.n_decoder_layers = 1;
    cfg.n_mae_decoder_layers = 1;
    cfg.d_ff = 24;
    cfg.vocab_size = 264;  // bytes plus the special tokens
    cfg.max_patches = 64;
    cfg.max_text_len = 64;
    cfg.seed = 3;
    return cfg;
}

PixelImage random_image(int width, int height, std::uint64_t seed) {
    PixelImage img(width, height);
    Rng rng(seed);
    for (auto& px : img.pixels) {
        px.r = static_cast<std::uint8_t>(rng.bounded(256));
        px.g = static_cast<std::uint8_t>(rng.bounded(256));
        px.b = static_cast<std::uint8_t>(rng.bounded(256));
    }
    return img;
}

std::vector<TokenId> with_end(const std::string& text) {
    auto ids = encode(text);
    ids.push_back(tok::kEnd);
    return ids;
}

TrainingExample mae_example(std::uint64_t seed) {
    TrainingExample ex;
    ex.task_tag = TaskTag::MAE;
    ex.image = random_image(28, 28, seed);
    ex.prefix_tokens = {tok::kMae};
    ex.mae_mask = {0, 3};
    return ex;
}

TrainingExample mdtg_example(std::uint64_t seed) {
    TrainingExample ex;
    ex.task_tag = TaskTag::MDTG;
    ex.image = random_image(28, 28, seed);
    ex.prefix_tokens = {tok::kMdtg};
    ex.target_tokens = with_end("ab");
    ex.roles = {LossRole::MLM, LossRole::OCR, LossRole::OCR};
    return ex;
}

TrainingExample bb_example(std::uint64_t seed) {
    TrainingExample ex;
    ex.task_tag = TaskTag::BB;
    ex.image = random_image(28, 28, seed);
    ex.prefix_tokens = encode("x");
    ex.prefix_tokens.insert(ex.prefix_tokens.begin(), tok::kBb);
    ex.target_tokens = with_end("1 2 3 4");
    ex.roles.assign(ex.target_tokens.size(), LossRole::BB);
    return ex;
}

TrainingExample qa_example(std::uint64_t seed) {
    TrainingExample ex;
    ex.task_tag = TaskTag::RQA;
    ex.image = random_image(28, 28, seed);
    ex.prefix_tokens = encode("q?");
    ex.prefix_tokens.insert(ex.prefix_tokens.begin(), tok::kQa);
    ex.target_tokens = with_end("7a");
    ex.roles.assign(ex.target_tokens.size(), LossRole::QA);
    return ex;
}

std::vector<TrainingExample> mixed_batch() {
    return {mae_example(11), mdtg_example(12), bb_example(13), qa_example(14)};
}

LossWeights uneven_weights() {
    LossWeights w;
    w.mae = 0.7;
    w.ocr = 1.3;
    w.mlm = 0.9;
    w.qa = 1.1;
    w.bb = 0.5;
    return w;
}

}  // namespace

TEST_CASE("parameter initialization is deterministic and well-formed") {
    const ModelConfig cfg = small_config();
    const Parameters a = init_params(cfg);
    const Parameters b = init_params(cfg);
    REQUIRE(a.tensors.size() == b.tensors.size());
    for (std::size_t i = 0; i < a.tensors.size(); ++i) {
        CHECK(a.tensors[i].name == b.tensors[i].name);
        CHECK(a.tensors[i].shape == b.tensors[i].shape);
        CHECK(a.tensors[i].data == b.tensors[i].data);
    }

    ModelConfig other = cfg;
    other.seed = 4;
    const Parameters c = init_params(other);
    CHECK(a.at("patch_proj.weight").data != c.at("patch_proj.weight").data);

    // Norm scales start at one, shifts and biases at zero, weights random.
    for (const auto& t : a.tensors) {
        const bool is_gamma = t.name.size() >= 6 && t.name.ends_with(".gamma");
        const bool is_zero_init = t.name.ends_with(".beta") || t.name.ends_with(".bias");
        if (is_gamma) {
            for (double v : t.data) CHECK(v == 1.0);
        } else if (is_zero_init) {
            for (double v : t.data) CHECK(v == 0.0);
        }
    }
    const auto& w = a.at("patch_proj.weight");
    REQUIRE(w.shape == std::vector<int>{16, kPatchDim});
    double mean = 0.0;
    for (double v : w.data) mean += v;
    mean /= static_cast<double>(w.data.size());
    double var = 0.0;
    for (double v : w.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(w.data.size());
    CHECK(std::abs(mean) < 0.002);
    CHECK(std::sqrt(var) == doctest::Approx(0.02).epsilon(0.15));
}

TEST_CASE("parameter table has the expected tensors") {
    ModelConfig cfg;  // defaults: 2 encoder, 2 decoder, 1 reconstruction layer
    const Parameters p = init_params(cfg);
    // 4 embedding tensors, 16 per self-attention block, 26 per decoder
    // block, three final norms, the two heads.
    CHECK(p.tensors.size() == 4 + 2 * 16 + 2 + 2 * 26 + 2 + 1 + 1 * 16 + 2 + 2);
    CHECK(p.at("token_emb.weight").shape == std::vector<int>{cfg.vocab_size, cfg.d_model});
    CHECK(p.at("lm_head.weight").shape == std::vector<int>{cfg.vocab_size, cfg.d_model});
    CHECK_FALSE(p.has("lm_head.bias"));
    CHECK(p.at("pixel_head.weight").shape == std::vector<int>{kPatchDim, cfg.d_model});
    CHECK(p.at("mask_patch.embedding").shape == std::vector<int>{cfg.d_model});
    CHECK(p.at("dec.1.cross_attn.wk.weight").shape ==
          std::vector<int>{cfg.d_model, cfg.d_model});
    CHECK(p.total_size() == zeros_like(p).total_size());

    Parameters z = zeros_like(p);
    for (const auto& t : z.tensors)
        for (double v : t.data) CHECK(v == 0.0);
}

TEST_CASE("training-scale model stays under one million parameters") {
    ModelConfig cfg;
    cfg.d_model = 64;
    cfg.n_heads = 4;
    cfg.d_ff = 128;
    const Parameters p = init_params(cfg);
    CHECK(p.total_size() <= 1000000u);
    // 37696 patch projection + 64 mask embedding + 2*82432 token/output
    // embeddings + 2*33472 encoder + 2*50240 decoder + 33472 reconstruction
    // + 3*128 final norms + 38220 pixel head.
    CHECK(p.total_size() == 442124u);
}

TEST_CASE("model config validation rejects broken settings") {
    ModelConfig cfg = small_config();
    cfg.d_model = 15;
    cfg.n_heads = 5;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("must be even"), Error);
    cfg = small_config();
    cfg.d_model = 18;
    cfg.n_heads = 4;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("divisible by n_heads"), Error);
    cfg = small_config();
    cfg.patch_px = 16;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("unsupported patch size"), Error);
    cfg = small_config();
    cfg.max_patches = 5000;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("4096"), Error);
    cfg = small_config();
    cfg.n_decoder_layers = 0;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("at least 1"), Error);
    cfg = small_config();
    cfg.variance_floor = 0.0;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("variance floor"), Error);
}

TEST_CASE("config JSON round trips and rejects malformed input") {
    ModelConfig cfg = small_config();
    cfg.variance_floor = 2.5e-7;
    cfg.seed = 0xdeadbeefcafe1234ull;
    const ModelConfig back = ModelConfig::from_json(cfg.to_json());
    CHECK(back == cfg);

    CHECK_THROWS_WITH_AS(ModelConfig::from_json("not json"),
                         doctest::Contains("invalid config JSON"), Error);
    CHECK_THROWS_WITH_AS(ModelConfig::from_json("[1,2]"),
                         doctest::Contains("invalid config JSON"), Error);
    CHECK_THROWS_WITH_AS(
        ModelConfig::from_json(R"({"d_model": 16})"),
        doctest::Contains("config missing field"), Error);

    // Full object with one bad value still goes through semantic validation.
    ModelConfig bad = small_config();
    bad.d_model = -2;
    std::string text = bad.to_json();
    CHECK_THROWS_WITH_AS(ModelConfig::from_json(text), doctest::Contains("at least 1"), Error);
}

TEST_CASE("encoder output is deterministic with the documented shape") {
    const ModelConfig cfg = small_config();
    const Parameters params = init_params(cfg);
    const PixelImage img = random_image(14, 56, 5);
    const PatchSequence seq = patchify(img, PatchGrid{4, 1});
    const auto out1 = encode_image(cfg, params, seq);
    const auto out2 = encode_image(cfg, params, seq);
    CHECK(out1.size() == 4u * 16u);
    CHECK(out1 == out2);

    // An empty mask vector behaves exactly like no mask.
    const std::vector<int> empty_mask;
    CHECK(encode_image(cfg, params, seq, &empty_mask) == out1);

    for (double v : out1) CHECK(std::isfinite(v));
}

TEST_CASE("masked patches are invisible to the encoder, visible ones are not") {
    const ModelConfig cfg = small_config();
    const Parameters params = init_params(cfg);
    const PixelImage img = random_image(28, 28, 6);
    const PatchSequence seq = patchify(img, PatchGrid{2, 2});
    const std::vector<int> mask = {1};

    PatchSequence scrambled = seq;
    for (double& v : scrambled.patches[1]) v = 1.0 - v;
    CHECK(encode_image(cfg, params, seq, &mask) ==
          encode_image(cfg, params, scrambled, &mask));

    PatchSequence visible_change = seq;
    visible_change.patches[2][40] += 0.25;
    CHECK(encode_image(cfg, params, seq, &mask) !=
          encode_image(cfg, params, visible_change, &mask));

    // Position information: swapping two visible patches changes the states.
    PatchSequence swapped = seq;
    std::swap(swapped.patches[0], swapped.patches[2]);
    CHECK(encode_image(cfg, params, seq) != encode_image(cfg, params, swapped));
}

TEST_CASE("encoder input validation") {
    const ModelConfig cfg = small_config();
    const Parameters params = init_params(cfg);
    const PixelImage img = random_image(28, 28, 7);
    PatchSequence seq = patchify(img, PatchGrid{2, 2});

    std::vector<int> bad_mask = {4};
    CHECK_THROWS_WITH_AS(encode_image(cfg, params, seq, &bad_mask),
                         doctest::Contains("out of range"), Error);
    bad_mask = {1, 1};
    CHECK_THROWS_WITH_AS(encode_image(cfg, params, seq, &bad_mask),
                         doctest::Contains("repeated"), Error);

    PatchSequence short_patch = seq;
    short_patch.patches[0].resize(500);
    CHECK_THROWS_WITH_AS(encode_image(cfg, params, short_patch),
                         doctest::Contains("patch dimension mismatch"), Error);

    ModelConfig tiny = cfg;
    tiny.max_patches = 3;
    const Parameters tiny_params = init_params(tiny);
    CHECK_THROWS_WITH_AS(encode_image(tiny, tiny_params, seq),
                         doctest::Contains("patch sequence too long"), Error);

    // Parameters built for a different architecture are rejected.
    ModelConfig wider = cfg;
    wider.d_model = 32;
    CHECK_THROWS_WITH_AS(encode_image(wider, params, seq),
                         doctest::Contains("parameter structure mismatch"), Error);
}

TEST_CASE("decoder is causal and attends to the encoder states") {
    const ModelConfig cfg = small_config();
    const Parameters params = init_params(cfg);
    const PixelImage img = random_image(28, 28, 8);
    const PatchSequence seq = patchify(img, PatchGrid{2, 2});
    const auto states = encode_image(cfg, params, seq);

    std::vector<TokenId> tokens = {tok::kQa, 'h', 'i', '?', 'y'};
    const auto logits = decode_text(cfg, params, states, 4, tokens);
    CHECK(logits.size() == tokens.size() * 264u);
    CHECK(logits == decode_text(cfg, params, states, 4, tokens));

    // Changing the last token must leave every earlier row bit-identical.
    std::vector<TokenId> tokens2 = tokens;
    tokens2.back() = 'z';
    const auto logits2 = decode_text(cfg, params, states, 4, tokens2);
    const std::size_t row = 264;
    for (std::size_t i = 0; i < 4 * row; ++i) CHECK(logits[i] == logits2[i]);
    bool last_differs = false;
    for (std::size_t i = 4 * row; i < 5 * row; ++i)
        if (logits[i] != logits2[i]) last_differs = true;
    CHECK(last_differs);

    // Cross-attention is live: zeroed encoder states give different logits.
    const std::vector<double> dead(states.size(), 0.0);
    CHECK(decode_text(cfg, params, dead, 4, tokens) != logits);
}

TEST_CASE("decoder input validation") {
    const ModelConfig cfg = small_config();
    const Parameters params = init_params(cfg);
    const std::vector<double> states(4 * 16, 0.1);

    CHECK_THROWS_WITH_AS(decode_text(cfg, params, states, 4, {}),
                         doctest::Contains("decoder input is empty"), Error);
    CHECK_THROWS_WITH_AS(decode_text(cfg, params, states, 5, {1}),
                         doctest::Contains("encoder state shape mismatch"), Error);
    CHECK_THROWS_WITH_AS(decode_text(cfg, params, states, 4, {264}),
                         doctest::Contains("token id outside vocabulary"), Error);
    CHECK_THROWS_WITH_AS(decode_text(cfg, params, states, 4, {-1}),
                         doctest::Contains("token id outside vocabulary"), Error);
    const std::vector<TokenId> long_text(65, 'a');
    CHECK_THROWS_WITH_AS(decode_text(cfg, params, states, 4, long_text),
                         doctest::Contains("text sequence too long"), Error);
}

TEST_CASE("reconstruction loss matches the closed form under zero parameters") {
    // With all parameters zero the network output is exactly zero, so the
    // loss must equal the mean of the squared normalized targets, i.e.
    // mean over masked patches of var / (var + floor).
    const ModelConfig cfg = small_config();
    const Parameters zero = zeros_like(init_params(cfg));
    const PixelImage img = random_image(28, 28, 9);
    const PatchSequence seq = patchify(img, PatchGrid{2, 2});
    const std::vector<int> mask = {0, 2};

    double expected = 0.0;
    for (int idx : mask) {
        const auto& p = seq.patches[static_cast<std::size_t>(idx)];
        double mean = 0.0;
        for (double v : p) mean += v;
        mean /= static_cast<double>(p.size());
        double var = 0.0;
        for (double v : p) var += (v - mean) * (v - mean);
        var /= static_cast<double>(p.size());
        expected += var / (var + cfg.variance_floor);
    }
    expected /= static_cast<double>(mask.size());

    const double loss = mae_loss(cfg, zero, seq, mask, seq.patches);
    CHECK(loss == doctest::Approx(expected).epsilon(1e-12));

    // Under random parameters the loss is finite, positive, deterministic.
    const Parameters params = init_params(cfg);
    const double l1 = mae_loss(cfg, params, seq, mask, seq.patches);
    CHECK(l1 > 0.0);
    CHECK(l1 == mae_loss(cfg, params, seq, mask, seq.patches));

    CHECK_THROWS_WITH_AS(mae_loss(cfg, params, seq, {}, seq.patches),
                         doctest::Contains("patch mask is empty"), Error);
    std::vector<std::vector<double>> short_patches(seq.patches.begin(),
                                                   seq.patches.end() - 1);
    CHECK_THROWS_WITH_AS(mae_loss(cfg, params, seq, mask, short_patches),
                         doctest::Contains("original patch count mismatch"), Error);
}

TEST_CASE("generative loss on uniform logits is exactly log vocabulary size") {
    const int v = 264;
    // One scored position: the mean is a single term, so equality is exact.
    const std::vector<double> one_row(static_cast<std::size_t>(v), 0.0);
    const GenLossResult single =
        gen_loss(one_row, v, {'a'}, {LossRole::QA}, {});
    REQUIRE(single.per_role.size() == 1u);
    CHECK(single.per_role.at(LossRole::QA) == std::log(264.0));
    CHECK(single.total == std::log(264.0));

    // Several positions agree up to the rounding of the mean.
    const std::vector<TokenId> targets = {'a', 'b', tok::kEnd};
    const std::vector<LossRole> roles = {LossRole::QA, LossRole::QA, LossRole::QA};
    const std::vector<double> logits(targets.size() * static_cast<std::size_t>(v), 0.0);
    const GenLossResult res = gen_loss(logits, v, targets, roles, {});
    CHECK(res.total == doctest::Approx(std::log(264.0)).epsilon(1e-15));
}

TEST_CASE("ignored positions contribute nothing to the generative loss") {
    const int v = 32;
    Rng rng(17);
    const std::vector<TokenId> targets = {3, 9, 1, 30};
    const std::vector<LossRole> roles = {LossRole::OCR, LossRole::IGNORE, LossRole::MLM,
                                         LossRole::IGNORE};
    std::vector<double> logits(targets.size() * static_cast<std::size_t>(v));
    for (double& x : logits) x = rng.normal(0.0, 2.0);

    const LossWeights weights = uneven_weights();
    const GenLossResult base = gen_loss(logits, v, targets, roles, weights);
    CHECK(base.per_role.count(LossRole::IGNORE) == 0u);
    CHECK(base.per_role.count(LossRole::OCR) == 1u);
    CHECK(base.per_role.count(LossRole::MLM) == 1u);
    CHECK(base.total == doctest::Approx(weights.ocr * base.per_role.at(LossRole::OCR) +
                                        weights.mlm * base.per_role.at(LossRole::MLM))
                            .epsilon(1e-15));

    // Rewriting logits under IGNORE positions leaves the result bit-identical.
    std::vector<double> tampered = logits;
    for (int i = 0; i < v; ++i) {
        tampered[1 * static_cast<std::size_t>(v) + i] = 99.0 - i;
        tampered[3 * static_cast<std::size_t>(v) + i] = -50.0 + i;
    }
    const GenLossResult same = gen_loss(tampered, v, targets, roles, weights);
    CHECK(same.total == base.total);
    CHECK(same.per_role == base.per_role);

    // All-IGNORE batches report an empty breakdown and zero loss.
    const GenLossResult none =
        gen_loss(logits, v, targets,
                 {LossRole::IGNORE, LossRole::IGNORE, LossRole::IGNORE, LossRole::IGNORE},
                 weights);
    CHECK(none.total == 0.0);
    CHECK(none.per_role.empty());
}

TEST_CASE("generative loss validates its inputs") {
    const std::vector<double> logits(2 * 8, 0.0);
    CHECK_THROWS_WITH_AS(gen_loss(logits, 8, {1, 2, 3}, {LossRole::QA, LossRole::QA}, {}),
                         doctest::Contains("roles/target length mismatch"), Error);
    CHECK_THROWS_WITH_AS(gen_loss(logits, 8, {1}, {LossRole::QA}, {}),
                         doctest::Contains("logits/target length mismatch"), Error);
    CHECK_THROWS_WITH_AS(gen_loss(logits, 8, {1, 8}, {LossRole::QA, LossRole::QA}, {}),
                         doctest::Contains("target token outside vocabulary"), Error);
    CHECK_THROWS_WITH_AS(gen_loss(logits, 0, {}, {}, {}),
                         doctest::Contains("vocabulary must be non-empty"), Error);
}

TEST_CASE("batch loss decomposes into the standalone operations") {
    const ModelConfig cfg = small_config();
    const Parameters params = init_params(cfg);
    const LossWeights weights = uneven_weights();
    const TrainingExample ex = mdtg_example(21);

    const LossBreakdown via_batch = batch_loss(cfg, params, {ex}, weights);

    const PatchSequence seq = patchify(ex.image, PatchGrid{2, 2});
    const auto states = encode_image(cfg, params, seq);
    std::vector<TokenId> tokens = ex.prefix_tokens;
    tokens.insert(tokens.end(), ex.target_tokens.begin(), ex.target_tokens.end() - 1);
    const auto logits = decode_text(cfg, params, states, 4, tokens);

    const std::size_t first = ex.prefix_tokens.size() - 1;
    const std::size_t v = static_cast<std::size_t>(cfg.vocab_size);
    const std::vector<double> scored(logits.begin() + static_cast<std::ptrdiff_t>(first * v),
                                     logits.begin() +
                                         static_cast<std::ptrdiff_t>(
                                             (first + ex.target_tokens.size()) * v));
    const GenLossResult gen =
        gen_loss(scored, cfg.vocab_size, ex.target_tokens, ex.roles, weights);

    CHECK(via_batch.total == doctest::Approx(gen.total).epsilon(1e-12));
    CHECK(via_batch.mlm == doctest::Approx(gen.per_role.at(LossRole::MLM)).epsilon(1e-12));
    CHECK(via_batch.ocr == doctest::Approx(gen.per_role.at(LossRole::OCR)).epsilon(1e-12));
    CHECK(via_batch.mae == 0.0);
    CHECK(via_batch.qa == 0.0);
    CHECK(via_batch.bb == 0.0);

    // The training entry point reports the identical forward losses.
    const ForwardBackwardResult fb = forward_backward(cfg, params, {ex}, weights);
    CHECK(fb.losses.total == via_batch.total);
    CHECK(fb.losses.mlm == via_batch.mlm);
    CHECK(fb.losses.ocr == via_batch.ocr);
}

TEST_CASE("batch loss averages examples and rejects malformed batches") {
    const ModelConfig cfg = small_config();
    const Parameters params = init_params(cfg);

    const TrainingExample a = qa_example(31);
    const TrainingExample b = bb_example(32);
    const LossBreakdown la = batch_loss(cfg, params, {a}, {});
    const LossBreakdown lb = batch_loss(cfg, params, {b}, {});
    const LossBreakdown lab = batch_loss(cfg, params, {a, b}, {});
    CHECK(lab.total == doctest::Approx(0.5 * (la.total + lb.total)).epsilon(1e-12));
    CHECK(lab.qa == doctest::Approx(0.5 * la.qa).epsilon(1e-12));
    CHECK(lab.bb == doctest::Approx(0.5 * lb.bb).epsilon(1e-12));

    CHECK_THROWS_WITH_AS(batch_loss(cfg, params, {}, {}),
                         doctest::Contains("empty batch"), Error);

    TrainingExample odd = qa_example(33);
    odd.image = random_image(42, 28, 33);
    CHECK_THROWS_WITH_AS(batch_loss(cfg, params, {a, odd}, {}),
                         doctest::Contains("heterogeneous batch resolutions"), Error);

    TrainingExample ragged = qa_example(34);
    ragged.image = random_image(30, 30, 34);
    CHECK_THROWS_WITH_AS(batch_loss(cfg, params, {ragged}, {}),
                         doctest::Contains("not patch-aligned"), Error);

    TrainingExample no_prefix = qa_example(35);
    no_prefix.prefix_tokens.clear();
    CHECK_THROWS_WITH_AS(batch_loss(cfg, params, {no_prefix}, {}),
                         doctest::Contains("prefix must be non-empty"), Error);
}

TEST_CASE("analytic gradients match central finite differences on every tensor") {
    ModelConfig cfg = small_config();
    const Parameters params = init_params(cfg);
    const std::vector<TrainingExample> batch = mixed_batch();
    const LossWeights weights = uneven_weights();

    const ForwardBackwardResult fb = forward_backward(cfg, params, batch, weights);
    REQUIRE(fb.grads.tensors.size() == params.tensors.size());

    const double step = 1e-4;
    Rng rng(2024);
    std::size_t checked = 0;
    for (std::size_t ti = 0; ti < params.tensors.size(); ++ti) {
        const Tensor& t = params.tensors[ti];
        std::set<std::size_t> picks = {0, t.data.size() - 1, t.data.size() / 2};
        while (picks.size() < std::min<std::size_t>(8, t.data.size()))
            picks.insert(static_cast<std::size_t>(rng.bounded(t.data.size())));
        if (t.name == "token_emb.weight") {
            // Rows of tokens the batch actually uses.
            const int d = cfg.d_model;
            picks.insert(static_cast<std::size_t>(tok::kMdtg) * d + 1);
            picks.insert(static_cast<std::size_t>(tok::kQa) * d + 3);
            picks.insert(static_cast<std::size_t>('a') * d + 2);
            picks.insert(static_cast<std::size_t>('1') * d);
        }
        for (std::size_t idx : picks) {
            Parameters shifted = params;
            shifted.tensors[ti].data[idx] = t.data[idx] + step;
            const double up = batch_loss(cfg, shifted, batch, weights).total;
            shifted.tensors[ti].data[idx] = t.data[idx] - step;
            const double down = batch_loss(cfg, shifted, batch, weights).total;
            const double numeric = (up - down) / (2.0 * step);
            const double analytic = fb.grads.tensors[ti].data[idx];
            // Relative error with a floored denominator: gradients smaller
            // than 1e-4 sit below the noise floor of central differences on
            // a loss of this scale, so they get an absolute 1e-8 tolerance.
            const double denom =
                std::max({1e-4, std::abs(numeric), std::abs(analytic)});
            const double rel = std::abs(numeric - analytic) / denom;
            INFO("tensor ", t.name, " index ", idx, " analytic ", analytic, " numeric ",
                 numeric);
            CHECK(rel < 1e-4);
            ++checked;
        }
    }
    CHECK(checked > 500u);
}

TEST_CASE("duplicating an example leaves batch-mean gradients unchanged") {
    const ModelConfig cfg = small_config();
    const Parameters params = init_params(cfg);
    const LossWeights weights = uneven_weights();

    for (const TrainingExample& ex : {mae_example(41), qa_example(42)}) {
        const ForwardBackwardResult once = forward_backward(cfg, params, {ex}, weights);
        const ForwardBackwardResult twice = forward_backward(cfg, params, {ex, ex}, weights);
        // Batch means: halving both contributions is exact, so losses match
        // bitwise. Gradients accumulate in place across the two passes, so
        // their rounding chains differ and only near-exact equality holds.
        CHECK(once.losses.total == twice.losses.total);
        CHECK(once.losses.mae == twice.losses.mae);
        CHECK(once.losses.qa == twice.losses.qa);
        for (std::size_t i = 0; i < once.grads.tensors.size(); ++i) {
            const auto& ga = once.grads.tensors[i].data;
            const auto& gb = twice.grads.tensors[i].data;
            REQUIRE(ga.size() == gb.size());
            double worst = 0.0;
            for (std::size_t j = 0; j < ga.size(); ++j)
                worst = std::max(worst,
                                 std::abs(ga[j] - gb[j]) / std::max(1.0, std::abs(ga[j])));
            INFO("tensor ", once.grads.tensors[i].name);
            CHECK(worst <= 1e-12);
        }
    }
}

TEST_CASE("zero loss weights silence gradients but keep per-role reporting") {
    const ModelConfig cfg = small_config();
    const Parameters params = init_params(cfg);
    LossWeights weights;
    weights.mae = weights.ocr = weights.mlm = weights.qa = weights.bb = 0.0;

    const std::vector<TrainingExample> batch = mixed_batch();
    const ForwardBackwardResult fb = forward_backward(cfg, params, batch, weights);
    CHECK(fb.losses.total == 0.0);
    CHECK(fb.losses.qa > 0.0);
    CHECK(fb.losses.mae > 0.0);
    CHECK(fb.losses.ocr > 0.0);
    for (const auto& g : fb.grads.tensors)
        for (double v : g.data) CHECK(v == 0.0);
}

TEST_CASE("optimizer step matches the closed form on a single scalar") {
    Parameters p;
    p.add("toy.weight", {1}).data[0] = 0.5;
    Parameters g = zeros_like(p);
    g.at("toy.weight").data[0] = 0.2;
    AdamState state = AdamState::zeros_for(p);

    Hyperparameters hyper;
    hyper.learning_rate = 1e-3;
    hyper.warmup_steps = 0;
    hyper.weight_decay = 0.01;
    adamw_step(p, g, state, hyper, 1);

    const double m_hat = 0.2;            // first moment, bias corrected
    const double v_hat = 0.2 * 0.2;      // second moment, bias corrected
    const double expected =
        0.5 - 1e-3 * (m_hat / (std::sqrt(v_hat) + hyper.adam_epsilon) + 0.01 * 0.5);
    CHECK(p.at("toy.weight").data[0] == doctest::Approx(expected).epsilon(1e-15));
    CHECK(state.m[0][0] == doctest::Approx(0.1 * 0.2).epsilon(1e-15));
    CHECK(state.v[0][0] == doctest::Approx(0.001 * 0.04).epsilon(1e-15));
}

TEST_CASE("warmup scales the learning rate and decay skips norms and biases") {
    Parameters p;
    p.add("block.weight", {1}).data[0] = 1.0;
    p.add("block.gamma", {1}).data[0] = 1.0;
    p.add("block.beta", {1}).data[0] = 1.0;
    p.add("block.bias", {1}).data[0] = 1.0;
    p.add("mask_patch.embedding", {1}).data[0] = 1.0;
    const Parameters g = zeros_like(p);  // zero gradients isolate the decay term
    AdamState state = AdamState::zeros_for(p);

    Hyperparameters hyper;
    hyper.learning_rate = 0.1;
    hyper.warmup_steps = 10;  // step 1 of 10 -> effective rate 0.01
    hyper.weight_decay = 0.5;
    adamw_step(p, g, state, hyper, 1);

    CHECK(p.at("block.weight").data[0] == doctest::Approx(1.0 - 0.01 * 0.5).epsilon(1e-15));
    CHECK(p.at("mask_patch.embedding").data[0] ==
          doctest::Approx(1.0 - 0.01 * 0.5).epsilon(1e-15));
    CHECK(p.at("block.gamma").data[0] == 1.0);
    CHECK(p.at("block.beta").data[0] == 1.0);
    CHECK(p.at("block.bias").data[0] == 1.0);
}

TEST_CASE("optimizer with zero gradients and zero decay is the identity") {
    const ModelConfig cfg = small_config();
    Parameters p = init_params(cfg);
    const Parameters before = p;
    const Parameters g = zeros_like(p);
    AdamState state = AdamState::zeros_for(p);
    Hyperparameters hyper;
    hyper.weight_decay = 0.0;
    adamw_step(p, g, state, hyper, 1);
    for (std::size_t i = 0; i < p.tensors.size(); ++i)
        CHECK(p.tensors[i].data == before.tensors[i].data);
}

TEST_CASE("optimizer validates its inputs") {
    Parameters p;
    p.add("toy.weight", {2});
    Parameters g = zeros_like(p);
    AdamState state = AdamState::zeros_for(p);
    Hyperparameters hyper;

    CHECK_THROWS_WITH_AS(adamw_step(p, g, state, hyper, 0),
                         doctest::Contains("step index starts at 1"), Error);
    hyper.learning_rate = -1.0;
    CHECK_THROWS_WITH_AS(adamw_step(p, g, state, hyper, 1),
                         doctest::Contains("learning rate"), Error);
    hyper = Hyperparameters{};
    Parameters wrong;
    wrong.add("other.weight", {2});
    CHECK_THROWS_WITH_AS(adamw_step(p, wrong, state, hyper, 1),
                         doctest::Contains("optimizer state shape mismatch"), Error);
}

TEST_CASE("aggregate optimization drives the loss down on one batch") {
    const ModelConfig cfg = small_config();
    Parameters params = init_params(cfg);
    const std::vector<TrainingExample> batch = {qa_example(51), mdtg_example(52)};
    Hyperparameters hyper;
    hyper.learning_rate = 3e-3;
    hyper.warmup_steps = 0;
    AdamState state = AdamState::zeros_for(params);

    const double initial = batch_loss(cfg, params, batch, {}).total;
    for (int step = 1; step <= 30; ++step) {
        const ForwardBackwardResult fb = forward_backward(cfg, params, batch, {});
        adamw_step(params, fb.grads, state, hyper, step);
    }
    const double final_loss = batch_loss(cfg, params, batch, {}).total;
    CHECK(final_loss < 0.5 * initial);
}

TEST_CASE("greedy generation is deterministic and bounded") {
    const ModelConfig cfg = small_config();
    const Parameters params = init_params(cfg);
    const PixelImage img = random_image(28, 28, 61);

    const std::vector<TokenId> prefix = {tok::kQa, 'q'};
    const auto out1 = generate_greedy(cfg, params, img, prefix, 5);
    const auto out2 = generate_greedy(cfg, params, img, prefix, 5);
    CHECK(out1 == out2);
    CHECK(out1.size() <= 5u);
    REQUIRE(!out1.empty());
    for (std::size_t i = 0; i < out1.size(); ++i) {
        CHECK(out1[i] >= 0);
        CHECK(out1[i] < cfg.vocab_size);
        if (out1[i] == tok::kEnd) CHECK(i + 1 == out1.size());
    }

    CHECK(generate_greedy(cfg, params, img, prefix, 0).empty());
    CHECK_THROWS_WITH_AS(generate_greedy(cfg, params, img, {}, 5),
                         doctest::Contains("prefix must be non-empty"), Error);
    const PixelImage ragged = random_image(30, 28, 62);
    CHECK_THROWS_WITH_AS(generate_greedy(cfg, params, ragged, prefix, 5),
                         doctest::Contains("not patch-aligned"), Error);
}

TEST_CASE("greedy generation breaks argmax ties toward the lowest token id") {
    // Zero parameters give identical logits for every token, so the argmax
    // must settle on token id 0 at every step.
    const ModelConfig cfg = small_config();
    const Parameters zero = zeros_like(init_params(cfg));
    const PixelImage img = random_image(28, 28, 63);
    const auto out = generate_greedy(cfg, zero, img, {tok::kQa}, 3);
    CHECK(out == std::vector<TokenId>{0, 0, 0});
}

TEST_CASE("checkpoints round trip bit-exactly") {
    const ModelConfig cfg = small_config();
    const Parameters params = init_params(cfg);
    const auto path =
        (std::filesystem::temp_directory_path() / "pixeldoc_ckpt_roundtrip.bin").string();
    save_checkpoint(path, cfg, params);

    const Checkpoint back = load_checkpoint(path);
    CHECK(back.config == cfg);
    REQUIRE(back.params.tensors.size() == params.tensors.size());
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        CHECK(back.params.tensors[i].name == params.tensors[i].name);
        CHECK(back.params.tensors[i].shape == params.tensors[i].shape);
        CHECK(back.params.tensors[i].data == params.tensors[i].data);
    }

    // A loaded model behaves identically.
    const PixelImage img = random_image(28, 28, 71);
    const PatchSequence seq = patchify(img, PatchGrid{2, 2});
    CHECK(encode_image(cfg, params, seq) == encode_image(back.config, back.params, seq));
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint loading rejects corrupted files") {
    const ModelConfig cfg = small_config();
    const Parameters params = init_params(cfg);
    const auto dir = std::filesystem::temp_directory_path();
    const auto good = (dir / "pixeldoc_ckpt_good.bin").string();
    save_checkpoint(good, cfg, params);

    std::ifstream in(good, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    REQUIRE(bytes.size() > 100u);

    auto write_variant = [&](const std::string& name, const std::string& content) {
        const auto p = (dir / name).string();
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        return p;
    };

    CHECK_THROWS_WITH_AS(load_checkpoint((dir / "pixeldoc_ckpt_missing.bin").string()),
                         doctest::Contains("cannot open checkpoint"), Error);

    const auto junk = write_variant("pixeldoc_ckpt_junk.bin", "JUNKJUNKJUNK");
    CHECK_THROWS_WITH_AS(load_checkpoint(junk), doctest::Contains("not a checkpoint file"),
                         Error);

    std::string wrong_version = bytes;
    wrong_version[4] = 2;
    const auto versioned = write_variant("pixeldoc_ckpt_version.bin", wrong_version);
    CHECK_THROWS_WITH_AS(load_checkpoint(versioned),
                         doctest::Contains("unsupported checkpoint version"), Error);

    const auto truncated =
        write_variant("pixeldoc_ckpt_short.bin", bytes.substr(0, bytes.size() - 10));
    CHECK_THROWS_WITH_AS(load_checkpoint(truncated), doctest::Contains("truncated checkpoint"),
                         Error);

    std::string trailing = bytes + "extra";
    const auto padded = write_variant("pixeldoc_ckpt_trailing.bin", trailing);
    CHECK_THROWS_WITH_AS(load_checkpoint(padded), doctest::Contains("trailing bytes"), Error);

    // Flip the first character of the first tensor name: the structure
    // check must notice the renamed tensor.
    std::string renamed = bytes;
    std::size_t cfg_len = 0;
    for (int i = 0; i < 4; ++i)
        cfg_len |= static_cast<std::size_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
    const std::size_t first_name = 12 + cfg_len + 4 + 4;
    renamed[first_name] = 'q';
    const auto tampered = write_variant("pixeldoc_ckpt_renamed.bin", renamed);
    CHECK_THROWS_WITH_AS(load_checkpoint(tampered),
                         doctest::Contains("parameter structure mismatch"), Error);

    for (const auto& p : {good, junk, versioned, truncated, padded, tampered})
        std::filesystem::remove(p);
}

TEST_CASE("attention-style masked softmax rows are proper distributions") {
    // The attention code masks future positions with -infinity before the
    // row softmax; masked entries must come out exactly zero and the rest
    // must sum to one.
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        const int cols = 2 + static_cast<int>(rng.bounded(14));
        const int rows = 1 + static_cast<int>(rng.bounded(6));
        std::vector<double> m(static_cast<std::size_t>(rows) * cols);
        for (double& x : m) x = rng.normal(0.0, 3.0);
        // Causal-style mask: row t keeps columns 0..t.
        for (int t = 0; t < rows; ++t)
            for (int s = t + 1; s < cols; ++s)
                m[static_cast<std::size_t>(t) * cols + s] =
                    -std::numeric_limits<double>::infinity();
        kernels::softmax_rows(m.data(), rows, cols);
        for (int t = 0; t < rows; ++t) {
            double sum = 0.0;
            for (int s = 0; s < cols; ++s) {
                const double p = m[static_cast<std::size_t>(t) * cols + s];
                CHECK(p >= 0.0);
                if (s > t) CHECK(p == 0.0);
                sum += p;
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}
