#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "biofuse/errors.hpp"
#include "biofuse/graph.hpp"
#include "biofuse/masking.hpp"
#include "biofuse/model.hpp"
#include "biofuse/train.hpp"
#include "helpers.hpp"

using namespace biofuse;
using namespace biofuse::models;
using autodiff::BoolMask;
using autodiff::Tensor;

namespace {

ModelConfig tiny_config(ModelFamily family, std::size_t window = 32) {
    ModelConfig cfg;
    cfg.family = family;
    cfg.modalities = {{"emg", 3, window}, {"acc", 2, window}};
    cfg.classes = 4;
    cfg.embed_dim = 16;
    cfg.heads = 2;
    cfg.layers = 2;
    cfg.ffn_dim = 24;
    cfg.mlp_hidden = 20;
    cfg.patch = 8;
    cfg.dropout = 0.0;
    cfg.anneal_horizon = 5;
    cfg.epochs = 10;
    cfg.stage2_layers = 2;
    return cfg;
}

TrialInput random_input(const ModelConfig& cfg, Rng& rng, std::size_t label = 1) {
    TrialInput in;
    in.label = label;
    in.subject = 1;
    for (const auto& m : cfg.modalities) {
        in.modality_data.push_back(testutil::random_values(m.channels * m.window, rng));
    }
    return in;
}

TokenSequence random_sequence(std::size_t tokens_per_modality, std::size_t dim, Rng& rng) {
    TokenSequence seq;
    seq.tokens = testutil::random_tensor({2 * tokens_per_modality + 1, dim}, rng, false);
    seq.tags.push_back(TokenTag::Cls);
    for (std::size_t i = 0; i < tokens_per_modality; ++i) seq.tags.push_back(TokenTag::ModalityA);
    for (std::size_t i = 0; i < tokens_per_modality; ++i) seq.tags.push_back(TokenTag::ModalityB);
    return seq;
}

EncoderLayerParams random_layer(std::size_t dim, std::size_t ffn, Rng& rng) {
    EncoderLayerParams p;
    p.wq = testutil::random_tensor({dim, dim}, rng);
    p.bq = testutil::random_tensor({dim}, rng);
    p.wk = testutil::random_tensor({dim, dim}, rng);
    p.bk = testutil::random_tensor({dim}, rng);
    p.wv = testutil::random_tensor({dim, dim}, rng);
    p.bv = testutil::random_tensor({dim}, rng);
    p.wo = testutil::random_tensor({dim, dim}, rng);
    p.bo = testutil::random_tensor({dim}, rng);
    p.ln1_gamma = Tensor::full({dim}, 1.0, true);
    p.ln1_beta = Tensor::zeros({dim}, true);
    p.ffn_w1 = testutil::random_tensor({dim, ffn}, rng);
    p.ffn_b1 = testutil::random_tensor({ffn}, rng);
    p.ffn_w2 = testutil::random_tensor({ffn, dim}, rng);
    p.ffn_b2 = testutil::random_tensor({dim}, rng);
    p.ln2_gamma = Tensor::full({dim}, 1.0, true);
    p.ln2_beta = Tensor::zeros({dim}, true);
    return p;
}

}  // namespace

TEST_CASE("encoder layer: all-false mask is bitwise identical to no mask") {
    Rng rng(3);
    const TokenSequence seq = random_sequence(3, 8, rng);
    const EncoderLayerParams params = random_layer(8, 12, rng);

    ForwardOptions plain;
    const TokenSequence a = encoder_layer_forward(seq, params, 2, 0.0, 1, true, plain);

    ForwardOptions masked;
    const std::size_t T = seq.length();
    masked.mask_fn = [T](std::size_t, const Tensor&) {
        return std::optional<BoolMask>(BoolMask::falses({2, T, T}));
    };
    const TokenSequence b = encoder_layer_forward(seq, params, 2, 0.0, 1, true, masked);

    CHECK(testutil::bitwise_equal(a.tokens.values(), b.tokens.values()));
    CHECK(a.tags == seq.tags);  // tags preserved
}

TEST_CASE("encoder layer: masked edges silence the perturbed token's contribution") {
    // mask every edge into token j from token k; then perturbing token k must
    // not change the attention-weighted context at token j
    Rng rng(5);
    const std::size_t dim = 8, T = 5, heads = 2;
    TokenSequence seq = random_sequence(2, dim, rng);
    const EncoderLayerParams params = random_layer(dim, 12, rng);
    const std::size_t j = 1, k = 3;

    BoolMask mask = BoolMask::falses({heads, T, T});
    for (std::size_t h = 0; h < heads; ++h) mask.set((h * T + j) * T + k, true);
    ForwardOptions opt;
    opt.mask_fn = [&mask](std::size_t, const Tensor&) { return std::optional<BoolMask>(mask); };

    AttentionTap tap_a;
    opt.tap = &tap_a;
    const TokenSequence out_a = encoder_layer_forward(seq, params, heads, 0.0, 1, true, opt);

    // perturb token k
    TokenSequence seq2 = seq;
    std::vector<double> vals = seq.tokens.values();
    for (std::size_t d = 0; d < dim; ++d) vals[k * dim + d] += rng.uniform(0.5, 1.5);
    seq2.tokens = Tensor::from({T, dim}, std::move(vals));

    AttentionTap tap_b;
    opt.tap = &tap_b;
    const TokenSequence out_b = encoder_layer_forward(seq2, params, heads, 0.0, 1, true, opt);

    // attention weights from query j onto key k are exactly zero both times
    for (const auto& w : {tap_a, tap_b}) {
        for (std::size_t h = 0; h < heads; ++h) {
            CHECK(w.weights[0][(h * T + j) * T + k] == 0.0);
        }
    }
    // row j's attention distribution over the remaining keys is unchanged
    // only through k's (masked) path; compare context indirectly: recompute
    // weighted sums excluding k must match between runs is already covered by
    // the exact zero above; here check weights elsewhere shifted for rows != j
    bool some_other_row_changed = false;
    for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t q = 0; q < T; ++q) {
            if (q == j) continue;
            for (std::size_t key = 0; key < T; ++key) {
                if (tap_a.weights[0][(h * T + q) * T + key] !=
                    tap_b.weights[0][(h * T + q) * T + key]) {
                    some_other_row_changed = true;
                }
            }
        }
    }
    CHECK(some_other_row_changed);  // the perturbation is visible where unmasked
}

TEST_CASE("encoder layer: attention rows sum to 1 with no mask") {
    Rng rng(7);
    const TokenSequence seq = random_sequence(1, 8, rng);  // CLS + 1 + 1 tokens
    const EncoderLayerParams params = random_layer(8, 12, rng);
    ForwardOptions opt;
    AttentionTap tap;
    opt.tap = &tap;
    encoder_layer_forward(seq, params, 2, 0.0, 1, true, opt);
    REQUIRE(tap.weights.size() == 1);
    const std::size_t T = seq.length();
    for (std::size_t h = 0; h < 2; ++h) {
        for (std::size_t q = 0; q < T; ++q) {
            double s = 0.0;
            for (std::size_t k = 0; k < T; ++k) s += tap.weights[0][(h * T + q) * T + k];
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("annealed loss boundaries and midpoint") {
    const Tensor cls = Tensor::scalar(2.0);
    const Tensor avg = Tensor::scalar(6.0);
    CHECK(train::annealed_loss(cls, avg, 0, 750).item() == 6.0);      // exactly L_avg
    CHECK(train::annealed_loss(cls, avg, 750, 750).item() == 2.0);    // exactly L_CLS
    CHECK(train::annealed_loss(cls, avg, 1000, 750).item() == 2.0);   // saturates
    CHECK(train::annealed_loss(cls, avg, 375, 750).item() == doctest::Approx(4.0));
    CHECK(train::lambda_at(375, 750) == 0.5);
}

TEST_CASE("IsoNet forward produces dual logits and is maskable") {
    Rng rng(11);
    const ModelConfig cfg = tiny_config(ModelFamily::IsoNet);
    Rng init(1);
    auto model = build_model(cfg, init);
    const TrialInput in = random_input(cfg, rng);
    const ModelOutput out = model->forward(in, {});
    CHECK(out.dual);
    CHECK(out.cls_logits.shape() == autodiff::Shape{4});
    CHECK(out.avg_logits.shape() == autodiff::Shape{4});

    const auto mi = model->maskable();
    REQUIRE(mi.has_value());
    CHECK(mi->tokens == 1 + 3 + 2);
    CHECK(mi->layers == 2);
    CHECK(mi->tags[0] == TokenTag::Cls);
}

TEST_CASE("IsoNet: cross mask on single-modality input is bitwise identical") {
    ModelConfig cfg = tiny_config(ModelFamily::IsoNet);
    cfg.modalities = {{"emg", 4, 32}};
    Rng init(2);
    auto model = build_model(cfg, init);
    Rng rng(13);
    TrialInput in;
    in.label = 0;
    in.subject = 1;
    in.modality_data.push_back(testutil::random_values(4 * 32, rng));

    const ModelOutput base = model->forward(in, {});

    const auto mi = model->maskable();
    const auto partition = masking::classify_edges(mi->tags);
    CHECK(partition.cross_modal.empty());
    ForwardOptions opt;
    opt.mask_fn = masking::mask_callback(masking::materialize_mask(
        {masking::MaskMode::RFB, masking::MaskType::CrossModal, mi->layers, mi->layers},
        partition, cfg.heads, mi->tokens, mi->layers));
    const ModelOutput masked = model->forward(in, opt);
    CHECK(testutil::bitwise_equal(base.cls_logits.values(), masked.cls_logits.values()));
    CHECK(testutil::bitwise_equal(base.avg_logits.values(), masked.avg_logits.values()));
}

TEST_CASE("IsoNet: swapping same-modality channels and their embeddings is a no-op") {
    const ModelConfig cfg = tiny_config(ModelFamily::IsoNet);
    Rng init(3);
    auto model = build_model(cfg, init);
    Rng rng(17);
    TrialInput in = random_input(cfg, rng);
    const ModelOutput base = model->forward(in, {});

    // swap emg channels 0 and 2 in the input AND their dedicated embeddings
    TrialInput swapped = in;
    const std::size_t W = cfg.modalities[0].window;
    for (std::size_t t = 0; t < W; ++t) {
        std::swap(swapped.modality_data[0][0 * W + t], swapped.modality_data[0][2 * W + t]);
    }
    for (const char* suffix : {".w", ".b"}) {
        Tensor a = model->parameter(std::string("emb.c0") + suffix);
        Tensor b = model->parameter(std::string("emb.c2") + suffix);
        std::swap(a.values(), b.values());
    }
    const ModelOutput perm = model->forward(swapped, {});
    CHECK(testutil::max_abs_diff(base.cls_logits.values(), perm.cls_logits.values()) < 1e-9);
    CHECK(testutil::max_abs_diff(base.avg_logits.values(), perm.avg_logits.values()) < 1e-9);
}

TEST_CASE("MMT: identical weights and inputs give identical stream outputs") {
    ModelConfig cfg = tiny_config(ModelFamily::MMT);
    cfg.modalities = {{"a", 2, 32}, {"b", 2, 32}};
    Rng init(4);
    auto model = build_model(cfg, init);

    // copy stream 0 weights onto stream 1
    for (const auto& p : model->parameters()) {
        if (p.name.rfind("m0.", 0) == 0) {
            Tensor other = model->parameter("m1." + p.name.substr(3));
            other.values() = p.tensor.values();
        }
    }
    Rng rng(19);
    TrialInput in;
    in.label = 0;
    in.subject = 1;
    in.modality_data.push_back(testutil::random_values(2 * 32, rng));
    in.modality_data.push_back(in.modality_data[0]);  // identical inputs

    // with identical streams the fused input halves are identical, so the
    // logits must be invariant to swapping the two modality streams
    const ModelOutput out1 = model->forward(in, {});
    std::swap(in.modality_data[0], in.modality_data[1]);
    const ModelOutput out2 = model->forward(in, {});
    CHECK(testutil::bitwise_equal(out1.cls_logits.values(), out2.cls_logits.values()));
}

TEST_CASE("MMT token count per stream is floor(window/patch) + CLS") {
    ModelConfig cfg = tiny_config(ModelFamily::MMT, 40);
    cfg.patch = 8;
    Rng init(5);
    auto model = build_model(cfg, init);
    CHECK(model->maskable() == std::nullopt);  // streams are unimodal
    // HierT over the same dims exposes the fused stage
    cfg.family = ModelFamily::HierT;
    Rng init2(5);
    auto hier = build_model(cfg, init2);
    const auto mi = hier->maskable();
    REQUIRE(mi.has_value());
    CHECK(mi->tokens == (40 / 8) + (40 / 8) + 1);
    CHECK(mi->layers == cfg.stage2_layers);
}

TEST_CASE("HierT with stage2 depth 0 degenerates to the MMT fusion path") {
    ModelConfig cfg = tiny_config(ModelFamily::HierT);
    cfg.stage2_layers = 0;
    Rng init(6);
    auto model = build_model(cfg, init);
    CHECK(model->maskable() == std::nullopt);
    Rng rng(23);
    const TrialInput in = random_input(cfg, rng);
    CHECK_NOTHROW(model->forward(in, {}));
    // fusion parameters exist, stage-2 parameters do not
    CHECK_NOTHROW(model->parameter("fuse.w"));
    CHECK_THROWS_AS(model->parameter("s2.cls"), UsageError);
}

TEST_CASE("MMMLP: zero inputs and zero biases tie all logits; argmax picks index 0") {
    ModelConfig cfg = tiny_config(ModelFamily::MMMLP);
    Rng init(7);
    auto model = build_model(cfg, init);
    TrialInput in;
    in.label = 0;
    in.subject = 1;
    for (const auto& m : cfg.modalities) {
        in.modality_data.push_back(std::vector<double>(m.channels * m.window, 0.0));
    }
    const ModelOutput out = model->forward(in, {});
    for (const double v : out.cls_logits.values()) {
        CHECK(v == doctest::Approx(out.cls_logits.values()[0]).epsilon(1e-12));
    }
    CHECK(autodiff::argmax_row(out.cls_logits) == 0);  // lowest-index tie break
}

TEST_CASE("MMMLP single-modality mode builds and runs") {
    ModelConfig cfg = tiny_config(ModelFamily::MMMLP);
    cfg.modalities = {{"emg", 3, 32}};
    Rng init(8);
    auto model = build_model(cfg, init);
    Rng rng(29);
    TrialInput in;
    in.label = 2;
    in.subject = 1;
    in.modality_data.push_back(testutil::random_values(3 * 32, rng));
    const ModelOutput out = model->forward(in, {});
    CHECK(out.cls_logits.numel() == 4);
    CHECK_FALSE(out.dual);
}

TEST_CASE("argmax invariance under common positive rescaling of logits") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor logits = testutil::random_tensor({6}, rng, false);
        const std::size_t base = autodiff::argmax_row(logits);
        const double c = rng.uniform(0.1, 10.0);
        const Tensor scaled = autodiff::scale(logits, c);
        CHECK(autodiff::argmax_row(scaled) == base);
    }
}

TEST_CASE("modality tags survive a full encoder stack") {
    Rng rng(37);
    TokenSequence seq = random_sequence(3, 8, rng);
    const std::vector<TokenTag> tags = seq.tags;
    const EncoderLayerParams p1 = random_layer(8, 12, rng);
    const EncoderLayerParams p2 = random_layer(8, 12, rng);
    seq = encoder_layer_forward(seq, p1, 2, 0.0, 1, false, {});
    CHECK(seq.tags == tags);
    seq = encoder_layer_forward(seq, p2, 2, 0.0, 2, false, {});
    CHECK(seq.tags == tags);
}

TEST_CASE("training: lr 0 leaves weights at init; determinism holds") {
    const ModelConfig cfg = tiny_config(ModelFamily::IsoNet);
    Rng rng(41);
    std::vector<TrialInput> train_set, test_set;
    for (int i = 0; i < 8; ++i) {
        train_set.push_back(random_input(cfg, rng, i % 4));
        test_set.push_back(random_input(cfg, rng, i % 4));
    }

    Rng init(9);
    auto model = build_model(cfg, init);
    std::vector<double> before;
    for (const auto& p : model->parameters()) {
        before.insert(before.end(), p.tensor.values().begin(), p.tensor.values().end());
    }
    train::TrainConfig tc;
    tc.epochs = 3;
    tc.lr = 0.0;
    tc.weight_decay = 0.3;
    tc.batch = 4;
    tc.anneal_horizon = 2;
    tc.seed = 5;
    train::train_model(*model, train_set, test_set, tc);
    std::vector<double> after;
    for (const auto& p : model->parameters()) {
        after.insert(after.end(), p.tensor.values().begin(), p.tensor.values().end());
    }
    CHECK(testutil::bitwise_equal(before, after));
}

TEST_CASE("training: identical seeds give bitwise-identical histories") {
    const ModelConfig cfg = tiny_config(ModelFamily::IsoNet);
    Rng rng(43);
    std::vector<TrialInput> train_set, test_set;
    for (int i = 0; i < 8; ++i) {
        train_set.push_back(random_input(cfg, rng, i % 4));
        test_set.push_back(random_input(cfg, rng, i % 4));
    }
    auto run = [&]() {
        Rng init(10);
        auto model = build_model(cfg, init);
        train::TrainConfig tc;
        tc.epochs = 4;
        tc.lr = 1e-3;
        tc.batch = 4;
        tc.anneal_horizon = 2;
        tc.seed = 6;
        return train::train_model(*model, train_set, test_set, tc);
    };
    const auto h1 = run();
    const auto h2 = run();
    REQUIRE(h1.size() == h2.size());
    for (std::size_t i = 0; i < h1.size(); ++i) {
        CHECK(std::memcmp(&h1[i], &h2[i], sizeof(train::EpochRecord)) == 0);
    }
}

TEST_CASE("training: avg head gradient is exactly zero from the anneal horizon on") {
    const ModelConfig cfg = tiny_config(ModelFamily::IsoNet);
    Rng rng(47);
    std::vector<TrialInput> train_set;
    for (int i = 0; i < 8; ++i) train_set.push_back(random_input(cfg, rng, i % 4));

    Rng init(11);
    auto model = build_model(cfg, init);
    train::TrainConfig tc;
    tc.epochs = 8;
    tc.lr = 1e-3;
    tc.batch = 4;
    tc.anneal_horizon = 3;
    tc.seed = 7;
    const auto history = train::train_model(*model, train_set, {}, tc);
    REQUIRE(history.size() == 8);
    for (const auto& rec : history) {
        if (rec.epoch >= tc.anneal_horizon) {
            CHECK(rec.lambda == 1.0);
            CHECK(rec.avg_head_grad_norm == 0.0);  // exact
        } else if (rec.epoch > 0) {
            CHECK(rec.avg_head_grad_norm > 0.0);
        }
    }
}

TEST_CASE("evaluate: empty test set is a usage error; grouping by subject works") {
    const ModelConfig cfg = tiny_config(ModelFamily::MMMLP);
    Rng init(12);
    auto model = build_model(cfg, init);
    CHECK_THROWS_AS(train::evaluate(*model, {}), UsageError);

    Rng rng(53);
    std::vector<TrialInput> test_set;
    for (int s = 1; s <= 3; ++s) {
        for (int i = 0; i < 4; ++i) {
            TrialInput in = random_input(cfg, rng, i % 4);
            in.subject = s;
            test_set.push_back(in);
        }
    }
    const auto res = train::evaluate(*model, test_set);
    CHECK(res.per_subject.size() == 3);
    CHECK(res.total == 12);
    for (const auto& s : res.per_subject) CHECK(s.n_trials == 4);
}

TEST_CASE("zero_modality_eval: unknown modality index is a usage error") {
    const ModelConfig cfg = tiny_config(ModelFamily::MMT);
    Rng init(13);
    auto model = build_model(cfg, init);
    Rng rng(59);
    const std::vector<TrialInput> test_set{random_input(cfg, rng)};
    CHECK_THROWS_AS(train::zero_modality_eval(*model, test_set, 2), UsageError);
    CHECK_NOTHROW(train::zero_modality_eval(*model, test_set, 0));
}

TEST_CASE("checkpoints round-trip through disk") {
    testutil::TempDir tmp("ckpt");
    const ModelConfig cfg = tiny_config(ModelFamily::IsoNet);
    Rng init(14);
    auto model = build_model(cfg, init);
    Rng rng(61);
    const TrialInput in = random_input(cfg, rng);
    const ModelOutput before = model->forward(in, {});

    const std::string path = tmp.sub("model.bin");
    save_checkpoint(*model, path);
    auto loaded = load_checkpoint(path);
    const ModelOutput after = loaded->forward(in, {});
    CHECK(testutil::bitwise_equal(before.cls_logits.values(), after.cls_logits.values()));
    CHECK(loaded->config().family == ModelFamily::IsoNet);
    CHECK(loaded->parameter_count() == model->parameter_count());
}

TEST_CASE("gradient of dual loss wrt avg head is exactly zero past the horizon") {
    const ModelConfig cfg = tiny_config(ModelFamily::IsoNet);
    Rng init(15);
    auto model = build_model(cfg, init);
    Rng rng(67);
    const TrialInput in = random_input(cfg, rng, 2);

    for (auto& p : model->parameter_tensors()) p.zero_grad();
    const ModelOutput out = model->forward(in, {});
    const Tensor cls_loss = autodiff::cross_entropy(out.cls_logits, in.label);
    const Tensor avg_loss = autodiff::cross_entropy(out.avg_logits, in.label);
    const Tensor loss = train::annealed_loss(cls_loss, avg_loss, 10, 5);  // t >= T
    loss.backward();
    for (const auto& name : model->avg_head_parameter_names()) {
        for (const double g : model->parameter(name).grad()) CHECK(g == 0.0);
    }
}
