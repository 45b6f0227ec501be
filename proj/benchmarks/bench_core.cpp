#include <benchmark/benchmark.h>

#include "biofuse/dsp.hpp"
#include "biofuse/model.hpp"
#include "biofuse/rng.hpp"
#include "biofuse/stats.hpp"
#include "biofuse/tensor.hpp"

using namespace biofuse;
using autodiff::Tensor;

namespace {

Tensor random_tensor(autodiff::Shape shape, Rng& rng, bool grad = false) {
    Tensor t = Tensor::zeros(std::move(shape), grad);
    for (auto& v : t.values()) v = rng.uniform(-1.0, 1.0);
    return t;
}

void bm_matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    const Tensor a = random_tensor({n, n}, rng);
    const Tensor b = random_tensor({n, n}, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(autodiff::matmul(a, b).values().data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * n * n * n);
}
BENCHMARK(bm_matmul)->Arg(32)->Arg(64)->Arg(128);

void bm_masked_softmax(benchmark::State& state) {
    Rng rng(2);
    const Tensor logits = random_tensor({8, 64, 64}, rng);
    auto mask = autodiff::BoolMask::falses({8, 64, 64});
    for (std::size_t i = 0; i < mask.numel(); i += 3) mask.set(i, true);
    for (auto _ : state) {
        benchmark::DoNotOptimize(autodiff::masked_softmax(logits, mask).values().data());
    }
}
BENCHMARK(bm_masked_softmax);

void bm_encoder_layer_forward_backward(benchmark::State& state) {
    Rng rng(3);
    models::TokenSequence seq;
    seq.tokens = random_tensor({33, 32}, rng, true);
    seq.tags.push_back(models::TokenTag::Cls);
    for (int i = 0; i < 16; ++i) seq.tags.push_back(models::TokenTag::ModalityA);
    for (int i = 0; i < 16; ++i) seq.tags.push_back(models::TokenTag::ModalityB);

    models::EncoderLayerParams params;
    auto p = [&](autodiff::Shape s) { return random_tensor(std::move(s), rng, true); };
    params.wq = p({32, 32});
    params.bq = p({32});
    params.wk = p({32, 32});
    params.bk = p({32});
    params.wv = p({32, 32});
    params.bv = p({32});
    params.wo = p({32, 32});
    params.bo = p({32});
    params.ln1_gamma = Tensor::full({32}, 1.0, true);
    params.ln1_beta = Tensor::zeros({32}, true);
    params.ffn_w1 = p({32, 64});
    params.ffn_b1 = p({64});
    params.ffn_w2 = p({64, 32});
    params.ffn_b2 = p({32});
    params.ln2_gamma = Tensor::full({32}, 1.0, true);
    params.ln2_beta = Tensor::zeros({32}, true);

    for (auto _ : state) {
        const auto out = models::encoder_layer_forward(seq, params, 4, 0.0, 1, false, {});
        const Tensor loss = autodiff::sum(out.tokens);
        loss.backward();
        benchmark::DoNotOptimize(loss.item());
    }
}
BENCHMARK(bm_encoder_layer_forward_backward);

void bm_butterworth_filtfilt(benchmark::State& state) {
    const auto cascade =
        dsp::design_butterworth(dsp::FilterSpec::band_pass(10.0, 500.0, 2000.0, 4));
    Rng rng(4);
    SignalRecording rec;
    rec.modality = Modality::Emg;
    rec.channels = 8;
    rec.fs = 2000.0;
    rec.samples.resize(8 * 2000);
    for (auto& v : rec.samples) v = rng.uniform(-1.0, 1.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(dsp::apply_filter_zero_phase(rec, cascade).samples.data());
    }
}
BENCHMARK(bm_butterworth_filtfilt);

void bm_mann_whitney(benchmark::State& state) {
    Rng rng(5);
    std::vector<double> x(40), y(40);
    for (auto& v : x) v = rng.uniform(0.0, 1.0);
    for (auto& v : y) v = rng.uniform(0.1, 1.1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(stats::mann_whitney_u(x, y).p);
    }
}
BENCHMARK(bm_mann_whitney);

}  // namespace

BENCHMARK_MAIN();
