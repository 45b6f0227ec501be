#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "biofuse/dsp.hpp"
#include "biofuse/errors.hpp"
#include "helpers.hpp"

using namespace biofuse;
using namespace biofuse::dsp;

namespace {

constexpr double kPi = std::numbers::pi;

// Independent oracle: the theoretical magnitude of a prewarped-bilinear
// Butterworth design, straight from the analog prototype formula
// |H|^2 = 1 / (1 + Omega^{2N}), with Omega the low-pass-mapped prewarped
// frequency. Shares no code with the biquad cascade implementation.
double theoretical_butterworth_mag(const FilterSpec& spec, double f) {
    const double fs2 = 2.0 * spec.fs;
    const double w = fs2 * std::tan(kPi * f / spec.fs);
    double omega;
    if (spec.kind == FilterKind::LowPass) {
        const double wc = fs2 * std::tan(kPi * spec.low_hz / spec.fs);
        omega = w / wc;
    } else {
        const double w1 = fs2 * std::tan(kPi * spec.low_hz / spec.fs);
        const double w2 = fs2 * std::tan(kPi * spec.high_hz / spec.fs);
        const double w0sq = w1 * w2;
        const double bw = w2 - w1;
        omega = w <= 0.0 ? std::numeric_limits<double>::infinity()
                         : std::abs((w * w - w0sq) / (bw * w));
    }
    return 1.0 / std::sqrt(1.0 + std::pow(omega, 2.0 * spec.order));
}

double db(double mag) { return 20.0 * std::log10(mag); }

SignalRecording sinusoid(double freq, double fs, double seconds, std::size_t channels = 1) {
    SignalRecording rec;
    rec.modality = Modality::Emg;
    rec.channels = channels;
    rec.fs = fs;
    const auto T = static_cast<std::size_t>(seconds * fs);
    rec.samples.resize(channels * T);
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t t = 0; t < T; ++t) {
            rec.samples[c * T + t] = std::sin(2.0 * kPi * freq * static_cast<double>(t) / fs);
        }
    }
    return rec;
}

double mid_amplitude(const SignalRecording& rec, std::size_t channel = 0) {
    const std::size_t T = rec.num_samples();
    double peak = 0.0;
    for (std::size_t t = T / 4; t < 3 * T / 4; ++t) {
        peak = std::max(peak, std::abs(rec.samples[channel * T + t]));
    }
    return peak;
}

}  // namespace

TEST_CASE("low-pass design: DC gain 1, cutoff at -3.01 dB") {
    const auto spec = FilterSpec::low_pass(90.0, 2000.0, 4);
    const BiquadCascade f = design_butterworth(spec);
    CHECK(f.max_pole_radius() < 1.0);
    CHECK(f.magnitude_at(0.0, 2000.0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(db(f.magnitude_at(90.0, 2000.0)) == doctest::Approx(-3.0103).epsilon(0.017));
}

TEST_CASE("band-pass design: zeros at DC and Nyquist, cutoffs at -3.01 dB") {
    const auto spec = FilterSpec::band_pass(10.0, 500.0, 2000.0, 4);
    const BiquadCascade f = design_butterworth(spec);
    CHECK(f.max_pole_radius() < 1.0);
    CHECK(f.magnitude_at(0.0, 2000.0) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(f.magnitude_at(1000.0, 2000.0) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(db(f.magnitude_at(10.0, 2000.0)) == doctest::Approx(-3.0103).epsilon(0.017));
    CHECK(db(f.magnitude_at(500.0, 2000.0)) == doctest::Approx(-3.0103).epsilon(0.017));
}

TEST_CASE("designed magnitude matches the theoretical response across the band") {
    for (const auto& spec : {FilterSpec::band_pass(10.0, 500.0, 2000.0, 4),
                             FilterSpec::band_pass(5.0, 100.0, 512.0, 4),
                             FilterSpec::low_pass(90.0, 2000.0, 4),
                             FilterSpec::low_pass(45.0, 256.0, 2),
                             FilterSpec::band_pass(10.0, 110.0, 256.0, 3),
                             FilterSpec::low_pass(30.0, 200.0, 5)}) {
        const BiquadCascade f = design_butterworth(spec);
        for (double frac = 0.02; frac < 0.5; frac += 0.02) {
            const double freq = frac * spec.fs;
            const double got = f.magnitude_at(freq, spec.fs);
            const double expected = theoretical_butterworth_mag(spec, freq);
            CHECK(got == doctest::Approx(expected).epsilon(1e-6).scale(1.0));
        }
    }
}

TEST_CASE("cutoff gains stay within 0.05 dB of -3.01 dB across valid specs") {
    for (const auto& spec : {FilterSpec::band_pass(10.0, 500.0, 2000.0, 4),
                             FilterSpec::band_pass(20.0, 150.0, 1000.0, 4),
                             FilterSpec::low_pass(90.0, 2000.0, 4),
                             FilterSpec::low_pass(40.0, 128.0, 4)}) {
        const BiquadCascade f = design_butterworth(spec);
        CHECK(std::abs(db(f.magnitude_at(spec.low_hz, spec.fs)) + 3.0103) < 0.05);
        if (spec.kind == FilterKind::BandPass) {
            CHECK(std::abs(db(f.magnitude_at(spec.high_hz, spec.fs)) + 3.0103) < 0.05);
        }
    }
}

TEST_CASE("cutoff at or beyond Nyquist is a design error") {
    CHECK_THROWS_AS(design_butterworth(FilterSpec::low_pass(1000.0, 2000.0, 4)), UsageError);
    CHECK_THROWS_AS(design_butterworth(FilterSpec::band_pass(10.0, 1000.0, 2000.0, 4)),
                    UsageError);
    CHECK_THROWS_AS(design_butterworth(FilterSpec::band_pass(500.0, 100.0, 2000.0, 4)),
                    UsageError);
}

TEST_CASE("zero-phase filtering: zero and constant signals") {
    const BiquadCascade lp = design_butterworth(FilterSpec::low_pass(90.0, 2000.0, 4));

    SignalRecording zero = sinusoid(100.0, 2000.0, 1.0);
    std::fill(zero.samples.begin(), zero.samples.end(), 0.0);
    const SignalRecording zf = apply_filter_zero_phase(zero, lp);
    for (const double v : zf.samples) CHECK(v == 0.0);

    SignalRecording constant = zero;
    std::fill(constant.samples.begin(), constant.samples.end(), 2.5);
    const SignalRecording cf = apply_filter_zero_phase(constant, lp);
    for (const double v : cf.samples) CHECK(v == doctest::Approx(2.5).epsilon(1e-9));
}

TEST_CASE("zero-phase band-pass attenuates 800 Hz by more than 40 dB") {
    const auto spec = FilterSpec::band_pass(10.0, 500.0, 2000.0, 4);
    const BiquadCascade f = design_butterworth(spec);

    // squared magnitude response of the forward-backward pass
    const double single_pass = f.magnitude_at(800.0, 2000.0);
    CHECK(db(single_pass * single_pass) < -40.0);

    const SignalRecording filtered = apply_filter_zero_phase(sinusoid(800.0, 2000.0, 1.0), f);
    CHECK(db(mid_amplitude(filtered)) < -40.0);
}

TEST_CASE("zero-phase property: cross-correlation peak at lag 0 for a passband tone") {
    const auto spec = FilterSpec::band_pass(10.0, 500.0, 2000.0, 4);
    const BiquadCascade f = design_butterworth(spec);
    const SignalRecording input = sinusoid(100.0, 2000.0, 1.0);
    const SignalRecording filtered = apply_filter_zero_phase(input, f);

    // scan less than half the 20-sample tone period so periodic aliases
    // of the true peak stay out of range
    const std::size_t T = input.num_samples();
    int best_lag = -1000;
    double best = -1e300;
    for (int lag = -8; lag <= 8; ++lag) {
        double acc = 0.0;
        for (std::size_t t = 100; t + 100 < T; ++t) {
            const auto shifted = static_cast<std::ptrdiff_t>(t) + lag;
            acc += input.samples[t] * filtered.samples[static_cast<std::size_t>(shifted)];
        }
        if (acc > best) {
            best = acc;
            best_lag = lag;
        }
    }
    CHECK(best_lag == 0);
}

TEST_CASE("too-short signal for filtering is a usage error") {
    const BiquadCascade f = design_butterworth(FilterSpec::low_pass(90.0, 2000.0, 4));
    // 2 sections -> reflective padding of 12 samples; 12-sample input fails
    SignalRecording tiny = sinusoid(100.0, 2000.0, 0.006);
    CHECK_THROWS_AS(apply_filter_zero_phase(tiny, f), UsageError);
}

TEST_CASE("zscore_rectify") {
    SignalRecording rec;
    rec.modality = Modality::Emg;
    rec.channels = 1;
    rec.fs = 10.0;
    rec.samples = {1.0, 1.0, 1.0};
    const SignalRecording constant = zscore_rectify(rec);
    CHECK(constant.samples == std::vector<double>{0.0, 0.0, 0.0});

    rec.samples = {-1.0, 1.0};
    const SignalRecording two = zscore_rectify(rec);
    CHECK(two.samples[0] == doctest::Approx(1.0));
    CHECK(two.samples[1] == doctest::Approx(1.0));

    // pre-rectification z-scores have mean 0 and unit std
    Rng rng(5);
    rec.channels = 2;
    const std::size_t T = 500;
    rec.samples = testutil::random_values(2 * T, rng, -3.0, 7.0);
    SignalRecording pre = rec;
    for (std::size_t c = 0; c < 2; ++c) {
        double mean = 0.0;
        for (std::size_t t = 0; t < T; ++t) mean += pre.samples[c * T + t];
        mean /= T;
        double var = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            const double d = pre.samples[c * T + t] - mean;
            var += d * d;
        }
        const double sd = std::sqrt(var / T);
        double zmean = 0.0, zvar = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            const double z = (pre.samples[c * T + t] - mean) / sd;
            zmean += z;
            zvar += z * z;
        }
        CHECK(std::abs(zmean / T) < 1e-12);
        CHECK(std::abs(std::sqrt(zvar / T) - 1.0) < 1e-12);
    }
}

TEST_CASE("crop_transient sample counts") {
    SignalRecording rec = sinusoid(50.0, 2000.0, 1.0);
    CHECK(crop_transient(rec, 0.5).num_samples() == 1000);

    SignalRecording rec200 = sinusoid(20.0, 200.0, 1.0);
    CHECK(crop_transient(rec200, 0.5).num_samples() == 100);

    const SignalRecording full = crop_transient(rec, 1.0);
    CHECK(full.samples == rec.samples);

    CHECK_THROWS_AS(crop_transient(rec, 2.0), UsageError);
}

TEST_CASE("crop_steady_state windows") {
    SignalRecording rec = sinusoid(50.0, 2000.0, 3.0);
    const SignalRecording mid = crop_steady_state(rec, 1.0, 2.0);
    CHECK(mid.num_samples() == 2000);
    CHECK(mid.samples[0] == rec.samples[2000]);

    const SignalRecording all = crop_steady_state(rec, 0.0, 3.0);
    CHECK(all.samples == rec.samples);

    SignalRecording rec200 = sinusoid(20.0, 200.0, 3.0);
    CHECK(crop_steady_state(rec200, 1.0, 2.0).num_samples() == 200);

    CHECK_THROWS_AS(crop_steady_state(rec, 2.0, 1.0), UsageError);
    CHECK_THROWS_AS(crop_steady_state(rec, 1.0, 5.0), UsageError);
}

TEST_CASE("resample_linear") {
    SignalRecording rec = sinusoid(50.0, 2000.0, 0.5);
    const SignalRecording same = resample_linear(rec, 2000.0);
    CHECK(same.samples == rec.samples);

    SignalRecording constant = rec;
    std::fill(constant.samples.begin(), constant.samples.end(), 3.25);
    const SignalRecording up = resample_linear(constant, 3173.0);
    for (const double v : up.samples) CHECK(v == doctest::Approx(3.25).epsilon(1e-12));

    SignalRecording ramp;
    ramp.modality = Modality::Acc;
    ramp.channels = 1;
    ramp.fs = 1.0;
    ramp.samples = {0.0, 1.0, 2.0};
    const SignalRecording doubled = resample_linear(ramp, 2.0);
    CHECK(doubled.num_samples() == 5);
    CHECK(doubled.samples == std::vector<double>{0.0, 0.5, 1.0, 1.5, 2.0});
    CHECK(doubled.fs == 2.0);
    CHECK(doubled.samples[0] == ramp.samples[0]);  // first sample exact
}

TEST_CASE("acc_magnitude") {
    SignalRecording rec;
    rec.modality = Modality::Acc;
    rec.channels = 3;
    rec.fs = 148.0;
    rec.samples = {3.0, 0.0, 1.0,   // x
                   4.0, 0.0, 1.0,   // y
                   0.0, 0.0, 1.0};  // z
    const SignalRecording mag = acc_magnitude(rec);
    CHECK(mag.channels == 1);
    CHECK(mag.samples[0] == doctest::Approx(5.0));
    CHECK(mag.samples[1] == 0.0);
    CHECK(mag.samples[2] == doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));

    rec.channels = 4;
    rec.samples.resize(4 * 3);
    CHECK_THROWS_AS(acc_magnitude(rec), UsageError);
}

TEST_CASE("segment_tubelets") {
    SignalRecording rec = sinusoid(50.0, 2000.0, 0.5, 2);  // 1000 samples, 2 channels
    const auto patches = segment_tubelets(rec, 40);
    CHECK(patches.size() == 25);
    CHECK(patches[0].size() == 2 * 40);

    SignalRecording one = sinusoid(50.0, 2000.0, 0.02);  // 40 samples
    CHECK(segment_tubelets(one, 40).size() == 1);

    SignalRecording ninety;
    ninety.modality = Modality::Emg;
    ninety.channels = 1;
    ninety.fs = 100.0;
    ninety.samples.resize(99);
    for (std::size_t i = 0; i < 99; ++i) ninety.samples[i] = static_cast<double>(i);
    const auto two = segment_tubelets(ninety, 40);
    CHECK(two.size() == 2);

    // patches concatenate back to the first floor(T/patch)*patch samples
    std::vector<double> rebuilt;
    for (const auto& p : two) rebuilt.insert(rebuilt.end(), p.begin(), p.end());
    CHECK(rebuilt == std::vector<double>(ninety.samples.begin(), ninety.samples.begin() + 80));

    SignalRecording tiny = ninety;
    tiny.samples.resize(10);
    CHECK_THROWS_AS(segment_tubelets(tiny, 40), UsageError);
}

TEST_CASE("pipeline determinism: same input, same bytes") {
    const auto spec = FilterSpec::band_pass(20.0, 100.0, 512.0, 4);
    const BiquadCascade f = design_butterworth(spec);
    Rng rng(9);
    SignalRecording rec;
    rec.modality = Modality::Emg;
    rec.channels = 3;
    rec.fs = 512.0;
    rec.samples = testutil::random_values(3 * 512, rng);

    auto run = [&]() {
        SignalRecording r = apply_filter_zero_phase(rec, f);
        r = zscore_rectify(r);
        r = crop_transient(r, 0.5);
        return segment_tubelets(r, 40);
    };
    const auto a = run();
    const auto b = run();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(testutil::bitwise_equal(a[i], b[i]));
}
