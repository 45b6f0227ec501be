#include "biofuse/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "biofuse/errors.hpp"

namespace biofuse {

std::string to_string(Modality m) {
    switch (m) {
        case Modality::Emg: return "emg";
        case Modality::Acc: return "acc";
        case Modality::Force: return "force";
    }
    return "emg";
}

Modality modality_from_string(const std::string& s) {
    if (s == "emg" || s == "semg") return Modality::Emg;
    if (s == "acc") return Modality::Acc;
    if (s == "force") return Modality::Force;
    throw UsageError("unknown modality name '" + s + "'");
}

void SignalRecording::validate() const {
    if (fs <= 0.0) throw UsageError("SignalRecording: fs must be positive");
    if (repetition < 1) throw UsageError("SignalRecording: repetition must be >= 1");
    if (channels == 0 || samples.size() % channels != 0) {
        throw UsageError("SignalRecording: sample buffer is not channels x time");
    }
}

}  // namespace biofuse

namespace biofuse::dsp {

namespace {

using cplx = std::complex<double>;
constexpr double kPi = std::numbers::pi;

void check_spec(const FilterSpec& spec) {
    const double nyquist = spec.fs / 2.0;
    if (spec.fs <= 0.0) throw UsageError("filter design: fs must be positive");
    if (spec.order < 1) throw UsageError("filter design: order must be >= 1");
    if (spec.kind == FilterKind::LowPass) {
        if (spec.low_hz <= 0.0 || spec.low_hz >= nyquist) {
            throw UsageError("filter design: cutoff " + std::to_string(spec.low_hz) +
                             " Hz outside (0, " + std::to_string(nyquist) + ")");
        }
    } else {
        if (spec.low_hz <= 0.0 || spec.high_hz >= nyquist || spec.low_hz >= spec.high_hz) {
            throw UsageError("filter design: band [" + std::to_string(spec.low_hz) + ", " +
                             std::to_string(spec.high_hz) + "] Hz invalid for fs " +
                             std::to_string(spec.fs));
        }
    }
}

// Left-half-plane poles of the normalized (cutoff 1 rad/s) Butterworth
// prototype of order n.
std::vector<cplx> prototype_poles(int n) {
    std::vector<cplx> poles;
    poles.reserve(n);
    for (int k = 0; k < n; ++k) {
        const double theta = kPi * (2.0 * k + n + 1.0) / (2.0 * n);
        poles.emplace_back(std::cos(theta), std::sin(theta));
    }
    return poles;
}

cplx bilinear_pole(const cplx& s, double fs2) { return (fs2 + s) / (fs2 - s); }

Biquad section_from_pair(const cplx& p1, const cplx& p2, const cplx& z1, const cplx& z2) {
    Biquad s;
    s.b0 = 1.0;
    s.b1 = -(z1 + z2).real();
    s.b2 = (z1 * z2).real();
    s.a1 = -(p1 + p2).real();
    s.a2 = (p1 * p2).real();
    return s;
}

cplx cascade_response(const BiquadCascade& c, const cplx& z_inv) {
    cplx h(c.gain, 0.0);
    for (const auto& s : c.sections) {
        const cplx num = cplx(s.b0, 0.0) + cplx(s.b1, 0.0) * z_inv + cplx(s.b2, 0.0) * z_inv * z_inv;
        const cplx den = cplx(1.0, 0.0) + cplx(s.a1, 0.0) * z_inv + cplx(s.a2, 0.0) * z_inv * z_inv;
        h *= num / den;
    }
    return h;
}

}  // namespace

FilterSpec FilterSpec::band_pass(double low_hz, double high_hz, double fs, int order) {
    return FilterSpec{order, FilterKind::BandPass, low_hz, high_hz, fs};
}

FilterSpec FilterSpec::low_pass(double cutoff_hz, double fs, int order) {
    return FilterSpec{order, FilterKind::LowPass, cutoff_hz, 0.0, fs};
}

double BiquadCascade::magnitude_at(double freq_hz, double fs) const {
    const double w = 2.0 * kPi * freq_hz / fs;
    const cplx z_inv = std::exp(cplx(0.0, -w));
    return std::abs(cascade_response(*this, z_inv));
}

double BiquadCascade::max_pole_radius() const {
    double r = 0.0;
    for (const auto& s : sections) {
        // roots of z^2 + a1 z + a2
        const cplx disc = std::sqrt(cplx(s.a1 * s.a1 - 4.0 * s.a2, 0.0));
        const cplx r1 = (cplx(-s.a1, 0.0) + disc) / 2.0;
        const cplx r2 = (cplx(-s.a1, 0.0) - disc) / 2.0;
        r = std::max({r, std::abs(r1), std::abs(r2)});
    }
    return r;
}

BiquadCascade design_butterworth(const FilterSpec& spec) {
    check_spec(spec);
    const int n = spec.order;
    const double fs2 = 2.0 * spec.fs;
    const auto proto = prototype_poles(n);

    // Prototype poles come in conjugate pairs; index k < (n-1)/2 lies in the
    // upper half plane, k == (n-1)/2 is the real pole of odd orders.
    const int n_upper = n / 2;
    const bool has_real = (n % 2) == 1;

    BiquadCascade cascade;
    if (spec.kind == FilterKind::LowPass) {
        const double wc = fs2 * std::tan(kPi * spec.low_hz / spec.fs);
        for (int k = 0; k < n_upper; ++k) {
            const cplx zp = bilinear_pole(proto[k] * wc, fs2);
            cascade.sections.push_back(
                section_from_pair(zp, std::conj(zp), {-1.0, 0.0}, {-1.0, 0.0}));
        }
        if (has_real) {
            const cplx zp = bilinear_pole(proto[n_upper] * wc, fs2);
            Biquad s;
            s.b0 = 1.0;
            s.b1 = 1.0;
            s.a1 = -zp.real();
            cascade.sections.push_back(s);
        }
        // unit gain at DC
        cascade.gain = 1.0 / cascade.magnitude_at(0.0, spec.fs);
    } else {
        const double w1 = fs2 * std::tan(kPi * spec.low_hz / spec.fs);
        const double w2 = fs2 * std::tan(kPi * spec.high_hz / spec.fs);
        const double w0 = std::sqrt(w1 * w2);
        const double bw = w2 - w1;

        // The low-pass-to-band-pass substitution maps each prototype pole p
        // to the two roots of s^2 - (p bw) s + w0^2 = 0. Zeros land N at
        // z=+1 (from s=0) and N at z=-1 (from infinity), one of each per
        // section, so every section numerator is z^2 - 1.
        auto bp_pole_pair = [&](const cplx& p) {
            const cplx pb = p * bw;
            const cplx disc = std::sqrt(pb * pb / 4.0 - cplx(w0 * w0, 0.0));
            return std::pair<cplx, cplx>{pb / 2.0 + disc, pb / 2.0 - disc};
        };
        for (int k = 0; k < n_upper; ++k) {
            const auto [s_a, s_b] = bp_pole_pair(proto[k]);
            for (const cplx& s : {s_a, s_b}) {
                const cplx zp = bilinear_pole(s, fs2);
                cascade.sections.push_back(
                    section_from_pair(zp, std::conj(zp), {1.0, 0.0}, {-1.0, 0.0}));
            }
        }
        if (has_real) {
            // the real prototype pole yields a self-conjugate analog pair
            const auto [s_a, s_b] = bp_pole_pair(proto[n_upper]);
            cascade.sections.push_back(section_from_pair(
                bilinear_pole(s_a, fs2), bilinear_pole(s_b, fs2), {1.0, 0.0}, {-1.0, 0.0}));
        }

        // unit gain at the digital center frequency
        const double f0 = spec.fs / kPi * std::atan(w0 / fs2);
        cascade.gain = 1.0 / cascade.magnitude_at(f0, spec.fs);
    }

    if (cascade.max_pole_radius() >= 1.0) {
        throw NumericError("filter design: unstable cascade (pole on or outside unit circle)");
    }
    return cascade;
}

namespace {

// One biquad over a buffer, direct form II transposed, with steady-state
// initial conditions scaled to the first sample so constant signals pass
// through without transients.
void run_biquad(const Biquad& q, std::vector<double>& x) {
    const double den = 1.0 + q.a1 + q.a2;
    const double dc = den != 0.0 ? (q.b0 + q.b1 + q.b2) / den : 0.0;
    double s1 = (dc - q.b0) * x[0];
    double s2 = (q.b2 - q.a2 * dc) * x[0];
    for (double& v : x) {
        const double in = v;
        const double out = q.b0 * in + s1;
        s1 = q.b1 * in - q.a1 * out + s2;
        s2 = q.b2 * in - q.a2 * out;
        v = out;
    }
}

void filtfilt_channel(const BiquadCascade& f, std::vector<double>& x, std::size_t pad) {
    const std::size_t n = x.size();
    std::vector<double> buf;
    buf.reserve(n + 2 * pad);
    for (std::size_t i = 0; i < pad; ++i) buf.push_back(x[pad - i]);
    buf.insert(buf.end(), x.begin(), x.end());
    for (std::size_t i = 0; i < pad; ++i) buf.push_back(x[n - 2 - i]);

    for (double& v : buf) v *= f.gain;
    for (const auto& q : f.sections) run_biquad(q, buf);
    std::reverse(buf.begin(), buf.end());
    for (double& v : buf) v *= f.gain;
    for (const auto& q : f.sections) run_biquad(q, buf);
    std::reverse(buf.begin(), buf.end());

    std::copy(buf.begin() + pad, buf.begin() + pad + n, x.begin());
}

}  // namespace

SignalRecording apply_filter_zero_phase(const SignalRecording& x, const BiquadCascade& f) {
    x.validate();
    if (f.max_pole_radius() >= 1.0) throw UsageError("apply_filter_zero_phase: unstable cascade");
    const std::size_t pad = 3 * 2 * f.sections.size();
    const std::size_t T = x.num_samples();
    if (T <= pad) {
        throw UsageError("apply_filter_zero_phase: signal of " + std::to_string(T) +
                         " samples shorter than settling length " + std::to_string(pad + 1));
    }

    SignalRecording out = x;
    for (std::size_t c = 0; c < x.channels; ++c) {
        std::vector<double> chan(x.samples.begin() + c * T, x.samples.begin() + (c + 1) * T);
        filtfilt_channel(f, chan, pad);
        std::copy(chan.begin(), chan.end(), out.samples.begin() + c * T);
    }
    for (const double v : out.samples) {
        if (!std::isfinite(v)) throw NumericError("apply_filter_zero_phase: non-finite output");
    }
    return out;
}

SignalRecording zscore_rectify(const SignalRecording& x) {
    x.validate();
    const std::size_t T = x.num_samples();
    SignalRecording out = x;
    for (std::size_t c = 0; c < x.channels; ++c) {
        double* row = out.samples.data() + c * T;
        double mean = 0.0;
        for (std::size_t t = 0; t < T; ++t) mean += row[t];
        mean /= static_cast<double>(T);
        double var = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            const double d = row[t] - mean;
            var += d * d;
        }
        const double sd = std::sqrt(var / static_cast<double>(T));
        if (sd < 1e-12) {
            for (std::size_t t = 0; t < T; ++t) row[t] = 0.0;
        } else {
            for (std::size_t t = 0; t < T; ++t) row[t] = std::abs((row[t] - mean) / sd);
        }
    }
    return out;
}

SignalRecording crop_transient(const SignalRecording& x, double seconds) {
    x.validate();
    const auto keep = static_cast<std::size_t>(seconds * x.fs);
    const std::size_t T = x.num_samples();
    if (seconds <= 0.0 || keep > T) {
        throw UsageError("crop_transient: window " + std::to_string(seconds) +
                         " s does not fit a recording of " + std::to_string(T) + " samples");
    }
    SignalRecording out = x;
    out.samples.resize(x.channels * keep);
    for (std::size_t c = 0; c < x.channels; ++c) {
        std::copy(x.samples.begin() + c * T, x.samples.begin() + c * T + keep,
                  out.samples.begin() + c * keep);
    }
    return out;
}

SignalRecording crop_steady_state(const SignalRecording& x, double start_s, double end_s) {
    x.validate();
    const std::size_t T = x.num_samples();
    const auto i0 = static_cast<std::size_t>(start_s * x.fs);
    const auto i1 = static_cast<std::size_t>(end_s * x.fs);
    if (start_s < 0.0 || start_s >= end_s || i1 > T) {
        throw UsageError("crop_steady_state: window [" + std::to_string(start_s) + ", " +
                         std::to_string(end_s) + ") s out of range for " + std::to_string(T) +
                         " samples at " + std::to_string(x.fs) + " Hz");
    }
    SignalRecording out = x;
    out.samples.resize(x.channels * (i1 - i0));
    for (std::size_t c = 0; c < x.channels; ++c) {
        std::copy(x.samples.begin() + c * T + i0, x.samples.begin() + c * T + i1,
                  out.samples.begin() + c * (i1 - i0));
    }
    return out;
}

SignalRecording resample_linear(const SignalRecording& x, double target_fs) {
    x.validate();
    if (target_fs <= 0.0) throw UsageError("resample_linear: target_fs must be positive");
    const std::size_t T = x.num_samples();
    const std::size_t n_out =
        static_cast<std::size_t>(static_cast<double>(T - 1) * target_fs / x.fs) + 1;

    SignalRecording out = x;
    out.fs = target_fs;
    out.samples.assign(x.channels * n_out, 0.0);
    const double step = x.fs / target_fs;
    for (std::size_t c = 0; c < x.channels; ++c) {
        const double* src = x.samples.data() + c * T;
        double* dst = out.samples.data() + c * n_out;
        for (std::size_t k = 0; k < n_out; ++k) {
            const double pos = static_cast<double>(k) * step;
            const auto i = static_cast<std::size_t>(pos);
            if (i >= T - 1) {
                dst[k] = src[T - 1];
            } else {
                const double frac = pos - static_cast<double>(i);
                dst[k] = src[i] * (1.0 - frac) + src[i + 1] * frac;
            }
        }
    }
    return out;
}

SignalRecording acc_magnitude(const SignalRecording& x) {
    x.validate();
    if (x.channels % 3 != 0) {
        throw UsageError("acc_magnitude: channel count " + std::to_string(x.channels) +
                         " is not a multiple of 3");
    }
    const std::size_t T = x.num_samples();
    SignalRecording out = x;
    out.channels = x.channels / 3;
    out.samples.assign(out.channels * T, 0.0);
    for (std::size_t e = 0; e < out.channels; ++e) {
        const double* cx = x.samples.data() + (3 * e) * T;
        const double* cy = x.samples.data() + (3 * e + 1) * T;
        const double* cz = x.samples.data() + (3 * e + 2) * T;
        double* dst = out.samples.data() + e * T;
        for (std::size_t t = 0; t < T; ++t) {
            dst[t] = std::sqrt(cx[t] * cx[t] + cy[t] * cy[t] + cz[t] * cz[t]);
        }
    }
    return out;
}

std::vector<std::vector<double>> segment_tubelets(const SignalRecording& x, std::size_t patch) {
    x.validate();
    if (patch == 0) throw UsageError("segment_tubelets: patch must be >= 1");
    const std::size_t T = x.num_samples();
    if (T < patch) {
        throw UsageError("segment_tubelets: recording of " + std::to_string(T) +
                         " samples shorter than patch " + std::to_string(patch));
    }
    const std::size_t count = T / patch;
    std::vector<std::vector<double>> patches(count);
    for (std::size_t p = 0; p < count; ++p) {
        auto& block = patches[p];
        block.resize(x.channels * patch);
        for (std::size_t c = 0; c < x.channels; ++c) {
            const double* src = x.samples.data() + c * T + p * patch;
            std::copy(src, src + patch, block.begin() + c * patch);
        }
    }
    return patches;
}

}  // namespace biofuse::dsp
