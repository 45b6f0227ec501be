#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "biofuse/signal.hpp"

namespace biofuse::dsp {

enum class FilterKind { BandPass, LowPass };

struct FilterSpec {
    int order = 4;  // analog prototype order
    FilterKind kind = FilterKind::BandPass;
    double low_hz = 0.0;   // band-pass lower edge, or the low-pass cutoff
    double high_hz = 0.0;  // band-pass upper edge, unused for low-pass
    double fs = 0.0;

    static FilterSpec band_pass(double low_hz, double high_hz, double fs, int order = 4);
    static FilterSpec low_pass(double cutoff_hz, double fs, int order = 4);
};

// One second-order section, direct form II transposed.
struct Biquad {
    double b0 = 1.0, b1 = 0.0, b2 = 0.0;  // numerator
    double a1 = 0.0, a2 = 0.0;            // denominator (a0 normalized to 1)
};

struct BiquadCascade {
    std::vector<Biquad> sections;
    double gain = 1.0;

    // |H(e^{j 2 pi f / fs})| of the single-pass cascade.
    double magnitude_at(double freq_hz, double fs) const;
    // Largest pole magnitude; < 1 for a stable design.
    double max_pole_radius() const;
};

// Butterworth design via the analog prototype and a prewarped bilinear
// transform; the prewarping pins the -3.01 dB points to the requested
// cutoffs exactly (up to rounding). Band-pass designs of prototype order N
// produce N sections (2N poles), matching the usual butter(N, band)
// convention; low-pass designs produce ceil(N/2) sections.
BiquadCascade design_butterworth(const FilterSpec& spec);

// Zero-phase forward-backward filtering with reflective edge padding of
// 3 * 2 * section-count samples and per-section steady-state initial
// conditions. Output length equals input length; the effective magnitude
// response is the square of the single-pass response.
SignalRecording apply_filter_zero_phase(const SignalRecording& x, const BiquadCascade& f);

// Per-channel z-score then absolute value. Channels with standard deviation
// below 1e-12 map to all zeros.
SignalRecording zscore_rectify(const SignalRecording& x);

// Keep the first floor(seconds * fs) samples.
SignalRecording crop_transient(const SignalRecording& x, double seconds);

// Keep samples in [start_s, end_s).
SignalRecording crop_steady_state(const SignalRecording& x, double start_s, double end_s);

// Linear interpolation onto the target rate's time grid; the first sample is
// preserved exactly and target_fs == fs is the identity.
SignalRecording resample_linear(const SignalRecording& x, double target_fs);

// Collapse consecutive (x, y, z) channel triples to per-electrode magnitudes
// sqrt(x^2 + y^2 + z^2).
SignalRecording acc_magnitude(const SignalRecording& x);

// Non-overlapping temporal patches of `patch` samples; each patch is a
// channels-by-patch block (channel-major), trailing remainder discarded.
std::vector<std::vector<double>> segment_tubelets(const SignalRecording& x, std::size_t patch);

}  // namespace biofuse::dsp
