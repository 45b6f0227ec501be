#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "biofuse/dataset.hpp"
#include "biofuse/errors.hpp"

namespace biofuse::data {

namespace {

constexpr double kPi = std::numbers::pi;

// Class identity lives in where bursts sit (channel x burst position), the
// way muscle-activation envelopes separate gestures. Each burst carries a
// fixed template carrier; trials differ by noise and a small onset shift.
struct Component {
    std::size_t channel;
    double amp;
    double center_frac;  // burst center as a fraction of the trial
    double width_frac;   // burst width as a fraction of the trial
    double freq_hz;
    double phase;
};

using VariantTemplate = std::vector<Component>;

struct ClassTemplates {
    // [class][modality][variant]
    std::vector<std::vector<std::array<VariantTemplate, 2>>> classes;
    // class-independent per-channel background tone, one per modality; keeps
    // every channel carrying stable content so per-channel z-scoring never
    // inflates a pure-noise channel into a full-scale random input
    std::array<VariantTemplate, 2> tonic;
    std::vector<int> pair_of;
};

// burst centers live inside the transient crop window [0, 0.5) of the trial
constexpr std::array<double, 2> kPositionGrid{0.15, 0.35};

double carrier_high(double fs) { return std::min(95.0, 0.37 * fs); }

VariantTemplate draw_template(Rng& rng, std::size_t channels, double fs,
                              std::size_t primary_channel, std::size_t pos_idx) {
    VariantTemplate tpl;
    Component primary;
    primary.channel = primary_channel;
    primary.center_frac = kPositionGrid[pos_idx % kPositionGrid.size()];
    primary.width_frac = rng.uniform(0.12, 0.16);
    primary.amp = rng.uniform(0.85, 1.0);
    primary.freq_hz = rng.uniform(25.0, carrier_high(fs));
    primary.phase = rng.uniform(0.0, 2.0 * kPi);
    tpl.push_back(primary);

    // 1..2 extra carriers stacked on the same burst: spectral richness
    // without leaking into other classes' burst windows
    const std::size_t extras = 1 + rng.uniform_int(2);
    for (std::size_t i = 0; i < extras; ++i) {
        Component c = primary;
        c.width_frac = primary.width_frac * rng.uniform(0.7, 1.0);
        c.amp = rng.uniform(0.3, 0.5);
        c.freq_hz = rng.uniform(25.0, carrier_high(fs));
        c.phase = rng.uniform(0.0, 2.0 * kPi);
        tpl.push_back(c);
    }
    return tpl;
}

// Paired-class variants: the pair owns one channel per modality and the
// variant is the burst position, early or late. Within a pair the variant
// marginals match exactly, so only the joint (A position, B position)
// combination identifies the class.
VariantTemplate draw_pair_variant(Rng& rng, std::size_t channel, double fs, int variant) {
    Component primary;
    primary.channel = channel;
    primary.center_frac = variant == 0 ? kPositionGrid.front() : kPositionGrid.back();
    primary.width_frac = rng.uniform(0.12, 0.16);
    primary.amp = rng.uniform(0.85, 1.0);
    primary.freq_hz = rng.uniform(25.0, carrier_high(fs));
    primary.phase = rng.uniform(0.0, 2.0 * kPi);
    return {primary};
}

// Unpaired classes and pairs draw primary bursts from disjoint channel
// ranges so their signatures never overlap.
std::size_t unpaired_channel_split(std::size_t channels, int unpaired, int pairs, int classes) {
    if (pairs == 0) return channels;
    if (unpaired == 0) return 0;
    const auto ideal = static_cast<std::size_t>(std::round(
        static_cast<double>(channels) * unpaired / static_cast<double>(classes)));
    return std::clamp<std::size_t>(ideal, 1, channels - 1);
}

ClassTemplates build_templates(const SynthConfig& cfg) {
    Rng rng = Rng(cfg.seed).fork("templates");
    const int paired = cfg.paired_classes();
    const int pairs = paired / 2;
    const int unpaired = cfg.classes - paired;

    ClassTemplates out;
    out.classes.resize(cfg.classes);
    out.pair_of.assign(cfg.classes, -1);

    const std::array<std::size_t, 2> channels{cfg.channels_a, cfg.channels_b};
    for (std::size_t m = 0; m < 2; ++m) {
        const double fs = m == 0 ? cfg.fs_a : cfg.fs_b;
        for (std::size_t ch = 0; ch < channels[m]; ++ch) {
            Component tone;
            tone.channel = ch;
            tone.center_frac = 0.5;
            tone.width_frac = 1.0;
            tone.amp = cfg.tonic_amp * rng.uniform(0.8, 1.2);
            tone.freq_hz = rng.uniform(25.0, carrier_high(fs));
            tone.phase = rng.uniform(0.0, 2.0 * kPi);
            out.tonic[m].push_back(tone);
        }
    }
    std::array<std::size_t, 2> split{};
    for (std::size_t m = 0; m < 2; ++m) {
        split[m] = unpaired_channel_split(channels[m], unpaired, pairs, cfg.classes);
        if (unpaired > static_cast<int>(split[m] * kPositionGrid.size())) {
            throw ConfigError("synth: " + std::to_string(unpaired) +
                              " unpaired classes need more channels (only " +
                              std::to_string(split[m]) + " available on one modality)");
        }
        if (pairs > static_cast<int>(channels[m] - split[m])) {
            throw ConfigError("synth: " + std::to_string(pairs) +
                              " class pairs need more channels (only " +
                              std::to_string(channels[m] - split[m]) +
                              " available on one modality)");
        }
    }

    for (int c = 0; c < unpaired; ++c) {
        out.classes[c].resize(2);
        for (std::size_t m = 0; m < 2; ++m) {
            const std::size_t channel = static_cast<std::size_t>(c) % split[m];
            const std::size_t pos = static_cast<std::size_t>(c) / split[m];
            const double fs = m == 0 ? cfg.fs_a : cfg.fs_b;
            out.classes[c][m][0] = draw_template(rng, channels[m], fs, channel, pos);
        }
    }
    for (int p = 0; p < pairs; ++p) {
        const int c0 = unpaired + 2 * p;
        const int c1 = c0 + 1;
        out.pair_of[c0] = p;
        out.pair_of[c1] = p;
        std::array<VariantTemplate, 2> mod_a, mod_b;
        for (int v = 0; v < 2; ++v) {
            mod_a[v] = draw_pair_variant(rng, split[0] + static_cast<std::size_t>(p), cfg.fs_a, v);
            mod_b[v] = draw_pair_variant(rng, split[1] + static_cast<std::size_t>(p), cfg.fs_b, v);
        }
        // both classes of a pair share the same per-modality variant pool;
        // only the joint combination tells them apart
        out.classes[c0].resize(2);
        out.classes[c1].resize(2);
        out.classes[c0][0] = mod_a;
        out.classes[c0][1] = mod_b;
        out.classes[c1][0] = mod_a;
        out.classes[c1][1] = mod_b;
    }
    return out;
}

// Add the template's bursts, shifted by a common per-trial onset offset.
void render_components(const VariantTemplate& tpl, std::vector<double>& samples, std::size_t T,
                       double fs, double amp_scale, double onset_shift_frac) {
    for (const Component& c : tpl) {
        const double center = c.center_frac + onset_shift_frac;
        const double t0 = (center - c.width_frac / 2.0) * static_cast<double>(T);
        const double t1 = (center + c.width_frac / 2.0) * static_cast<double>(T);

        const auto lo = static_cast<std::size_t>(std::max(0.0, std::floor(t0)));
        const auto hi =
            static_cast<std::size_t>(std::min(static_cast<double>(T), std::ceil(t1)));
        double* row = samples.data() + c.channel * T;
        for (std::size_t t = lo; t < hi; ++t) {
            const double x = (static_cast<double>(t) - t0) / (t1 - t0);
            if (x < 0.0 || x > 1.0) continue;
            const double window = 0.5 * (1.0 - std::cos(2.0 * kPi * x));
            row[t] += amp_scale * c.amp * window *
                      std::sin(2.0 * kPi * c.freq_hz * (static_cast<double>(t) - t0) / fs +
                               c.phase);
        }
    }
}

}  // namespace

void SynthConfig::validate() const {
    if (classes < 1) throw ConfigError("synth: classes must be >= 1");
    if (subjects < 1) throw ConfigError("synth: subjects must be >= 1");
    if (repetitions < 1) throw ConfigError("synth: repetitions must be >= 1");
    if (channels_a == 0 || channels_b == 0) throw ConfigError("synth: channel counts must be >= 1");
    if (fs_a <= 0.0 || fs_b <= 0.0) throw ConfigError("synth: sampling rates must be positive");
    if (duration_s <= 0.0) throw ConfigError("synth: duration must be positive");
    if (cross_modal_fraction < 0.0 || cross_modal_fraction > 1.0) {
        throw ConfigError("synth: cross_modal_fraction must lie in [0, 1]");
    }
    const double exact = cross_modal_fraction * classes;
    const double rounded = std::round(exact);
    if (std::abs(exact - rounded) > 1e-9) {
        throw ConfigError("synth: cross_modal_fraction * classes must be an integer");
    }
    if (static_cast<int>(rounded) % 2 != 0) {
        throw ConfigError("synth: cross_modal_fraction * classes must be even (classes pair up)");
    }
    for (const double fs : {fs_a, fs_b}) {
        if (carrier_high(fs) <= 27.0) {
            throw ConfigError("synth: sampling rate " + std::to_string(fs) +
                              " Hz too low for the 25+ Hz carrier band");
        }
    }
    if (name_a == name_b) throw ConfigError("synth: modality names must differ");
}

int SynthConfig::paired_classes() const {
    return static_cast<int>(std::round(cross_modal_fraction * classes));
}

double pair_collapse_ceiling(double cross_modal_fraction) {
    return 1.0 - cross_modal_fraction / 2.0;
}

Dataset synth_generate(const SynthConfig& cfg) {
    cfg.validate();
    const ClassTemplates templates = build_templates(cfg);

    Dataset d;
    d.manifest.classes = cfg.classes;
    for (int s = 1; s <= cfg.subjects; ++s) d.manifest.subjects.push_back(s);
    d.manifest.modalities = {
        ModalityInfo{cfg.name_a, cfg.kind_a, cfg.channels_a, cfg.fs_a},
        ModalityInfo{cfg.name_b, cfg.kind_b, cfg.channels_b, cfg.fs_b},
    };

    const std::array<std::size_t, 2> channels{cfg.channels_a, cfg.channels_b};
    const std::array<double, 2> fs{cfg.fs_a, cfg.fs_b};
    const std::array<Modality, 2> kinds{cfg.kind_a, cfg.kind_b};
    const double noise_sigma = std::pow(10.0, -cfg.snr_db / 20.0);

    Rng rng = Rng(cfg.seed).fork("trials");
    for (int s = 1; s <= cfg.subjects; ++s) {
        const std::array<double, 2> subj_amp{rng.uniform(0.85, 1.15), rng.uniform(0.85, 1.15)};
        for (int c = 0; c < cfg.classes; ++c) {
            const bool paired = templates.pair_of[c] >= 0;
            // Pair variants alternate with repetition so both land in any
            // train/test split; the offset randomizes which goes where.
            const int variant_offset = static_cast<int>(rng.uniform_int(2));
            const int parity = paired ? (c - (cfg.classes - cfg.paired_classes())) % 2 : 0;
            for (int r = 1; r <= cfg.repetitions; ++r) {
                const int v = paired ? (r + variant_offset) % 2 : 0;
                const std::array<int, 2> variant{v, paired ? (v ^ parity) : 0};

                Trial trial;
                trial.subject = s;
                trial.gesture = c;
                trial.repetition = r;
                for (std::size_t m = 0; m < 2; ++m) {
                    const auto T = static_cast<std::size_t>(cfg.duration_s * fs[m]);
                    SignalRecording rec;
                    rec.modality = kinds[m];
                    rec.channels = channels[m];
                    rec.fs = fs[m];
                    rec.subject = s;
                    rec.gesture = c;
                    rec.repetition = r;
                    rec.samples.assign(channels[m] * T, 0.0);
                    for (auto& x : rec.samples) x = noise_sigma * rng.normal();

                    render_components(templates.tonic[m], rec.samples, T, fs[m], subj_amp[m],
                                      0.0);
                    const VariantTemplate& tpl = templates.classes[c][m][variant[m]];
                    const double onset = cfg.onset_jitter_s > 0.0
                                             ? rng.uniform(-cfg.onset_jitter_s,
                                                           cfg.onset_jitter_s) /
                                                   cfg.duration_s
                                             : 0.0;
                    render_components(tpl, rec.samples, T, fs[m], subj_amp[m], onset);
                    trial.recordings.push_back(std::move(rec));
                }
                d.trials.push_back(std::move(trial));
            }
        }
    }
    d.quantize_f32();
    d.validate();
    return d;
}

SynthTruth synth_truth(const SynthConfig& cfg) {
    cfg.validate();
    const ClassTemplates templates = build_templates(cfg);
    const int unpaired = cfg.classes - cfg.paired_classes();

    SynthTruth truth;
    truth.pair_of = templates.pair_of;
    truth.components.resize(cfg.classes);

    auto to_components = [](const VariantTemplate& tpl) {
        std::vector<TemplateComponent> out;
        out.reserve(tpl.size());
        for (const auto& c : tpl) out.push_back({c.channel, c.amp, c.center_frac, c.width_frac});
        return out;
    };

    for (int c = 0; c < cfg.classes; ++c) {
        const bool paired = templates.pair_of[c] >= 0;
        const int parity = paired ? (c - unpaired) % 2 : 0;
        const int variants = paired ? 2 : 1;
        truth.components[c].resize(variants);
        for (int v = 0; v < variants; ++v) {
            // modality B carries the pair parity, matching the generator
            truth.components[c][v][0] = to_components(templates.classes[c][0][v]);
            truth.components[c][v][1] =
                to_components(templates.classes[c][1][paired ? (v ^ parity) : 0]);
        }
    }
    return truth;
}

}  // namespace biofuse::data
