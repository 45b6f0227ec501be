#include "biofuse/prep.hpp"

#include "biofuse/errors.hpp"

namespace biofuse::prep {

SignalRecording prep_recording(const SignalRecording& rec, const ModalityPrep& mp,
                               const PrepConfig& cfg) {
    SignalRecording out = rec;

    if (mp.filter != ModalityPrep::Filter::None) {
        dsp::FilterSpec spec = mp.filter == ModalityPrep::Filter::BandPass
                                   ? dsp::FilterSpec::band_pass(mp.low_hz, mp.high_hz, rec.fs,
                                                                mp.order)
                                   : dsp::FilterSpec::low_pass(mp.low_hz, rec.fs, mp.order);
        out = dsp::apply_filter_zero_phase(out, dsp::design_butterworth(spec));
    }
    if (mp.magnitude) out = dsp::acc_magnitude(out);
    if (cfg.resample_fs > 0.0 && cfg.resample_fs != out.fs) {
        out = dsp::resample_linear(out, cfg.resample_fs);
    }
    if (cfg.normalize) out = dsp::zscore_rectify(out);
    switch (cfg.crop) {
        case PrepConfig::Crop::None: break;
        case PrepConfig::Crop::Transient: out = dsp::crop_transient(out, cfg.transient_s); break;
        case PrepConfig::Crop::Steady:
            out = dsp::crop_steady_state(out, cfg.steady_start_s, cfg.steady_end_s);
            break;
    }
    return out;
}

data::Dataset prep_dataset(const data::Dataset& d, const PrepConfig& cfg) {
    d.validate();
    data::Dataset out;
    out.manifest = d.manifest;

    std::vector<ModalityPrep> preps;
    for (const auto& info : d.manifest.modalities) {
        const auto it = cfg.per_modality.find(info.name);
        preps.push_back(it == cfg.per_modality.end() ? ModalityPrep{} : it->second);
    }

    out.trials.reserve(d.trials.size());
    for (const auto& trial : d.trials) {
        data::Trial nt;
        nt.subject = trial.subject;
        nt.gesture = trial.gesture;
        nt.repetition = trial.repetition;
        for (std::size_t m = 0; m < trial.recordings.size(); ++m) {
            nt.recordings.push_back(prep_recording(trial.recordings[m], preps[m], cfg));
        }
        out.trials.push_back(std::move(nt));
    }

    // manifest reflects the processed dimensions
    if (!out.trials.empty()) {
        for (std::size_t m = 0; m < out.manifest.modalities.size(); ++m) {
            out.manifest.modalities[m].channels = out.trials[0].recordings[m].channels;
            out.manifest.modalities[m].fs = out.trials[0].recordings[m].fs;
        }
        for (const auto& trial : out.trials) {
            for (std::size_t m = 0; m < trial.recordings.size(); ++m) {
                if (trial.recordings[m].channels != out.manifest.modalities[m].channels ||
                    trial.recordings[m].num_samples() !=
                        out.trials[0].recordings[m].num_samples()) {
                    throw UsageError("prep: trials disagree on processed dimensions");
                }
            }
        }
    }
    out.validate();
    return out;
}

}  // namespace biofuse::prep
