#pragma once

#include <map>
#include <string>

#include "biofuse/dataset.hpp"
#include "biofuse/dsp.hpp"

namespace biofuse::prep {

// Per-modality filtering choices; band-pass for EMG-style channels,
// low-pass for kinematic and force channels.
struct ModalityPrep {
    enum class Filter { None, BandPass, LowPass };
    Filter filter = Filter::None;
    double low_hz = 0.0;   // band-pass low edge or low-pass cutoff
    double high_hz = 0.0;  // band-pass high edge
    int order = 4;
    bool magnitude = false;  // collapse consecutive xyz triples per electrode
};

struct PrepConfig {
    std::map<std::string, ModalityPrep> per_modality;  // keyed by modality name
    double resample_fs = 0.0;  // 0 keeps native rates; otherwise the common rate
    bool normalize = true;     // z-score + rectify
    enum class Crop { None, Transient, Steady };
    Crop crop = Crop::Transient;
    double transient_s = 0.5;
    double steady_start_s = 1.0;
    double steady_end_s = 2.0;
};

// Fixed pipeline: filter -> magnitude -> resample -> z-score+rectify -> crop.
SignalRecording prep_recording(const SignalRecording& rec, const ModalityPrep& mp,
                               const PrepConfig& cfg);

data::Dataset prep_dataset(const data::Dataset& d, const PrepConfig& cfg);

}  // namespace biofuse::prep
