#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace biofuse {

enum class Modality { Emg, Acc, Force };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

// One trial's raw multichannel time series for a single modality.
// Samples are channel-major: channel c occupies [c*T, (c+1)*T).
struct SignalRecording {
    Modality modality = Modality::Emg;
    std::size_t channels = 0;
    double fs = 0.0;
    std::vector<double> samples;
    int subject = 0;
    int gesture = 0;
    int repetition = 1;

    std::size_t num_samples() const { return channels == 0 ? 0 : samples.size() / channels; }
    double duration() const { return fs > 0 ? static_cast<double>(num_samples()) / fs : 0.0; }

    double at(std::size_t channel, std::size_t t) const {
        return samples[channel * num_samples() + t];
    }

    // Throws UsageError when fs <= 0, repetition < 1, or the sample buffer
    // is not a whole number of channel rows.
    void validate() const;
};

}  // namespace biofuse
