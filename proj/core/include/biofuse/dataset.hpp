#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "biofuse/rng.hpp"
#include "biofuse/signal.hpp"

namespace biofuse::data {

struct ModalityInfo {
    std::string name;  // unique within a dataset; used in trial file names
    Modality kind = Modality::Emg;
    std::size_t channels = 0;
    double fs = 0.0;
};

// All recordings of one (subject, gesture, repetition), one per modality in
// manifest order.
struct Trial {
    int subject = 0;
    int gesture = 0;
    int repetition = 1;
    std::vector<SignalRecording> recordings;
};

struct DatasetManifest {
    int classes = 0;
    std::vector<int> subjects;
    std::vector<ModalityInfo> modalities;

    std::size_t modality_index(const std::string& name) const;  // throws UsageError
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<Trial> trials;

    void validate() const;
    // Snap all sample values to their nearest 32-bit float, the on-disk
    // precision, so write/read round-trips are bit-exact.
    void quantize_f32();
};

// ---------------------------------------------------------------- synthesis

// Synthetic multimodal gesture data with controllable cross-modal structure.
// A cross_modal_fraction kappa of the classes is arranged in pairs that share
// per-modality templates; within a pair, only the joint (modality A variant,
// modality B variant) combination identifies the class, so no unimodal
// marginal separates the pair members.
struct SynthConfig {
    int classes = 8;
    int subjects = 4;
    std::size_t channels_a = 4;
    std::size_t channels_b = 4;
    double fs_a = 256.0;
    double fs_b = 256.0;
    double duration_s = 1.0;
    int repetitions = 6;
    std::uint64_t seed = 1;
    double cross_modal_fraction = 0.0;  // kappa in [0, 1]
    double snr_db = 10.0;
    double tonic_amp = 0.35;  // class-independent background tone amplitude
    // per-trial random shift of the whole burst pattern, in seconds
    double onset_jitter_s = 0.02;
    Modality kind_a = Modality::Emg;
    Modality kind_b = Modality::Acc;
    std::string name_a = "emg";
    std::string name_b = "acc";

    void validate() const;
    int paired_classes() const;  // kappa * classes, always even
};

Dataset synth_generate(const SynthConfig& cfg);

// Ground truth for oracle tests: the burst components the generator placed,
// per class and variant, regenerated deterministically from the config.
// Paired classes list their actual joint combinations, i.e. the modality-B
// variant already carries the pair parity.
struct TemplateComponent {
    std::size_t channel;
    double amp;
    double center_frac;
    double width_frac;
};

struct SynthTruth {
    // [class][variant][modality] -> components; one variant for unpaired
    // classes, two for paired ones
    std::vector<std::vector<std::array<std::vector<TemplateComponent>, 2>>> components;
    std::vector<int> pair_of;  // pair index per class, -1 when unpaired
};

SynthTruth synth_truth(const SynthConfig& cfg);

// The accuracy ceiling of any single-modality classifier on data generated
// with this kappa: paired classes collapse to coin flips.
double pair_collapse_ceiling(double cross_modal_fraction);

// ------------------------------------------------------------------- on-disk

// Layout: <dir>/manifest plus <dir>/trials/s<subject>_g<gesture>_r<rep>_<modality>.bin
// Binary: magic "BGD1", u32 channels, u32 samples, f32 data (channel-major,
// little-endian). The manifest carries a crc32 line per trial file.
void write_dataset(const Dataset& d, const std::string& dir);
Dataset read_dataset(const std::string& dir);

// ---------------------------------------------------------------- splitting

struct SplitSpec {
    std::set<int> train_repetitions;
    std::set<int> test_repetitions;

    void validate() const;  // disjoint, non-empty
};

std::pair<Dataset, Dataset> split_by_repetition(const Dataset& d, const SplitSpec& spec);

// Disjoint random channel groups of `group_size` from one modality, for the
// equal-data two-group experiments.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> channel_partition(
    const Dataset& d, const std::string& modality_name, std::size_t group_size, Rng& rng);

// Rebuild a two-modality dataset from channel subsets of existing modalities
// (possibly the same one twice), e.g. sEMG-sEMG, ACC-ACC, or sEMG-ACC pairs.
Dataset make_two_group_dataset(const Dataset& d, const std::string& modality_a,
                               const std::vector<std::size_t>& channels_a,
                               const std::string& modality_b,
                               const std::vector<std::size_t>& channels_b);

std::uint32_t crc32(const void* bytes, std::size_t len);

}  // namespace biofuse::data
