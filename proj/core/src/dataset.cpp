#include "biofuse/dataset.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "biofuse/errors.hpp"

namespace fs = std::filesystem;

namespace biofuse::data {

std::uint32_t crc32(const void* bytes, std::size_t len) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    const auto* p = static_cast<const unsigned char*>(bytes);
    std::uint32_t c = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i) c = table[(c ^ p[i]) & 0xFFu] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

std::size_t DatasetManifest::modality_index(const std::string& name) const {
    for (std::size_t i = 0; i < modalities.size(); ++i) {
        if (modalities[i].name == name) return i;
    }
    throw UsageError("dataset has no modality named '" + name + "'");
}

void Dataset::validate() const {
    if (manifest.classes <= 0) throw UsageError("dataset: classes must be positive");
    if (manifest.modalities.empty()) throw UsageError("dataset: no modalities");
    for (const auto& trial : trials) {
        if (trial.recordings.size() != manifest.modalities.size()) {
            throw UsageError("dataset: trial is missing modalities");
        }
        if (trial.gesture < 0 || trial.gesture >= manifest.classes) {
            throw UsageError("dataset: gesture label " + std::to_string(trial.gesture) +
                             " outside [0, " + std::to_string(manifest.classes) + ")");
        }
        for (std::size_t m = 0; m < trial.recordings.size(); ++m) {
            const auto& rec = trial.recordings[m];
            const auto& info = manifest.modalities[m];
            rec.validate();
            if (rec.channels != info.channels || rec.fs != info.fs || rec.modality != info.kind) {
                throw UsageError("dataset: trial recording does not match manifest modality '" +
                                 info.name + "'");
            }
        }
    }
}

void Dataset::quantize_f32() {
    for (auto& trial : trials) {
        for (auto& rec : trial.recordings) {
            for (auto& v : rec.samples) v = static_cast<double>(static_cast<float>(v));
        }
    }
}

// ------------------------------------------------------------------ on-disk

namespace {

constexpr char kMagic[4] = {'B', 'G', 'D', '1'};

std::string trial_file_name(const Trial& t, const std::string& modality) {
    std::ostringstream os;
    os << "s" << t.subject << "_g" << t.gesture << "_r" << t.repetition << "_" << modality
       << ".bin";
    return os.str();
}

void append_u32(std::string& buf, std::uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);  // little-endian layout on all supported targets
    buf.append(b, 4);
}

std::string encode_trial_file(const SignalRecording& rec) {
    std::string buf;
    const std::size_t T = rec.num_samples();
    buf.reserve(12 + 4 * rec.samples.size());
    buf.append(kMagic, 4);
    append_u32(buf, static_cast<std::uint32_t>(rec.channels));
    append_u32(buf, static_cast<std::uint32_t>(T));
    for (const double v : rec.samples) {
        const auto f = static_cast<float>(v);
        char b[4];
        std::memcpy(b, &f, 4);
        buf.append(b, 4);
    }
    return buf;
}

struct TrialKey {
    int subject, gesture, repetition;
    auto operator<=>(const TrialKey&) const = default;
};

// s<subject>_g<gesture>_r<rep>_<modality>.bin
bool parse_trial_file_name(const std::string& name, TrialKey& key, std::string& modality) {
    if (name.size() < 5 || !name.ends_with(".bin") || name[0] != 's') return false;
    const std::string stem = name.substr(0, name.size() - 4);
    std::size_t pos = 1;
    auto read_int = [&](char prefix, int& out) {
        if (prefix != '\0') {
            if (pos >= stem.size() || stem[pos] != prefix) return false;
            ++pos;
        }
        std::size_t start = pos;
        while (pos < stem.size() && (std::isdigit(stem[pos]) || stem[pos] == '-')) ++pos;
        if (pos == start) return false;
        out = std::stoi(stem.substr(start, pos - start));
        return true;
    };
    if (!read_int('\0', key.subject)) return false;
    if (pos >= stem.size() || stem[pos++] != '_') return false;
    if (!read_int('g', key.gesture)) return false;
    if (pos >= stem.size() || stem[pos++] != '_') return false;
    if (!read_int('r', key.repetition)) return false;
    if (pos >= stem.size() || stem[pos++] != '_') return false;
    modality = stem.substr(pos);
    return !modality.empty();
}

}  // namespace

void write_dataset(const Dataset& d, const std::string& dir) {
    d.validate();
    fs::create_directories(fs::path(dir) / "trials");

    std::vector<const Trial*> ordered;
    ordered.reserve(d.trials.size());
    for (const auto& t : d.trials) ordered.push_back(&t);
    std::sort(ordered.begin(), ordered.end(), [](const Trial* a, const Trial* b) {
        return std::tie(a->subject, a->gesture, a->repetition) <
               std::tie(b->subject, b->gesture, b->repetition);
    });

    std::ostringstream man;
    man << "format bgd\n";
    man << "version 1\n";
    man << "classes " << d.manifest.classes << "\n";
    man << "subjects";
    for (const int s : d.manifest.subjects) man << " " << s;
    man << "\n";
    for (const auto& m : d.manifest.modalities) {
        man << "modality " << m.name << " kind " << to_string(m.kind) << " channels "
            << m.channels << " fs " << m.fs << "\n";
    }

    for (const Trial* t : ordered) {
        for (std::size_t m = 0; m < d.manifest.modalities.size(); ++m) {
            const std::string name = trial_file_name(*t, d.manifest.modalities[m].name);
            const std::string payload = encode_trial_file(t->recordings[m]);
            std::ofstream out(fs::path(dir) / "trials" / name, std::ios::binary);
            if (!out) throw IoError("write_dataset: cannot open " + name);
            out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
            if (!out) throw IoError("write_dataset: short write to " + name);

            char hex[16];
            std::snprintf(hex, sizeof hex, "%08x", crc32(payload.data(), payload.size()));
            man << "trial " << name << " crc32 " << hex << "\n";
        }
    }

    std::ofstream mf(fs::path(dir) / "manifest");
    if (!mf) throw IoError("write_dataset: cannot open manifest in " + dir);
    mf << man.str();
}

Dataset read_dataset(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest");
    if (!mf) throw IoError("read_dataset: no manifest in " + dir);

    Dataset d;
    std::vector<std::pair<std::string, std::uint32_t>> files;
    std::string line;
    int line_no = 0;
    while (std::getline(mf, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        std::string key;
        is >> key;
        auto malformed = [&](const std::string& why) {
            return IoError("read_dataset: malformed manifest line " + std::to_string(line_no) +
                           " (" + why + ")");
        };
        if (key == "format") {
            std::string v;
            is >> v;
            if (v != "bgd") throw malformed("unknown format '" + v + "'");
        } else if (key == "version") {
            int v = 0;
            is >> v;
            if (v != 1) throw malformed("unsupported version " + std::to_string(v));
        } else if (key == "classes") {
            if (!(is >> d.manifest.classes)) throw malformed("classes");
        } else if (key == "subjects") {
            int s;
            while (is >> s) d.manifest.subjects.push_back(s);
        } else if (key == "modality") {
            ModalityInfo info;
            std::string kw_kind, kind, kw_ch, kw_fs;
            if (!(is >> info.name >> kw_kind >> kind >> kw_ch >> info.channels >> kw_fs >>
                  info.fs) ||
                kw_kind != "kind" || kw_ch != "channels" || kw_fs != "fs") {
                throw malformed("modality");
            }
            info.kind = modality_from_string(kind);
            d.manifest.modalities.push_back(info);
        } else if (key == "trial") {
            std::string name, kw;
            std::string hex;
            if (!(is >> name >> kw >> hex) || kw != "crc32") throw malformed("trial");
            files.emplace_back(name, static_cast<std::uint32_t>(std::stoul(hex, nullptr, 16)));
        } else {
            throw malformed("unknown key '" + key + "'");
        }
    }

    std::map<TrialKey, Trial> trials;
    for (const auto& [name, expected_crc] : files) {
        TrialKey key{};
        std::string modality;
        if (!parse_trial_file_name(name, key, modality)) {
            throw IoError("read_dataset: unparseable trial file name '" + name + "'");
        }
        const std::size_t mod_idx = d.manifest.modality_index(modality);
        const auto& info = d.manifest.modalities[mod_idx];

        const fs::path path = fs::path(dir) / "trials" / name;
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("read_dataset: missing trial file " + name);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

        const std::uint32_t actual_crc = crc32(bytes.data(), bytes.size());
        if (actual_crc != expected_crc) {
            char buf[128];
            std::snprintf(buf, sizeof buf, "checksum mismatch (stored %08x, computed %08x)",
                          expected_crc, actual_crc);
            throw IoError("read_dataset: " + name + ": " + buf);
        }
        if (bytes.size() < 12) {
            throw IoError("read_dataset: " + name + ": truncated header, expected 12 bytes, got " +
                          std::to_string(bytes.size()));
        }
        if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
            throw IoError("read_dataset: " + name + ": bad magic bytes");
        }
        std::uint32_t channels = 0, samples = 0;
        std::memcpy(&channels, bytes.data() + 4, 4);
        std::memcpy(&samples, bytes.data() + 8, 4);
        const std::size_t expected_size = 12 + 4ull * channels * samples;
        if (bytes.size() != expected_size) {
            throw IoError("read_dataset: " + name + ": expected " +
                          std::to_string(expected_size) + " bytes, got " +
                          std::to_string(bytes.size()) + " at offset 12");
        }
        if (channels != info.channels) {
            throw IoError("read_dataset: " + name + ": channel count " +
                          std::to_string(channels) + " does not match manifest (" +
                          std::to_string(info.channels) + ")");
        }

        SignalRecording rec;
        rec.modality = info.kind;
        rec.channels = channels;
        rec.fs = info.fs;
        rec.subject = key.subject;
        rec.gesture = key.gesture;
        rec.repetition = key.repetition;
        rec.samples.resize(static_cast<std::size_t>(channels) * samples);
        for (std::size_t i = 0; i < rec.samples.size(); ++i) {
            float f;
            std::memcpy(&f, bytes.data() + 12 + 4 * i, 4);
            rec.samples[i] = static_cast<double>(f);
        }

        auto& trial = trials[key];
        if (trial.recordings.empty()) {
            trial.subject = key.subject;
            trial.gesture = key.gesture;
            trial.repetition = key.repetition;
            trial.recordings.resize(d.manifest.modalities.size());
        }
        trial.recordings[mod_idx] = std::move(rec);
    }

    for (auto& [key, trial] : trials) {
        for (std::size_t m = 0; m < trial.recordings.size(); ++m) {
            if (trial.recordings[m].channels == 0) {
                throw IoError("read_dataset: trial s" + std::to_string(key.subject) + "_g" +
                              std::to_string(key.gesture) + "_r" + std::to_string(key.repetition) +
                              " is missing modality '" + d.manifest.modalities[m].name + "'");
            }
        }
        d.trials.push_back(std::move(trial));
    }
    d.validate();
    return d;
}

// --------------------------------------------------------------- splitting

void SplitSpec::validate() const {
    if (train_repetitions.empty() || test_repetitions.empty()) {
        throw UsageError("split: train and test repetition sets must be non-empty");
    }
    for (const int r : train_repetitions) {
        if (test_repetitions.count(r)) {
            throw UsageError("split: repetition " + std::to_string(r) +
                             " appears in both train and test");
        }
    }
}

std::pair<Dataset, Dataset> split_by_repetition(const Dataset& d, const SplitSpec& spec) {
    spec.validate();
    std::set<int> present;
    for (const auto& t : d.trials) present.insert(t.repetition);
    for (const auto* group : {&spec.train_repetitions, &spec.test_repetitions}) {
        for (const int r : *group) {
            if (!present.count(r)) {
                throw UsageError("split: repetition " + std::to_string(r) +
                                 " not present in dataset");
            }
        }
    }

    Dataset train, test;
    train.manifest = d.manifest;
    test.manifest = d.manifest;
    for (const auto& t : d.trials) {
        if (spec.train_repetitions.count(t.repetition)) {
            train.trials.push_back(t);
        } else if (spec.test_repetitions.count(t.repetition)) {
            test.trials.push_back(t);
        }
    }
    return {std::move(train), std::move(test)};
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> channel_partition(
    const Dataset& d, const std::string& modality_name, std::size_t group_size, Rng& rng) {
    const auto idx = d.manifest.modality_index(modality_name);
    const std::size_t channels = d.manifest.modalities[idx].channels;
    if (group_size == 0 || 2 * group_size > channels) {
        throw UsageError("channel_partition: cannot draw two groups of " +
                         std::to_string(group_size) + " from " + std::to_string(channels) +
                         " channels");
    }
    std::vector<std::size_t> order(channels);
    for (std::size_t i = 0; i < channels; ++i) order[i] = i;
    for (std::size_t i = channels - 1; i > 0; --i) {
        const std::size_t j = rng.uniform_int(i + 1);
        std::swap(order[i], order[j]);
    }
    std::vector<std::size_t> a(order.begin(), order.begin() + group_size);
    std::vector<std::size_t> b(order.begin() + group_size, order.begin() + 2 * group_size);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return {std::move(a), std::move(b)};
}

namespace {

SignalRecording extract_channels(const SignalRecording& rec,
                                 const std::vector<std::size_t>& channels) {
    const std::size_t T = rec.num_samples();
    SignalRecording out = rec;
    out.channels = channels.size();
    out.samples.resize(channels.size() * T);
    for (std::size_t i = 0; i < channels.size(); ++i) {
        if (channels[i] >= rec.channels) {
            throw UsageError("channel index " + std::to_string(channels[i]) + " out of range");
        }
        std::copy(rec.samples.begin() + channels[i] * T, rec.samples.begin() + (channels[i] + 1) * T,
                  out.samples.begin() + i * T);
    }
    return out;
}

}  // namespace

Dataset make_two_group_dataset(const Dataset& d, const std::string& modality_a,
                               const std::vector<std::size_t>& channels_a,
                               const std::string& modality_b,
                               const std::vector<std::size_t>& channels_b) {
    const std::size_t ia = d.manifest.modality_index(modality_a);
    const std::size_t ib = d.manifest.modality_index(modality_b);

    Dataset out;
    out.manifest.classes = d.manifest.classes;
    out.manifest.subjects = d.manifest.subjects;
    out.manifest.modalities = {
        ModalityInfo{"a_" + modality_a, d.manifest.modalities[ia].kind, channels_a.size(),
                     d.manifest.modalities[ia].fs},
        ModalityInfo{"b_" + modality_b, d.manifest.modalities[ib].kind, channels_b.size(),
                     d.manifest.modalities[ib].fs},
    };
    out.trials.reserve(d.trials.size());
    for (const auto& t : d.trials) {
        Trial nt;
        nt.subject = t.subject;
        nt.gesture = t.gesture;
        nt.repetition = t.repetition;
        nt.recordings.push_back(extract_channels(t.recordings[ia], channels_a));
        nt.recordings.push_back(extract_channels(t.recordings[ib], channels_b));
        out.trials.push_back(std::move(nt));
    }
    out.validate();
    return out;
}

}  // namespace biofuse::data
