#include "biofuse/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "biofuse/dataset.hpp"
#include "biofuse/errors.hpp"
#include "biofuse/jsonl.hpp"
#include "biofuse/masking.hpp"
#include "biofuse/model.hpp"
#include "biofuse/prep.hpp"
#include "biofuse/stats.hpp"
#include "biofuse/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace biofuse::experiment {

namespace {

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("short write to " + path.string());
}

void write_timestamps(const fs::path& dir, const std::string& started,
                      const std::string& finished) {
    std::ofstream out(dir / "timestamps.txt");
    out << "started " << started << "\nfinished " << finished << "\n";
}

std::string now_iso() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[64];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

std::string resolved_out(const config::KeyValueConfig& cfg, const Overrides& ov) {
    if (ov.out) return *ov.out;
    return cfg.get_string("out");
}

data::SynthConfig synth_config_from(const config::KeyValueConfig& cfg, const Overrides& ov) {
    data::SynthConfig sc;
    sc.classes = static_cast<int>(cfg.get_int("classes", sc.classes));
    sc.subjects = static_cast<int>(cfg.get_int("subjects", sc.subjects));
    sc.channels_a = static_cast<std::size_t>(cfg.get_int("channels_a", 4));
    sc.channels_b = static_cast<std::size_t>(cfg.get_int("channels_b", 4));
    sc.fs_a = cfg.get_double("fs_a", sc.fs_a);
    sc.fs_b = cfg.get_double("fs_b", sc.fs_b);
    sc.duration_s = cfg.get_double("duration", sc.duration_s);
    sc.repetitions = static_cast<int>(cfg.get_int("repetitions", sc.repetitions));
    sc.seed = ov.seed.value_or(cfg.get_u64("seed", sc.seed));
    sc.cross_modal_fraction = cfg.get_double("cross_modal_fraction", sc.cross_modal_fraction);
    sc.snr_db = cfg.get_double("snr_db", sc.snr_db);
    sc.onset_jitter_s = cfg.get_double("onset_jitter", sc.onset_jitter_s);
    sc.name_a = cfg.get_string("name_a", sc.name_a);
    sc.name_b = cfg.get_string("name_b", sc.name_b);
    if (cfg.has("kind_a")) sc.kind_a = modality_from_string(cfg.get_string("kind_a"));
    if (cfg.has("kind_b")) sc.kind_b = modality_from_string(cfg.get_string("kind_b"));
    return sc;
}

const std::vector<std::string> kSynthKeys = {
    "classes",   "subjects",    "channels_a",           "channels_b", "fs_a",
    "fs_b",      "duration",    "repetitions",          "seed",       "cross_modal_fraction",
    "snr_db",    "onset_jitter", "name_a",              "name_b",     "kind_a",
    "kind_b",    "out"};

}  // namespace

void cmd_synth(const config::KeyValueConfig& cfg, const Overrides& ov) {
    cfg.check_schema({}, kSynthKeys);
    const std::string out = resolved_out(cfg, ov);
    const std::string started = now_iso();
    const data::SynthConfig sc = synth_config_from(cfg, ov);
    const data::Dataset d = data::synth_generate(sc);
    data::write_dataset(d, out);
    write_timestamps(out, started, now_iso());
}

// ------------------------------------------------------------------- prep

void cmd_prep(const config::KeyValueConfig& cfg, const Overrides& ov) {
    const std::string input = cfg.get_string("input");
    const data::Dataset d = data::read_dataset(input);

    std::vector<std::string> allowed = {"input",  "out",        "resample_fs", "normalize",
                                        "crop.mode", "crop.transient_s", "crop.start", "crop.end"};
    for (const auto& m : d.manifest.modalities) {
        allowed.push_back("filter." + m.name + ".kind");
        allowed.push_back("filter." + m.name + ".low");
        allowed.push_back("filter." + m.name + ".high");
        allowed.push_back("filter." + m.name + ".order");
        allowed.push_back("magnitude." + m.name);
    }
    cfg.check_schema({"input"}, allowed);

    prep::PrepConfig pc;
    pc.resample_fs = cfg.get_double("resample_fs", 0.0);
    pc.normalize = cfg.get_bool("normalize", true);
    const std::string crop = cfg.get_string("crop.mode", "transient");
    if (crop == "none") {
        pc.crop = prep::PrepConfig::Crop::None;
    } else if (crop == "transient") {
        pc.crop = prep::PrepConfig::Crop::Transient;
    } else if (crop == "steady") {
        pc.crop = prep::PrepConfig::Crop::Steady;
    } else {
        throw ConfigError("prep: crop.mode '" + crop + "' is not none|transient|steady");
    }
    pc.transient_s = cfg.get_double("crop.transient_s", 0.5);
    pc.steady_start_s = cfg.get_double("crop.start", 1.0);
    pc.steady_end_s = cfg.get_double("crop.end", 2.0);

    for (const auto& m : d.manifest.modalities) {
        prep::ModalityPrep mp;
        const std::string kind_key = "filter." + m.name + ".kind";
        const std::string kind = cfg.get_string(kind_key, "none");
        if (kind == "bandpass") {
            mp.filter = prep::ModalityPrep::Filter::BandPass;
            mp.low_hz = cfg.get_double("filter." + m.name + ".low");
            mp.high_hz = cfg.get_double("filter." + m.name + ".high");
        } else if (kind == "lowpass") {
            mp.filter = prep::ModalityPrep::Filter::LowPass;
            mp.low_hz = cfg.get_double("filter." + m.name + ".low");
        } else if (kind != "none") {
            throw ConfigError("prep: " + kind_key + " '" + kind + "' is not none|bandpass|lowpass");
        }
        mp.order = static_cast<int>(cfg.get_int("filter." + m.name + ".order", 4));
        mp.magnitude = cfg.get_bool("magnitude." + m.name, false);
        pc.per_modality[m.name] = mp;
    }

    const std::string out = resolved_out(cfg, ov);
    const std::string started = now_iso();
    data::Dataset processed = prep::prep_dataset(d, pc);
    processed.quantize_f32();
    data::write_dataset(processed, out);
    write_timestamps(out, started, now_iso());
}

// -------------------------------------------------------------------- run

namespace {

const std::vector<std::string> kRunKeys = {
    "dataset",        "out",
    "seeds",          "threads",
    "split.train",    "split.test",
    "model.family",   "model.streams",
    "model.embed_dim", "model.heads",
    "model.layers",   "model.ffn_dim",
    "model.mlp_hidden", "model.patch",
    "model.dropout",  "model.stage2_layers",
    "model.isonet_windowed", "model.anneal_horizon",
    "train.epochs",   "train.lr",
    "train.batch",    "train.weight_decay",
    "train.eval_every", "eval.zero_modality"};

struct RunPlan {
    data::Dataset dataset;
    data::SplitSpec split;
    models::ModelConfig model_cfg;
    train::TrainConfig train_cfg;
    std::vector<std::uint64_t> seeds;
    std::vector<std::size_t> stream_indices;  // manifest modality indices fed to the model
    bool zero_modality_eval = false;
    int threads = 1;
    std::string out;
};

std::vector<models::TrialInput> select_streams(const std::vector<models::TrialInput>& inputs,
                                               const std::vector<std::size_t>& stream_indices) {
    std::vector<models::TrialInput> out;
    out.reserve(inputs.size());
    for (const auto& in : inputs) {
        models::TrialInput sel;
        sel.label = in.label;
        sel.subject = in.subject;
        for (const auto idx : stream_indices) sel.modality_data.push_back(in.modality_data[idx]);
        out.push_back(std::move(sel));
    }
    return out;
}

RunPlan make_run_plan(const config::KeyValueConfig& cfg, const Overrides& ov) {
    cfg.check_schema({"dataset", "model.family", "train.epochs", "seeds"}, kRunKeys);

    RunPlan plan;
    plan.dataset = data::read_dataset(cfg.get_string("dataset"));
    plan.out = resolved_out(cfg, ov);
    plan.threads = ov.threads.value_or(static_cast<int>(cfg.get_int("threads", 1)));

    for (const auto s : cfg.get_int_list("split.train")) {
        plan.split.train_repetitions.insert(static_cast<int>(s));
    }
    if (cfg.has("split.test")) {
        for (const auto s : cfg.get_int_list("split.test")) {
            plan.split.test_repetitions.insert(static_cast<int>(s));
        }
    }

    if (ov.seed) {
        plan.seeds = {*ov.seed};
    } else {
        for (const auto s : cfg.get_int_list("seeds")) {
            plan.seeds.push_back(static_cast<std::uint64_t>(s));
        }
    }
    if (plan.seeds.empty()) throw ConfigError("run: at least one seed required");

    // model streams: default every manifest modality, in order
    std::vector<std::string> stream_names;
    if (cfg.has("model.streams")) {
        stream_names = cfg.get_string_list("model.streams");
    } else {
        for (const auto& m : plan.dataset.manifest.modalities) stream_names.push_back(m.name);
    }
    if (plan.dataset.trials.empty()) throw ConfigError("run: dataset has no trials");
    for (const auto& name : stream_names) {
        plan.stream_indices.push_back(plan.dataset.manifest.modality_index(name));
    }

    models::ModelConfig mc;
    mc.family = models::family_from_string(cfg.get_string("model.family"));
    mc.classes = plan.dataset.manifest.classes;
    for (const auto idx : plan.stream_indices) {
        const auto& info = plan.dataset.manifest.modalities[idx];
        const auto window = plan.dataset.trials[0].recordings[idx].num_samples();
        mc.modalities.push_back({info.name, info.channels, window});
    }
    mc.embed_dim = static_cast<std::size_t>(cfg.get_int("model.embed_dim", 512));
    mc.heads = static_cast<std::size_t>(cfg.get_int("model.heads", 8));
    mc.layers = static_cast<std::size_t>(cfg.get_int("model.layers", 5));
    mc.ffn_dim = static_cast<std::size_t>(cfg.get_int("model.ffn_dim", 128));
    mc.mlp_hidden = static_cast<std::size_t>(cfg.get_int("model.mlp_hidden", 200));
    mc.patch = static_cast<std::size_t>(cfg.get_int("model.patch", 40));
    mc.dropout = cfg.get_double("model.dropout", 0.1);
    mc.stage2_layers = static_cast<std::size_t>(cfg.get_int("model.stage2_layers", 2));
    mc.isonet_windowed = cfg.get_bool("model.isonet_windowed", false);
    mc.anneal_horizon = static_cast<int>(cfg.get_int("model.anneal_horizon", 750));
    mc.epochs = static_cast<int>(cfg.get_int("train.epochs"));
    mc.lr = cfg.get_double("train.lr", 4e-5);
    mc.validate();
    plan.model_cfg = mc;

    plan.train_cfg.epochs = mc.epochs;
    plan.train_cfg.lr = mc.lr;
    plan.train_cfg.batch = static_cast<std::size_t>(cfg.get_int("train.batch", 64));
    plan.train_cfg.weight_decay = cfg.get_double("train.weight_decay", 0.01);
    plan.train_cfg.anneal_horizon = mc.anneal_horizon;
    plan.train_cfg.eval_every = static_cast<int>(cfg.get_int("train.eval_every", 1));
    plan.zero_modality_eval = cfg.get_bool("eval.zero_modality", false);
    return plan;
}

std::string history_jsonl(const train::History& history) {
    std::ostringstream os;
    for (const auto& rec : history) {
        jsonl::Record r;
        r.field("schema_version", 1)
            .field("epoch", rec.epoch)
            .field("loss_cls", rec.loss_cls)
            .field("loss_avg", rec.loss_avg)
            .field("lambda", rec.lambda)
            .field("test_acc", rec.test_acc)
            .field("avg_head_grad_norm", rec.avg_head_grad_norm);
        os << r.str() << "\n";
    }
    return os.str();
}

std::string eval_record(const std::string& condition, const train::EvalResult& res) {
    jsonl::Record r;
    std::vector<int> subjects;
    std::vector<double> accs;
    for (const auto& s : res.per_subject) {
        subjects.push_back(s.subject);
        accs.push_back(s.accuracy);
    }
    r.field("schema_version", 1)
        .field("condition", condition)
        .field_array("subjects", subjects)
        .field_array("accs", accs)
        .field("mean_acc", res.mean_subject_accuracy)
        .field("overall_acc", res.overall_accuracy)
        .field("correct", static_cast<std::int64_t>(res.correct))
        .field("total", static_cast<std::int64_t>(res.total));
    return r.str();
}

void run_one_seed(const RunPlan& plan, std::uint64_t seed,
                  const std::vector<models::TrialInput>& train_inputs,
                  const std::vector<models::TrialInput>& test_inputs) {
    Rng init_rng = Rng(seed).fork("init");
    auto model = models::build_model(plan.model_cfg, init_rng);

    train::TrainConfig tc = plan.train_cfg;
    tc.seed = seed;
    const train::History history = train::train_model(*model, train_inputs, test_inputs, tc);

    const fs::path dir = fs::path(plan.out) / ("seed" + std::to_string(seed));
    fs::create_directories(dir);
    models::save_checkpoint(*model, (dir / "checkpoint.bin").string());
    write_text(dir / "history.jsonl", history_jsonl(history));

    std::ostringstream ev;
    if (!test_inputs.empty()) {
        ev << eval_record("baseline", train::evaluate(*model, test_inputs)) << "\n";
        if (plan.zero_modality_eval) {
            for (std::size_t m = 0; m < plan.model_cfg.modalities.size(); ++m) {
                ev << eval_record("zeroed_" + plan.model_cfg.modalities[m].name,
                                  train::zero_modality_eval(*model, test_inputs, m))
                   << "\n";
            }
        }
    }
    write_text(dir / "eval.jsonl", ev.str());
}

}  // namespace

void cmd_run(const config::KeyValueConfig& cfg, const Overrides& ov) {
    const std::string started = now_iso();
    RunPlan plan = make_run_plan(cfg, ov);

    auto [train_ds, test_ds] = data::split_by_repetition(plan.dataset, plan.split);
    const auto train_all = train::trial_inputs(train_ds);
    const auto test_all = train::trial_inputs(test_ds);
    const auto train_inputs = select_streams(train_all, plan.stream_indices);
    const auto test_inputs = select_streams(test_all, plan.stream_indices);

    fs::create_directories(plan.out);

    const int workers = std::max(1, std::min<int>(plan.threads,
                                                  static_cast<int>(plan.seeds.size())));
    if (workers == 1) {
        for (const auto seed : plan.seeds) {
            run_one_seed(plan, seed, train_inputs, test_inputs);
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::mutex err_mutex;
        std::exception_ptr first_error;
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&]() {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= plan.seeds.size()) return;
                    try {
                        run_one_seed(plan, plan.seeds[i], train_inputs, test_inputs);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(err_mutex);
                        if (!first_error) first_error = std::current_exception();
                        return;
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
        if (first_error) std::rethrow_exception(first_error);
    }

    // resolved configuration echo; deterministic bytes
    std::ostringstream echo;
    echo << "command run\nschema_version 1\n";
    for (const auto& [k, v] : cfg.values()) echo << k << " " << v << "\n";
    write_text(fs::path(plan.out) / "run_config.txt", echo.str());
    write_timestamps(plan.out, started, now_iso());
}

// ------------------------------------------------------------- eval/ablate

namespace {

const std::vector<std::string> kEvalKeys = {"checkpoint", "dataset",   "out",
                                            "split.test", "zero_modality", "model.streams"};

struct EvalPlan {
    std::unique_ptr<models::Model> model;
    std::vector<models::TrialInput> test_inputs;
    std::string out;
};

EvalPlan make_eval_plan(const config::KeyValueConfig& cfg, const Overrides& ov,
                        const std::vector<std::string>& allowed) {
    cfg.check_schema({"checkpoint", "dataset"}, allowed);

    EvalPlan plan;
    const std::string ckpt = cfg.get_string("checkpoint");
    if (!fs::exists(ckpt)) throw ConfigError("checkpoint '" + ckpt + "' does not exist");
    plan.model = models::load_checkpoint(ckpt);
    const data::Dataset d = data::read_dataset(cfg.get_string("dataset"));

    std::vector<models::TrialInput> inputs;
    if (cfg.has("split.test")) {
        data::SplitSpec split;
        for (const auto s : cfg.get_int_list("split.test")) {
            split.test_repetitions.insert(static_cast<int>(s));
        }
        split.train_repetitions.insert(-1);  // placeholder; only the test side is used
        data::Dataset test_ds;
        test_ds.manifest = d.manifest;
        for (const auto& t : d.trials) {
            if (split.test_repetitions.count(t.repetition)) test_ds.trials.push_back(t);
        }
        if (test_ds.trials.empty()) throw ConfigError("eval: split.test selects no trials");
        inputs = train::trial_inputs(test_ds);
    } else {
        inputs = train::trial_inputs(d);
    }

    // map model streams onto manifest modalities by name
    std::vector<std::size_t> stream_indices;
    for (const auto& m : plan.model->config().modalities) {
        stream_indices.push_back(d.manifest.modality_index(m.name));
    }
    plan.test_inputs = select_streams(inputs, stream_indices);
    plan.out = resolved_out(cfg, ov);
    return plan;
}

}  // namespace

void cmd_eval(const config::KeyValueConfig& cfg, const Overrides& ov) {
    const std::string started = now_iso();
    EvalPlan plan = make_eval_plan(cfg, ov, kEvalKeys);

    std::ostringstream out;
    out << eval_record("baseline", train::evaluate(*plan.model, plan.test_inputs)) << "\n";
    if (cfg.get_bool("zero_modality", false)) {
        for (std::size_t m = 0; m < plan.model->config().modalities.size(); ++m) {
            out << eval_record("zeroed_" + plan.model->config().modalities[m].name,
                               train::zero_modality_eval(*plan.model, plan.test_inputs, m))
                << "\n";
        }
    }
    write_text(fs::path(plan.out) / "eval.jsonl", out.str());
    write_timestamps(plan.out, started, now_iso());
}

void cmd_ablate(const config::KeyValueConfig& cfg, const Overrides& ov) {
    const std::string started = now_iso();
    const std::vector<std::string> keys = {"checkpoint", "dataset", "out", "split.test",
                                           "factor"};
    EvalPlan plan = make_eval_plan(cfg, ov, keys);

    std::optional<std::size_t> factor;
    if (ov.factor) {
        factor = *ov.factor;
    } else if (cfg.has("factor")) {
        factor = static_cast<std::size_t>(cfg.get_int("factor"));
    }

    const masking::AblationReport report =
        masking::run_ablation_suite(*plan.model, plan.test_inputs, factor);
    write_text(fs::path(plan.out) / "ablation.jsonl", report.to_jsonl());
    write_text(fs::path(plan.out) / "ablation_table.txt", report.to_table());
    write_timestamps(plan.out, started, now_iso());
}

// ------------------------------------------------------------------ stats

namespace {

std::vector<double> accs_for_condition(const std::string& file, const std::string& condition) {
    std::ifstream in(file);
    if (!in) throw ConfigError("stats: cannot open '" + file + "'");
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw IoError("stats: bad JSON line in " + file);
        if (j.value("condition", "") == condition) {
            std::vector<double> accs;
            for (const auto& a : j.at("accs")) accs.push_back(a.get<double>());
            if (accs.empty()) throw IoError("stats: no accuracies under condition '" + condition +
                                            "' in " + file);
            return accs;
        }
    }
    throw ConfigError("stats: file '" + file + "' has no condition '" + condition + "'");
}

}  // namespace

void cmd_stats(const std::vector<std::string>& eval_files, const std::string& condition,
               std::size_t factor, const std::string& out_path) {
    if (eval_files.size() < 2) {
        throw ConfigError("stats: need a baseline file plus at least one comparison file");
    }
    const std::vector<double> baseline = accs_for_condition(eval_files[0], condition);

    std::ostringstream os;
    for (std::size_t i = 1; i < eval_files.size(); ++i) {
        const std::vector<double> other = accs_for_condition(eval_files[i], condition);
        const stats::TestResult res = stats::compare(other, baseline, factor);
        jsonl::Record r;
        r.field("schema_version", 1)
            .field("baseline", eval_files[0])
            .field("comparison", eval_files[i])
            .field("condition", condition)
            .field("u", res.u)
            .field("p_raw", res.p_raw)
            .field("p_corr", res.p_corr)
            .field("symbol", res.symbol)
            .field("method", res.method)
            .field("factor", static_cast<std::int64_t>(factor));
        os << r.str() << "\n";
    }
    if (out_path.empty()) {
        std::fputs(os.str().c_str(), stdout);
    } else {
        write_text(out_path, os.str());
    }
}

// ----------------------------------------------------------------- report

namespace {

struct Quartiles {
    double min, q1, median, q3, max, mean;
    std::size_t n;
};

Quartiles quartiles(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto q = [&](double p) {
        // linear interpolation between closest ranks
        const double idx = p * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(idx);
        const std::size_t hi = std::min(v.size() - 1, lo + 1);
        const double frac = idx - static_cast<double>(lo);
        return v[lo] * (1.0 - frac) + v[hi] * frac;
    };
    double mean = 0.0;
    for (const double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    return {v.front(), q(0.25), q(0.5), q(0.75), v.back(), mean, v.size()};
}

}  // namespace

void cmd_report(const std::string& results_dir, const std::string& out_dir) {
    if (!fs::exists(results_dir)) {
        throw ConfigError("report: results directory '" + results_dir + "' does not exist");
    }

    // every eval.jsonl under the results tree, in sorted path order
    std::vector<fs::path> eval_files;
    for (const auto& entry : fs::recursive_directory_iterator(results_dir)) {
        if (entry.is_regular_file() && entry.path().filename() == "eval.jsonl") {
            eval_files.push_back(entry.path());
        }
    }
    std::sort(eval_files.begin(), eval_files.end());
    if (eval_files.empty()) {
        throw ConfigError("report: no eval.jsonl artifacts under '" + results_dir + "'");
    }

    std::map<std::string, std::vector<double>> by_condition;       // pooled subject accs
    std::map<std::string, std::vector<double>> means_by_condition;  // one mean per eval record
    for (const auto& file : eval_files) {
        std::ifstream in(file);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const json j = json::parse(line, nullptr, false);
            if (j.is_discarded()) throw IoError("report: bad JSON line in " + file.string());
            const std::string condition = j.value("condition", "unknown");
            for (const auto& a : j.at("accs")) {
                by_condition[condition].push_back(a.get<double>());
            }
            means_by_condition[condition].push_back(j.at("mean_acc").get<double>());
        }
    }

    std::ostringstream box;
    box << "condition,n,min,q1,median,q3,max,mean\n";
    for (const auto& [condition, accs] : by_condition) {
        const Quartiles q = quartiles(accs);
        box << condition << "," << q.n << "," << jsonl::format_double(q.min) << ","
            << jsonl::format_double(q.q1) << "," << jsonl::format_double(q.median) << ","
            << jsonl::format_double(q.q3) << "," << jsonl::format_double(q.max) << ","
            << jsonl::format_double(q.mean) << "\n";
    }
    write_text(fs::path(out_dir) / "boxplot.csv", box.str());

    std::ostringstream zeroed;
    zeroed << "condition,mean_acc,records\n";
    std::ostringstream summary;
    summary << "Input conditions (averaged over evaluation records)\n";
    for (const auto& [condition, means] : means_by_condition) {
        double mean = 0.0;
        for (const double m : means) mean += m;
        mean /= static_cast<double>(means.size());
        zeroed << condition << "," << jsonl::format_double(mean) << "," << means.size() << "\n";
        char buf[160];
        std::snprintf(buf, sizeof buf, "  %-24s %.4f  (%zu records)\n", condition.c_str(), mean,
                      means.size());
        summary << buf;
    }
    write_text(fs::path(out_dir) / "zeroed.csv", zeroed.str());
    write_text(fs::path(out_dir) / "summary.txt", summary.str());
}

}  // namespace biofuse::experiment
