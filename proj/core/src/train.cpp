#include "biofuse/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "biofuse/errors.hpp"
#include "biofuse/optim.hpp"

namespace biofuse::train {

using autodiff::Tensor;

std::vector<double> EvalResult::subject_accuracies() const {
    std::vector<double> out;
    out.reserve(per_subject.size());
    for (const auto& s : per_subject) out.push_back(s.accuracy);
    return out;
}

double lambda_at(int epoch, int anneal_horizon) {
    if (anneal_horizon <= 0) throw UsageError("lambda_at: anneal horizon must be positive");
    if (epoch < 0) throw UsageError("lambda_at: epoch must be >= 0");
    if (epoch >= anneal_horizon) return 1.0;
    return static_cast<double>(epoch) / static_cast<double>(anneal_horizon);
}

Tensor annealed_loss(const Tensor& cls_loss, const Tensor& avg_loss, int epoch,
                     int anneal_horizon) {
    const double lambda = lambda_at(epoch, anneal_horizon);
    if (lambda == 1.0) return cls_loss;
    if (lambda == 0.0) return avg_loss;
    return autodiff::add(autodiff::scale(cls_loss, lambda),
                         autodiff::scale(avg_loss, 1.0 - lambda));
}

std::vector<models::TrialInput> trial_inputs(const data::Dataset& d) {
    d.validate();
    std::vector<models::TrialInput> out;
    out.reserve(d.trials.size());
    for (const auto& trial : d.trials) {
        models::TrialInput in;
        in.label = static_cast<std::size_t>(trial.gesture);
        in.subject = trial.subject;
        for (const auto& rec : trial.recordings) in.modality_data.push_back(rec.samples);
        out.push_back(std::move(in));
    }
    return out;
}

namespace {

double avg_head_grad_l2(const models::Model& model) {
    double acc = 0.0;
    for (const auto& name : model.avg_head_parameter_names()) {
        for (const double g : model.parameter(name).grad()) acc += g * g;
    }
    return std::sqrt(acc);
}

}  // namespace

History train_model(models::Model& model, const std::vector<models::TrialInput>& train_set,
                    const std::vector<models::TrialInput>& test_set, const TrainConfig& cfg) {
    if (train_set.empty()) throw UsageError("train: empty training set");
    if (cfg.epochs < 0) throw UsageError("train: epochs must be >= 0");
    if (cfg.batch == 0) throw UsageError("train: batch must be >= 1");

    const bool dual = model.config().family == models::ModelFamily::IsoNet;
    autodiff::AdamW opt(model.parameter_tensors(),
                        {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});

    Rng master(cfg.seed);
    Rng shuffle_rng = master.fork("shuffle");
    Rng dropout_rng = master.fork("dropout");

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    History history;
    history.reserve(static_cast<std::size_t>(cfg.epochs));
    double last_test_acc = 0.0;
    bool have_test_acc = false;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lambda = lambda_at(epoch, cfg.anneal_horizon);
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = shuffle_rng.uniform_int(i);
            std::swap(order[i - 1], order[j]);
        }

        double sum_cls = 0.0, sum_avg = 0.0, grad_norm_sum = 0.0;
        models::ForwardOptions fwd;
        fwd.training = true;
        fwd.rng = &dropout_rng;

        try {
            for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
                const std::size_t end = std::min(order.size(), start + cfg.batch);
                const auto bsz = static_cast<double>(end - start);

                opt.zero_grad();
                Tensor batch_cls, batch_avg;
                for (std::size_t k = start; k < end; ++k) {
                    const auto& sample = train_set[order[k]];
                    const models::ModelOutput out = model.forward(sample, fwd);
                    const Tensor ce_cls = autodiff::cross_entropy(out.cls_logits, sample.label);
                    batch_cls = batch_cls.defined() ? autodiff::add(batch_cls, ce_cls) : ce_cls;
                    if (dual) {
                        const Tensor ce_avg =
                            autodiff::cross_entropy(out.avg_logits, sample.label);
                        batch_avg = batch_avg.defined() ? autodiff::add(batch_avg, ce_avg)
                                                        : ce_avg;
                    }
                }
                batch_cls = autodiff::scale(batch_cls, 1.0 / bsz);
                if (dual) batch_avg = autodiff::scale(batch_avg, 1.0 / bsz);

                const Tensor loss =
                    dual ? annealed_loss(batch_cls, batch_avg, epoch, cfg.anneal_horizon)
                         : batch_cls;
                if (!std::isfinite(loss.item())) {
                    throw NumericError("non-finite loss");
                }
                loss.backward();
                if (dual) grad_norm_sum += avg_head_grad_l2(model);
                opt.step();

                sum_cls += batch_cls.item() * bsz;
                if (dual) sum_avg += batch_avg.item() * bsz;
            }
        } catch (const NumericError& e) {
            throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": " +
                               e.what());
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss_cls = sum_cls / static_cast<double>(train_set.size());
        rec.loss_avg = dual ? sum_avg / static_cast<double>(train_set.size()) : 0.0;
        rec.lambda = dual ? lambda : 1.0;
        rec.avg_head_grad_norm = grad_norm_sum;
        if (!test_set.empty() &&
            (!have_test_acc || cfg.eval_every <= 1 || epoch % cfg.eval_every == 0 ||
             epoch == cfg.epochs - 1)) {
            last_test_acc = evaluate(model, test_set).overall_accuracy;
            have_test_acc = true;
        }
        rec.test_acc = last_test_acc;
        history.push_back(rec);
    }
    return history;
}

EvalResult evaluate(models::Model& model, const std::vector<models::TrialInput>& test_set,
                    const models::AttentionMaskFn& mask_fn, models::AttentionTap* tap) {
    if (test_set.empty()) throw UsageError("evaluate: empty test set");

    models::ForwardOptions fwd;
    fwd.training = false;
    fwd.mask_fn = mask_fn;
    fwd.tap = tap;

    std::map<int, std::pair<std::size_t, std::size_t>> by_subject;  // correct, total
    std::size_t correct = 0;
    for (const auto& sample : test_set) {
        const models::ModelOutput out = model.forward(sample, fwd);
        const std::size_t pred = autodiff::argmax_row(out.cls_logits);
        auto& bucket = by_subject[sample.subject];
        ++bucket.second;
        if (pred == sample.label) {
            ++bucket.first;
            ++correct;
        }
    }

    EvalResult res;
    res.correct = correct;
    res.total = test_set.size();
    res.overall_accuracy = static_cast<double>(correct) / static_cast<double>(test_set.size());
    for (const auto& [subject, counts] : by_subject) {
        res.per_subject.push_back(
            {subject, static_cast<double>(counts.first) / static_cast<double>(counts.second),
             counts.second});
        res.mean_subject_accuracy += res.per_subject.back().accuracy;
    }
    res.mean_subject_accuracy /= static_cast<double>(res.per_subject.size());
    return res;
}

EvalResult zero_modality_eval(models::Model& model,
                              const std::vector<models::TrialInput>& test_set,
                              std::size_t modality_index) {
    if (modality_index >= model.config().modalities.size()) {
        throw UsageError("zero_modality_eval: modality index " + std::to_string(modality_index) +
                         " out of range for " +
                         std::to_string(model.config().modalities.size()) + " streams");
    }
    std::vector<models::TrialInput> zeroed = test_set;
    for (auto& sample : zeroed) {
        std::fill(sample.modality_data[modality_index].begin(),
                  sample.modality_data[modality_index].end(), 0.0);
    }
    return evaluate(model, zeroed);
}

}  // namespace biofuse::train
