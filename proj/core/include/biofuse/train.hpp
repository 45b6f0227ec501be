#pragma once

#include <cstdint>
#include <vector>

#include "biofuse/dataset.hpp"
#include "biofuse/model.hpp"

namespace biofuse::train {

struct SubjectAccuracy {
    int subject = 0;
    double accuracy = 0.0;
    std::size_t n_trials = 0;
};

struct EvalResult {
    std::vector<SubjectAccuracy> per_subject;
    double mean_subject_accuracy = 0.0;
    double overall_accuracy = 0.0;
    std::size_t correct = 0;
    std::size_t total = 0;

    std::vector<double> subject_accuracies() const;
};

struct TrainConfig {
    int epochs = 0;
    double lr = 4e-5;
    double weight_decay = 0.01;
    std::size_t batch = 64;
    int anneal_horizon = 750;
    std::uint64_t seed = 1;
    int eval_every = 1;  // test accuracy cadence; other epochs repeat the last value
};

struct EpochRecord {
    int epoch = 0;
    double loss_cls = 0.0;
    double loss_avg = 0.0;
    double lambda = 1.0;
    double test_acc = 0.0;
    double avg_head_grad_norm = 0.0;  // summed over the epoch's steps
};

using History = std::vector<EpochRecord>;

// lambda(t) = min(1, t / T_anneal)
double lambda_at(int epoch, int anneal_horizon);

// lambda * cls + (1 - lambda) * avg; returns the cls (avg) tensor itself at
// the lambda = 1 (0) boundary so the silenced head receives exactly zero
// gradient.
autodiff::Tensor annealed_loss(const autodiff::Tensor& cls_loss,
                               const autodiff::Tensor& avg_loss, int epoch, int anneal_horizon);

// Flatten dataset trials into model inputs (manifest modality order).
std::vector<models::TrialInput> trial_inputs(const data::Dataset& d);

History train_model(models::Model& model, const std::vector<models::TrialInput>& train_set,
                    const std::vector<models::TrialInput>& test_set, const TrainConfig& cfg);

EvalResult evaluate(models::Model& model, const std::vector<models::TrialInput>& test_set,
                    const models::AttentionMaskFn& mask_fn = nullptr,
                    models::AttentionTap* tap = nullptr);

// Replace one modality's (post-preprocessing) input with zeros and evaluate;
// weights untouched.
EvalResult zero_modality_eval(models::Model& model,
                              const std::vector<models::TrialInput>& test_set,
                              std::size_t modality_index);

}  // namespace biofuse::train
