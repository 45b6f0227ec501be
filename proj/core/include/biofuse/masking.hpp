#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "biofuse/model.hpp"
#include "biofuse/stats.hpp"
#include "biofuse/train.hpp"

namespace biofuse::masking {

enum class MaskMode { Individual, RFB, RFE };
enum class MaskType { Unimodal, CrossModal };

std::string to_string(MaskMode m);
std::string to_string(MaskType t);
MaskMode mask_mode_from_string(const std::string& s);
MaskType mask_type_from_string(const std::string& s);

// Which attention edges to silence, at which layers. Layers are 1-based.
struct EdgeMaskSpec {
    MaskMode mode = MaskMode::Individual;
    MaskType type = MaskType::Unimodal;
    std::size_t layer = 1;
    std::size_t total_layers = 1;

    void validate() const;
};

using Edge = std::pair<std::size_t, std::size_t>;  // (query token, key token)

// The three disjoint edge sets over token index pairs. Edges touching the
// CLS token are never masked, so the readout path always exists; the
// diagonal counts as unimodal (a token shares its own modality).
struct EdgePartition {
    std::size_t tokens = 0;
    std::vector<Edge> unimodal;
    std::vector<Edge> cross_modal;
    std::vector<Edge> cls;
};

EdgePartition classify_edges(const std::vector<models::TokenTag>& tags);

// Individual -> {l}; RFB -> {1..l}; RFE -> {l..L}.
std::vector<std::size_t> layers_for(const EdgeMaskSpec& spec);

// A single [H, T, T] mask with the given edges silenced on every head.
autodiff::BoolMask mask_from_edges(const std::vector<Edge>& edges, std::size_t heads,
                                   std::size_t tokens);

// Per-layer masks: the spec's edge set at each selected layer, nothing
// everywhere else. Index l-1 holds layer l.
using LayerMasks = std::vector<std::optional<autodiff::BoolMask>>;

LayerMasks materialize_mask(const EdgeMaskSpec& spec, const EdgePartition& partition,
                            std::size_t heads, std::size_t tokens, std::size_t total_layers);

// Wrap materialized masks as a pure callback for ForwardOptions.
models::AttentionMaskFn mask_callback(LayerMasks masks);

// 100 * (acc_masked - acc_baseline) / acc_baseline
double delta_percent(double acc_masked, double acc_baseline);

struct AblationCell {
    MaskMode mode;
    MaskType type;
    std::size_t layer;
    train::EvalResult eval;
    double delta_pct;
    stats::TestResult test;
};

struct AblationReport {
    train::EvalResult baseline;
    std::vector<AblationCell> cells;  // layer-major: (layer, type, mode)
    std::size_t total_layers = 0;
    std::size_t correction_factor = 0;
    bool factor_overridden = false;
    bool cls_edges_excluded = true;
    std::string model_family;

    std::string to_table() const;   // fixed-width grid, modes as column groups
    std::string to_jsonl() const;   // one cell per line plus a baseline line
};

// Full (mode x type x layer) grid on a trained model at inference; model
// weights are never touched.
AblationReport run_ablation_suite(models::Model& model,
                                  const std::vector<models::TrialInput>& test_set,
                                  std::optional<std::size_t> factor_override = std::nullopt);

}  // namespace biofuse::masking
