#include "biofuse/masking.hpp"

#include <cmath>
#include <cstdio>
#include <memory>
#include <sstream>

#include "biofuse/errors.hpp"
#include "biofuse/jsonl.hpp"

namespace biofuse::masking {

using autodiff::BoolMask;

std::string to_string(MaskMode m) {
    switch (m) {
        case MaskMode::Individual: return "individual";
        case MaskMode::RFB: return "rfb";
        case MaskMode::RFE: return "rfe";
    }
    return "individual";
}

std::string to_string(MaskType t) {
    return t == MaskType::Unimodal ? "unimodal" : "cross-modal";
}

MaskMode mask_mode_from_string(const std::string& s) {
    if (s == "individual") return MaskMode::Individual;
    if (s == "rfb") return MaskMode::RFB;
    if (s == "rfe") return MaskMode::RFE;
    throw ConfigError("unknown mask mode '" + s + "'");
}

MaskType mask_type_from_string(const std::string& s) {
    if (s == "unimodal" || s == "uni") return MaskType::Unimodal;
    if (s == "cross-modal" || s == "cross") return MaskType::CrossModal;
    throw ConfigError("unknown mask type '" + s + "'");
}

void EdgeMaskSpec::validate() const {
    if (layer < 1 || layer > total_layers) {
        throw UsageError("mask spec: layer " + std::to_string(layer) + " outside 1.." +
                         std::to_string(total_layers));
    }
}

EdgePartition classify_edges(const std::vector<models::TokenTag>& tags) {
    std::size_t cls_count = 0;
    for (const auto t : tags) {
        if (t == models::TokenTag::Cls) ++cls_count;
    }
    if (cls_count != 1) {
        throw UsageError("classify_edges: expected exactly one CLS tag, got " +
                         std::to_string(cls_count));
    }

    EdgePartition part;
    part.tokens = tags.size();
    for (std::size_t i = 0; i < tags.size(); ++i) {
        for (std::size_t j = 0; j < tags.size(); ++j) {
            if (tags[i] == models::TokenTag::Cls || tags[j] == models::TokenTag::Cls) {
                part.cls.emplace_back(i, j);
            } else if (tags[i] == tags[j]) {
                part.unimodal.emplace_back(i, j);
            } else {
                part.cross_modal.emplace_back(i, j);
            }
        }
    }
    return part;
}

std::vector<std::size_t> layers_for(const EdgeMaskSpec& spec) {
    spec.validate();
    std::vector<std::size_t> out;
    switch (spec.mode) {
        case MaskMode::Individual:
            out.push_back(spec.layer);
            break;
        case MaskMode::RFB:
            for (std::size_t l = 1; l <= spec.layer; ++l) out.push_back(l);
            break;
        case MaskMode::RFE:
            for (std::size_t l = spec.layer; l <= spec.total_layers; ++l) out.push_back(l);
            break;
    }
    return out;
}

BoolMask mask_from_edges(const std::vector<Edge>& edges, std::size_t heads, std::size_t tokens) {
    BoolMask mask = BoolMask::falses({heads, tokens, tokens});
    for (const auto& [i, j] : edges) {
        if (i >= tokens || j >= tokens) {
            throw UsageError("mask_from_edges: edge (" + std::to_string(i) + "," +
                             std::to_string(j) + ") outside " + std::to_string(tokens) +
                             " tokens");
        }
        for (std::size_t h = 0; h < heads; ++h) {
            mask.set((h * tokens + i) * tokens + j, true);
        }
    }
    return mask;
}

LayerMasks materialize_mask(const EdgeMaskSpec& spec, const EdgePartition& partition,
                            std::size_t heads, std::size_t tokens, std::size_t total_layers) {
    spec.validate();
    if (spec.total_layers != total_layers) {
        throw UsageError("materialize_mask: spec covers " + std::to_string(spec.total_layers) +
                         " layers, model has " + std::to_string(total_layers));
    }
    if (partition.tokens != tokens) {
        throw UsageError("materialize_mask: partition over " + std::to_string(partition.tokens) +
                         " tokens, model has " + std::to_string(tokens));
    }
    const auto& edges =
        spec.type == MaskType::Unimodal ? partition.unimodal : partition.cross_modal;
    const BoolMask layer_mask = mask_from_edges(edges, heads, tokens);

    LayerMasks masks(total_layers);
    for (const std::size_t l : layers_for(spec)) masks[l - 1] = layer_mask;
    return masks;
}

models::AttentionMaskFn mask_callback(LayerMasks masks) {
    auto shared = std::make_shared<const LayerMasks>(std::move(masks));
    return [shared](std::size_t layer, const autodiff::Tensor&) -> std::optional<BoolMask> {
        if (layer == 0 || layer > shared->size()) return std::nullopt;
        return (*shared)[layer - 1];
    };
}

double delta_percent(double acc_masked, double acc_baseline) {
    if (acc_baseline <= 0.0) {
        throw UsageError("delta_percent: baseline accuracy must be positive");
    }
    return 100.0 * (acc_masked - acc_baseline) / acc_baseline;
}

AblationReport run_ablation_suite(models::Model& model,
                                  const std::vector<models::TrialInput>& test_set,
                                  std::optional<std::size_t> factor_override) {
    const auto info = model.maskable();
    if (!info) {
        throw UsageError("ablation: model family '" + to_string(model.config().family) +
                         "' exposes no maskable multimodal attention stage");
    }
    const EdgePartition partition = classify_edges(info->tags);

    // weights must be identical before and after the whole suite
    std::vector<double> weight_snapshot;
    for (const auto& p : model.parameters()) {
        weight_snapshot.insert(weight_snapshot.end(), p.tensor.values().begin(),
                               p.tensor.values().end());
    }

    AblationReport report;
    report.total_layers = info->layers;
    report.model_family = to_string(model.config().family);
    report.baseline = train::evaluate(model, test_set);

    const std::size_t n_cells = 3 * 2 * info->layers;
    report.correction_factor = factor_override.value_or(n_cells);
    report.factor_overridden = factor_override.has_value();

    const std::vector<double> baseline_accs = report.baseline.subject_accuracies();
    for (std::size_t layer = 1; layer <= info->layers; ++layer) {
        for (const MaskType type : {MaskType::Unimodal, MaskType::CrossModal}) {
            for (const MaskMode mode : {MaskMode::Individual, MaskMode::RFB, MaskMode::RFE}) {
                const EdgeMaskSpec spec{mode, type, layer, info->layers};
                LayerMasks masks = materialize_mask(spec, partition, model.config().heads,
                                                    info->tokens, info->layers);
                AblationCell cell;
                cell.mode = mode;
                cell.type = type;
                cell.layer = layer;
                try {
                    cell.eval = train::evaluate(model, test_set, mask_callback(std::move(masks)));
                } catch (const std::exception& e) {
                    throw UsageError("ablation cell (" + to_string(mode) + ", " +
                                     to_string(type) + ", L" + std::to_string(layer) +
                                     "): " + e.what());
                }
                cell.delta_pct = delta_percent(cell.eval.mean_subject_accuracy,
                                               report.baseline.mean_subject_accuracy);
                cell.test = stats::compare(cell.eval.subject_accuracies(), baseline_accs,
                                           report.correction_factor);
                report.cells.push_back(std::move(cell));
            }
        }
    }

    std::size_t off = 0;
    for (const auto& p : model.parameters()) {
        for (const double v : p.tensor.values()) {
            if (v != weight_snapshot[off++]) {
                throw NumericError("ablation: model weights changed during the suite");
            }
        }
    }
    return report;
}

// ----------------------------------------------------------------- reports

namespace {

const AblationCell* find_cell(const AblationReport& r, MaskMode mode, MaskType type,
                              std::size_t layer) {
    for (const auto& c : r.cells) {
        if (c.mode == mode && c.type == type && c.layer == layer) return &c;
    }
    return nullptr;
}

}  // namespace

std::string AblationReport::to_table() const {
    std::ostringstream os;
    char buf[256];
    os << "Layer  Type   |        Individual       |            RFB          |            RFE\n";
    os << "              |    Acc.   Sig.   Delta% |    Acc.   Sig.   Delta% |    Acc.   Sig.   "
          "Delta%\n";
    for (std::size_t layer = 1; layer <= total_layers; ++layer) {
        for (const MaskType type : {MaskType::Unimodal, MaskType::CrossModal}) {
            std::snprintf(buf, sizeof buf, "L%-5zu %-6s", layer,
                          type == MaskType::Unimodal ? "Uni" : "Cross");
            os << buf;
            for (const MaskMode mode : {MaskMode::Individual, MaskMode::RFB, MaskMode::RFE}) {
                const AblationCell* c = find_cell(*this, mode, type, layer);
                if (c == nullptr) {
                    os << "|      --     --       -- ";
                } else {
                    std::snprintf(buf, sizeof buf, "|  %6.3f  %5s  %7.1f ",
                                  c->eval.mean_subject_accuracy, c->test.symbol.c_str(),
                                  c->delta_pct);
                    os << buf;
                }
            }
            os << "\n";
        }
    }
    std::snprintf(buf, sizeof buf, "%-13s |  %6.3f     --       -- |      --     --       -- |  "
                                   "    --     --       --\n",
                  "Baseline --", baseline.mean_subject_accuracy);
    os << buf;
    return os.str();
}

std::string AblationReport::to_jsonl() const {
    std::ostringstream os;
    {
        jsonl::Record rec;
        rec.field("schema_version", 1)
            .field("row", "baseline")
            .field("mean_acc", baseline.mean_subject_accuracy)
            .field("overall_acc", baseline.overall_accuracy)
            .field("correction_factor", static_cast<std::int64_t>(correction_factor))
            .field("factor_overridden", factor_overridden)
            .field("cls_edges_excluded", cls_edges_excluded)
            .field("model_family", model_family)
            .field("layers", static_cast<std::int64_t>(total_layers));
        std::vector<double> accs = baseline.subject_accuracies();
        rec.field_array("subject_accs", accs);
        os << rec.str() << "\n";
    }
    for (const auto& c : cells) {
        jsonl::Record rec;
        rec.field("schema_version", 1)
            .field("row", "cell")
            .field("mode", to_string(c.mode))
            .field("type", to_string(c.type))
            .field("layer", static_cast<std::int64_t>(c.layer))
            .field("mean_acc", c.eval.mean_subject_accuracy)
            .field("delta_pct", c.delta_pct)
            .field("u", c.test.u)
            .field("p_raw", c.test.p_raw)
            .field("p_corr", c.test.p_corr)
            .field("symbol", c.test.symbol)
            .field("method", c.test.method);
        std::vector<double> accs = c.eval.subject_accuracies();
        rec.field_array("subject_accs", accs);
        os << rec.str() << "\n";
    }
    return os.str();
}

}  // namespace biofuse::masking
