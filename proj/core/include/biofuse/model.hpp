#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "biofuse/rng.hpp"
#include "biofuse/tensor.hpp"

namespace biofuse::models {

enum class ModelFamily { MMMLP, MMT, HierT, IsoNet };

std::string to_string(ModelFamily f);
ModelFamily family_from_string(const std::string& s);

enum class TokenTag { ModalityA, ModalityB, Cls };

// Post-preprocessing input dimensions of one modality stream.
struct ModalityInput {
    std::string name;
    std::size_t channels = 0;
    std::size_t window = 0;  // samples per channel
};

struct ModelConfig {
    ModelFamily family = ModelFamily::IsoNet;
    std::vector<ModalityInput> modalities;  // one or two streams
    int classes = 0;
    std::size_t embed_dim = 512;
    std::size_t heads = 8;
    std::size_t layers = 5;
    std::size_t ffn_dim = 128;
    std::size_t mlp_hidden = 200;
    std::size_t patch = 40;
    double dropout = 0.1;
    int anneal_horizon = 750;
    int epochs = 2000;
    double lr = 4e-5;
    std::size_t stage2_layers = 2;   // HierT fusion stage depth
    bool isonet_windowed = false;    // channel-by-tubelet tokens instead of one token per channel

    void validate() const;
    std::string serialize() const;
    static ModelConfig deserialize(const std::string& text);
};

// Embedded tokens plus per-token modality tags; tags are metadata the encoder
// layers never touch.
struct TokenSequence {
    autodiff::Tensor tokens;  // [T, embed_dim]
    std::vector<TokenTag> tags;
    bool positional_encoding = false;

    std::size_t length() const { return tags.size(); }
    void validate() const;  // exactly one Cls tag, at position 0
};

struct TrialInput {
    std::vector<std::vector<double>> modality_data;  // channel-major, per modality
    std::size_t label = 0;
    int subject = 0;
};

// Pure per-layer mask provider: receives the 1-based layer index and the raw
// attention logits, returns the boolean edge mask masked_softmax should apply
// (or nothing). Must hold no mutable state.
using AttentionMaskFn =
    std::function<std::optional<autodiff::BoolMask>(std::size_t layer,
                                                    const autodiff::Tensor& logits)>;

// Post-softmax attention weights recorded per maskable layer.
struct AttentionTap {
    std::vector<autodiff::Shape> shapes;
    std::vector<std::vector<double>> weights;
    void clear() {
        shapes.clear();
        weights.clear();
    }
};

struct ForwardOptions {
    bool training = false;
    Rng* rng = nullptr;  // dropout stream; required when training and dropout > 0
    AttentionMaskFn mask_fn;
    AttentionTap* tap = nullptr;
};

struct ModelOutput {
    autodiff::Tensor cls_logits;  // [classes]
    autodiff::Tensor avg_logits;  // [classes], only for dual-headed models
    bool dual = false;
};

struct Parameter {
    std::string name;
    autodiff::Tensor tensor;
};

// Token structure of the attention stack edge masks apply to.
struct MaskableInfo {
    std::size_t tokens = 0;
    std::vector<TokenTag> tags;
    std::size_t layers = 0;
};

class Model {
public:
    virtual ~Model() = default;

    virtual ModelOutput forward(const TrialInput& input, const ForwardOptions& opt) = 0;
    virtual std::optional<MaskableInfo> maskable() const { return std::nullopt; }
    virtual std::vector<std::string> avg_head_parameter_names() const { return {}; }

    const ModelConfig& config() const { return cfg_; }
    const std::vector<Parameter>& parameters() const { return params_; }
    std::vector<autodiff::Tensor> parameter_tensors() const;
    std::size_t parameter_count() const;
    autodiff::Tensor parameter(const std::string& name) const;

protected:
    explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) {}
    autodiff::Tensor add_param(const std::string& name, autodiff::Shape shape, double fan_in,
                               Rng& rng);
    autodiff::Tensor add_param_const(const std::string& name, autodiff::Shape shape, double value);
    void check_input(const TrialInput& input) const;

    ModelConfig cfg_;
    std::vector<Parameter> params_;
    std::map<std::string, std::size_t> param_index_;
};

std::unique_ptr<Model> build_model(const ModelConfig& cfg, Rng& init_rng);

// ---- encoder building blocks (shared by the transformer families) ----

struct EncoderLayerParams {
    autodiff::Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    autodiff::Tensor ln1_gamma, ln1_beta;
    autodiff::Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    autodiff::Tensor ln2_gamma, ln2_beta;
};

// Self-attention sublayer with masked softmax, then a GELU feedforward
// sublayer; each followed by dropout, residual add, and layer norm. The mask
// callback (when maskable) sees 1-based `layer_index`.
TokenSequence encoder_layer_forward(const TokenSequence& seq, const EncoderLayerParams& params,
                                    std::size_t heads, double dropout_rate,
                                    std::size_t layer_index, bool maskable,
                                    const ForwardOptions& opt);

// Fixed sinusoidal positional encoding, shape [T, D], no gradient.
autodiff::Tensor sinusoidal_positions(std::size_t tokens, std::size_t dim);

// ---- checkpoints ----

void save_checkpoint(const Model& model, const std::string& path);
std::unique_ptr<Model> load_checkpoint(const std::string& path);

}  // namespace biofuse::models
