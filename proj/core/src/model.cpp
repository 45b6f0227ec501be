#include "biofuse/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "biofuse/errors.hpp"

namespace biofuse::models {

using autodiff::BoolMask;
using autodiff::Shape;
using autodiff::Tensor;

std::string to_string(ModelFamily f) {
    switch (f) {
        case ModelFamily::MMMLP: return "mmmlp";
        case ModelFamily::MMT: return "mmt";
        case ModelFamily::HierT: return "hiert";
        case ModelFamily::IsoNet: return "isonet";
    }
    return "isonet";
}

ModelFamily family_from_string(const std::string& s) {
    if (s == "mmmlp") return ModelFamily::MMMLP;
    if (s == "mmt") return ModelFamily::MMT;
    if (s == "hiert") return ModelFamily::HierT;
    if (s == "isonet") return ModelFamily::IsoNet;
    throw ConfigError("unknown model family '" + s + "'");
}

void ModelConfig::validate() const {
    if (classes < 1) throw ConfigError("model: classes must be >= 1");
    if (modalities.empty() || modalities.size() > 2) {
        throw ConfigError("model: expected one or two modality streams, got " +
                          std::to_string(modalities.size()));
    }
    for (const auto& m : modalities) {
        if (m.channels == 0 || m.window == 0) {
            throw ConfigError("model: modality '" + m.name + "' has empty dimensions");
        }
    }
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model: dropout must lie in [0, 1)");
    const bool transformer = family != ModelFamily::MMMLP;
    if (transformer) {
        if (heads == 0 || embed_dim == 0 || embed_dim % heads != 0) {
            throw ConfigError("model: embed_dim " + std::to_string(embed_dim) +
                              " must be divisible by heads " + std::to_string(heads));
        }
        if (layers == 0) throw ConfigError("model: layers must be >= 1");
        if (patch == 0) throw ConfigError("model: patch must be >= 1");
    }
    const bool needs_patches =
        family == ModelFamily::MMT || family == ModelFamily::HierT ||
        (family == ModelFamily::IsoNet && isonet_windowed);
    if (needs_patches) {
        for (const auto& m : modalities) {
            if (m.window < patch) {
                throw ConfigError("model: modality '" + m.name + "' window " +
                                  std::to_string(m.window) + " shorter than patch " +
                                  std::to_string(patch));
            }
        }
    }
    if (family == ModelFamily::IsoNet) {
        if (anneal_horizon < 1) throw ConfigError("model: anneal_horizon must be >= 1");
        if (anneal_horizon > epochs) {
            throw ConfigError("model: anneal_horizon " + std::to_string(anneal_horizon) +
                              " exceeds epochs " + std::to_string(epochs));
        }
    }
    if (family == ModelFamily::MMMLP && mlp_hidden == 0) {
        throw ConfigError("model: mlp_hidden must be >= 1");
    }
}

std::string ModelConfig::serialize() const {
    std::ostringstream os;
    os.precision(17);
    os << "family " << to_string(family) << "\n";
    os << "classes " << classes << "\n";
    os << "embed_dim " << embed_dim << "\n";
    os << "heads " << heads << "\n";
    os << "layers " << layers << "\n";
    os << "ffn_dim " << ffn_dim << "\n";
    os << "mlp_hidden " << mlp_hidden << "\n";
    os << "patch " << patch << "\n";
    os << "dropout " << dropout << "\n";
    os << "anneal_horizon " << anneal_horizon << "\n";
    os << "epochs " << epochs << "\n";
    os << "lr " << lr << "\n";
    os << "stage2_layers " << stage2_layers << "\n";
    os << "isonet_windowed " << (isonet_windowed ? 1 : 0) << "\n";
    for (const auto& m : modalities) {
        os << "modality " << m.name << " channels " << m.channels << " window " << m.window
           << "\n";
    }
    return os.str();
}

ModelConfig ModelConfig::deserialize(const std::string& text) {
    ModelConfig cfg;
    cfg.modalities.clear();
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "family") {
            std::string v;
            ls >> v;
            cfg.family = family_from_string(v);
        } else if (key == "classes") {
            ls >> cfg.classes;
        } else if (key == "embed_dim") {
            ls >> cfg.embed_dim;
        } else if (key == "heads") {
            ls >> cfg.heads;
        } else if (key == "layers") {
            ls >> cfg.layers;
        } else if (key == "ffn_dim") {
            ls >> cfg.ffn_dim;
        } else if (key == "mlp_hidden") {
            ls >> cfg.mlp_hidden;
        } else if (key == "patch") {
            ls >> cfg.patch;
        } else if (key == "dropout") {
            ls >> cfg.dropout;
        } else if (key == "anneal_horizon") {
            ls >> cfg.anneal_horizon;
        } else if (key == "epochs") {
            ls >> cfg.epochs;
        } else if (key == "lr") {
            ls >> cfg.lr;
        } else if (key == "stage2_layers") {
            ls >> cfg.stage2_layers;
        } else if (key == "isonet_windowed") {
            int v = 0;
            ls >> v;
            cfg.isonet_windowed = v != 0;
        } else if (key == "modality") {
            ModalityInput m;
            std::string kw_ch, kw_win;
            if (!(ls >> m.name >> kw_ch >> m.channels >> kw_win >> m.window) ||
                kw_ch != "channels" || kw_win != "window") {
                throw ConfigError("model config: malformed modality line '" + line + "'");
            }
            cfg.modalities.push_back(m);
        } else {
            throw ConfigError("model config: unknown key '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

void TokenSequence::validate() const {
    if (tags.empty() || tags[0] != TokenTag::Cls) {
        throw UsageError("token sequence: CLS token must sit at position 0");
    }
    for (std::size_t i = 1; i < tags.size(); ++i) {
        if (tags[i] == TokenTag::Cls) {
            throw UsageError("token sequence: more than one CLS tag");
        }
    }
    if (!tokens.defined() || tokens.ndim() != 2 || tokens.shape()[0] != tags.size()) {
        throw UsageError("token sequence: token matrix does not match tags");
    }
}

// --------------------------------------------------------------- model base

Tensor Model::add_param(const std::string& name, Shape shape, double fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(std::max(1.0, fan_in));
    Tensor t = Tensor::uniform(std::move(shape), bound, rng, true);
    param_index_[name] = params_.size();
    params_.push_back({name, t});
    return t;
}

Tensor Model::add_param_const(const std::string& name, Shape shape, double value) {
    Tensor t = Tensor::full(std::move(shape), value, true);
    param_index_[name] = params_.size();
    params_.push_back({name, t});
    return t;
}

std::vector<Tensor> Model::parameter_tensors() const {
    std::vector<Tensor> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.tensor);
    return out;
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
}

Tensor Model::parameter(const std::string& name) const {
    const auto it = param_index_.find(name);
    if (it == param_index_.end()) throw UsageError("model has no parameter '" + name + "'");
    return params_[it->second].tensor;
}

void Model::check_input(const TrialInput& input) const {
    if (input.modality_data.size() != cfg_.modalities.size()) {
        throw UsageError("forward: got " + std::to_string(input.modality_data.size()) +
                         " modality streams, model expects " +
                         std::to_string(cfg_.modalities.size()));
    }
    for (std::size_t m = 0; m < cfg_.modalities.size(); ++m) {
        const auto expected = cfg_.modalities[m].channels * cfg_.modalities[m].window;
        if (input.modality_data[m].size() != expected) {
            throw UsageError("forward: modality '" + cfg_.modalities[m].name + "' has " +
                             std::to_string(input.modality_data[m].size()) +
                             " values, model expects " + std::to_string(expected) + " (" +
                             std::to_string(cfg_.modalities[m].channels) + " channels x " +
                             std::to_string(cfg_.modalities[m].window) + " samples)");
        }
    }
    if (static_cast<int>(input.label) >= cfg_.classes) {
        throw UsageError("forward: label " + std::to_string(input.label) + " out of range");
    }
}

// ------------------------------------------------------------ encoder parts

Tensor sinusoidal_positions(std::size_t tokens, std::size_t dim) {
    Tensor pe = Tensor::zeros({tokens, dim});
    auto& v = pe.values();
    for (std::size_t pos = 0; pos < tokens; ++pos) {
        for (std::size_t i = 0; i < dim; i += 2) {
            const double angle =
                static_cast<double>(pos) /
                std::pow(10000.0, static_cast<double>(i) / static_cast<double>(dim));
            v[pos * dim + i] = std::sin(angle);
            if (i + 1 < dim) v[pos * dim + i + 1] = std::cos(angle);
        }
    }
    return pe;
}

namespace {

Tensor lin(const Tensor& x, const Tensor& w, const Tensor& b) {
    return autodiff::add(autodiff::matmul(x, w), b);
}

Tensor apply_dropout(const Tensor& x, double rate, const ForwardOptions& opt) {
    if (!opt.training || rate == 0.0) return x;
    if (opt.rng == nullptr) {
        throw UsageError("forward: training with dropout requires an rng stream");
    }
    return autodiff::dropout(x, rate, *opt.rng, true);
}

}  // namespace

TokenSequence encoder_layer_forward(const TokenSequence& seq, const EncoderLayerParams& params,
                                    std::size_t heads, double dropout_rate,
                                    std::size_t layer_index, bool maskable,
                                    const ForwardOptions& opt) {
    const Tensor& x = seq.tokens;
    const std::size_t dh = x.shape()[1] / heads;

    const Tensor qh = autodiff::split_heads(lin(x, params.wq, params.bq), heads);
    const Tensor kh = autodiff::split_heads(lin(x, params.wk, params.bk), heads);
    const Tensor vh = autodiff::split_heads(lin(x, params.wv, params.bv), heads);

    Tensor scores = autodiff::scale(autodiff::bmm_nt(qh, kh),
                                    1.0 / std::sqrt(static_cast<double>(dh)));
    std::optional<BoolMask> mask;
    if (maskable && opt.mask_fn) mask = opt.mask_fn(layer_index, scores);
    const Tensor weights = autodiff::masked_softmax(scores, mask);
    if (maskable && opt.tap != nullptr) {
        opt.tap->shapes.push_back(weights.shape());
        opt.tap->weights.push_back(weights.values());
    }

    const Tensor context = autodiff::merge_heads(autodiff::bmm(weights, vh));
    const Tensor attn_out = lin(context, params.wo, params.bo);
    const Tensor x1 = autodiff::layer_norm(
        autodiff::add(x, apply_dropout(attn_out, dropout_rate, opt)), params.ln1_gamma,
        params.ln1_beta);

    const Tensor hidden = autodiff::gelu(lin(x1, params.ffn_w1, params.ffn_b1));
    const Tensor ffn_out = lin(hidden, params.ffn_w2, params.ffn_b2);
    const Tensor x2 = autodiff::layer_norm(
        autodiff::add(x1, apply_dropout(ffn_out, dropout_rate, opt)), params.ln2_gamma,
        params.ln2_beta);

    // modality tags pass through each layer untouched
    return TokenSequence{x2, seq.tags, seq.positional_encoding};
}

// ----------------------------------------------------------- family models

namespace {

struct EncoderStack {
    std::vector<EncoderLayerParams> layers;
    std::size_t heads = 1;
    double dropout_rate = 0.0;
    bool maskable = false;

    TokenSequence forward(TokenSequence seq, const ForwardOptions& opt) const {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            seq = encoder_layer_forward(seq, layers[i], heads, dropout_rate, i + 1, maskable, opt);
        }
        return seq;
    }
};

class FamilyModel : public Model {
protected:
    using Model::Model;

    EncoderLayerParams make_layer(const std::string& prefix, Rng& rng) {
        const auto D = cfg_.embed_dim;
        const auto F = cfg_.ffn_dim;
        EncoderLayerParams p;
        p.wq = add_param(prefix + ".wq", {D, D}, static_cast<double>(D), rng);
        p.bq = add_param_const(prefix + ".bq", {D}, 0.0);
        p.wk = add_param(prefix + ".wk", {D, D}, static_cast<double>(D), rng);
        p.bk = add_param_const(prefix + ".bk", {D}, 0.0);
        p.wv = add_param(prefix + ".wv", {D, D}, static_cast<double>(D), rng);
        p.bv = add_param_const(prefix + ".bv", {D}, 0.0);
        p.wo = add_param(prefix + ".wo", {D, D}, static_cast<double>(D), rng);
        p.bo = add_param_const(prefix + ".bo", {D}, 0.0);
        p.ln1_gamma = add_param_const(prefix + ".ln1_gamma", {D}, 1.0);
        p.ln1_beta = add_param_const(prefix + ".ln1_beta", {D}, 0.0);
        p.ffn_w1 = add_param(prefix + ".ffn_w1", {D, F}, static_cast<double>(D), rng);
        p.ffn_b1 = add_param_const(prefix + ".ffn_b1", {F}, 0.0);
        p.ffn_w2 = add_param(prefix + ".ffn_w2", {F, D}, static_cast<double>(F), rng);
        p.ffn_b2 = add_param_const(prefix + ".ffn_b2", {D}, 0.0);
        p.ln2_gamma = add_param_const(prefix + ".ln2_gamma", {D}, 1.0);
        p.ln2_beta = add_param_const(prefix + ".ln2_beta", {D}, 0.0);
        return p;
    }

    EncoderStack make_stack(const std::string& prefix, std::size_t n_layers, bool maskable,
                            Rng& rng) {
        EncoderStack stack;
        stack.heads = cfg_.heads;
        stack.dropout_rate = cfg_.dropout;
        stack.maskable = maskable;
        for (std::size_t i = 0; i < n_layers; ++i) {
            stack.layers.push_back(make_layer(prefix + ".l" + std::to_string(i), rng));
        }
        return stack;
    }

    TokenTag modality_tag(std::size_t m) const {
        return m == 0 ? TokenTag::ModalityA : TokenTag::ModalityB;
    }

    // [1, len] view of one channel's samples; plain input, no gradient
    static Tensor channel_row(const std::vector<double>& data, std::size_t channel,
                              std::size_t window, std::size_t offset, std::size_t len) {
        std::vector<double> v(data.begin() + channel * window + offset,
                              data.begin() + channel * window + offset + len);
        return Tensor::from({1, len}, std::move(v));
    }

    // [1, channels*patch] tubelet block, channel-major
    static Tensor tubelet_row(const std::vector<double>& data, std::size_t channels,
                              std::size_t window, std::size_t patch, std::size_t index) {
        std::vector<double> v(channels * patch);
        for (std::size_t c = 0; c < channels; ++c) {
            const auto* src = data.data() + c * window + index * patch;
            std::copy(src, src + patch, v.begin() + c * patch);
        }
        return Tensor::from({1, channels * patch}, std::move(v));
    }
};

// ---- IsoNet ----------------------------------------------------------------

class IsoNetModel final : public FamilyModel {
public:
    IsoNetModel(ModelConfig cfg, Rng& rng) : FamilyModel(std::move(cfg)) {
        const auto D = cfg_.embed_dim;
        cls_ = add_param("cls", {1, D}, static_cast<double>(D), rng);
        std::size_t idx = 0;
        for (std::size_t m = 0; m < cfg_.modalities.size(); ++m) {
            const auto& mi = cfg_.modalities[m];
            const std::size_t in_dim = cfg_.isonet_windowed ? cfg_.patch : mi.window;
            for (std::size_t c = 0; c < mi.channels; ++c, ++idx) {
                const std::string prefix = "emb.c" + std::to_string(idx);
                emb_w_.push_back(
                    add_param(prefix + ".w", {in_dim, D}, static_cast<double>(in_dim), rng));
                emb_b_.push_back(add_param_const(prefix + ".b", {D}, 0.0));
            }
        }
        stack_ = make_stack("enc", cfg_.layers, true, rng);
        head_cls_w_ = add_param("head_cls.w", {D, static_cast<std::size_t>(cfg_.classes)},
                                static_cast<double>(D), rng);
        head_cls_b_ = add_param_const("head_cls.b", {static_cast<std::size_t>(cfg_.classes)}, 0.0);
        head_avg_w_ = add_param("head_avg.w", {D, static_cast<std::size_t>(cfg_.classes)},
                                static_cast<double>(D), rng);
        head_avg_b_ = add_param_const("head_avg.b", {static_cast<std::size_t>(cfg_.classes)}, 0.0);
        tags_ = token_tags();
    }

    std::vector<TokenTag> token_tags() const {
        std::vector<TokenTag> tags{TokenTag::Cls};
        for (std::size_t m = 0; m < cfg_.modalities.size(); ++m) {
            const auto& mi = cfg_.modalities[m];
            const std::size_t per_channel =
                cfg_.isonet_windowed ? mi.window / cfg_.patch : 1;
            for (std::size_t c = 0; c < mi.channels; ++c) {
                for (std::size_t p = 0; p < per_channel; ++p) tags.push_back(modality_tag(m));
            }
        }
        return tags;
    }

    ModelOutput forward(const TrialInput& input, const ForwardOptions& opt) override {
        check_input(input);
        std::vector<Tensor> rows{cls_};
        std::size_t idx = 0;
        for (std::size_t m = 0; m < cfg_.modalities.size(); ++m) {
            const auto& mi = cfg_.modalities[m];
            for (std::size_t c = 0; c < mi.channels; ++c, ++idx) {
                if (cfg_.isonet_windowed) {
                    const std::size_t n_patches = mi.window / cfg_.patch;
                    for (std::size_t p = 0; p < n_patches; ++p) {
                        const Tensor row = channel_row(input.modality_data[m], c, mi.window,
                                                       p * cfg_.patch, cfg_.patch);
                        rows.push_back(lin(row, emb_w_[idx], emb_b_[idx]));
                    }
                } else {
                    const Tensor row =
                        channel_row(input.modality_data[m], c, mi.window, 0, mi.window);
                    rows.push_back(lin(row, emb_w_[idx], emb_b_[idx]));
                }
            }
        }
        Tensor tokens = autodiff::concat_rows(rows);
        // Positional encoding only in windowed mode; full-window channel
        // tokens carry their identity in the dedicated embeddings, and
        // leaving positions out keeps channel relabeling a pure permutation.
        if (cfg_.isonet_windowed) {
            tokens = autodiff::add(tokens,
                                   sinusoidal_positions(tags_.size(), cfg_.embed_dim));
        }
        TokenSequence seq{tokens, tags_, cfg_.isonet_windowed};
        seq.validate();
        seq = stack_.forward(std::move(seq), opt);

        const std::size_t T = tags_.size();
        const auto K = static_cast<std::size_t>(cfg_.classes);
        const Tensor cls_out = autodiff::slice_rows(seq.tokens, 0, 1);
        const Tensor cls_logits = autodiff::reshape(lin(cls_out, head_cls_w_, head_cls_b_), {K});
        const Tensor avg_vec = autodiff::reshape(
            autodiff::mean_rows(autodiff::slice_rows(seq.tokens, 1, T)), {1, cfg_.embed_dim});
        const Tensor avg_logits = autodiff::reshape(lin(avg_vec, head_avg_w_, head_avg_b_), {K});
        return ModelOutput{cls_logits, avg_logits, true};
    }

    std::optional<MaskableInfo> maskable() const override {
        return MaskableInfo{tags_.size(), tags_, cfg_.layers};
    }

    std::vector<std::string> avg_head_parameter_names() const override {
        return {"head_avg.w", "head_avg.b"};
    }

private:
    Tensor cls_;
    std::vector<Tensor> emb_w_, emb_b_;
    EncoderStack stack_;
    Tensor head_cls_w_, head_cls_b_, head_avg_w_, head_avg_b_;
    std::vector<TokenTag> tags_;
};

// ---- MMT / HierT ------------------------------------------------------------

class MmtModel : public FamilyModel {
public:
    MmtModel(ModelConfig cfg, Rng& rng, bool hierarchical)
        : FamilyModel(std::move(cfg)), hierarchical_(hierarchical) {
        const auto D = cfg_.embed_dim;
        const auto K = static_cast<std::size_t>(cfg_.classes);
        for (std::size_t m = 0; m < cfg_.modalities.size(); ++m) {
            const auto& mi = cfg_.modalities[m];
            const std::string prefix = "m" + std::to_string(m);
            const std::size_t in_dim = mi.channels * cfg_.patch;
            stream_emb_w_.push_back(
                add_param(prefix + ".emb.w", {in_dim, D}, static_cast<double>(in_dim), rng));
            stream_emb_b_.push_back(add_param_const(prefix + ".emb.b", {D}, 0.0));
            stream_cls_.push_back(add_param(prefix + ".cls", {1, D}, static_cast<double>(D), rng));
            stream_stack_.push_back(make_stack(prefix + ".enc", cfg_.layers, false, rng));
        }

        const bool stage2 = hierarchical_ && cfg_.stage2_layers > 0;
        if (stage2) {
            s2_cls_ = add_param("s2.cls", {1, D}, static_cast<double>(D), rng);
            s2_stack_ = make_stack("s2.enc", cfg_.stage2_layers, true, rng);
            head_w_ = add_param("head.w", {D, K}, static_cast<double>(D), rng);
            head_b_ = add_param_const("head.b", {K}, 0.0);
        } else {
            const std::size_t fused_in = cfg_.modalities.size() * D;
            fuse_w_ = add_param("fuse.w", {fused_in, cfg_.ffn_dim},
                                static_cast<double>(fused_in), rng);
            fuse_b_ = add_param_const("fuse.b", {cfg_.ffn_dim}, 0.0);
            head_w_ = add_param("head.w", {cfg_.ffn_dim, K}, static_cast<double>(cfg_.ffn_dim),
                                rng);
            head_b_ = add_param_const("head.b", {K}, 0.0);
        }
    }

    std::size_t stream_tokens(std::size_t m) const {
        return cfg_.modalities[m].window / cfg_.patch;  // excluding the stream CLS
    }

    ModelOutput forward(const TrialInput& input, const ForwardOptions& opt) override {
        check_input(input);
        const auto K = static_cast<std::size_t>(cfg_.classes);
        std::vector<TokenSequence> streams;
        for (std::size_t m = 0; m < cfg_.modalities.size(); ++m) {
            streams.push_back(stream_forward(m, input, opt));
        }

        const bool stage2 = hierarchical_ && cfg_.stage2_layers > 0;
        if (!stage2) {
            // concatenated stream CLS outputs through the linear integration
            std::vector<Tensor> cls_outs;
            for (const auto& s : streams) {
                cls_outs.push_back(autodiff::slice_rows(s.tokens, 0, 1));
            }
            const Tensor fused_in = autodiff::reshape(
                autodiff::concat_flat(cls_outs),
                {1, cfg_.modalities.size() * cfg_.embed_dim});
            const Tensor fused = lin(fused_in, fuse_w_, fuse_b_);
            const Tensor logits = autodiff::reshape(lin(fused, head_w_, head_b_), {K});
            return ModelOutput{logits, {}, false};
        }

        // stage 2: fresh CLS over the concatenated per-modality token streams
        std::vector<Tensor> rows{s2_cls_};
        std::vector<TokenTag> tags{TokenTag::Cls};
        for (std::size_t m = 0; m < streams.size(); ++m) {
            const std::size_t n = streams[m].length();
            rows.push_back(autodiff::slice_rows(streams[m].tokens, 1, n));
            for (std::size_t t = 1; t < n; ++t) tags.push_back(modality_tag(m));
        }
        Tensor tokens = autodiff::concat_rows(rows);
        tokens = autodiff::add(tokens, sinusoidal_positions(tags.size(), cfg_.embed_dim));
        TokenSequence seq{tokens, tags, true};
        seq.validate();
        seq = s2_stack_.forward(std::move(seq), opt);

        const Tensor cls_out = autodiff::slice_rows(seq.tokens, 0, 1);
        const Tensor logits = autodiff::reshape(lin(cls_out, head_w_, head_b_), {K});
        return ModelOutput{logits, {}, false};
    }

    std::optional<MaskableInfo> maskable() const override {
        if (!(hierarchical_ && cfg_.stage2_layers > 0)) return std::nullopt;
        std::vector<TokenTag> tags{TokenTag::Cls};
        for (std::size_t m = 0; m < cfg_.modalities.size(); ++m) {
            for (std::size_t t = 0; t < stream_tokens(m); ++t) tags.push_back(modality_tag(m));
        }
        return MaskableInfo{tags.size(), tags, cfg_.stage2_layers};
    }

private:
    TokenSequence stream_forward(std::size_t m, const TrialInput& input,
                                 const ForwardOptions& opt) {
        const auto& mi = cfg_.modalities[m];
        const std::size_t n_patches = stream_tokens(m);
        std::vector<Tensor> rows{stream_cls_[m]};
        std::vector<TokenTag> tags{TokenTag::Cls};
        for (std::size_t p = 0; p < n_patches; ++p) {
            const Tensor row =
                tubelet_row(input.modality_data[m], mi.channels, mi.window, cfg_.patch, p);
            rows.push_back(lin(row, stream_emb_w_[m], stream_emb_b_[m]));
            tags.push_back(modality_tag(m));
        }
        Tensor tokens = autodiff::concat_rows(rows);
        tokens = autodiff::add(tokens, sinusoidal_positions(tags.size(), cfg_.embed_dim));
        TokenSequence seq{tokens, tags, true};
        seq.validate();
        return stream_stack_[m].forward(std::move(seq), opt);
    }

    bool hierarchical_;
    std::vector<Tensor> stream_emb_w_, stream_emb_b_, stream_cls_;
    std::vector<EncoderStack> stream_stack_;
    Tensor s2_cls_;
    EncoderStack s2_stack_;
    Tensor fuse_w_, fuse_b_, head_w_, head_b_;
};

// ---- Multimodal MLP ---------------------------------------------------------

class MmmlpModel final : public FamilyModel {
public:
    MmmlpModel(ModelConfig cfg, Rng& rng) : FamilyModel(std::move(cfg)) {
        const auto H = cfg_.mlp_hidden;
        const auto K = static_cast<std::size_t>(cfg_.classes);
        for (std::size_t m = 0; m < cfg_.modalities.size(); ++m) {
            const auto& mi = cfg_.modalities[m];
            const std::string prefix = "m" + std::to_string(m);
            const std::size_t in_dim = mi.channels * mi.window;
            l1_w_.push_back(add_param(prefix + ".l1.w", {in_dim, H},
                                      static_cast<double>(in_dim), rng));
            l1_b_.push_back(add_param_const(prefix + ".l1.b", {H}, 0.0));
            l2_w_.push_back(add_param(prefix + ".l2.w", {H, H}, static_cast<double>(H), rng));
            l2_b_.push_back(add_param_const(prefix + ".l2.b", {H}, 0.0));
        }
        const std::size_t fused_in = cfg_.modalities.size() * H;
        shared_w_ = add_param("shared.w", {fused_in, H}, static_cast<double>(fused_in), rng);
        shared_b_ = add_param_const("shared.b", {H}, 0.0);
        head_w_ = add_param("head.w", {H, K}, static_cast<double>(H), rng);
        head_b_ = add_param_const("head.b", {K}, 0.0);
    }

    ModelOutput forward(const TrialInput& input, const ForwardOptions& opt) override {
        check_input(input);
        const auto K = static_cast<std::size_t>(cfg_.classes);
        std::vector<Tensor> heads;
        for (std::size_t m = 0; m < cfg_.modalities.size(); ++m) {
            Tensor x = Tensor::from({1, input.modality_data[m].size()},
                                    std::vector<double>(input.modality_data[m]));
            x = autodiff::relu(lin(x, l1_w_[m], l1_b_[m]));
            x = apply_dropout(x, cfg_.dropout, opt);
            x = autodiff::relu(lin(x, l2_w_[m], l2_b_[m]));
            heads.push_back(x);
        }
        const Tensor fused_in = autodiff::reshape(
            autodiff::concat_flat(heads), {1, cfg_.modalities.size() * cfg_.mlp_hidden});
        const Tensor shared = autodiff::relu(lin(fused_in, shared_w_, shared_b_));
        const Tensor logits = autodiff::reshape(lin(shared, head_w_, head_b_), {K});
        return ModelOutput{logits, {}, false};
    }

private:
    std::vector<Tensor> l1_w_, l1_b_, l2_w_, l2_b_;
    Tensor shared_w_, shared_b_, head_w_, head_b_;
};

}  // namespace

std::unique_ptr<Model> build_model(const ModelConfig& cfg, Rng& init_rng) {
    cfg.validate();
    switch (cfg.family) {
        case ModelFamily::IsoNet: return std::make_unique<IsoNetModel>(cfg, init_rng);
        case ModelFamily::MMT: return std::make_unique<MmtModel>(cfg, init_rng, false);
        case ModelFamily::HierT: return std::make_unique<MmtModel>(cfg, init_rng, true);
        case ModelFamily::MMMLP: return std::make_unique<MmmlpModel>(cfg, init_rng);
    }
    throw ConfigError("build_model: unknown family");
}

// ---------------------------------------------------------------- checkpoints

namespace {

constexpr char kCheckpointMagic[4] = {'B', 'F', 'C', 'K'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::string& context) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
        throw IoError("checkpoint: truncated while reading " + context);
    }
    return v;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("checkpoint: cannot open " + path + " for writing");
    os.write(kCheckpointMagic, 4);
    write_pod<std::uint32_t>(os, 1);  // version

    const std::string cfg = model.config().serialize();
    write_pod<std::uint64_t>(os, cfg.size());
    os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

    const auto& params = model.parameters();
    write_pod<std::uint64_t>(os, params.size());
    for (const auto& p : params) {
        write_pod<std::uint64_t>(os, p.name.size());
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        write_pod<std::uint64_t>(os, p.tensor.ndim());
        for (const auto d : p.tensor.shape()) write_pod<std::uint64_t>(os, d);
        os.write(reinterpret_cast<const char*>(p.tensor.values().data()),
                 static_cast<std::streamsize>(p.tensor.numel() * sizeof(double)));
    }
    if (!os) throw IoError("checkpoint: short write to " + path);
}

std::unique_ptr<Model> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
        throw IoError("checkpoint: bad magic in " + path);
    }
    const auto version = read_pod<std::uint32_t>(is, "version");
    if (version != 1) throw IoError("checkpoint: unsupported version " + std::to_string(version));

    const auto cfg_len = read_pod<std::uint64_t>(is, "config length");
    std::string cfg_text(cfg_len, '\0');
    if (!is.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len))) {
        throw IoError("checkpoint: truncated config block");
    }
    const ModelConfig cfg = ModelConfig::deserialize(cfg_text);
    Rng scratch(0);
    auto model = build_model(cfg, scratch);

    const auto n_params = read_pod<std::uint64_t>(is, "parameter count");
    if (n_params != model->parameters().size()) {
        throw IoError("checkpoint: parameter count " + std::to_string(n_params) +
                      " does not match the architecture (" +
                      std::to_string(model->parameters().size()) + ")");
    }
    for (std::uint64_t i = 0; i < n_params; ++i) {
        const auto name_len = read_pod<std::uint64_t>(is, "parameter name length");
        std::string name(name_len, '\0');
        if (!is.read(name.data(), static_cast<std::streamsize>(name_len))) {
            throw IoError("checkpoint: truncated parameter name");
        }
        const auto ndim = read_pod<std::uint64_t>(is, "rank of " + name);
        Shape shape(ndim);
        for (auto& d : shape) d = read_pod<std::uint64_t>(is, "dims of " + name);

        Tensor t = model->parameter(name);
        if (t.shape() != shape) {
            throw IoError("checkpoint: shape mismatch for '" + name + "'");
        }
        if (!is.read(reinterpret_cast<char*>(t.values().data()),
                     static_cast<std::streamsize>(t.numel() * sizeof(double)))) {
            throw IoError("checkpoint: truncated data for '" + name + "'");
        }
    }
    return model;
}

}  // namespace biofuse::models
