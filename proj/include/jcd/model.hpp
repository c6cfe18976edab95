#pragma once

#include <string>
#include <utility>
#include <vector>

#include "jcd/errors.hpp"
#include "jcd/rng.hpp"
#include "jcd/tensor.hpp"

// JCDNet forward pass. Two branches read the snippet features: the
// class-aware discriminative (CAD) branch builds coarse per-class
// definite-phase prototypes from the coarse T-CAS and reweights each snippet
// by its similarity to them; the temporal-enhanced attention (TEA) branch
// runs self-attention over time and produces action-ness scores used to
// suppress background in the class activation sequences.

namespace jcd {

struct ModelConfig {
    int feature_dim = 2048; // concatenated RGB+flow width (2F)
    int hidden_dim = 1024;  // embedding width D
    int num_classes = 0;    // foreground classes C; the CAS adds one background class
    int snippets_train = 500;
    int conv_kernel = 3;    // embedding kernel; classifier heads use 1
    double dropout_rate = 0.7;

    void validate() const {
        if (feature_dim <= 0 || hidden_dim <= 0 || num_classes <= 0 || snippets_train <= 0)
            throw ConfigError("model config: dims must be positive");
        if (conv_kernel <= 0 || conv_kernel % 2 == 0)
            throw ConfigError("model config: conv_kernel must be odd and positive");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0)
            throw ConfigError("model config: dropout_rate must be in [0,1)");
    }
};

// Component toggles for the ablation matrix. cad_supervised=false is the
// n-CAD variant: the CAD branch still runs but the coarse T-CAS loses its
// MIL supervision.
struct AblationFlags {
    bool use_cad = true;
    bool cad_supervised = true;
    bool use_tea = true;
    bool use_l_supp_mil = true;
    bool use_l_supp_coarse = true;
    bool use_l_norm = true;
    bool use_l_guide = true;
    bool use_l_cas = true;

    void validate() const {
        if ((use_l_supp_mil || use_l_norm || use_l_guide) && !use_tea)
            throw ConfigError("ablation flags: suppression/norm/guide losses need the TEA branch");
        if (use_l_supp_coarse && !(use_tea && use_cad))
            throw ConfigError("ablation flags: the suppressed coarse loss needs both CAD and TEA");
        if (use_l_cas && !(use_cad && use_tea))
            throw ConfigError("ablation flags: the co-activity loss needs both CAD and TEA");
    }
};

enum class Mode { Train, Eval };

template <typename Real>
struct ModelParams {
    ModelConfig cfg;
    AblationFlags flags;

    Tensor<Real> cad_embed_w, cad_embed_b;
    Tensor<Real> cad_cls_w, cad_cls_b, alpha;
    Tensor<Real> tea_embed_w, tea_embed_b;
    Tensor<Real> tea_q_w, tea_q_b, tea_k_w, tea_k_b, tea_v_w, tea_v_b;
    Tensor<Real> tea_cls_w, tea_cls_b, beta;
    Tensor<Real> fuse_cls_w, fuse_cls_b;

    // Classifier input width: both branch features concatenated when TEA is on.
    int fuse_width() const { return flags.use_tea ? 2 * cfg.hidden_dim : cfg.hidden_dim; }

    // Fan-in scaled uniform init for conv weights, zero biases, zero gates.
    static ModelParams init(const ModelConfig& cfg, const AblationFlags& flags, Rng& rng) {
        cfg.validate();
        flags.validate();
        ModelParams p;
        p.cfg = cfg;
        p.flags = flags;
        const int f2 = cfg.feature_dim, d = cfg.hidden_dim;
        const int c1 = cfg.num_classes + 1, k = cfg.conv_kernel;

        auto conv_w = [&rng](int kk, int cin, int cout) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(kk) * cin);
            std::vector<Real> v(static_cast<size_t>(kk) * cin * cout);
            for (auto& x : v) x = static_cast<Real>(rng.uniform(-bound, bound));
            return Tensor<Real>({kk, cin, cout}, std::move(v), true);
        };
        auto zeros = [](int n) { return Tensor<Real>({n}, Real(0), true); };

        p.cad_embed_w = conv_w(k, f2, d);
        p.cad_embed_b = zeros(d);
        if (flags.use_cad) {
            p.cad_cls_w = conv_w(1, f2, c1);
            p.cad_cls_b = zeros(c1);
            p.alpha = Tensor<Real>::scalar(Real(0), true);
        }
        if (flags.use_tea) {
            p.tea_embed_w = conv_w(k, f2, d);
            p.tea_embed_b = zeros(d);
            p.tea_q_w = conv_w(1, d, d);
            p.tea_q_b = zeros(d);
            p.tea_k_w = conv_w(1, d, d);
            p.tea_k_b = zeros(d);
            p.tea_v_w = conv_w(1, d, d);
            p.tea_v_b = zeros(d);
            p.tea_cls_w = conv_w(1, d, cfg.num_classes);
            p.tea_cls_b = zeros(cfg.num_classes);
            p.beta = Tensor<Real>::scalar(Real(0), true);
        }
        p.fuse_cls_w = conv_w(1, p.fuse_width(), c1);
        p.fuse_cls_b = zeros(c1);
        return p;
    }

    // Present parameters in canonical (checkpoint) order.
    std::vector<std::pair<std::string, Tensor<Real>*>> named() {
        std::vector<std::pair<std::string, Tensor<Real>*>> out;
        out.push_back({"cad.embed.weight", &cad_embed_w});
        out.push_back({"cad.embed.bias", &cad_embed_b});
        if (flags.use_cad) {
            out.push_back({"cad.cls.weight", &cad_cls_w});
            out.push_back({"cad.cls.bias", &cad_cls_b});
            out.push_back({"cad.alpha", &alpha});
        }
        if (flags.use_tea) {
            out.push_back({"tea.embed.weight", &tea_embed_w});
            out.push_back({"tea.embed.bias", &tea_embed_b});
            out.push_back({"tea.q.weight", &tea_q_w});
            out.push_back({"tea.q.bias", &tea_q_b});
            out.push_back({"tea.k.weight", &tea_k_w});
            out.push_back({"tea.k.bias", &tea_k_b});
            out.push_back({"tea.v.weight", &tea_v_w});
            out.push_back({"tea.v.bias", &tea_v_b});
            out.push_back({"tea.cls.weight", &tea_cls_w});
            out.push_back({"tea.cls.bias", &tea_cls_b});
            out.push_back({"tea.beta", &beta});
        }
        out.push_back({"fuse.cls.weight", &fuse_cls_w});
        out.push_back({"fuse.cls.bias", &fuse_cls_b});
        return out;
    }

    std::vector<Tensor<Real>> all() {
        std::vector<Tensor<Real>> out;
        for (auto& [name, t] : named()) out.push_back(*t);
        return out;
    }

    void zero_grad() {
        for (auto& [name, t] : named()) t->zero_grad();
    }
};

// Every intermediate sequence of one forward pass. Tensors for branches
// disabled by the ablation flags are left invalid.
template <typename Real>
struct ModelOutputs {
    Tensor<Real> s_coarse;      // [T x C+1] coarse T-CAS, class probabilities
    Tensor<Real> x_a;           // [T x D] task features
    Tensor<Real> m_def;         // [C+1 x D] coarse definite-phase features
    Tensor<Real> e_a;           // [T x D] fine (class-aware) features
    Tensor<Real> x_e;           // [T x D] base features
    Tensor<Real> m_e;           // [T x T] temporal attention, columns sum to 1
    Tensor<Real> e_e;           // [T x D] temporally enhanced features
    Tensor<Real> s_temp;        // [T x C] foreground T-CAS logits
    Tensor<Real> a_ness;        // [T] action-ness scores in (0,1)
    Tensor<Real> s_final;       // [T x C+1] final T-CAS, class probabilities
    Tensor<Real> s_coarse_supp; // [T x C+1] action-ness suppressed coarse T-CAS
    Tensor<Real> s_final_supp;  // [T x C+1] action-ness suppressed final T-CAS
};

// Per-class weighted average of task features by the coarse T-CAS:
// m_def[c] = sum_t s_coarse[t,c] * x_a[t] / sum_t s_coarse[t,c].
template <typename Real>
Tensor<Real> definite_phase_features(const Tensor<Real>& s_coarse, const Tensor<Real>& x_a) {
    if (s_coarse.dim(0) != x_a.dim(0))
        throw ShapeError("definite_phase_features: snippet counts differ");
    auto numer = matmul(transposed(s_coarse), x_a);
    auto denom = sum_axis(s_coarse, 0);
    return scale_rows(numer, reciprocal(denom));
}

// Per-snippet suppression by action-ness: out[t,c] = a_ness[t] * s[t,c].
template <typename Real>
Tensor<Real> suppress(const Tensor<Real>& s, const Tensor<Real>& a_ness) {
    return scale_rows(s, a_ness);
}

template <typename Real>
struct CadOut {
    Tensor<Real> s_coarse, x_a, m_def, e_a;
};

// CAD branch: coarse T-CAS -> definite-phase prototypes -> alpha-gated
// residual reweighting of the task features.
template <typename Real>
CadOut<Real> cad_forward(const Tensor<Real>& x, const ModelConfig& cfg, ModelParams<Real>& p) {
    CadOut<Real> out;
    out.x_a = relu(conv1d(x, p.cad_embed_w, p.cad_embed_b));
    out.s_coarse = softmax(conv1d(x, p.cad_cls_w, p.cad_cls_b), 1);
    out.m_def = definite_phase_features(out.s_coarse, out.x_a);
    out.e_a = add(scale_by(matmul(out.s_coarse, out.m_def), p.alpha), out.x_a);
    (void)cfg;
    return out;
}

template <typename Real>
struct TeaOut {
    Tensor<Real> x_e, m_e, e_e, s_temp, a_ness;
};

// TEA branch: self-attention over time (columns of m_e normalized over the
// source snippet), beta-gated residual, then class logits and action-ness.
template <typename Real>
TeaOut<Real> tea_forward(const Tensor<Real>& x, const ModelConfig& cfg, ModelParams<Real>& p) {
    TeaOut<Real> out;
    out.x_e = relu(conv1d(x, p.tea_embed_w, p.tea_embed_b));
    auto q = conv1d(out.x_e, p.tea_q_w, p.tea_q_b);
    auto k = conv1d(out.x_e, p.tea_k_w, p.tea_k_b);
    auto v = conv1d(out.x_e, p.tea_v_w, p.tea_v_b);
    out.m_e = softmax(matmul(q, transposed(k)), 0);
    out.e_e = add(scale_by(matmul(transposed(out.m_e), v), p.beta), out.x_e);
    out.s_temp = conv1d(out.e_e, p.tea_cls_w, p.tea_cls_b);
    out.a_ness = sigmoid(mean_axis(out.s_temp, 1));
    (void)cfg;
    return out;
}

template <typename Real>
Tensor<Real> fuse_and_classify(const Tensor<Real>& e_a, const Tensor<Real>& e_e,
                               ModelParams<Real>& p) {
    auto fused = concat_cols(e_a, e_e);
    return softmax(conv1d(fused, p.fuse_cls_w, p.fuse_cls_b), 1);
}

// Inverted dropout on the input features; mask drawn from the run's stream.
template <typename Real>
Tensor<Real> dropout(const Tensor<Real>& x, double rate, Rng& rng) {
    const double keep = 1.0 - rate;
    std::vector<Real> mask(x.size());
    for (auto& m : mask) m = rng.u01() < keep ? static_cast<Real>(1.0 / keep) : Real(0);
    Tensor<Real> mt(x.shape(), std::move(mask));
    return mul(x, mt);
}

template <typename Real>
ModelOutputs<Real> forward(const Tensor<Real>& x, const ModelConfig& cfg,
                           const AblationFlags& flags, ModelParams<Real>& p, Mode mode,
                           Rng* rng = nullptr) {
    if (x.rank() != 2 || x.dim(1) != cfg.feature_dim)
        throw ShapeError("forward: input must be [T x " + std::to_string(cfg.feature_dim) + "], got " +
                         detail::shape_str(x.shape()));
    Tensor<Real> x_in = x;
    if (mode == Mode::Train && cfg.dropout_rate > 0.0) {
        if (!rng) throw ArgError("forward: train mode needs an rng for dropout");
        x_in = dropout(x, cfg.dropout_rate, *rng);
    }
    const int t_len = x.dim(0);

    ModelOutputs<Real> out;
    if (flags.use_cad) {
        auto cad = cad_forward(x_in, cfg, p);
        out.s_coarse = cad.s_coarse;
        out.x_a = cad.x_a;
        out.m_def = cad.m_def;
        out.e_a = cad.e_a;
    } else {
        out.x_a = relu(conv1d(x_in, p.cad_embed_w, p.cad_embed_b));
        out.e_a = out.x_a;
    }

    if (flags.use_tea) {
        auto tea = tea_forward(x_in, cfg, p);
        out.x_e = tea.x_e;
        out.m_e = tea.m_e;
        out.e_e = tea.e_e;
        out.s_temp = tea.s_temp;
        out.a_ness = tea.a_ness;
        out.s_final = fuse_and_classify(out.e_a, out.e_e, p);
    } else {
        out.s_final = softmax(conv1d(out.e_a, p.fuse_cls_w, p.fuse_cls_b), 1);
        // Without TEA there is no learned action-ness; fall back to the
        // foreground probability of the final T-CAS for inference.
        Tensor<Real> ones({t_len}, Real(1));
        out.a_ness = sub(ones, col(out.s_final, cfg.num_classes));
    }

    out.s_final_supp = suppress(out.s_final, out.a_ness);
    if (flags.use_cad) out.s_coarse_supp = suppress(out.s_coarse, out.a_ness);
    return out;
}

} // namespace jcd
