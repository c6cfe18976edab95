#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "jcd/errors.hpp"
#include "jcd/model.hpp"
#include "jcd/tensor.hpp"

// Training objectives: top-k MIL video classification on the various T-CAS
// outputs, the suppressed variants, the co-activity similarity ranking loss
// between same-class video pairs, and the action-ness regularizers.

namespace jcd {

struct LossWeights {
    double lambda0 = 0.8; // suppressed/auxiliary coarse MIL weight
    double lambda1 = 0.7; // TEA branch MIL weight
    double lambda2 = 0.9; // co-activity similarity weight
    double lambda3 = 0.8; // action-ness L1 weight
    double lambda4 = 0.8; // guidance weight
    double casl_margin = 0.5;
    int topk_divisor = 8; // k = max(1, T / topk_divisor)

    void validate() const {
        if (lambda0 < 0 || lambda1 < 0 || lambda2 < 0 || lambda3 < 0 || lambda4 < 0)
            throw ConfigError("loss weights: lambdas must be >= 0");
        if (casl_margin < 0) throw ConfigError("loss weights: casl_margin must be >= 0");
        if (topk_divisor < 1) throw ConfigError("loss weights: topk_divisor must be >= 1");
    }

    int topk(int t_len) const { return std::max(1, t_len / topk_divisor); }
};

// Video-level multi-hot label over C foreground classes plus background.
// y_fg forces the background bit to 0 (suppressed losses), y_full forces it
// to 1 (unsuppressed losses over untrimmed video).
struct VideoLabel {
    std::vector<double> y;
    std::vector<double> y_fg;
    std::vector<double> y_full;

    static VideoLabel from_foreground(const std::vector<int>& class_indices, int num_classes) {
        if (class_indices.empty())
            throw ArgError("video label: at least one foreground class required");
        VideoLabel l;
        l.y.assign(static_cast<size_t>(num_classes) + 1, 0.0);
        for (int c : class_indices) {
            if (c < 0 || c >= num_classes)
                throw ArgError("video label: class index " + std::to_string(c) + " out of range");
            l.y[static_cast<size_t>(c)] = 1.0;
        }
        l.y_fg = l.y;
        l.y_fg.back() = 0.0;
        l.y_full = l.y;
        l.y_full.back() = 1.0;
        return l;
    }

    // First C entries (drops the background bit) for the TEA branch T-CAS.
    std::vector<double> foreground_only() const {
        return std::vector<double>(y_fg.begin(), y_fg.end() - 1);
    }
};

namespace detail {

template <typename Real>
std::vector<Real> normalized_target(const std::vector<double>& y) {
    double sum = 0;
    for (double v : y) sum += v;
    if (sum <= 0) throw ArgError("topk_mil_loss: target label is all-zero");
    std::vector<Real> out(y.size());
    for (size_t i = 0; i < y.size(); ++i) out[i] = static_cast<Real>(y[i] / sum);
    return out;
}

} // namespace detail

// Top-k MIL classification loss: per-class top-k mean over snippets, softmax
// across classes, cross-entropy against the normalized multi-hot target.
template <typename Real>
Tensor<Real> topk_mil_loss(const Tensor<Real>& s_cas, const std::vector<double>& y_target, int k) {
    if (s_cas.rank() != 2) throw ShapeError("topk_mil_loss: expects a [T x classes] T-CAS");
    if (static_cast<size_t>(s_cas.dim(1)) != y_target.size())
        throw ShapeError("topk_mil_loss: target length " + std::to_string(y_target.size()) +
                         " does not match " + std::to_string(s_cas.dim(1)) + " classes");
    auto target = detail::normalized_target<Real>(y_target);
    auto video_scores = topk_mean_cols(s_cas, k);
    return ce_with_logits(video_scores, target);
}

// Suppressed objective: final + lambda0 * coarse, both on action-ness
// suppressed T-CAS with the background bit forced to 0.
template <typename Real>
Tensor<Real> suppressed_loss(const Tensor<Real>& s_final_supp, const Tensor<Real>& s_coarse_supp,
                             const VideoLabel& label, int k, double lambda0) {
    auto l = topk_mil_loss(s_final_supp, label.y_fg, k);
    return add(l, scale(topk_mil_loss(s_coarse_supp, label.y_fg, k), static_cast<Real>(lambda0)));
}

// Unsuppressed objective: final T-CAS against y_full plus lambda1 * the TEA
// branch T-CAS (foreground classes only).
template <typename Real>
Tensor<Real> unsuppressed_loss(const Tensor<Real>& s_final, const Tensor<Real>& s_temp,
                               const VideoLabel& label, int k, double lambda1) {
    auto l = topk_mil_loss(s_final, label.y_full, k);
    return add(l, scale(topk_mil_loss(s_temp, label.foreground_only(), k), static_cast<Real>(lambda1)));
}

// Cosine distance with a tiny stabilizer under the square roots so the
// gradient stays finite for zero vectors.
template <typename Real>
Tensor<Real> cosine_distance(const Tensor<Real>& u, const Tensor<Real>& v) {
    const Real eps = static_cast<Real>(1e-24);
    auto nu = vsqrt(add_const(dot(u, u), eps));
    auto nv = vsqrt(add_const(dot(v, v), eps));
    auto cosine = div(dot(u, v), mul(nu, nv));
    return add_const(scale(cosine, Real(-1)), Real(1));
}

// Co-activity similarity: for each shared class, a time-softmax attention
// over the suppressed coarse T-CAS column splits each video into a
// high-attention and a complementary low-attention feature; paired hinges
// demand that cross-video high regions be closer than high-low pairs.
template <typename Real>
Tensor<Real> casl_loss(const Tensor<Real>& e_a_m, const Tensor<Real>& s_supp_m,
                       const Tensor<Real>& e_a_n, const Tensor<Real>& s_supp_n,
                       const std::vector<int>& shared_classes, double margin) {
    if (shared_classes.empty()) return Tensor<Real>::scalar(Real(0));
    if (e_a_m.dim(0) < 2 || e_a_n.dim(0) < 2)
        throw ArgError("casl_loss: needs at least 2 snippets per video");

    auto region_features = [](const Tensor<Real>& feats, const Tensor<Real>& s_supp, int cls) {
        const int t_len = feats.dim(0);
        auto attn = softmax(col(s_supp, cls), 0);
        auto high = weighted_sum_rows(feats, attn);
        Tensor<Real> ones({t_len}, Real(1));
        auto low_w = scale(sub(ones, attn), Real(1) / static_cast<Real>(t_len - 1));
        auto low = weighted_sum_rows(feats, low_w);
        return std::make_pair(high, low);
    };

    Tensor<Real> total = Tensor<Real>::scalar(Real(0));
    for (int cls : shared_classes) {
        auto [high_m, low_m] = region_features(e_a_m, s_supp_m, cls);
        auto [high_n, low_n] = region_features(e_a_n, s_supp_n, cls);
        auto d_hh = cosine_distance(high_m, high_n);
        auto hinge1 = relu(add_const(sub(d_hh, cosine_distance(high_m, low_n)), static_cast<Real>(margin)));
        auto hinge2 = relu(add_const(sub(d_hh, cosine_distance(low_m, high_n)), static_cast<Real>(margin)));
        total = add(total, scale(add(hinge1, hinge2), Real(0.5)));
    }
    return scale(total, Real(1) / static_cast<Real>(shared_classes.size()));
}

// Mean |A^ness| over snippets; polarizes the foreground weights.
template <typename Real>
Tensor<Real> norm_loss(const Tensor<Real>& a_ness) {
    return mean_all(vabs(a_ness));
}

// Mean |1 - A^ness - P(background)|: action-ness should mirror the
// complement of the background probability of the final T-CAS.
template <typename Real>
Tensor<Real> guide_loss(const Tensor<Real>& a_ness, const Tensor<Real>& s_final) {
    auto bg = col(s_final, s_final.dim(1) - 1);
    auto gap = add_const(scale(add(a_ness, bg), Real(-1)), Real(1));
    return mean_all(vabs(gap));
}

// A designated same-class pair inside a batch (indices into the batch).
struct CaslPair {
    int first = 0;
    int second = 0;
    std::vector<int> shared_classes;
};

struct LossComponents {
    double l_mil = 0, l_supp = 0, l_cas = 0, l_norm = 0, l_guide = 0, total = 0;
};

namespace detail {

template <typename Real>
Tensor<Real> batch_mean(std::vector<Tensor<Real>>& terms) {
    Tensor<Real> acc = terms[0];
    for (size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
    return scale(acc, Real(1) / static_cast<Real>(terms.size()));
}

} // namespace detail

// Batch objective under the ablation flags. Per-video losses are averaged
// over the batch, the co-activity loss over the designated pairs. Component
// values carry their lambda weights so they sum to the total.
template <typename Real>
std::pair<Tensor<Real>, LossComponents>
total_loss(const std::vector<ModelOutputs<Real>>& outs, const std::vector<VideoLabel>& labels,
           const std::vector<CaslPair>& pairs, const LossWeights& w, const AblationFlags& flags) {
    if (outs.empty() || outs.size() != labels.size())
        throw ArgError("total_loss: batch outputs and labels must align");

    std::vector<Tensor<Real>> mil_terms, supp_terms, norm_terms, guide_terms;
    // The coarse T-CAS keeps an unsuppressed MIL supervision until the
    // suppressed variant takes over; n-CAD removes it entirely.
    const bool coarse_aux = flags.use_cad && flags.cad_supervised && !flags.use_l_supp_coarse;

    for (size_t i = 0; i < outs.size(); ++i) {
        const auto& o = outs[i];
        const auto& lbl = labels[i];
        const int k = w.topk(o.s_final.dim(0));

        auto mil = topk_mil_loss(o.s_final, lbl.y_full, k);
        if (flags.use_tea)
            mil = add(mil, scale(topk_mil_loss(o.s_temp, lbl.foreground_only(), k),
                                 static_cast<Real>(w.lambda1)));
        if (coarse_aux)
            mil = add(mil, scale(topk_mil_loss(o.s_coarse, lbl.y_full, k), static_cast<Real>(w.lambda0)));
        mil_terms.push_back(mil);

        if (flags.use_l_supp_mil || flags.use_l_supp_coarse) {
            Tensor<Real> supp = Tensor<Real>::scalar(Real(0));
            if (flags.use_l_supp_mil)
                supp = add(supp, topk_mil_loss(o.s_final_supp, lbl.y_fg, k));
            if (flags.use_l_supp_coarse)
                supp = add(supp, scale(topk_mil_loss(o.s_coarse_supp, lbl.y_fg, k),
                                       static_cast<Real>(w.lambda0)));
            supp_terms.push_back(supp);
        }
        if (flags.use_l_norm) norm_terms.push_back(norm_loss(o.a_ness));
        if (flags.use_l_guide) guide_terms.push_back(guide_loss(o.a_ness, o.s_final));
    }

    LossComponents comps;
    auto total = detail::batch_mean(mil_terms);
    comps.l_mil = static_cast<double>(total.values()[0]);

    if (!supp_terms.empty()) {
        auto supp = detail::batch_mean(supp_terms);
        comps.l_supp = static_cast<double>(supp.values()[0]);
        total = add(total, supp);
    }
    if (flags.use_l_cas && !pairs.empty()) {
        std::vector<Tensor<Real>> cas_terms;
        for (const auto& pr : pairs) {
            const auto& a = outs[static_cast<size_t>(pr.first)];
            const auto& b = outs[static_cast<size_t>(pr.second)];
            cas_terms.push_back(casl_loss(a.e_a, a.s_coarse_supp, b.e_a, b.s_coarse_supp,
                                          pr.shared_classes, w.casl_margin));
        }
        auto cas = scale(detail::batch_mean(cas_terms), static_cast<Real>(w.lambda2));
        comps.l_cas = static_cast<double>(cas.values()[0]);
        total = add(total, cas);
    }
    if (!norm_terms.empty()) {
        auto nrm = scale(detail::batch_mean(norm_terms), static_cast<Real>(w.lambda3));
        comps.l_norm = static_cast<double>(nrm.values()[0]);
        total = add(total, nrm);
    }
    if (!guide_terms.empty()) {
        auto gd = scale(detail::batch_mean(guide_terms), static_cast<Real>(w.lambda4));
        comps.l_guide = static_cast<double>(gd.values()[0]);
        total = add(total, gd);
    }
    comps.total = static_cast<double>(total.values()[0]);
    return {total, comps};
}

} // namespace jcd
