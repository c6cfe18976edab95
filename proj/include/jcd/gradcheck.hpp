#pragma once

#include <functional>
#include <string>
#include <vector>

#include "jcd/losses.hpp"
#include "jcd/model.hpp"
#include "jcd/rng.hpp"
#include "jcd/tensor.hpp"

// Finite-difference verification of every differentiable op and loss at tiny
// dims, in double precision. Smooth ops must reach 1e-5 relative error;
// compositions containing top-k selections or hinges get 1e-3 and are probed
// away from their kinks.

namespace jcd {

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0;
    double tolerance = 0;
    bool passed = false;
};

// Gap between the k-th selected entry and the best excluded one; zero marks
// a tie, i.e. a non-differentiable point that must be excluded from checks.
template <typename Real>
Real topk_boundary_gap(const std::vector<Real>& v, int k) {
    std::vector<Real> sorted(v);
    std::sort(sorted.begin(), sorted.end(), std::greater<Real>());
    if (k >= static_cast<int>(sorted.size())) return std::numeric_limits<Real>::infinity();
    return sorted[static_cast<size_t>(k - 1)] - sorted[static_cast<size_t>(k)];
}

template <typename Real>
bool topk_is_differentiable(const std::vector<Real>& v, int k, Real margin) {
    return topk_boundary_gap(v, k) > margin;
}

inline GradCheckResult run_single_check(const std::string& name, double tolerance,
                                        const std::function<Tensor<double>()>& fn,
                                        std::vector<Tensor<double>> params, double eps = 1e-5) {
    GradCheckResult r;
    r.name = name;
    r.tolerance = tolerance;
    r.max_rel_err = grad_check<double>(fn, std::move(params), eps);
    r.passed = r.max_rel_err < tolerance;
    return r;
}

namespace detail {

inline Tensor<double> rand_t(Rng& rng, std::vector<int> shape, double lo, double hi) {
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor<double>(std::move(shape), std::move(v), true);
}

} // namespace detail

inline std::vector<GradCheckResult> run_gradient_checks() {
    using T = Tensor<double>;
    std::vector<GradCheckResult> results;
    Rng rng(20240607);
    constexpr double kSmooth = 1e-5;
    constexpr double kKinky = 1e-3;

    auto check = [&](const std::string& name, double tol, const std::function<T()>& fn,
                     std::vector<T> params, double eps = 1e-5) {
        results.push_back(run_single_check(name, tol, fn, std::move(params), eps));
    };

    {
        auto a = detail::rand_t(rng, {3, 4}, -1, 1);
        auto b = detail::rand_t(rng, {4, 2}, -1, 1);
        check("matmul", kSmooth, [&] { return sum_all(matmul(a, b)); }, {a, b});
        check("transpose", kSmooth, [&] { return sum_all(transposed(a)); }, {a});
    }
    {
        auto x = detail::rand_t(rng, {6, 3}, -1, 1);
        auto w = detail::rand_t(rng, {3, 3, 2}, -1, 1);
        auto b = detail::rand_t(rng, {2}, -1, 1);
        check("conv1d", kSmooth, [&] { return sum_all(conv1d(x, w, b)); }, {x, w, b});
    }
    {
        auto m = detail::rand_t(rng, {4, 3}, -2, 2);
        auto probe = detail::rand_t(rng, {4, 3}, -1, 1);
        probe.node()->requires_grad = false;
        check("softmax_axis0", kSmooth, [&] { return sum_all(mul(softmax(m, 0), probe)); }, {m});
        check("softmax_axis1", kSmooth, [&] { return sum_all(mul(softmax(m, 1), probe)); }, {m});
    }
    {
        // probed away from the kink at zero
        T r({5}, std::vector<double>{-1.4, 0.9, 2.2, -0.5, 1.1}, true);
        check("relu", kSmooth, [&] { return sum_all(relu(r)); }, {r});
        T ab({4}, std::vector<double>{-0.8, 1.2, -2.1, 0.4}, true);
        check("abs", kSmooth, [&] { return sum_all(vabs(ab)); }, {ab});
    }
    {
        auto s = detail::rand_t(rng, {6}, -3, 3);
        check("sigmoid", kSmooth, [&] { return sum_all(sigmoid(s)); }, {s});
        auto q = detail::rand_t(rng, {4}, 0.5, 3.0);
        check("sqrt", kSmooth, [&] { return sum_all(vsqrt(q)); }, {q});
        check("reciprocal", kSmooth, [&] { return sum_all(reciprocal(q)); }, {q});
    }
    {
        auto u = detail::rand_t(rng, {5}, -1, 1);
        auto v = detail::rand_t(rng, {5}, 0.5, 1.5);
        check("add", kSmooth, [&] { return sum_all(add(u, v)); }, {u, v});
        check("sub", kSmooth, [&] { return sum_all(sub(u, v)); }, {u, v});
        check("mul", kSmooth, [&] { return mean_all(mul(u, v)); }, {u, v});
        check("div", kSmooth, [&] { return sum_all(div(u, v)); }, {u, v});
        check("dot", kSmooth, [&] { return dot(u, v); }, {u, v});
    }
    {
        auto m = detail::rand_t(rng, {4, 3}, -1, 1);
        auto v = detail::rand_t(rng, {4}, 0.3, 1.2);
        auto gate = T::scalar(0.41, true);
        check("scale_rows", kSmooth, [&] { return sum_all(scale_rows(m, v)); }, {m, v});
        check("scale_by", kSmooth, [&] { return sum_all(scale_by(m, gate)); }, {m, gate});
        check("col", kSmooth, [&] { return sum_all(col(m, 2)); }, {m});
        check("sum_axis", kSmooth, [&] { return sum_all(sum_axis(m, 0)); }, {m});
        check("mean_axis", kSmooth, [&] { return sum_all(mean_axis(m, 1)); }, {m});
        check("weighted_sum_rows", kSmooth, [&] { return sum_all(weighted_sum_rows(m, v)); }, {m, v});
        auto m2 = detail::rand_t(rng, {4, 2}, -1, 1);
        check("concat_cols", kSmooth, [&] { return sum_all(concat_cols(m, m2)); }, {m, m2});
    }
    {
        T tk({6}, std::vector<double>{0.8, -0.4, 1.9, 0.2, -1.1, 0.55}, true);
        if (!topk_is_differentiable(tk.values(), 3, 1e-6))
            throw std::logic_error("gradcheck: topk probe sits on a tie");
        check("topk_mean", kKinky, [&] { return topk_mean(tk, 3); }, {tk}, 1e-4);
        auto tkm = detail::rand_t(rng, {6, 3}, -2, 2);
        check("topk_mean_cols", kKinky, [&] { return sum_all(topk_mean_cols(tkm, 2)); }, {tkm}, 1e-4);
    }
    {
        auto logits = detail::rand_t(rng, {4}, -2, 2);
        std::vector<double> target{0.25, 0.25, 0.5, 0.0};
        check("ce_with_logits", kSmooth, [&] { return ce_with_logits(logits, target); }, {logits});
    }

    // model branch composites and every loss at tiny dims
    ModelConfig cfg;
    cfg.feature_dim = 4;
    cfg.hidden_dim = 3;
    cfg.num_classes = 2;
    cfg.snippets_train = 6;
    cfg.conv_kernel = 3;
    cfg.dropout_rate = 0.0;
    AblationFlags flags;
    auto params = ModelParams<double>::init(cfg, flags, rng);
    auto x1 = detail::rand_t(rng, {6, 4}, -1, 1);
    auto x2 = detail::rand_t(rng, {6, 4}, -1, 1);
    x1.node()->requires_grad = false;
    x2.node()->requires_grad = false;
    auto probe = detail::rand_t(rng, {6, 3}, -1, 1);
    probe.node()->requires_grad = false;

    check("cad_forward", kSmooth,
          [&] {
              auto cad = cad_forward(x1, cfg, params);
              return add(sum_all(mul(cad.e_a, probe)), sum_all(cad.m_def));
          },
          params.all());
    check("tea_forward", kSmooth,
          [&] {
              auto tea = tea_forward(x1, cfg, params);
              return add(sum_all(mul(tea.e_e, probe)), sum_all(tea.a_ness));
          },
          params.all());

    auto labels = std::vector<VideoLabel>{VideoLabel::from_foreground({0}, 2),
                                          VideoLabel::from_foreground({0, 1}, 2)};
    LossWeights w;
    const int k = 2;

    auto forward_pair = [&]() {
        std::vector<ModelOutputs<double>> outs;
        outs.push_back(forward(x1, cfg, flags, params, Mode::Eval));
        outs.push_back(forward(x2, cfg, flags, params, Mode::Eval));
        return outs;
    };

    check("topk_mil_loss", kKinky,
          [&] {
              auto outs = forward_pair();
              return topk_mil_loss(outs[0].s_final, labels[0].y_full, k);
          },
          params.all(), 1e-4);
    check("suppressed_loss", kKinky,
          [&] {
              auto outs = forward_pair();
              return suppressed_loss(outs[0].s_final_supp, outs[0].s_coarse_supp, labels[0], k,
                                     w.lambda0);
          },
          params.all(), 1e-4);
    check("unsuppressed_loss", kKinky,
          [&] {
              auto outs = forward_pair();
              return unsuppressed_loss(outs[0].s_final, outs[0].s_temp, labels[0], k, w.lambda1);
          },
          params.all(), 1e-4);
    check("casl_loss", kKinky,
          [&] {
              auto outs = forward_pair();
              return casl_loss(outs[0].e_a, outs[0].s_coarse_supp, outs[1].e_a,
                               outs[1].s_coarse_supp, {0}, w.casl_margin);
          },
          params.all(), 1e-4);
    check("norm_loss", kSmooth,
          [&] { return norm_loss(forward_pair()[0].a_ness); }, params.all());
    check("guide_loss", kKinky,
          [&] {
              auto out = forward_pair()[0];
              return guide_loss(out.a_ness, out.s_final);
          },
          params.all(), 1e-4);
    check("total_loss", kKinky,
          [&] {
              auto outs = forward_pair();
              std::vector<CaslPair> pairs{{0, 1, {0}}};
              return total_loss(outs, labels, pairs, w, flags).first;
          },
          params.all(), 1e-4);

    return results;
}

} // namespace jcd
