#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include "jcd/model.hpp"
#include "jcd/rng.hpp"

using TD = jcd::Tensor<double>;
using TF = jcd::Tensor<float>;

namespace {

jcd::ModelConfig tiny_cfg(int feature_dim = 6, int hidden = 4, int classes = 2, int kernel = 3) {
    jcd::ModelConfig cfg;
    cfg.feature_dim = feature_dim;
    cfg.hidden_dim = hidden;
    cfg.num_classes = classes;
    cfg.snippets_train = 8;
    cfg.conv_kernel = kernel;
    cfg.dropout_rate = 0.0;
    return cfg;
}

template <typename Real>
jcd::Tensor<Real> rand_features(jcd::Rng& rng, int t_len, int f2) {
    std::vector<Real> v(static_cast<size_t>(t_len) * f2);
    for (auto& x : v) x = static_cast<Real>(rng.normal());
    return jcd::Tensor<Real>({t_len, f2}, std::move(v));
}

// Straight double-loop evaluation of the definite-phase feature average.
std::vector<double> m_def_oracle(const TD& s_coarse, const TD& x_a) {
    const int t_len = s_coarse.dim(0), classes = s_coarse.dim(1), d = x_a.dim(1);
    std::vector<double> out(static_cast<size_t>(classes) * d, 0.0);
    for (int c = 0; c < classes; ++c) {
        double denom = 0.0;
        for (int t = 0; t < t_len; ++t) denom += s_coarse.at(t, c);
        for (int dd = 0; dd < d; ++dd) {
            double num = 0.0;
            for (int t = 0; t < t_len; ++t) num += s_coarse.at(t, c) * x_a.at(t, dd);
            out[static_cast<size_t>(c) * d + dd] = num / denom;
        }
    }
    return out;
}

} // namespace

TEST_CASE("config and flag validation") {
    jcd::ModelConfig bad = tiny_cfg();
    bad.conv_kernel = 2;
    REQUIRE_THROWS_AS(bad.validate(), jcd::ConfigError);
    bad = tiny_cfg();
    bad.num_classes = 0;
    REQUIRE_THROWS_AS(bad.validate(), jcd::ConfigError);

    jcd::AblationFlags flags;
    flags.use_tea = false;
    REQUIRE_THROWS_AS(flags.validate(), jcd::ConfigError);
    flags.use_l_supp_mil = false;
    flags.use_l_supp_coarse = false;
    flags.use_l_norm = false;
    flags.use_l_guide = false;
    flags.use_l_cas = false;
    REQUIRE_NOTHROW(flags.validate());
}

TEST_CASE("definite-phase features: one-hot selector rows pick per-class means") {
    TD s_coarse({2, 2}, std::vector<double>{1, 0, 0, 1});
    TD x_a({2, 2}, std::vector<double>{1, 2, 3, 4});
    auto m_def = jcd::definite_phase_features(s_coarse, x_a);
    REQUIRE(m_def.values() == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("definite-phase features match the loop oracle on random instances") {
    jcd::Rng rng(31);
    for (int iter = 0; iter < 20; ++iter) {
        const int t_len = static_cast<int>(rng.range(2, 9));
        const int classes = static_cast<int>(rng.range(2, 5));
        const int d = static_cast<int>(rng.range(1, 7));
        std::vector<double> logits(static_cast<size_t>(t_len) * classes);
        for (auto& v : logits) v = rng.uniform(-3, 3);
        auto s_coarse = jcd::softmax(TD({t_len, classes}, std::move(logits)), 1);
        std::vector<double> xv(static_cast<size_t>(t_len) * d);
        for (auto& v : xv) v = rng.normal();
        TD x_a({t_len, d}, std::move(xv));

        auto m_def = jcd::definite_phase_features(s_coarse, x_a);
        auto oracle = m_def_oracle(s_coarse, x_a);
        for (size_t i = 0; i < oracle.size(); ++i)
            REQUIRE(m_def.values()[i] == Catch::Approx(oracle[i]).margin(1e-9));
    }
}

TEST_CASE("m_def rows stay inside the bounding box of x_a rows") {
    jcd::Rng rng(77);
    for (int iter = 0; iter < 20; ++iter) {
        const int t_len = 6, classes = 3, d = 4;
        std::vector<double> logits(static_cast<size_t>(t_len) * classes);
        for (auto& v : logits) v = rng.uniform(-4, 4);
        auto s_coarse = jcd::softmax(TD({t_len, classes}, std::move(logits)), 1);
        auto x_a = rand_features<double>(rng, t_len, d);
        auto m_def = jcd::definite_phase_features(s_coarse, x_a);
        for (int dd = 0; dd < d; ++dd) {
            double lo = x_a.at(0, dd), hi = x_a.at(0, dd);
            for (int t = 1; t < t_len; ++t) {
                lo = std::min(lo, x_a.at(t, dd));
                hi = std::max(hi, x_a.at(t, dd));
            }
            for (int c = 0; c < classes; ++c) {
                REQUIRE(m_def.at(c, dd) >= lo - 1e-12);
                REQUIRE(m_def.at(c, dd) <= hi + 1e-12);
            }
        }
    }
}

TEST_CASE("zero gates make both residual branches exact identities") {
    jcd::Rng rng(101);
    auto cfg = tiny_cfg();
    jcd::AblationFlags flags;
    auto params = jcd::ModelParams<float>::init(cfg, flags, rng);
    REQUIRE(params.alpha.values()[0] == 0.0f);
    REQUIRE(params.beta.values()[0] == 0.0f);

    for (int iter = 0; iter < 20; ++iter) {
        auto x = rand_features<float>(rng, 7, cfg.feature_dim);
        auto out = jcd::forward(x, cfg, flags, params, jcd::Mode::Eval);
        REQUIRE(out.e_a.values() == out.x_a.values()); // bit-exact
        REQUIRE(out.e_e.values() == out.x_e.values()); // bit-exact
    }
}

TEST_CASE("zero query weights give a uniform attention map") {
    jcd::Rng rng(55);
    auto cfg = tiny_cfg();
    jcd::AblationFlags flags;
    auto params = jcd::ModelParams<double>::init(cfg, flags, rng);
    std::fill(params.tea_q_w.values().begin(), params.tea_q_w.values().end(), 0.0);
    std::fill(params.tea_q_b.values().begin(), params.tea_q_b.values().end(), 0.0);

    const int t_len = 5;
    auto x = rand_features<double>(rng, t_len, cfg.feature_dim);
    auto out = jcd::forward(x, cfg, flags, params, jcd::Mode::Eval);
    for (int i = 0; i < t_len; ++i)
        for (int j = 0; j < t_len; ++j)
            REQUIRE(out.m_e.at(i, j) == Catch::Approx(1.0 / t_len).margin(1e-12));
}

TEST_CASE("zero class logits give action-ness 0.5 and uniform final rows") {
    jcd::Rng rng(66);
    auto cfg = tiny_cfg();
    jcd::AblationFlags flags;
    auto params = jcd::ModelParams<double>::init(cfg, flags, rng);
    std::fill(params.tea_cls_w.values().begin(), params.tea_cls_w.values().end(), 0.0);
    std::fill(params.fuse_cls_w.values().begin(), params.fuse_cls_w.values().end(), 0.0);

    auto x = rand_features<double>(rng, 6, cfg.feature_dim);
    auto out = jcd::forward(x, cfg, flags, params, jcd::Mode::Eval);
    for (int t = 0; t < 6; ++t) {
        REQUIRE(out.a_ness.values()[static_cast<size_t>(t)] == Catch::Approx(0.5).margin(1e-12));
        for (int c = 0; c <= cfg.num_classes; ++c)
            REQUIRE(out.s_final.at(t, c) == Catch::Approx(1.0 / (cfg.num_classes + 1)).margin(1e-12));
    }
}

TEST_CASE("a saturated fusion logit yields a one-hot final row") {
    jcd::Rng rng(67);
    auto cfg = tiny_cfg();
    jcd::AblationFlags flags;
    auto params = jcd::ModelParams<double>::init(cfg, flags, rng);
    params.fuse_cls_b.values()[1] = 1000.0;
    auto x = rand_features<double>(rng, 4, cfg.feature_dim);
    auto out = jcd::forward(x, cfg, flags, params, jcd::Mode::Eval);
    for (int t = 0; t < 4; ++t) {
        REQUIRE(out.s_final.at(t, 1) == Catch::Approx(1.0));
        REQUIRE(out.s_final.at(t, 0) == Catch::Approx(0.0).margin(1e-12));
    }
}

TEST_CASE("suppression is elementwise and annihilates/preserves at the extremes") {
    TD s({1, 2}, std::vector<double>{0.2, 0.8});
    TD half({1}, std::vector<double>{0.5});
    auto sup = jcd::suppress(s, half);
    REQUIRE(sup.values() == std::vector<double>{0.1, 0.4});

    TD zero({1}, std::vector<double>{0.0});
    REQUIRE(jcd::suppress(s, zero).values() == std::vector<double>{0.0, 0.0});
    TD one({1}, std::vector<double>{1.0});
    REQUIRE(jcd::suppress(s, one).values() == s.values());
}

TEST_CASE("eval forward is deterministic and satisfies the output invariants") {
    jcd::Rng rng(88);
    auto cfg = tiny_cfg(8, 5, 3);
    jcd::AblationFlags flags;
    auto params = jcd::ModelParams<float>::init(cfg, flags, rng);

    auto x = rand_features<float>(rng, 9, cfg.feature_dim);
    auto out1 = jcd::forward(x, cfg, flags, params, jcd::Mode::Eval);
    auto out2 = jcd::forward(x, cfg, flags, params, jcd::Mode::Eval);
    REQUIRE(out1.s_final.values() == out2.s_final.values());
    REQUIRE(out1.a_ness.values() == out2.a_ness.values());

    for (int iter = 0; iter < 30; ++iter) {
        const int t_len = static_cast<int>(rng.range(2, 12));
        auto xr = rand_features<float>(rng, t_len, cfg.feature_dim);
        auto out = jcd::forward(xr, cfg, flags, params, jcd::Mode::Eval);

        for (int t = 0; t < t_len; ++t) {
            double row_c = 0, row_f = 0;
            for (int c = 0; c <= cfg.num_classes; ++c) {
                row_c += out.s_coarse.at(t, c);
                row_f += out.s_final.at(t, c);
            }
            REQUIRE(row_c == Catch::Approx(1.0).margin(1e-5));
            REQUIRE(row_f == Catch::Approx(1.0).margin(1e-5));

            const float a = out.a_ness.values()[static_cast<size_t>(t)];
            REQUIRE(a > 0.0f);
            REQUIRE(a < 1.0f);

            double col_sum = 0;
            for (int i = 0; i < t_len; ++i) col_sum += out.m_e.at(i, t);
            REQUIRE(col_sum == Catch::Approx(1.0).margin(1e-5));

            // suppressed T-CAS must equal the elementwise product, bit-exact
            for (int c = 0; c <= cfg.num_classes; ++c) {
                REQUIRE(out.s_final_supp.at(t, c) == a * out.s_final.at(t, c));
                REQUIRE(out.s_coarse_supp.at(t, c) == a * out.s_coarse.at(t, c));
            }
        }
    }
}

TEST_CASE("train-mode dropout is seed-deterministic and off in eval") {
    jcd::Rng rng(91);
    auto cfg = tiny_cfg();
    cfg.dropout_rate = 0.5;
    jcd::AblationFlags flags;
    auto params = jcd::ModelParams<float>::init(cfg, flags, rng);
    auto x = rand_features<float>(rng, 6, cfg.feature_dim);

    jcd::Rng d1(7), d2(7);
    auto a = jcd::forward(x, cfg, flags, params, jcd::Mode::Train, &d1);
    auto b = jcd::forward(x, cfg, flags, params, jcd::Mode::Train, &d2);
    REQUIRE(a.s_final.values() == b.s_final.values());

    REQUIRE_THROWS_AS(jcd::forward(x, cfg, flags, params, jcd::Mode::Train), jcd::ArgError);
    REQUIRE_NOTHROW(jcd::forward(x, cfg, flags, params, jcd::Mode::Eval));
}

TEST_CASE("permuting snippets permutes outputs consistently under pointwise kernels") {
    jcd::Rng rng(123);
    auto cfg = tiny_cfg(6, 4, 2, /*kernel=*/1); // pointwise so permutation acts per snippet
    jcd::AblationFlags flags;
    auto params = jcd::ModelParams<double>::init(cfg, flags, rng);

    const int t_len = 7;
    auto x = rand_features<double>(rng, t_len, cfg.feature_dim);
    std::vector<int> perm(t_len);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);

    std::vector<double> px(static_cast<size_t>(t_len) * cfg.feature_dim);
    for (int t = 0; t < t_len; ++t)
        for (int f = 0; f < cfg.feature_dim; ++f)
            px[static_cast<size_t>(t) * cfg.feature_dim + f] = x.at(perm[static_cast<size_t>(t)], f);
    TD xp({t_len, cfg.feature_dim}, std::move(px));

    auto out = jcd::forward(x, cfg, flags, params, jcd::Mode::Eval);
    auto outp = jcd::forward(xp, cfg, flags, params, jcd::Mode::Eval);

    for (int t = 0; t < t_len; ++t) {
        for (int c = 0; c <= cfg.num_classes; ++c) {
            REQUIRE(outp.s_final.at(t, c) == Catch::Approx(out.s_final.at(perm[static_cast<size_t>(t)], c)).margin(1e-9));
            REQUIRE(outp.s_coarse.at(t, c) == Catch::Approx(out.s_coarse.at(perm[static_cast<size_t>(t)], c)).margin(1e-9));
        }
        REQUIRE(outp.a_ness.values()[static_cast<size_t>(t)] ==
                Catch::Approx(out.a_ness.values()[static_cast<size_t>(perm[static_cast<size_t>(t)])]).margin(1e-9));
        for (int j = 0; j < t_len; ++j)
            REQUIRE(outp.m_e.at(t, j) ==
                    Catch::Approx(out.m_e.at(perm[static_cast<size_t>(t)], perm[static_cast<size_t>(j)])).margin(1e-9));
    }
    // the per-class prototypes are order-invariant
    for (size_t i = 0; i < out.m_def.size(); ++i)
        REQUIRE(outp.m_def.values()[i] == Catch::Approx(out.m_def.values()[i]).margin(1e-9));
}

TEST_CASE("ablation variants drop the corresponding outputs and parameters") {
    jcd::Rng rng(140);
    auto cfg = tiny_cfg();

    jcd::AblationFlags baseline;
    baseline.use_cad = false;
    baseline.use_tea = false;
    baseline.use_l_supp_mil = false;
    baseline.use_l_supp_coarse = false;
    baseline.use_l_norm = false;
    baseline.use_l_guide = false;
    baseline.use_l_cas = false;
    auto params = jcd::ModelParams<float>::init(cfg, baseline, rng);
    REQUIRE(params.named().size() == 4); // embed + fuse only

    auto x = rand_features<float>(rng, 6, cfg.feature_dim);
    auto out = jcd::forward(x, cfg, baseline, params, jcd::Mode::Eval);
    REQUIRE_FALSE(out.s_coarse.valid());
    REQUIRE_FALSE(out.s_temp.valid());
    REQUIRE(out.s_final.valid());
    REQUIRE(out.e_a.values() == out.x_a.values());
    // fallback action-ness complements the background probability
    for (int t = 0; t < 6; ++t) {
        const float a = out.a_ness.values()[static_cast<size_t>(t)];
        REQUIRE(a == 1.0f - out.s_final.at(t, cfg.num_classes));
        REQUIRE(a > 0.0f);
        REQUIRE(a < 1.0f);
    }
}
