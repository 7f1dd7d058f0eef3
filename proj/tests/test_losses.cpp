#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "nowcast/errors.hpp"
#include "nowcast/losses.hpp"
#include "nowcast/nowcast_net.hpp"
#include "support.hpp"

using namespace nowcast;
using namespace nowcast::loss;
using ad::Graph;
using ad::Shape;
using ad::Tensor;
using ad::Var;

namespace {

// Straight transcription of the bracket table, kept separate from the library.
double oracle_weight(double x, double th) {
    if (x < th) return 0;
    if (x < 2) return 1;
    if (x < 5) return 2;
    if (x < 10) return 5;
    if (x < 30) return 10;
    return 30;
}

double oracle_wmae(const std::vector<std::vector<double>>& y, const std::vector<std::vector<double>>& p, double th,
                   bool squared) {
    double s = 0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < y.size(); ++t)
        for (std::size_t i = 0; i < y[t].size(); ++i, ++n) {
            const double e = std::abs(y[t][i] - p[t][i]);
            s += oracle_weight(y[t][i], th) * (squared ? e * e : e);
        }
    return s / static_cast<double>(n);
}

Tensor tensor_of(const std::vector<double>& v, Shape s) {
    Tensor t(s);
    t.data = v;
    return t;
}

}  // namespace

TEST_CASE("weight brackets") {
    CHECK(weight(0.3, 0.5) == 0);
    CHECK(weight(1.9, 0.5) == 1);
    CHECK(weight(2.0, 0.5) == 2);
    CHECK(weight(9.99, 0.5) == 5);
    CHECK(weight(10, 0.5) == 10);
    CHECK(weight(30, 0.5) == 30);
    CHECK(weight(0.3, 0.0) == 1);
    double prev = 0;
    for (double x = 0; x < 60; x += 0.01) {
        CHECK(weight(x, -1) > 0);
        const double w = weight(x, 0.5);
        CHECK(w >= prev);
        CHECK(w == oracle_weight(x, 0.5));
        prev = w;
    }
}

TEST_CASE("scalar loss examples") {
    const std::vector<double> y{5}, p{3};
    CHECK(wmae(y, p, 0.5) == doctest::Approx(10));
    CHECK(wmse(y, p, 0.5) == doctest::Approx(20));
    CHECK(wmae(y, y, 0.5) == 0);
    CHECK(wmse(y, y, 0.5) == 0);
    CHECK(balanced_loss(std::vector<double>{0.2}, std::vector<double>{1.2}) == doctest::Approx(1.0));
    CHECK(balanced_loss(std::vector<double>{0.6, 3}, std::vector<double>{9, 9}) == 0);
    CHECK(wmae(std::vector<double>{0.1, 0.4}, std::vector<double>{50, 7}, 0.5) == 0);
    CHECK_THROWS_AS(wmae(std::vector<double>{1, 2}, std::vector<double>{1}, 0.5), Error);

    const std::vector<double> half{0.5, 0.5, 0.5};
    CHECK(d_loss(half, half) == doctest::Approx(6 * std::log(2.0)));
    CHECK(d_loss(half, half) == doctest::Approx(4.159).epsilon(1e-3));
    CHECK(g_adv_loss(half) == doctest::Approx(3 * std::log(2.0)));
    CHECK(d_loss(std::vector<double>{1, 1, 1}, std::vector<double>{0, 0, 0}) < 1e-6);
    CHECK(g_adv_loss(std::vector<double>{1, 1, 1}) < 1e-6);
    const std::vector<double> real{0.8, 0.7, 0.9}, fake{0.2, 0.1, 0.3};
    CHECK(d_loss(fake, real) > d_loss(real, fake));
    CHECK_THROWS_AS(d_loss(std::vector<double>{1.2}, std::vector<double>{0.5}), Error);
    CHECK_THROWS_AS(g_adv_loss(std::vector<double>{std::nan("")}), Error);
    CHECK(std::isfinite(g_adv_loss(std::vector<double>{0.0})));
}

TEST_CASE("composite mixing and spec validation") {
    LossSpec adv;
    adv.use_adv = true;
    CHECK(combine(adv, 10, 0, 2) == doctest::Approx(9.6));
    adv.w_adv = 0;
    CHECK(combine(adv, 10, 0, 2) == 10);
    LossSpec bal;
    bal.use_bal = true;
    CHECK(combine(bal, 10, 1, 0) == doctest::Approx(9.91));
    CHECK(combine(LossSpec{}, 10, 1, 2) == 10);

    LossSpec both;
    both.use_adv = both.use_bal = true;
    try {
        validate(both);
        FAIL("accepted");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ConflictingSpec);
    }
    both.w_bal = 0;
    CHECK_NOTHROW(validate(both));
    LossSpec heavy;
    heavy.w_adv = 1.0;
    try {
        validate(heavy);
        FAIL("accepted");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DomainError);
    }
    heavy.w_adv = -0.1;
    CHECK_THROWS_AS(validate(heavy), Error);

    const std::vector<double> y{5, 0.2}, p{3, 1.2};
    LossSpec b2;
    b2.use_bal = true;
    CHECK(composite_loss(b2, y, p, {}) == doctest::Approx(0.99 * 5 + 0.01 * 0.5));
}

TEST_CASE("tensor losses agree with an independent oracle") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> d(0.0, 40.0);
    const int n = 3, hw = 5;
    std::vector<std::vector<std::vector<double>>> ys(n, std::vector<std::vector<double>>(3)), ps = ys;
    std::vector<Tensor> targets;
    Graph g;
    std::vector<Var> preds;
    for (int t = 0; t < 3; ++t) {
        Tensor yt(Shape{n, 1, hw, hw}), pt(yt.shape);
        for (int s = 0; s < n; ++s)
            for (int i = 0; i < hw * hw; ++i) {
                const double yv = i % 4 == 0 ? d(rng) / 100.0 : d(rng);
                const double pv = d(rng);
                yt[s * hw * hw + i] = yv;
                pt[s * hw * hw + i] = pv;
                ys[s][t].push_back(yv);
                ps[s][t].push_back(pv);
            }
        targets.push_back(yt);
        preds.push_back(g.constant(pt));
    }
    for (double th : {0.5, 0.0, -1.0}) {
        double mae = 0, mse = 0;
        for (int s = 0; s < n; ++s) {
            mae += oracle_wmae(ys[s], ps[s], th, false) / n;
            mse += oracle_wmae(ys[s], ps[s], th, true) / n;
        }
        CHECK(wmae(preds, targets, th).value()[0] == doctest::Approx(mae).epsilon(1e-12));
        CHECK(wmse(preds, targets, th).value()[0] == doctest::Approx(mse).epsilon(1e-12));
    }
    // pixels split between the weighted and balanced terms
    double bal = 0, weighted = 0;
    for (int s = 0; s < n; ++s)
        for (int t = 0; t < 3; ++t)
            for (std::size_t i = 0; i < ys[s][t].size(); ++i) {
                const double e = std::abs(ys[s][t][i] - ps[s][t][i]);
                (ys[s][t][i] < 0.5 ? bal : weighted) += e;
            }
    const double norm = 3.0 * n * hw * hw;
    CHECK(balanced_loss(preds, targets).value()[0] == doctest::Approx(bal / norm));
    double part_w = 0;
    for (int s = 0; s < n; ++s)
        for (int t = 0; t < 3; ++t)
            for (std::size_t i = 0; i < ys[s][t].size(); ++i)
                if (ys[s][t][i] >= 0.5) part_w += oracle_weight(ys[s][t][i], 0.5) * std::abs(ys[s][t][i] - ps[s][t][i]);
    CHECK(wmae(preds, targets, 0.5).value()[0] == doctest::Approx(part_w / norm));
    CHECK(weighted > 0);
}

TEST_CASE("wmae gradient is weight / (T*H*W) per pixel") {
    const Tensor y = tensor_of({0.2, 1.0, 3.0, 7.0, 12.0, 40.0}, Shape{1, 1, 2, 3});
    Tensor p0 = tensor_of({1.0, 0.0, 4.0, 6.0, 13.0, 30.0}, y.shape);
    ad::Parameter p("p", y.shape);
    p.value = p0;
    Graph g;
    const Var pv = g.parameter(p);
    const Var preds[] = {pv, pv, pv};
    const Tensor ts[] = {y, y, y};
    g.backward(wmae(preds, ts, 0.5));
    const double sign[] = {1, -1, 1, -1, 1, -1};  // sign(p - y)
    for (int i = 0; i < 6; ++i) CHECK(p.grad[i] == doctest::Approx(3 * sign[i] * oracle_weight(y[i], 0.5) / 18.0));
}

TEST_CASE("adversarial losses through a dense discriminator on 4x4 maps") {
    net::NetConfig cfg;
    cfg.height = cfg.width = 4;
    cfg.encoder_channels = {2, 2, 2};
    cfg.stem_channels = 2;
    cfg.discriminator_units = {6, 5, 1};
    net::NowcastModel m(cfg, net::ModelOptions{false, true, net::OutputHead::Rain}, 4);
    std::mt19937_64 rng(9);
    std::vector<ad::Parameter> real(3, ad::Parameter("real", Shape{2, 1, 4, 4})), fake = real;
    for (auto& r : real) testsupport::fill_uniform(r, 0, 2, rng);
    for (auto& f : fake) testsupport::fill_uniform(f, 0, 2, rng);
    std::vector<ad::Parameter*> disc, maps;
    for (auto& p : m.parameters())
        if (m.is_discriminator(p)) disc.push_back(&p);
    for (auto& f : fake) maps.push_back(&f);

    auto scores = [&](Graph& g, net::Binder& b, std::vector<ad::Parameter>& src, bool trainable) {
        std::vector<Var> out;
        for (auto& s : src) out.push_back(m.discriminate(b, g.parameter(s, trainable)));
        return out;
    };
    std::vector<ad::Parameter*> all = disc;
    all.insert(all.end(), maps.begin(), maps.end());
    const auto rd = testsupport::check_gradients(all, [&](Graph& g) {
        net::Binder b(g);
        const auto rs = scores(g, b, real, false);
        const auto fs = scores(g, b, fake, true);
        return d_loss(rs, fs);
    });
    INFO(rd.worst);
    CHECK(rd.max_rel < 1e-3);

    // generator loss: maps learn, discriminator frozen and untouched
    const auto rg = testsupport::check_gradients(maps, [&](Graph& g) {
        net::Binder b(g, [&](const ad::Parameter& p) { return !m.is_discriminator(p); });
        return g_adv_loss(scores(g, b, fake, true));
    });
    INFO(rg.worst);
    CHECK(rg.max_rel < 1e-3);

    for (auto* p : disc) p->zero_grad();
    Graph g;
    net::Binder b(g, [&](const ad::Parameter& p) { return !m.is_discriminator(p); });
    g.backward(g_adv_loss(scores(g, b, fake, true)));
    for (auto* p : disc)
        for (double v : p->grad.data) CHECK(v == 0.0);
    double gm = 0;
    for (auto& f : fake)
        for (double v : f.grad.data) gm = std::max(gm, std::abs(v));
    CHECK(gm > 0);

    // batch-mean d_loss equals the per-hour cross-entropy for one-sample batches
    Graph g2;
    const Var half = g2.constant(Tensor(Shape{1, 1, 1, 1}, 0.5));
    const Var hs[] = {half, half, half};
    CHECK(d_loss(hs, hs).value()[0] == doctest::Approx(6 * std::log(2.0)));
    CHECK(g_adv_loss(hs).value()[0] == doctest::Approx(3 * std::log(2.0)));
}

TEST_CASE("binary cross-entropy labels and clamp") {
    Graph g;
    const Tensor y = tensor_of({0.0, 0.5, 0.51, 3.0}, Shape{1, 1, 2, 2});
    const Var p = g.constant(tensor_of({0.25, 0.25, 0.75, 1.0}, y.shape));
    const Var ps[] = {p};
    const Tensor ys[] = {y};
    const double expect = -(std::log(0.75) + std::log(0.75) + std::log(0.75) + std::log(1 - 1e-7)) / 4.0;
    CHECK(binary_cross_entropy(ps, ys).value()[0] == doctest::Approx(expect));
}
