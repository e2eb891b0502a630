#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "phe/likelihoods.hpp"

using namespace phe;
using Catch::Approx;

namespace {

// max relative error of the analytic gradient against central differences
double fd_rel_error(LikelihoodHead& head, Vector f, double y) {
    const auto [dtheta, df] = head.grad({f.data(), static_cast<std::size_t>(f.size())}, y);
    const double h = 1e-4;
    double worst = 0.0;
    auto ll = [&](const Vector& x) { return head.log_lik({x.data(), static_cast<std::size_t>(x.size())}, y); };
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1e-6, std::max(std::abs(a), std::abs(b))); };
    for (Eigen::Index i = 0; i < head.params().size(); ++i) {
        const double orig = head.params()[i];
        head.params()[i] = orig + h;
        const double up = ll(f);
        head.params()[i] = orig - h;
        const double dn = ll(f);
        head.params()[i] = orig;
        worst = std::max(worst, rel(dtheta[i], (up - dn) / (2 * h)));
    }
    for (Eigen::Index j = 0; j < f.size(); ++j) {
        Vector a = f, b = f;
        a[j] += h, b[j] -= h;
        worst = std::max(worst, rel(df[j], (ll(a) - ll(b)) / (2 * h)));
    }
    return worst;
}

}  // namespace

TEST_CASE("trivial log-likelihood values") {
    LikelihoodHead cat = CategoricalLinear(3, 4);
    const std::vector<double> f{0.3, -1.0, 2.0};
    CHECK(cat.log_lik(f, 2) == Approx(std::log(0.25)));

    GaussianMlp g(1, 4, 1.0);
    g.params.setZero();
    g.params[g.b2()] = 0.7;
    LikelihoodHead gh = g;
    CHECK(gh.log_lik(std::vector<double>{5.0}, 0.7) == Approx(-std::log(std::sqrt(2.0 * std::numbers::pi))));

    LikelihoodHead p = PoissonLinear(2);
    CHECK(p.log_lik(std::vector<double>{1.0, 2.0}, 0) == Approx(-1.0));
}

TEST_CASE("predictions") {
    LikelihoodHead cat = CategoricalLinear(2, 5);
    const Vector pr = cat.predict(std::vector<double>{1.0, 1.0});
    CHECK(pr.sum() == Approx(1.0).margin(1e-12));
    CHECK(pr.minCoeff() == Approx(0.2));

    PoissonLinear p(1);
    p.params[1] = std::log(3.0);
    CHECK(LikelihoodHead(p).predict(std::vector<double>{0.0})[0] == Approx(3.0));

    // hand-computed 2-2-1 network
    GaussianMlp g(2, 2, 0.1);
    g.params << 1.0, 0.0, 0.0, 1.0,  // W1
        0.0, 0.5,                     // b1
        2.0, -1.0,                    // w2
        0.25;                         // b2
    const double expect = 2.0 * std::tanh(0.3) - std::tanh(-0.4 + 0.5) + 0.25;
    CHECK(LikelihoodHead(g).predict(std::vector<double>{0.3, -0.4})[0] == Approx(expect));
}

TEST_CASE("head gradients match finite differences on random instances") {
    Rng rng(17);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_int_distribution<int> cls(0, 3), cnt(0, 6);
    for (int inst = 0; inst < 100; ++inst) {
        const std::size_t F = 1 + static_cast<std::size_t>(inst % 7);
        Vector f(static_cast<Eigen::Index>(F));
        for (auto& x : f) x = n(rng);

        LikelihoodHead cat = CategoricalLinear(F, 4);
        cat.init(rng);
        CHECK(fd_rel_error(cat, f, cls(rng)) < 1e-4);

        LikelihoodHead mlp = GaussianMlp(F, 8, 0.5);
        mlp.init(rng);
        CHECK(fd_rel_error(mlp, f, n(rng)) < 1e-4);

        LikelihoodHead poi = PoissonLinear(F);
        poi.init(rng);
        CHECK(fd_rel_error(poi, f, cnt(rng)) < 1e-4);
    }
}

TEST_CASE("saturated softmax has vanishing feature gradient") {
    CategoricalLinear c(1, 2);
    c.params << 50.0, -50.0, 0.0, 0.0;
    const auto [dt, df] = LikelihoodHead(c).grad(std::vector<double>{10.0}, 0);
    CHECK(std::abs(df[0]) < 1e-100);
}

TEST_CASE("zero hidden weights block the feature gradient") {
    GaussianMlp g(3, 4, 0.2);
    Rng rng(1);
    g.init(rng);
    g.params.head(12).setZero();
    const auto [dt, df] = LikelihoodHead(g).grad(std::vector<double>{1.0, 2.0, 3.0}, 0.4);
    CHECK(df.isZero(0.0));
    CHECK(std::abs(dt[g.b1(0)]) > 0.0);  // the bias path still carries gradient
}

TEST_CASE("small ascent steps increase concave log-likelihoods") {
    Rng rng(5);
    for (int inst = 0; inst < 20; ++inst) {
        for (int which = 0; which < 2; ++which) {
            LikelihoodHead h = which == 0 ? LikelihoodHead(CategoricalLinear(3, 3)) : LikelihoodHead(PoissonLinear(3));
            h.init(rng);
            const std::vector<double> f{0.5, -0.2, 1.0};
            const double y = 1;
            const double before = h.log_lik(f, y);
            auto [dt, df] = h.grad(f, y);
            h.params() += 1e-3 * dt;
            CHECK(h.log_lik(f, y) > before);
        }
    }
}

TEST_CASE("invalid targets") {
    LikelihoodHead cat = CategoricalLinear(1, 2);
    CHECK_THROWS_AS(cat.log_lik(std::vector<double>{0.0}, 2), std::invalid_argument);
    LikelihoodHead poi = PoissonLinear(1);
    CHECK_THROWS_AS(poi.log_lik(std::vector<double>{0.0}, -1), std::invalid_argument);
    CHECK_THROWS_AS(GaussianMlp(1, 2, 0.0), ConfigError);
    CHECK_THROWS_AS(cat.log_lik(std::vector<double>{0.0, 1.0}, 0), std::invalid_argument);
}
