#include <catch_amalgamated.hpp>

#include <limits>

#include "phe/encoder.hpp"

using namespace phe;
using Catch::Approx;

namespace {

struct Fixture {
    EncoderConfig cfg;
    GaussianTable e, w;
    Fixture(std::size_t B, std::size_t K, std::size_t P, std::size_t d, Aggregation agg, std::uint64_t seed = 1) {
        cfg.spec = HashSpec::from_seed(B, K, P, d, seed);
        cfg.aggregation = agg;
        Rng rng(seed);
        e = init_table(B, d, rng, 1.0, 0.3);
        w = init_table(P, K, rng, 1.0, 0.3);
    }
};

double dot(const Vector& a, const Vector& b) { return a.dot(b); }

}  // namespace

TEST_CASE("K=1 sum with zero noise returns the hashed mu row") {
    Fixture fx(7, 1, 1, 4, Aggregation::sum);
    const Vector v = encode_mean(fx.cfg, fx.e, fx.w, "apple");
    const auto row = hash_item(fx.cfg.spec, 0, "apple");
    CHECK(v == fx.e.mu.row(static_cast<Eigen::Index>(row)).transpose());
}

TEST_CASE("zero weight row gives a zero embedding") {
    Fixture fx(7, 3, 2, 4, Aggregation::weighted_sum);
    fx.w.mu.setZero();
    fx.w.rho.setConstant(-std::numeric_limits<double>::infinity());
    Rng rng(3);
    CHECK(encode(fx.cfg, fx.e, fx.w, "x", rng).value.isZero(0.0));
}

TEST_CASE("sum and mean aggregation") {
    Fixture fs(7, 3, 1, 4, Aggregation::sum);
    const auto sig = hash_signature(fs.cfg.spec, "q");
    Vector expect = Vector::Zero(4);
    for (auto r : sig.rows) expect += fs.e.mu.row(static_cast<Eigen::Index>(r)).transpose();
    CHECK(encode_mean(fs.cfg, fs.e, fs.w, "q").isApprox(expect));
    fs.cfg.aggregation = Aggregation::mean;
    CHECK(encode_mean(fs.cfg, fs.e, fs.w, "q").isApprox(expect / 3.0));
}

TEST_CASE("encode_mean equals encode when sigma is clamped to zero") {
    Fixture fx(5, 3, 3, 6, Aggregation::weighted_sum);
    fx.e.rho.setConstant(-std::numeric_limits<double>::infinity());
    fx.w.rho.setConstant(-std::numeric_limits<double>::infinity());
    Rng rng(9);
    CHECK(encode(fx.cfg, fx.e, fx.w, "abc", rng).value == encode_mean(fx.cfg, fx.e, fx.w, "abc"));
    CHECK(encode_mean(fx.cfg, fx.e, fx.w, "abc") == encode_mean(fx.cfg, fx.e, fx.w, "abc"));
}

TEST_CASE("a repeated row is sampled once per pass") {
    // B=1 forces all K lookups onto row 0; in sum mode the output is K times one draw
    Fixture fx(1, 3, 1, 2, Aggregation::sum);
    Rng rng(4);
    auto enc = encode(fx.cfg, fx.e, fx.w, "z", rng);
    const auto row = enc.e_draw.row(0);
    CHECK(enc.value[0] == Approx(3.0 * row[0]));
    CHECK(enc.value[1] == Approx(3.0 * row[1]));
}

TEST_CASE("encode gradient matches finite differences with frozen noise") {
    for (auto agg : {Aggregation::weighted_sum, Aggregation::sum, Aggregation::mean}) {
        Fixture fx(5, 3, 2, 4, agg, 11);
        Rng coef_rng(12);
        Vector c = Vector::Random(4);
        const Rng base(77);
        auto loss = [&](const GaussianTable& e, const GaussianTable& w) {
            Rng r = base;
            return dot(c, encode(fx.cfg, e, w, "item", r).value);
        };
        Rng r = base;
        auto enc = encode(fx.cfg, fx.e, fx.w, "item", r);
        TableGrad<GaussianTable> ge, gw;
        ge.reset(fx.e);
        gw.reset(fx.w);
        encode_backward(fx.cfg, enc, std::span<const double>(c.data(), 4), ge, &gw);
        const double h = 1e-6;
        auto check_table = [&](GaussianTable& t, const TableGrad<GaussianTable>& g, bool is_e) {
            for (Eigen::Index i = 0; i < t.mu.size(); ++i) {
                for (int which = 0; which < 2; ++which) {
                    Matrix& m = which == 0 ? t.mu : t.rho;
                    const double orig = m.data()[i];
                    m.data()[i] = orig + h;
                    const double up = is_e ? loss(t, fx.w) : loss(fx.e, t);
                    m.data()[i] = orig - h;
                    const double dn = is_e ? loss(t, fx.w) : loss(fx.e, t);
                    m.data()[i] = orig;
                    const double fd = (up - dn) / (2 * h);
                    const double an = (which == 0 ? g.mu : g.rho).data()[i];
                    CHECK(an == Approx(fd).epsilon(1e-4).margin(1e-8));
                }
            }
        };
        check_table(fx.e, ge, true);
        if (agg == Aggregation::weighted_sum) check_table(fx.w, gw, false);
    }
}

TEST_CASE("hash sharing drives interference") {
    EncoderConfig cfg;
    cfg.spec = HashSpec::from_seed(4, 2, 1, 3, 21);
    cfg.aggregation = Aggregation::sum;
    // find one pair that shares a row and one that shares none
    auto rows = [&](const std::string& s) { return hash_signature(cfg.spec, s).rows; };
    auto shares = [&](const std::string& a, const std::string& b) {
        for (auto x : rows(a))
            for (auto y : rows(b))
                if (x == y) return true;
        return false;
    };
    std::string a = "a0", shared, disjoint;
    for (int i = 1; i < 200 && (shared.empty() || disjoint.empty()); ++i) {
        const auto b = "a" + std::to_string(i);
        if (shares(a, b) && shared.empty()) shared = b;
        if (!shares(a, b) && disjoint.empty()) disjoint = b;
    }
    REQUIRE(!shared.empty());
    REQUIRE(!disjoint.empty());
    Rng rng(1);
    auto e = init_table(4, 3, rng);
    auto w = init_table(1, 2, rng);
    const Vector before_shared = encode_mean(cfg, e, w, shared);
    const Vector before_disjoint = encode_mean(cfg, e, w, disjoint);
    for (auto r : rows(a)) e.mu.row(static_cast<Eigen::Index>(r)).array() += 1.0;
    CHECK(encode_mean(cfg, e, w, shared) != before_shared);
    CHECK(encode_mean(cfg, e, w, disjoint) == before_disjoint);
}

TEST_CASE("encode is linear in the E rows") {
    Fixture fx(5, 3, 2, 4, Aggregation::weighted_sum);
    const Vector v = encode_mean(fx.cfg, fx.e, fx.w, "lin");
    fx.e.mu *= 2.0;
    CHECK(encode_mean(fx.cfg, fx.e, fx.w, "lin").isApprox(2.0 * v, 1e-14));
}

TEST_CASE("column namespacing") {
    EncoderConfig cfg;
    cfg.spec = HashSpec::from_seed(1000, 3, 11, 2, 2);
    CHECK(hash_key(cfg, "color", "red") == "color=red");
    int differ = 0;
    for (int i = 0; i < 20; ++i) {
        const auto item = "v" + std::to_string(i);
        if (hash_signature(cfg.spec, hash_key(cfg, "c1", item)) != hash_signature(cfg.spec, hash_key(cfg, "c2", item))) ++differ;
    }
    CHECK(differ > 15);
    cfg.column_namespacing = false;
    CHECK(hash_key(cfg, "c1", "v") == hash_key(cfg, "c2", "v"));
}

TEST_CASE("shape mismatches are rejected") {
    Fixture fx(5, 3, 2, 4, Aggregation::weighted_sum);
    Rng rng(1);
    auto wrong = init_table(6, 4, rng);
    CHECK_THROWS_AS(encode_mean(fx.cfg, wrong, fx.w, "x"), std::invalid_argument);
    CHECK_THROWS_AS(parse_aggregation("max"), ConfigError);
}
