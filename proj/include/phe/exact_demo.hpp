#pragma once

// Three-bucket linear-Gaussian toy: two items X in {0, 1} hashed into a
// 3-row, 1-dim table, f(X) = e[h1(X)] + e[h2(X)], targets +1 / -1.
// Online gradient descent forgets; exact conjugate Bayes does not.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "phe/errors.hpp"
#include "phe/inference.hpp"

namespace phe::demo {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline Vec3 design(int x) {
    if (x == 0) return {1.0, 1.0, 0.0};
    if (x == 1) return {0.0, 1.0, 1.0};
    throw std::invalid_argument("demo: X must be 0 or 1");
}

inline double target(int x) { return x == 0 ? 1.0 : -1.0; }

struct Observation {
    int x = 0;
    double y = 0.0;
};

inline std::vector<int> blocked_schedule(std::size_t n) {
    std::vector<int> s(n, 0);
    s.resize(2 * n, 1);
    return s;
}

inline std::vector<int> alternating_schedule(std::size_t repeats, std::size_t cycles) {
    std::vector<int> s;
    for (std::size_t c = 0; c < cycles; ++c) {
        s.insert(s.end(), repeats, 0);
        s.insert(s.end(), repeats, 1);
    }
    return s;
}

struct OgdResult {
    std::vector<Vec3> trajectory;  // e before step 0, ..., after the last step
    Vec3 e;
    double f0 = 0, f1 = 0;
    bool diverged = false;
};

// e[h] -= eta * (f(X_t) - Y_t) for both rows h of X_t.
inline OgdResult ogd_run(double eta, const std::vector<Observation>& data, Vec3 e0 = Vec3::Zero()) {
    OgdResult r;
    r.e = e0;
    r.trajectory.reserve(data.size() + 1);
    r.trajectory.push_back(r.e);
    for (const auto& ob : data) {
        const int h1 = ob.x == 0 ? 0 : 1;
        const int h2 = ob.x == 0 ? 1 : 2;
        const double f = 0.0 + r.e[h1] + r.e[h2];
        const double g = f - ob.y;
        r.e[h1] -= eta * g;
        r.e[h2] -= eta * g;
        r.trajectory.push_back(r.e);
        if (r.e.cwiseAbs().maxCoeff() > 1e6) {
            r.diverged = true;
            break;
        }
    }
    r.f0 = design(0).dot(r.e);
    r.f1 = design(1).dot(r.e);
    return r;
}

inline std::vector<Observation> noiseless(const std::vector<int>& schedule) {
    std::vector<Observation> out;
    out.reserve(schedule.size());
    for (int x : schedule) out.push_back({x, target(x)});
    return out;
}

// ogd_run over N zeros followed by N ones.
inline OgdResult ogd_run(double eta, std::size_t N) { return ogd_run(eta, noiseless(blocked_schedule(N))); }

// Gaussian belief in information form: precision L and shift h = L * mean.
struct GaussianBelief {
    Mat3 precision = Mat3::Identity();
    Vec3 shift = Vec3::Zero();

    static GaussianBelief standard() { return {}; }

    Vec3 mean() const {
        Eigen::LLT<Mat3> llt(precision);
        if (llt.info() != Eigen::Success) throw NumericalError("belief precision is not positive definite");
        return llt.solve(shift);
    }
    Mat3 covariance() const {
        Eigen::LLT<Mat3> llt(precision);
        if (llt.info() != Eigen::Success) throw NumericalError("belief precision is not positive definite");
        return llt.solve(Mat3::Identity());
    }
};

// Conjugate update for Y = a_X . e + N(0, sigma_obs^2).
inline GaussianBelief bayes_update(const GaussianBelief& b, int x, double y, double sigma_obs) {
    if (!(sigma_obs > 0.0)) throw std::invalid_argument("bayes_update: sigma_obs must be > 0");
    const Vec3 a = design(x);
    const double tau = 1.0 / (sigma_obs * sigma_obs);
    GaussianBelief out;
    out.precision = b.precision + tau * a * a.transpose();
    out.shift = b.shift + tau * y * a;
    if (Eigen::LLT<Mat3>(out.precision).info() != Eigen::Success)
        throw NumericalError("bayes_update: posterior precision lost positive definiteness");
    return out;
}

inline GaussianBelief bayes_sequential(GaussianBelief b, const std::vector<Observation>& data, double sigma_obs) {
    for (const auto& ob : data) b = bayes_update(b, ob.x, ob.y, sigma_obs);
    return b;
}

// One update with the stacked design A: L + A^T A / s^2, h + A^T y / s^2.
inline GaussianBelief bayes_batch(const GaussianBelief& b, const std::vector<Observation>& data, double sigma_obs) {
    Eigen::MatrixXd A(static_cast<Eigen::Index>(data.size()), 3);
    Eigen::VectorXd y(static_cast<Eigen::Index>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i) {
        A.row(static_cast<Eigen::Index>(i)) = design(data[i].x).transpose();
        y[static_cast<Eigen::Index>(i)] = data[i].y;
    }
    const double tau = 1.0 / (sigma_obs * sigma_obs);
    GaussianBelief out;
    out.precision = b.precision + tau * A.transpose() * A;
    out.shift = b.shift + tau * A.transpose() * y;
    return out;
}

struct PermutationReport {
    double bayes_mean_spread = 0;  // max pairwise |difference| of posterior means
    double bayes_cov_spread = 0;
    double ogd_spread = 0;         // same, for OGD final states under the same orders
};

inline PermutationReport permutation_invariance_check(const std::vector<Observation>& data, std::size_t n_perm,
                                                      double sigma_obs, double eta, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Vec3> means, ogd;
    std::vector<Mat3> covs;
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t p = 0; p < n_perm; ++p) {
        if (p > 0) std::shuffle(order.begin(), order.end(), rng);
        std::vector<Observation> perm;
        for (auto i : order) perm.push_back(data[i]);
        const auto post = bayes_sequential(GaussianBelief::standard(), perm, sigma_obs);
        means.push_back(post.mean());
        covs.push_back(post.covariance());
        ogd.push_back(ogd_run(eta, perm).e);
    }
    PermutationReport r;
    for (std::size_t i = 0; i < n_perm; ++i)
        for (std::size_t j = i + 1; j < n_perm; ++j) {
            r.bayes_mean_spread = std::max(r.bayes_mean_spread, (means[i] - means[j]).cwiseAbs().maxCoeff());
            r.bayes_cov_spread = std::max(r.bayes_cov_spread, (covs[i] - covs[j]).cwiseAbs().maxCoeff());
            r.ogd_spread = std::max(r.ogd_spread, (ogd[i] - ogd[j]).cwiseAbs().maxCoeff());
        }
    return r;
}

// Hash seeds for which the library encoder (B=3, K=2, no namespacing)
// reproduces the demo layout h(item0) = {0, 1}, h(item1) = {1, 2}.
inline HashSpec demo_hash_spec(std::uint64_t start = 0) {
    for (std::uint64_t s = start; s < start + 100000; ++s) {
        HashSpec spec = HashSpec::from_seed(3, 2, 1, 1, s);
        if (hash_signature(spec, "item0").rows == std::vector<std::size_t>{0, 1} &&
            hash_signature(spec, "item1").rows == std::vector<std::size_t>{1, 2})
            return spec;
    }
    throw std::runtime_error("demo_hash_spec: no seed found");
}

inline EncoderConfig demo_encoder() {
    EncoderConfig cfg;
    cfg.spec = demo_hash_spec();
    cfg.aggregation = Aggregation::sum;
    cfg.column_namespacing = false;
    return cfg;
}

inline FeatureLayout demo_layout() {
    FeatureLayout l;
    l.cat_columns = {"X"};
    l.target = TargetKind::real;
    return l;
}

inline Record demo_record(int x, double y) {
    Record r;
    r.cats = {x == 0 ? "item0" : "item1"};
    r.target = y;
    return r;
}

struct PheDemoConfig {
    double sigma_obs = 0.01;
    std::size_t steps_per_stage = 2000;
    double learning_rate = 0.01;
    std::size_t mc_samples_predict = 8;
};

inline PheModel make_demo_phe(const PheDemoConfig& cfg, std::uint64_t seed) {
    TrainConfig tc;
    tc.learning_rate = cfg.learning_rate;
    tc.epochs_initial = cfg.steps_per_stage;
    tc.epochs_online = cfg.steps_per_stage;
    tc.mc_samples_predict = cfg.mc_samples_predict;
    tc.init_mean_std = 0.0;  // start at the prior mean so the unidentified direction stays there
    tc.record_trajectory = false;
    return PheModel(demo_encoder(), demo_layout(), IdentityGaussian(cfg.sigma_obs), tc, seed);
}

struct TracePoint {
    std::size_t step = 0;
    std::string model;
    int x = 0;
    double error = 0;
};

struct AlternatingResult {
    std::vector<TracePoint> trace;  // step-major, models in order ogd, bayes, phe
    Vec3 exact_mean = Vec3::Zero();
    Vec3 phe_mean = Vec3::Zero();
    Vec3 ogd_e = Vec3::Zero();

    std::vector<double> errors(const std::string& model) const {
        std::vector<double> out;
        for (const auto& t : trace)
            if (t.model == model) out.push_back(t.error);
        return out;
    }
};

struct AlternatingConfig {
    std::size_t repeats = 10;
    std::size_t cycles = 10;
    double eta = 0.1;
    PheDemoConfig phe;
};

// Predict-then-update on the alternating stream. OGD and exact Bayes update
// after every observation; PHE runs one posterior-to-prior stage per full
// cycle (both items once), so each stage sees the identifying data.
inline AlternatingResult alternating_demo(const AlternatingConfig& cfg, std::uint64_t seed) {
    const auto schedule = alternating_schedule(cfg.repeats, cfg.cycles);
    const std::size_t cycle = 2 * cfg.repeats;
    AlternatingResult res;
    Vec3 e = Vec3::Zero();
    GaussianBelief belief;
    PheModel phe = make_demo_phe(cfg.phe, seed);
    std::vector<Record> stage_data;
    const std::array<Record, 2> probes{demo_record(0, 1.0), demo_record(1, -1.0)};
    std::array<double, 2> phe_pred{0.0, 0.0};
    for (std::size_t t = 0; t < schedule.size(); ++t) {
        const int x = schedule[t];
        const double y = target(x);
        const Vec3 a = design(x);
        if (t % cycle == 0) {
            Rng probe_rng(seed + 1000003 * (t / cycle + 1));
            const auto p = phe.predict_with(probes, cfg.phe.mc_samples_predict, probe_rng);
            phe_pred = {p[0][0], p[1][0]};
        }
        res.trace.push_back({t, "ogd", x, std::abs(a.dot(e) - y)});
        res.trace.push_back({t, "bayes", x, std::abs(a.dot(belief.mean()) - y)});
        res.trace.push_back({t, "phe", x, std::abs(phe_pred[static_cast<std::size_t>(x)] - y)});

        const double g = a.dot(e) - y;
        e -= cfg.eta * g * a;
        belief = bayes_update(belief, x, y, cfg.phe.sigma_obs);
        stage_data.push_back(demo_record(x, y));
        if (stage_data.size() == cycle) {
            if (phe.stage() == 0) {
                phe.fit_initial(stage_data);
            } else {
                phe.fit_online(stage_data);
            }
            phe.advance_stage();
            stage_data.clear();
        }
    }
    res.exact_mean = belief.mean();
    res.phe_mean = phe.table_e().mu.col(0);
    res.ogd_e = e;
    return res;
}

inline void write_trace_csv(std::ostream& os, const AlternatingResult& r) {
    os << "step,model,x,error\n";
    char buf[64];
    for (const auto& t : r.trace) {
        std::snprintf(buf, sizeof buf, "%.17g", t.error);
        os << t.step << ',' << t.model << ',' << t.x << ',' << buf << '\n';
    }
}

}  // namespace phe::demo
