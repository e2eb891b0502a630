#pragma once

// Likelihood heads p_theta(y | features). Parameters live in one flat vector
// so the optimizer, checkpoints and gradient checks treat every head alike.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>

#include "phe/errors.hpp"
#include "phe/gaussian_table.hpp"

namespace phe {

namespace detail {

inline void check_features(std::span<const double> f, std::size_t expected) {
    if (f.size() != expected)
        throw std::invalid_argument("head: feature length " + std::to_string(f.size()) + ", expected " +
                                    std::to_string(expected));
}

inline void fill_normal(std::span<double> xs, double sd, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& x : xs) x = sd * normal(rng);
}

}  // namespace detail

// softmax(W f + b); params = [W (C x F, row-major) | b (C)].
struct CategoricalLinear {
    std::size_t features = 0;
    std::size_t classes = 2;
    Vector params;

    CategoricalLinear() = default;
    CategoricalLinear(std::size_t f, std::size_t c) : features(f), classes(c), params(Vector::Zero(static_cast<Eigen::Index>(c * f + c))) {
        if (c < 2) throw ConfigError("categorical head needs at least two classes");
    }

    void init(Rng& rng) {
        params.setZero();
        detail::fill_normal({params.data(), classes * features}, 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(features, 1))), rng);
    }

    double weight(std::size_t c, std::size_t j) const { return params[static_cast<Eigen::Index>(c * features + j)]; }
    double bias(std::size_t c) const { return params[static_cast<Eigen::Index>(classes * features + c)]; }

    Vector logits(std::span<const double> f) const {
        detail::check_features(f, features);
        Vector z(static_cast<Eigen::Index>(classes));
        for (std::size_t c = 0; c < classes; ++c) {
            double s = bias(c);
            for (std::size_t j = 0; j < features; ++j) s += weight(c, j) * f[j];
            z[static_cast<Eigen::Index>(c)] = s;
        }
        return z;
    }

    static Vector log_softmax(const Vector& z) {
        const double m = z.maxCoeff();
        const double lse = m + std::log((z.array() - m).exp().sum());
        return z.array() - lse;
    }

    std::size_t check_target(double y) const {
        if (!(y >= 0.0) || y != std::floor(y) || y >= static_cast<double>(classes))
            throw std::invalid_argument("categorical head: class index out of range");
        return static_cast<std::size_t>(y);
    }

    double log_lik(std::span<const double> f, double y) const {
        const std::size_t cls = check_target(y);
        return log_softmax(logits(f))[static_cast<Eigen::Index>(cls)];
    }

    // Adds w * dlog/dtheta into dtheta, writes w * dlog/df into df; returns log-lik.
    double accumulate(std::span<const double> f, double y, double w, Vector* dtheta, std::span<double> df) const {
        const std::size_t cls = check_target(y);
        const Vector lp = log_softmax(logits(f));
        const Vector p = lp.array().exp();
        std::fill(df.begin(), df.end(), 0.0);
        for (std::size_t c = 0; c < classes; ++c) {
            const double r = w * ((c == cls ? 1.0 : 0.0) - p[static_cast<Eigen::Index>(c)]);
            for (std::size_t j = 0; j < features; ++j) df[j] += r * weight(c, j);
            if (dtheta != nullptr) {
                for (std::size_t j = 0; j < features; ++j) (*dtheta)[static_cast<Eigen::Index>(c * features + j)] += r * f[j];
                (*dtheta)[static_cast<Eigen::Index>(classes * features + c)] += r;
            }
        }
        return lp[static_cast<Eigen::Index>(cls)];
    }

    Vector predict(std::span<const double> f) const { return log_softmax(logits(f)).array().exp(); }
};

// Gaussian with mean w2 . tanh(W1 f + b1) + b2 and fixed scale sigma_y;
// params = [W1 (H x F) | b1 (H) | w2 (H) | b2].
struct GaussianMlp {
    std::size_t features = 0;
    std::size_t hidden = 64;
    double sigma_y = 0.1;
    Vector params;

    GaussianMlp() = default;
    GaussianMlp(std::size_t f, std::size_t h, double sy)
        : features(f), hidden(h), sigma_y(sy), params(Vector::Zero(static_cast<Eigen::Index>(h * f + 2 * h + 1))) {
        if (!(sy > 0.0)) throw ConfigError("gaussian head: sigma_y must be > 0");
        if (h < 1) throw ConfigError("gaussian head: hidden width must be >= 1");
    }

    void init(Rng& rng) {
        params.setZero();
        detail::fill_normal({params.data(), hidden * features}, 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(features, 1))), rng);
        detail::fill_normal({params.data() + hidden * features + hidden, hidden}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
    }

    Eigen::Index w1(std::size_t h, std::size_t j) const { return static_cast<Eigen::Index>(h * features + j); }
    Eigen::Index b1(std::size_t h) const { return static_cast<Eigen::Index>(hidden * features + h); }
    Eigen::Index w2(std::size_t h) const { return static_cast<Eigen::Index>(hidden * features + hidden + h); }
    Eigen::Index b2() const { return static_cast<Eigen::Index>(hidden * features + 2 * hidden); }

    double mean(std::span<const double> f, Vector* act = nullptr) const {
        detail::check_features(f, features);
        double m = params[b2()];
        if (act != nullptr) act->resize(static_cast<Eigen::Index>(hidden));
        for (std::size_t h = 0; h < hidden; ++h) {
            double a = params[b1(h)];
            for (std::size_t j = 0; j < features; ++j) a += params[w1(h, j)] * f[j];
            const double t = std::tanh(a);
            if (act != nullptr) (*act)[static_cast<Eigen::Index>(h)] = t;
            m += params[w2(h)] * t;
        }
        return m;
    }

    double log_norm() const { return std::log(sigma_y * std::sqrt(2.0 * std::numbers::pi)); }

    static void check_target(double y) {
        if (!std::isfinite(y)) throw std::invalid_argument("gaussian head: non-finite target");
    }

    double log_lik(std::span<const double> f, double y) const {
        check_target(y);
        const double r = y - mean(f);
        return -r * r / (2.0 * sigma_y * sigma_y) - log_norm();
    }

    double accumulate(std::span<const double> f, double y, double w, Vector* dtheta, std::span<double> df) const {
        check_target(y);
        Vector act;
        const double m = mean(f, &act);
        const double r = y - m;
        const double dm = w * r / (sigma_y * sigma_y);
        std::fill(df.begin(), df.end(), 0.0);
        for (std::size_t h = 0; h < hidden; ++h) {
            const double t = act[static_cast<Eigen::Index>(h)];
            const double da = dm * params[w2(h)] * (1.0 - t * t);
            for (std::size_t j = 0; j < features; ++j) df[j] += da * params[w1(h, j)];
            if (dtheta != nullptr) {
                (*dtheta)[w2(h)] += dm * t;
                (*dtheta)[b1(h)] += da;
                for (std::size_t j = 0; j < features; ++j) (*dtheta)[w1(h, j)] += da * f[j];
            }
        }
        if (dtheta != nullptr) (*dtheta)[b2()] += dm;
        return -r * r / (2.0 * sigma_y * sigma_y) - log_norm();
    }

    Vector predict(std::span<const double> f) const { return Vector::Constant(1, mean(f)); }
};

// Poisson with rate exp(w . f + b); params = [w (F) | b].
struct PoissonLinear {
    std::size_t features = 0;
    Vector params;

    PoissonLinear() = default;
    explicit PoissonLinear(std::size_t f) : features(f), params(Vector::Zero(static_cast<Eigen::Index>(f + 1))) {}

    void init(Rng& rng) {
        params.setZero();
        detail::fill_normal({params.data(), features}, 0.1 / std::sqrt(static_cast<double>(std::max<std::size_t>(features, 1))), rng);
    }

    double eta(std::span<const double> f) const {
        detail::check_features(f, features);
        double s = params[static_cast<Eigen::Index>(features)];
        for (std::size_t j = 0; j < features; ++j) s += params[static_cast<Eigen::Index>(j)] * f[j];
        return s;
    }

    static void check_target(double y) {
        if (!(y >= 0.0) || y != std::floor(y)) throw std::invalid_argument("poisson head: count must be a nonnegative integer");
    }

    double log_lik(std::span<const double> f, double y) const {
        check_target(y);
        const double n = eta(f);
        return y * n - std::exp(n) - std::lgamma(y + 1.0);
    }

    double accumulate(std::span<const double> f, double y, double w, Vector* dtheta, std::span<double> df) const {
        check_target(y);
        const double n = eta(f);
        const double dn = w * (y - std::exp(n));
        for (std::size_t j = 0; j < features; ++j) {
            df[j] = dn * params[static_cast<Eigen::Index>(j)];
            if (dtheta != nullptr) (*dtheta)[static_cast<Eigen::Index>(j)] += dn * f[j];
        }
        if (dtheta != nullptr) (*dtheta)[static_cast<Eigen::Index>(features)] += dn;
        return y * n - std::exp(n) - std::lgamma(y + 1.0);
    }

    Vector predict(std::span<const double> f) const { return Vector::Constant(1, std::exp(eta(f))); }
};

// N(y; f[0], sigma_y^2) with no trainable parameters: the linear-Gaussian
// model of the two-item demo, where the prediction is the embedding itself.
struct IdentityGaussian {
    std::size_t features = 1;
    double sigma_y = 1.0;
    Vector params = Vector::Zero(0);

    IdentityGaussian() = default;
    explicit IdentityGaussian(double sy) : sigma_y(sy) {
        if (!(sy > 0.0)) throw ConfigError("identity head: sigma_y must be > 0");
    }

    void init(Rng&) {}

    double log_norm() const { return std::log(sigma_y * std::sqrt(2.0 * std::numbers::pi)); }

    double log_lik(std::span<const double> f, double y) const {
        detail::check_features(f, 1);
        const double r = y - f[0];
        return -r * r / (2.0 * sigma_y * sigma_y) - log_norm();
    }

    double accumulate(std::span<const double> f, double y, double w, Vector*, std::span<double> df) const {
        detail::check_features(f, 1);
        const double r = y - f[0];
        df[0] = w * r / (sigma_y * sigma_y);
        return -r * r / (2.0 * sigma_y * sigma_y) - log_norm();
    }

    Vector predict(std::span<const double> f) const {
        detail::check_features(f, 1);
        return Vector::Constant(1, f[0]);
    }
};

enum class HeadKind { categorical_linear, gaussian_mlp, poisson_linear, identity_gaussian };

inline HeadKind parse_head_kind(std::string_view s) {
    if (s == "categorical-linear") return HeadKind::categorical_linear;
    if (s == "gaussian-mlp") return HeadKind::gaussian_mlp;
    if (s == "poisson-linear") return HeadKind::poisson_linear;
    if (s == "identity-gaussian") return HeadKind::identity_gaussian;
    throw ConfigError("head: unknown kind '" + std::string(s) + "'");
}

inline std::string to_string(HeadKind k) {
    switch (k) {
        case HeadKind::categorical_linear: return "categorical-linear";
        case HeadKind::gaussian_mlp: return "gaussian-mlp";
        case HeadKind::poisson_linear: return "poisson-linear";
        case HeadKind::identity_gaussian: return "identity-gaussian";
    }
    return "?";
}

class LikelihoodHead {
public:
    using Variant = std::variant<CategoricalLinear, GaussianMlp, PoissonLinear, IdentityGaussian>;

    LikelihoodHead() = default;
    template <class H>
    LikelihoodHead(H h) : v_(std::move(h)) {}  // NOLINT: implicit by design

    HeadKind kind() const { return static_cast<HeadKind>(v_.index()); }
    bool is_classifier() const { return std::holds_alternative<CategoricalLinear>(v_); }

    std::size_t feature_dim() const {
        return std::visit([](const auto& h) { return h.features; }, v_);
    }
    std::size_t output_dim() const {
        if (const auto* c = std::get_if<CategoricalLinear>(&v_)) return c->classes;
        return 1;
    }

    Vector& params() {
        return std::visit([](auto& h) -> Vector& { return h.params; }, v_);
    }
    const Vector& params() const {
        return std::visit([](const auto& h) -> const Vector& { return h.params; }, v_);
    }

    void init(Rng& rng) {
        std::visit([&](auto& h) { h.init(rng); }, v_);
    }

    double log_lik(std::span<const double> f, double y) const {
        return std::visit([&](const auto& h) { return h.log_lik(f, y); }, v_);
    }

    double accumulate(std::span<const double> f, double y, double w, Vector* dtheta, std::span<double> df) const {
        return std::visit([&](const auto& h) { return h.accumulate(f, y, w, dtheta, df); }, v_);
    }

    // Plain gradient of log p(y | f): (dtheta, df).
    std::pair<Vector, Vector> grad(std::span<const double> f, double y) const {
        Vector dtheta = Vector::Zero(params().size());
        Vector df = Vector::Zero(static_cast<Eigen::Index>(f.size()));
        accumulate(f, y, 1.0, &dtheta, {df.data(), f.size()});
        return {std::move(dtheta), std::move(df)};
    }

    Vector predict(std::span<const double> f) const {
        return std::visit([&](const auto& h) { return h.predict(f); }, v_);
    }

    const Variant& variant() const { return v_; }
    Variant& variant() { return v_; }

private:
    Variant v_;
};

}  // namespace phe
