#pragma once

// Mean-field Gaussian parameter tables (embedding table E, weight table W),
// their frozen prior snapshots, and the closed-form Gaussian KL.

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace phe {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

inline double softplus(double r) noexcept {
    // log1p(exp(r)) without overflow; softplus(-inf) == 0.
    return r > 30.0 ? r : std::log1p(std::exp(r));
}

inline double sigmoid(double r) noexcept { return 1.0 / (1.0 + std::exp(-r)); }

inline double inverse_softplus(double s) { return s > 30.0 ? s : std::log(std::expm1(s)); }

inline std::span<double> row_span(Matrix& m, std::size_t r) {
    return {m.data() + r * static_cast<std::size_t>(m.cols()), static_cast<std::size_t>(m.cols())};
}

inline std::span<const double> row_span(const Matrix& m, std::size_t r) {
    return {m.data() + r * static_cast<std::size_t>(m.cols()), static_cast<std::size_t>(m.cols())};
}

struct GaussianTable {
    Matrix mu;
    Matrix rho;  // sigma = softplus(rho)

    std::size_t rows() const { return static_cast<std::size_t>(mu.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(mu.cols()); }
    double sigma(std::size_t i, std::size_t j) const {
        return softplus(rho(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    Matrix sigma() const { return rho.unaryExpr([](double r) { return softplus(r); }); }

    bool finite() const { return mu.allFinite() && rho.allFinite(); }
};

inline constexpr double kInitMeanStd = 0.1;
inline constexpr double kInitSigma = 0.1;

// Appends `n` rows initialised like init_table.
inline void append_rows(GaussianTable& t, std::size_t n, Rng& rng, double mean_std = kInitMeanStd,
                        double sigma = kInitSigma) {
    const auto old = t.mu.rows();
    const auto cols = t.mu.cols();
    t.mu.conservativeResize(old + static_cast<Eigen::Index>(n), cols);
    t.rho.conservativeResize(old + static_cast<Eigen::Index>(n), cols);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double rho0 = inverse_softplus(sigma);
    for (auto i = old; i < t.mu.rows(); ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            t.mu(i, j) = mean_std * normal(rng);
            t.rho(i, j) = rho0;
        }
    }
}

// mu ~ N(0, mean_std^2) i.i.d., sigma fixed.
inline GaussianTable init_table(std::size_t rows, std::size_t cols, Rng& rng,
                                double mean_std = kInitMeanStd, double sigma = kInitSigma) {
    if (rows < 1 || cols < 1) throw std::invalid_argument("init_table: empty shape");
    GaussianTable t;
    t.mu.resize(0, static_cast<Eigen::Index>(cols));
    t.rho.resize(0, static_cast<Eigen::Index>(cols));
    append_rows(t, rows, rng, mean_std, sigma);
    return t;
}

// Frozen per-entry Gaussian prior. No mutating accessors exist.
class PriorSnapshot {
public:
    PriorSnapshot(Matrix mean, Matrix scale) : mean_(std::move(mean)), scale_(std::move(scale)) {
        if (mean_.rows() != scale_.rows() || mean_.cols() != scale_.cols())
            throw std::invalid_argument("PriorSnapshot: shape mismatch");
        if (!(scale_.array() > 0.0).all())
            throw std::invalid_argument("PriorSnapshot: scales must be positive");
    }

    const Matrix& mean() const noexcept { return mean_; }
    const Matrix& scale() const noexcept { return scale_; }
    std::size_t rows() const { return static_cast<std::size_t>(mean_.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(mean_.cols()); }

private:
    Matrix mean_;
    Matrix scale_;
};

inline PriorSnapshot standard_prior(std::size_t rows, std::size_t cols) {
    const auto r = static_cast<Eigen::Index>(rows);
    const auto c = static_cast<Eigen::Index>(cols);
    return PriorSnapshot(Matrix::Zero(r, c), Matrix::Ones(r, c));
}

inline PriorSnapshot snapshot(const GaussianTable& t) { return PriorSnapshot(t.mu, t.sigma()); }

// row_i = mu[idx_i] + softplus(rho[idx_i]) * noise_i
inline Matrix sample_rows(const GaussianTable& t, std::span<const std::size_t> indices,
                          const Matrix& noise) {
    if (static_cast<std::size_t>(noise.rows()) != indices.size() ||
        static_cast<std::size_t>(noise.cols()) != t.cols())
        throw std::invalid_argument("sample_rows: noise shape mismatch");
    Matrix out(noise.rows(), noise.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= t.rows()) throw std::invalid_argument("sample_rows: row index out of range");
        const auto r = static_cast<Eigen::Index>(indices[i]);
        const auto o = static_cast<Eigen::Index>(i);
        for (Eigen::Index j = 0; j < out.cols(); ++j) {
            const double s = softplus(t.rho(r, j));
            // sigma == 0 must return mu exactly even for non-finite noise
            out(o, j) = s == 0.0 ? t.mu(r, j) : t.mu(r, j) + s * noise(o, j);
        }
    }
    return out;
}

namespace detail {

inline double kl_entry(double mu, double sigma, double mu0, double sigma0) {
    const double diff = mu - mu0;
    return std::log(sigma0 / sigma) + (sigma * sigma + diff * diff) / (2.0 * sigma0 * sigma0) - 0.5;
}

}  // namespace detail

// KL(q || prior) summed over the rows [0, prior.rows()); rows beyond the
// prior (tables that grew after the snapshot) are scored against N(0, 1).
inline double kl_to_prior_extended(const GaussianTable& t, const PriorSnapshot& prior) {
    if (t.cols() != prior.cols() || t.rows() < prior.rows())
        throw std::invalid_argument("kl_to_prior: shape mismatch");
    double total = 0.0;
    const auto covered = static_cast<Eigen::Index>(prior.rows());
    for (Eigen::Index i = 0; i < t.mu.rows(); ++i) {
        for (Eigen::Index j = 0; j < t.mu.cols(); ++j) {
            const double m0 = i < covered ? prior.mean()(i, j) : 0.0;
            const double s0 = i < covered ? prior.scale()(i, j) : 1.0;
            total += detail::kl_entry(t.mu(i, j), softplus(t.rho(i, j)), m0, s0);
        }
    }
    return total;
}

inline double kl_to_prior(const GaussianTable& t, const PriorSnapshot& prior) {
    if (t.rows() != prior.rows() || t.cols() != prior.cols())
        throw std::invalid_argument("kl_to_prior: shape mismatch");
    return kl_to_prior_extended(t, prior);
}

// Adds weight * d KL / d(mu, rho) into the gradient buffers.
inline void add_kl_gradient(const GaussianTable& t, const PriorSnapshot& prior, Matrix& grad_mu,
                            Matrix& grad_rho, double weight = 1.0) {
    const auto covered = static_cast<Eigen::Index>(prior.rows());
    for (Eigen::Index i = 0; i < t.mu.rows(); ++i) {
        for (Eigen::Index j = 0; j < t.mu.cols(); ++j) {
            const double m0 = i < covered ? prior.mean()(i, j) : 0.0;
            const double s0 = i < covered ? prior.scale()(i, j) : 1.0;
            const double r = t.rho(i, j);
            const double s = softplus(r);
            const double inv_var0 = 1.0 / (s0 * s0);
            grad_mu(i, j) += weight * (t.mu(i, j) - m0) * inv_var0;
            // -1/s + s/s0^2, factored so a row sitting at its prior gets exactly zero
            grad_rho(i, j) += weight * ((s - s0) * (s + s0) / (s * s0 * s0)) * sigmoid(r);
        }
    }
}

}  // namespace phe
