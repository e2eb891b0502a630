#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

#include "phe/errors.hpp"
#include "phe/gaussian_table.hpp"

namespace phe {

enum class OptimizerKind { adam, sgd };

inline OptimizerKind parse_optimizer(std::string_view s) {
    if (s == "adam") return OptimizerKind::adam;
    if (s == "sgd") return OptimizerKind::sgd;
    throw ConfigError("optimizer: expected adam or sgd, got '" + std::string(s) + "'");
}

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Moment buffers for one tensor. Buffers follow the tensor when it grows
// (new rows start with zero moments).
template <class T>
struct Moments {
    T m, v;
    long long t = 0;

    void reset() {
        m = T();
        v = T();
        t = 0;
    }

    void fit(const T& p) {
        if (m.rows() == p.rows() && m.cols() == p.cols()) return;
        if (m.size() == 0 || m.cols() != p.cols() || m.rows() > p.rows()) {
            m.setZero(p.rows(), p.cols());
            v.setZero(p.rows(), p.cols());
            return;
        }
        const auto old = m.rows();
        m.conservativeResize(p.rows(), p.cols());
        v.conservativeResize(p.rows(), p.cols());
        m.bottomRows(p.rows() - old).setZero();
        v.bottomRows(p.rows() - old).setZero();
    }
};

template <class T>
void optimizer_step(T& param, const T& grad, Moments<T>& mom, const OptimizerConfig& cfg) {
    if (param.rows() != grad.rows() || param.cols() != grad.cols())
        throw std::invalid_argument("optimizer_step: gradient shape mismatch");
    if (cfg.kind == OptimizerKind::sgd) {
        param.array() -= cfg.learning_rate * grad.array();
        return;
    }
    mom.fit(param);
    ++mom.t;
    mom.m.array() = cfg.beta1 * mom.m.array() + (1.0 - cfg.beta1) * grad.array();
    mom.v.array() = cfg.beta2 * mom.v.array() + (1.0 - cfg.beta2) * grad.array().square();
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(mom.t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(mom.t));
    param.array() -= cfg.learning_rate * (mom.m.array() / c1) / ((mom.v.array() / c2).sqrt() + cfg.epsilon);
}

}  // namespace phe
