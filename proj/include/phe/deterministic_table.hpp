#pragma once

#include <cstddef>
#include <random>

#include "phe/gaussian_table.hpp"

namespace phe {

// Point-estimate embedding table used by the Ada and EE baselines.
struct DeterministicTable {
    Matrix values;

    std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }
    bool finite() const { return values.allFinite(); }
};

inline void append_rows(DeterministicTable& t, std::size_t n, Rng& rng,
                        double mean_std = kInitMeanStd) {
    const auto old = t.values.rows();
    t.values.conservativeResize(old + static_cast<Eigen::Index>(n), t.values.cols());
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto i = old; i < t.values.rows(); ++i)
        for (Eigen::Index j = 0; j < t.values.cols(); ++j) t.values(i, j) = mean_std * normal(rng);
}

// values ~ N(0, mean_std^2), the same draw a GaussianTable's means would get.
inline DeterministicTable init_deterministic_table(std::size_t rows, std::size_t cols, Rng& rng,
                                                   double mean_std = kInitMeanStd) {
    DeterministicTable t;
    t.values.resize(0, static_cast<Eigen::Index>(cols));
    append_rows(t, rows, rng, mean_std);
    return t;
}

}  // namespace phe
