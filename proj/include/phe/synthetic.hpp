#pragma once

// Synthetic rating stream: users and items arrive over time, user tastes
// drift, ratings follow a low-rank model plus noise.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "phe/errors.hpp"
#include "phe/gaussian_table.hpp"
#include "phe/record.hpp"

namespace phe {

struct SyntheticRatingConfig {
    std::size_t users = 500;
    std::size_t items = 200;
    std::size_t days = 60;
    std::size_t ratings_per_day = 400;
    std::size_t rank = 3;
    double drift = 0.02;        // per-day random-walk step of each user's taste
    double noise = 0.8;         // observation noise, rating scale
    double user_bias_sd = 0.4;
    double item_bias_sd = 0.5;
    double interaction_sd = 0.4;  // sd of the user-item taste term
    double zipf = 1.0;            // popularity exponent for picking users and items (0 = uniform)
    double arrival_span = 0.6;  // users/items first appear within this fraction of the days
    double seed_fraction = 0.2; // fraction of users/items present from day 0

    void validate() const {
        if (users < 2 || items < 2) throw ConfigError("synthetic: users and items must be >= 2");
        if (days < 2 || ratings_per_day < 1 || rank < 1) throw ConfigError("synthetic: days >= 2, ratings_per_day >= 1, rank >= 1");
        if (drift < 0 || noise < 0 || user_bias_sd < 0 || item_bias_sd < 0 || interaction_sd < 0 || zipf < 0)
            throw ConfigError("synthetic: drift, noise, spreads and zipf must be >= 0");
        if (!(arrival_span >= 0 && arrival_span <= 1) || !(seed_fraction > 0 && seed_fraction <= 1))
            throw ConfigError("synthetic: arrival_span in [0,1], seed_fraction in (0,1]");
    }
};

inline FeatureLayout synthetic_rating_layout() {
    FeatureLayout l;
    l.cat_columns = {"user", "item"};
    l.numeric_dim = 0;
    l.rating_mode = true;
    l.target = TargetKind::real;
    return l;
}

// Ratings on a 1..5 scale mapped to [0, 1]; timestamp is the day index.
inline Dataset make_synthetic_ratings(const SyntheticRatingConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const std::size_t r = cfg.rank;
    auto arrivals = [&](std::size_t n) {
        std::vector<std::size_t> day(n, 0);
        const auto seeded = static_cast<std::size_t>(std::ceil(cfg.seed_fraction * static_cast<double>(n)));
        const double span = cfg.arrival_span * static_cast<double>(cfg.days - 1);
        for (std::size_t i = seeded; i < n; ++i)
            day[i] = 1 + static_cast<std::size_t>(span * static_cast<double>(i - seeded) / static_cast<double>(n - seeded));
        return day;
    };
    const auto user_day = arrivals(cfg.users), item_day = arrivals(cfg.items);
    std::vector<std::vector<double>> u(cfg.users, std::vector<double>(r)), v(cfg.items, std::vector<double>(r));
    std::vector<double> ubias(cfg.users), ibias(cfg.items);
    // u.v has variance interaction_sd^2 when both factors have variance interaction_sd / sqrt(r)
    const double scale = std::sqrt(cfg.interaction_sd / std::sqrt(static_cast<double>(r)));
    for (std::size_t i = 0; i < cfg.users; ++i) {
        for (auto& x : u[i]) x = gauss(rng) * scale;
        ubias[i] = cfg.user_bias_sd * gauss(rng);
    }
    for (std::size_t j = 0; j < cfg.items; ++j) {
        for (auto& x : v[j]) x = gauss(rng) * scale;
        ibias[j] = cfg.item_bias_sd * gauss(rng);
    }
    // Popularity ranks are a seeded permutation, independent of arrival order.
    auto popularity = [&](std::size_t n) {
        std::vector<std::size_t> rank(n);
        std::iota(rank.begin(), rank.end(), std::size_t{0});
        std::shuffle(rank.begin(), rank.end(), rng);
        std::vector<double> w(n);
        for (std::size_t i = 0; i < n; ++i) w[i] = std::pow(static_cast<double>(rank[i] + 1), -cfg.zipf);
        return w;
    };
    const auto upop = popularity(cfg.users), ipop = popularity(cfg.items);

    Dataset ds;
    ds.layout = synthetic_rating_layout();
    ds.records.reserve(cfg.days * cfg.ratings_per_day);
    std::vector<std::size_t> active_u, active_i;
    for (std::size_t t = 0; t < cfg.days; ++t) {
        active_u.clear();
        active_i.clear();
        for (std::size_t i = 0; i < cfg.users; ++i)
            if (user_day[i] <= t) active_u.push_back(i);
        for (std::size_t j = 0; j < cfg.items; ++j)
            if (item_day[j] <= t) active_i.push_back(j);
        std::vector<double> wu, wi;
        for (auto i : active_u) wu.push_back(upop[i]);
        for (auto j : active_i) wi.push_back(ipop[j]);
        std::discrete_distribution<std::size_t> pick_u(wu.begin(), wu.end()), pick_i(wi.begin(), wi.end());
        for (std::size_t n = 0; n < cfg.ratings_per_day; ++n) {
            const std::size_t a = active_u[pick_u(rng)], b = active_i[pick_i(rng)];
            double s = 3.0 + ubias[a] + ibias[b];
            for (std::size_t k = 0; k < r; ++k) s += u[a][k] * v[b][k];
            s += cfg.noise * gauss(rng);
            s = std::clamp(s, 1.0, 5.0);
            Record rec;
            rec.cats = {"u" + std::to_string(a), "i" + std::to_string(b)};
            rec.target = (s - 1.0) / 4.0;
            rec.timestamp = static_cast<double>(t);
            rec.line = ds.records.size() + 1;
            ds.records.push_back(std::move(rec));
        }
        for (auto& row : u)
            for (auto& x : row) x += cfg.drift * gauss(rng);
    }
    return ds;
}

}  // namespace phe
