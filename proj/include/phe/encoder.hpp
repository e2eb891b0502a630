#pragma once

// Assembly of K table rows into one d-dimensional item embedding, with the
// per-pass row sampling and the backward pass into table gradients.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "phe/deterministic_table.hpp"
#include "phe/errors.hpp"
#include "phe/gaussian_table.hpp"
#include "phe/hashing.hpp"

namespace phe {

enum class Aggregation { weighted_sum, sum, mean };

inline Aggregation parse_aggregation(std::string_view s) {
    if (s == "weighted_sum") return Aggregation::weighted_sum;
    if (s == "sum") return Aggregation::sum;
    if (s == "mean") return Aggregation::mean;
    throw ConfigError("aggregation: expected weighted_sum, sum or mean, got '" + std::string(s) + "'");
}

inline std::string to_string(Aggregation a) {
    switch (a) {
        case Aggregation::weighted_sum: return "weighted_sum";
        case Aggregation::sum: return "sum";
        case Aggregation::mean: return "mean";
    }
    return "?";
}

struct EncoderConfig {
    HashSpec spec;
    Aggregation aggregation = Aggregation::weighted_sum;
    bool column_namespacing = true;
};

inline std::string hash_key(const EncoderConfig& cfg, std::string_view column, std::string_view item) {
    if (!cfg.column_namespacing) return std::string(item);
    std::string key;
    key.reserve(column.size() + 1 + item.size());
    key.append(column).push_back('=');
    key.append(item);
    return key;
}

template <class T>
inline constexpr bool is_probabilistic_v = std::is_same_v<T, GaussianTable>;

// Gradient buffers shaped like the table they belong to.
template <class Table>
struct TableGrad;

template <>
struct TableGrad<GaussianTable> {
    Matrix mu, rho;

    void reset(const GaussianTable& t) {
        mu.setZero(t.mu.rows(), t.mu.cols());
        rho.setZero(t.rho.rows(), t.rho.cols());
    }
    void grow(const GaussianTable& t) {
        const auto old = mu.rows();
        if (old == t.mu.rows()) return;
        mu.conservativeResize(t.mu.rows(), t.mu.cols());
        rho.conservativeResize(t.rho.rows(), t.rho.cols());
        mu.bottomRows(t.mu.rows() - old).setZero();
        rho.bottomRows(t.rho.rows() - old).setZero();
    }
};

template <>
struct TableGrad<DeterministicTable> {
    Matrix values;

    void reset(const DeterministicTable& t) { values.setZero(t.values.rows(), t.values.cols()); }
    void grow(const DeterministicTable& t) {
        const auto old = values.rows();
        if (old == t.values.rows()) return;
        values.conservativeResize(t.values.rows(), t.values.cols());
        values.bottomRows(t.values.rows() - old).setZero();
    }
};

enum class NoiseMode { sample, mean };

// Rows of one table as drawn for a single forward pass. Every distinct row is
// sampled at most once per pass; repeated lookups reuse the draw.
template <class Table>
class TableDraw {
public:
    TableDraw(const Table& table, NoiseMode mode, Rng* rng) : table_(&table), mode_(mode), rng_(rng) {
        if constexpr (is_probabilistic_v<Table>) {
            if (mode_ == NoiseMode::sample && rng_ == nullptr)
                throw std::invalid_argument("TableDraw: sampling requires an rng");
        }
    }

    std::span<const double> row(std::size_t r) {
        if (r >= table_->rows()) throw std::invalid_argument("TableDraw: row index out of range");
        if constexpr (!is_probabilistic_v<Table>) {
            return row_span(table_->values, r);
        } else {
            const std::size_t c = table_->cols();
            if (slot_.size() <= r) slot_.resize(table_->rows(), kNone);
            if (slot_[r] == kNone) {
                slot_[r] = order_.size();
                order_.push_back(r);
                const std::size_t base = values_.size();
                values_.resize(base + c);
                noise_.resize(base + c);
                std::normal_distribution<double> normal(0.0, 1.0);
                for (std::size_t j = 0; j < c; ++j) {
                    const double eps = mode_ == NoiseMode::sample ? normal(*rng_) : 0.0;
                    const auto ri = static_cast<Eigen::Index>(r);
                    const auto ji = static_cast<Eigen::Index>(j);
                    const double s = softplus(table_->rho(ri, ji));
                    noise_[base + j] = eps;
                    values_[base + j] = table_->mu(ri, ji) + s * eps;
                }
            }
            return {values_.data() + slot_[r] * c, c};
        }
    }

    std::span<const double> noise(std::size_t r) const {
        const std::size_t c = table_->cols();
        return {noise_.data() + slot_.at(r) * c, c};
    }

    // d loss / d row  ->  table parameter gradients.
    void backward(std::size_t r, std::span<const double> g, TableGrad<Table>& grad) const {
        const auto ri = static_cast<Eigen::Index>(r);
        if constexpr (!is_probabilistic_v<Table>) {
            for (std::size_t j = 0; j < g.size(); ++j) grad.values(ri, static_cast<Eigen::Index>(j)) += g[j];
        } else {
            const auto eps = noise(r);
            for (std::size_t j = 0; j < g.size(); ++j) {
                const auto ji = static_cast<Eigen::Index>(j);
                grad.mu(ri, ji) += g[j];
                if (eps[j] != 0.0) grad.rho(ri, ji) += g[j] * eps[j] * sigmoid(table_->rho(ri, ji));
            }
        }
    }

    const Table& table() const { return *table_; }

private:
    static constexpr std::size_t kNone = static_cast<std::size_t>(-1);
    const Table* table_;
    NoiseMode mode_;
    Rng* rng_;
    std::vector<std::size_t> slot_;
    std::vector<std::size_t> order_;
    std::vector<double> values_;
    std::vector<double> noise_;
};

// Which rows an item reads: K rows of E plus, for weighted sums, one row of W.
struct Lookup {
    std::vector<std::size_t> rows;
    std::optional<std::size_t> weight_row;
};

inline Lookup lookup_for(const EncoderConfig& cfg, std::string_view key) {
    Signature sig = hash_signature(cfg.spec, key);
    Lookup lk;
    lk.rows = std::move(sig.rows);
    if (cfg.aggregation == Aggregation::weighted_sum) lk.weight_row = sig.weight_row;
    return lk;
}

// out = g(E rows) for the given lookup.
template <class Table>
void assemble(const Lookup& lk, Aggregation agg, TableDraw<Table>& e, TableDraw<Table>* w,
              std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    std::span<const double> weights;
    if (agg == Aggregation::weighted_sum) {
        if (w == nullptr || !lk.weight_row) throw std::invalid_argument("assemble: missing weight table");
        weights = w->row(*lk.weight_row);
    }
    const double uniform = agg == Aggregation::mean ? 1.0 / static_cast<double>(lk.rows.size()) : 1.0;
    for (std::size_t k = 0; k < lk.rows.size(); ++k) {
        const auto row = e.row(lk.rows[k]);
        const double wk = agg == Aggregation::weighted_sum ? weights[k] : uniform;
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += wk * row[j];
    }
}

template <class Table>
void assemble_backward(const Lookup& lk, Aggregation agg, const TableDraw<Table>& e,
                       const TableDraw<Table>* w, std::span<const double> g, TableGrad<Table>& grad_e,
                       TableGrad<Table>* grad_w, std::vector<double>& scratch) {
    scratch.resize(g.size());
    std::span<const double> weights;
    std::vector<double> dweights;
    if (agg == Aggregation::weighted_sum) {
        weights = const_cast<TableDraw<Table>*>(w)->row(*lk.weight_row);
        dweights.assign(lk.rows.size(), 0.0);
    }
    const double uniform = agg == Aggregation::mean ? 1.0 / static_cast<double>(lk.rows.size()) : 1.0;
    for (std::size_t k = 0; k < lk.rows.size(); ++k) {
        const double wk = agg == Aggregation::weighted_sum ? weights[k] : uniform;
        for (std::size_t j = 0; j < g.size(); ++j) scratch[j] = wk * g[j];
        e.backward(lk.rows[k], scratch, grad_e);
        if (agg == Aggregation::weighted_sum) {
            const auto row = const_cast<TableDraw<Table>&>(e).row(lk.rows[k]);
            double dot = 0.0;
            for (std::size_t j = 0; j < g.size(); ++j) dot += row[j] * g[j];
            dweights[k] = dot;
        }
    }
    if (agg == Aggregation::weighted_sum && grad_w != nullptr) w->backward(*lk.weight_row, dweights, *grad_w);
}

// Single-item encoding with the intermediates needed for backprop.
template <class Table>
struct ItemEncoding {
    Lookup lookup;
    TableDraw<Table> e_draw;
    std::optional<TableDraw<Table>> w_draw;
    Vector value;
};

template <class Table>
ItemEncoding<Table> encode_with(const EncoderConfig& cfg, const Table& table_e, const Table& table_w,
                                std::string_view item, NoiseMode mode, Rng* rng) {
    ItemEncoding<Table> enc{lookup_for(cfg, item), TableDraw<Table>(table_e, mode, rng), std::nullopt,
                            Vector::Zero(static_cast<Eigen::Index>(cfg.spec.embed_dim))};
    if (table_e.rows() != cfg.spec.bucket_count || table_e.cols() != cfg.spec.embed_dim)
        throw std::invalid_argument("encode: embedding table shape does not match HashSpec");
    TableDraw<Table>* wp = nullptr;
    if (cfg.aggregation == Aggregation::weighted_sum) {
        if (table_w.rows() != cfg.spec.weight_buckets || table_w.cols() != cfg.spec.num_hashes)
            throw std::invalid_argument("encode: weight table shape does not match HashSpec");
        enc.w_draw.emplace(table_w, mode, rng);
        wp = &*enc.w_draw;
    }
    assemble(enc.lookup, cfg.aggregation, enc.e_draw, wp,
             std::span<double>(enc.value.data(), static_cast<std::size_t>(enc.value.size())));
    return enc;
}

// Reparametrised sample of g(E_{h_s}) for one item.
inline ItemEncoding<GaussianTable> encode(const EncoderConfig& cfg, const GaussianTable& table_e,
                                          const GaussianTable& table_w, std::string_view item, Rng& rng) {
    return encode_with(cfg, table_e, table_w, item, NoiseMode::sample, &rng);
}

// Embedding computed from the means only.
template <class Table>
Vector encode_mean(const EncoderConfig& cfg, const Table& table_e, const Table& table_w,
                   std::string_view item) {
    return encode_with(cfg, table_e, table_w, item, NoiseMode::mean, nullptr).value;
}

template <class Table>
void encode_backward(const EncoderConfig& cfg, const ItemEncoding<Table>& enc, std::span<const double> g,
                     TableGrad<Table>& grad_e, TableGrad<Table>* grad_w) {
    std::vector<double> scratch;
    assemble_backward(enc.lookup, cfg.aggregation, enc.e_draw, enc.w_draw ? &*enc.w_draw : nullptr, g,
                      grad_e, grad_w, scratch);
}

}  // namespace phe
