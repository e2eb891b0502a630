#pragma once

// Model = embedding tables (probabilistic or point) + indexer + likelihood
// head, trained by minibatch ELBO (or plain likelihood for point tables)
// with staged posterior-to-prior updates.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "phe/deterministic_table.hpp"
#include "phe/encoder.hpp"
#include "phe/errors.hpp"
#include "phe/gaussian_table.hpp"
#include "phe/likelihoods.hpp"
#include "phe/optim.hpp"
#include "phe/record.hpp"
#include "phe/vocab.hpp"

namespace phe {

struct TrainConfig {
    double learning_rate = 0.01;
    std::size_t batch_size = 128;
    std::size_t epochs_initial = 100;
    std::size_t epochs_online = 15;
    std::size_t mc_samples_train = 1;
    std::size_t mc_samples_predict = 8;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    OptimizerKind optimizer = OptimizerKind::adam;
    bool reset_optimizer_each_stage = true;
    double kl_weight = 1.0;
    double init_mean_std = kInitMeanStd;
    double init_sigma = kInitSigma;
    bool record_trajectory = true;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
        if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
        if (mc_samples_train < 1) throw ConfigError("train.mc_samples_train must be >= 1");
        if (mc_samples_predict < 1) throw ConfigError("train.mc_samples_predict must be >= 1");
        if (!(init_sigma > 0.0)) throw ConfigError("train.init_sigma must be > 0");
        if (!(init_mean_std >= 0.0)) throw ConfigError("train.init_mean_std must be >= 0");
        if (!(kl_weight >= 0.0)) throw ConfigError("train.kl_weight must be >= 0");
    }

    OptimizerConfig optimizer_config() const {
        return {optimizer, learning_rate, beta1, beta2, epsilon};
    }
};

struct TrajectoryEntry {
    std::size_t stage = 0, epoch = 0, step = 0;
    double loss = 0, kl_e = 0, kl_w = 0, nll = 0;
};

inline void write_jsonl(std::ostream& os, const std::vector<TrajectoryEntry>& traj) {
    for (const auto& t : traj) {
        nlohmann::json j{{"stage", t.stage}, {"epoch", t.epoch}, {"step", t.step}, {"loss", t.loss},
                         {"kl_E", t.kl_e},   {"kl_W", t.kl_w},   {"nll", t.nll}};
        os << j.dump() << '\n';
    }
}

struct LossParts {
    double loss = 0, nll = 0, kl_e = 0, kl_w = 0;
};

template <class Table>
struct TableMoments;

template <>
struct TableMoments<GaussianTable> {
    Moments<Matrix> mu, rho;
    void reset() { mu.reset(), rho.reset(); }
    void step(GaussianTable& t, const TableGrad<GaussianTable>& g, const OptimizerConfig& cfg) {
        optimizer_step(t.mu, g.mu, mu, cfg);
        optimizer_step(t.rho, g.rho, rho, cfg);
    }
};

template <>
struct TableMoments<DeterministicTable> {
    Moments<Matrix> values;
    void reset() { values.reset(); }
    void step(DeterministicTable& t, const TableGrad<DeterministicTable>& g, const OptimizerConfig& cfg) {
        optimizer_step(t.values, g.values, values, cfg);
    }
};

template <class Table>
struct ModelGrads {
    TableGrad<Table> e, w;
    Vector head;
};

inline std::size_t argmax_lowest(const Vector& p) {
    std::size_t best = 0;
    for (Eigen::Index i = 1; i < p.size(); ++i)
        if (p[i] > p[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(i);
    return best;
}

template <class Table, class Indexer>
class Model {
public:
    static constexpr bool probabilistic = is_probabilistic_v<Table>;

    Model(EncoderConfig enc, FeatureLayout layout, LikelihoodHead head, TrainConfig train, std::uint64_t seed)
        : enc_(std::move(enc)), layout_(std::move(layout)), head_(std::move(head)), train_(train), rng_(seed) {
        train_.validate();
        enc_.spec.validate();
        if constexpr (Indexer::grows) enc_.aggregation = Aggregation::sum;
        if (layout_.rating_mode && layout_.cat_columns.size() < 2)
            throw ConfigError("rating mode needs at least two categorical columns");
        const std::size_t F = layout_.feature_dim(enc_.spec.embed_dim);
        if (head_.feature_dim() != F)
            throw ConfigError("head feature dimension " + std::to_string(head_.feature_dim()) +
                              " does not match the feature layout (" + std::to_string(F) + ")");
        const std::size_t d = enc_.spec.embed_dim, K = enc_.spec.num_hashes;
        const std::size_t rows = index_.required_rows(enc_);
        const std::size_t wrows = uses_weights() ? enc_.spec.weight_buckets : 0;
        if constexpr (probabilistic) {
            e_.mu.resize(0, static_cast<Eigen::Index>(d));
            e_.rho.resize(0, static_cast<Eigen::Index>(d));
            append_rows(e_, rows, rng_, train_.init_mean_std, train_.init_sigma);
            w_.mu.resize(0, static_cast<Eigen::Index>(K));
            w_.rho.resize(0, static_cast<Eigen::Index>(K));
            append_rows(w_, wrows, rng_, train_.init_mean_std, train_.init_sigma);
            prior_e_ = standard_prior(0, d);
            prior_w_ = standard_prior(0, K);
        } else {
            e_.values.resize(0, static_cast<Eigen::Index>(d));
            append_rows(e_, rows, rng_, train_.init_mean_std);
            w_.values.resize(0, static_cast<Eigen::Index>(K));
            append_rows(w_, wrows, rng_, train_.init_mean_std);
        }
        head_.init(rng_);
    }

    // ---- accessors
    const EncoderConfig& encoder() const { return enc_; }
    const FeatureLayout& layout() const { return layout_; }
    const Table& table_e() const { return e_; }
    const Table& table_w() const { return w_; }
    Table& table_e() { return e_; }
    Table& table_w() { return w_; }
    const LikelihoodHead& head() const { return head_; }
    LikelihoodHead& head() { return head_; }
    const TrainConfig& train_config() const { return train_; }
    TrainConfig& train_config() { return train_; }
    const Indexer& indexer() const { return index_; }
    Indexer& indexer() { return index_; }
    std::size_t stage() const { return stage_; }
    void set_stage(std::size_t s) { stage_ = s; }
    Rng& rng() { return rng_; }
    const std::vector<TrajectoryEntry>& trajectory() const { return trajectory_; }
    void clear_trajectory() { trajectory_.clear(); }
    bool uses_weights() const { return enc_.aggregation == Aggregation::weighted_sum; }

    // Restrict online-stage gradients to these categorical columns (empty = all).
    void set_online_columns(const std::vector<std::string>& cols) {
        online_mask_.assign(layout_.cat_columns.size(), cols.empty());
        for (const auto& c : cols) {
            auto it = std::find(layout_.cat_columns.begin(), layout_.cat_columns.end(), c);
            if (it == layout_.cat_columns.end()) throw ConfigError("update_columns: unknown column '" + c + "'");
            online_mask_[static_cast<std::size_t>(it - layout_.cat_columns.begin())] = true;
        }
    }

    const PriorSnapshot& prior_e() const requires probabilistic { return *prior_e_; }
    const PriorSnapshot& prior_w() const requires probabilistic { return *prior_w_; }
    void set_priors(PriorSnapshot pe, PriorSnapshot pw) requires probabilistic {
        prior_e_ = std::move(pe);
        prior_w_ = std::move(pw);
    }

    // Embedding parameter count: mean and scale per entry for probabilistic tables.
    std::size_t embedding_param_count() const {
        const std::size_t n = e_.rows() * e_.cols() + w_.rows() * w_.cols();
        return probabilistic ? 2 * n : n;
    }

    // Allocates rows for unseen items (growing indexers only).
    void prepare(std::span<const Record> records) {
        if constexpr (Indexer::grows) {
            for (const auto& r : records)
                for (std::size_t c = 0; c < layout_.cat_columns.size(); ++c)
                    index_.observe(enc_, layout_.cat_columns[c], r.cats.at(c));
            const std::size_t need = index_.required_rows(enc_);
            if (need > e_.rows()) {
                if constexpr (probabilistic)
                    append_rows(e_, need - e_.rows(), rng_, train_.init_mean_std, train_.init_sigma);
                else
                    append_rows(e_, need - e_.rows(), rng_, train_.init_mean_std);
            }
        }
    }

    // Minibatch objective and its gradient (grads may be null).
    //   loss = -(N/|b|) sum log p(y | features) + kl_weight * (KL(E) + KL(W))
    // Noise is drawn from `rng`, one sample per distinct row.
    LossParts batch_loss(std::span<const Record* const> batch, double N, Rng& rng, ModelGrads<Table>* grads,
                         NoiseMode mode = NoiseMode::sample) const {
        if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
        const double scale = N / static_cast<double>(batch.size());
        const std::size_t d = enc_.spec.embed_dim;
        const std::size_t ncat = layout_.cat_columns.size();
        const std::size_t F = layout_.feature_dim(d);
        const bool train_head = stage_ == 0;
        if (grads != nullptr) {
            grads->e.reset(e_);
            grads->w.reset(w_);
            grads->head = Vector::Zero(head_.params().size());
        }
        TableDraw<Table> de(e_, mode, &rng);
        TableDraw<Table> dw(w_, mode, &rng);
        std::vector<Lookup> lks(ncat);
        std::vector<double> f(F), df(F), g(d), scratch;
        LossParts out;
        for (const Record* rec : batch) {
            fill_features(*rec, de, dw, lks, f);
            const double ll = head_.accumulate(f, rec->target, -scale,
                                               grads != nullptr && train_head ? &grads->head : nullptr, df);
            out.nll -= scale * ll;
            if (grads == nullptr) continue;
            const std::size_t base = layout_.numeric_dim;
            const std::size_t prod = base + ncat * d;
            for (std::size_t c = 0; c < ncat; ++c) {
                if (!column_trainable(c)) continue;
                for (std::size_t j = 0; j < d; ++j) g[j] = df[base + c * d + j];
                if (layout_.rating_mode && c < 2) {
                    const std::size_t other = base + (1 - c) * d;
                    for (std::size_t j = 0; j < d; ++j) g[j] += df[prod + j] * f[other + j];
                }
                assemble_backward(lks[c], enc_.aggregation, de, uses_weights() ? &dw : nullptr, g, grads->e,
                                  &grads->w, scratch);
            }
        }
        if constexpr (probabilistic) {
            out.kl_e = kl_to_prior_extended(e_, *prior_e_);
            out.kl_w = kl_to_prior_extended(w_, *prior_w_);
            if (grads != nullptr && train_.kl_weight > 0.0) {
                add_kl_gradient(e_, *prior_e_, grads->e.mu, grads->e.rho, train_.kl_weight);
                add_kl_gradient(w_, *prior_w_, grads->w.mu, grads->w.rho, train_.kl_weight);
            }
        }
        out.loss = out.nll;
        if (train_.kl_weight > 0.0) out.loss += train_.kl_weight * (out.kl_e + out.kl_w);
        return out;
    }

    // Runs `epochs` passes of minibatch optimisation over `data` (N = |data|).
    void fit(std::span<const Record> data, std::size_t epochs) {
        if (data.empty() || epochs == 0) return;
        prepare(data);
        std::vector<std::size_t> order(data.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        const auto opt = train_.optimizer_config();
        const double N = static_cast<double>(data.size());
        const std::size_t bs = train_.batch_size;
        ModelGrads<Table> grads;
        std::vector<const Record*> batch;
        for (std::size_t ep = 0; ep < epochs; ++ep) {
            std::shuffle(order.begin(), order.end(), rng_);
            for (std::size_t start = 0; start < order.size(); start += bs) {
                const std::size_t stop = std::min(order.size(), start + bs);
                batch.clear();
                for (std::size_t i = start; i < stop; ++i) batch.push_back(&data[order[i]]);
                LossParts lp = mc_gradient(batch, N, grads);
                if (!std::isfinite(lp.loss))
                    throw NumericalError("non-finite loss at stage " + std::to_string(stage_) + ", epoch " +
                                         std::to_string(ep) + ", step " + std::to_string(step_));
                moments_e_.step(e_, grads.e, opt);
                if (w_.rows() > 0) moments_w_.step(w_, grads.w, opt);
                if (stage_ == 0 && head_.params().size() > 0) optimizer_step(head_.params(), grads.head, moments_head_, opt);
                if (train_.record_trajectory)
                    trajectory_.push_back({stage_, ep, step_, lp.loss, lp.kl_e, lp.kl_w, lp.nll});
                ++step_;
            }
        }
        if (!e_.finite() || !w_.finite() || !head_.params().allFinite())
            throw NumericalError("parameters became non-finite at stage " + std::to_string(stage_));
    }

    void fit_initial(std::span<const Record> data) {
        if (stage_ != 0) throw std::logic_error("fit_initial: model is past stage 0");
        fit(data, train_.epochs_initial);
    }

    // Posterior becomes prior; the head is frozen from here on.
    void advance_stage() {
        if constexpr (probabilistic) {
            prior_e_ = snapshot(e_);
            prior_w_ = snapshot(w_);
        }
        ++stage_;
        if (train_.reset_optimizer_each_stage) {
            moments_e_.reset();
            moments_w_.reset();
        }
    }

    void fit_online(std::span<const Record> data) { fit_online(data, train_.epochs_online); }
    void fit_online(std::span<const Record> data, std::size_t epochs) {
        if (stage_ == 0) throw std::logic_error("fit_online: call advance_stage first");
        fit(data, epochs);
    }

    // Predictive statistic averaged over S embedding samples. One pass draws
    // every distinct row once and is shared by all records of the call.
    std::vector<Vector> predict(std::span<const Record> records, std::size_t S = 0) {
        prepare(records);
        if (S == 0) S = train_.mc_samples_predict;
        if constexpr (!probabilistic) S = 1;
        return predict_with(records, S, rng_);
    }

    std::vector<Vector> predict_with(std::span<const Record> records, std::size_t S, Rng& rng,
                                     NoiseMode mode = NoiseMode::sample) const {
        const std::size_t F = layout_.feature_dim(enc_.spec.embed_dim);
        std::vector<Vector> out(records.size(), Vector::Zero(static_cast<Eigen::Index>(head_.output_dim())));
        std::vector<Lookup> lks(layout_.cat_columns.size());
        std::vector<double> f(F);
        for (std::size_t s = 0; s < S; ++s) {
            TableDraw<Table> de(e_, mode, &rng);
            TableDraw<Table> dw(w_, mode, &rng);
            for (std::size_t i = 0; i < records.size(); ++i) {
                fill_features(records[i], de, dw, lks, f);
                out[i] += head_.predict(f);
            }
        }
        for (auto& v : out) v /= static_cast<double>(S);
        return out;
    }

    Vector features_mean(const Record& r) const {
        Rng unused(0);
        TableDraw<Table> de(e_, NoiseMode::mean, &unused);
        TableDraw<Table> dw(w_, NoiseMode::mean, &unused);
        std::vector<Lookup> lks(layout_.cat_columns.size());
        std::vector<double> f(layout_.feature_dim(enc_.spec.embed_dim));
        fill_features(r, de, dw, lks, f);
        return Eigen::Map<Vector>(f.data(), static_cast<Eigen::Index>(f.size()));
    }

    // Optimiser state, for checkpoints.
    std::size_t step_count() const { return step_; }
    void set_step_count(std::size_t s) { step_ = s; }

private:
    bool column_trainable(std::size_t c) const {
        if (stage_ == 0 || online_mask_.empty()) return true;
        return online_mask_[c];
    }

    LossParts mc_gradient(std::span<const Record* const> batch, double N, ModelGrads<Table>& grads) {
        const std::size_t S = probabilistic ? train_.mc_samples_train : 1;
        if (S == 1) return batch_loss(batch, N, rng_, &grads);
        ModelGrads<Table> acc, one;
        LossParts total;
        for (std::size_t s = 0; s < S; ++s) {
            LossParts lp = batch_loss(batch, N, rng_, &one);
            if (s == 0) {
                acc = one;
            } else {
                add_grads(acc, one);
            }
            total.loss += lp.loss / static_cast<double>(S);
            total.nll += lp.nll / static_cast<double>(S);
            total.kl_e = lp.kl_e;
            total.kl_w = lp.kl_w;
        }
        scale_grads(acc, 1.0 / static_cast<double>(S));
        grads = std::move(acc);
        return total;
    }

    static void add_grads(ModelGrads<Table>& a, const ModelGrads<Table>& b) {
        if constexpr (probabilistic) {
            a.e.mu += b.e.mu, a.e.rho += b.e.rho, a.w.mu += b.w.mu, a.w.rho += b.w.rho;
        } else {
            a.e.values += b.e.values, a.w.values += b.w.values;
        }
        a.head += b.head;
    }
    static void scale_grads(ModelGrads<Table>& a, double s) {
        if constexpr (probabilistic) {
            a.e.mu *= s, a.e.rho *= s, a.w.mu *= s, a.w.rho *= s;
        } else {
            a.e.values *= s, a.w.values *= s;
        }
        a.head *= s;
    }

    void fill_features(const Record& rec, TableDraw<Table>& de, TableDraw<Table>& dw, std::vector<Lookup>& lks,
                       std::span<double> f) const {
        const std::size_t d = enc_.spec.embed_dim;
        const std::size_t ncat = layout_.cat_columns.size();
        if (rec.numeric.size() != layout_.numeric_dim || rec.cats.size() != ncat)
            throw DataError("record at line " + std::to_string(rec.line) + " does not match the feature layout");
        std::copy(rec.numeric.begin(), rec.numeric.end(), f.begin());
        const std::size_t base = layout_.numeric_dim;
        for (std::size_t c = 0; c < ncat; ++c) {
            lks[c] = index_.lookup(enc_, layout_.cat_columns[c], rec.cats[c]);
            assemble(lks[c], enc_.aggregation, de, uses_weights() ? &dw : nullptr, f.subspan(base + c * d, d));
        }
        if (layout_.rating_mode) {
            const std::size_t prod = base + ncat * d;
            for (std::size_t j = 0; j < d; ++j) f[prod + j] = f[base + j] * f[base + d + j];
        }
    }

    EncoderConfig enc_;
    FeatureLayout layout_;
    Indexer index_;
    LikelihoodHead head_;
    TrainConfig train_;
    Rng rng_;
    Table e_, w_;
    std::optional<PriorSnapshot> prior_e_, prior_w_;
    TableMoments<Table> moments_e_, moments_w_;
    Moments<Vector> moments_head_;
    std::vector<bool> online_mask_;
    std::vector<TrajectoryEntry> trajectory_;
    std::size_t stage_ = 0;
    std::size_t step_ = 0;
};

using PheModel = Model<GaussianTable, HashIndexer>;
using AdaModel = Model<DeterministicTable, HashIndexer>;
using EeModel = Model<DeterministicTable, VocabIndexer>;
using PeeModel = Model<GaussianTable, VocabIndexer>;

}  // namespace phe
