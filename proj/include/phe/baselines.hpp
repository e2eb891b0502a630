#pragma once

// Baseline systems sharing the PHE code path: deterministic hash tables
// fine-tuned online (Slow/Medium/FastAda), collision-free expandable tables
// (EE) and their probabilistic variant (P-EE).

#include <cstddef>
#include <string>
#include <string_view>
#include <variant>

#include "phe/errors.hpp"
#include "phe/inference.hpp"

namespace phe {

enum class ModelId { phe, slow_ada, medium_ada, fast_ada, ee, pee };

inline ModelId parse_model_id(std::string_view s) {
    if (s == "phe") return ModelId::phe;
    if (s == "slow_ada") return ModelId::slow_ada;
    if (s == "medium_ada") return ModelId::medium_ada;
    if (s == "fast_ada") return ModelId::fast_ada;
    if (s == "ee") return ModelId::ee;
    if (s == "pee") return ModelId::pee;
    throw ConfigError("model: expected one of phe, slow_ada, medium_ada, fast_ada, ee, pee; got '" + std::string(s) + "'");
}

inline std::string to_string(ModelId m) {
    switch (m) {
        case ModelId::phe: return "phe";
        case ModelId::slow_ada: return "slow_ada";
        case ModelId::medium_ada: return "medium_ada";
        case ModelId::fast_ada: return "fast_ada";
        case ModelId::ee: return "ee";
        case ModelId::pee: return "pee";
    }
    return "?";
}

// Online epochs per step for the Ada family; others use the train config.
inline std::size_t ada_epochs(ModelId m) {
    switch (m) {
        case ModelId::slow_ada: return 1;
        case ModelId::medium_ada: return 5;
        case ModelId::fast_ada: return 15;
        default: return 0;
    }
}

inline std::size_t phe_param_count(const HashSpec& s) {
    return 2 * (s.bucket_count * s.embed_dim + s.weight_buckets * s.num_hashes);
}
inline std::size_t pee_param_count(std::size_t vocab, std::size_t d) { return 2 * vocab * d; }
inline std::size_t ee_param_count(std::size_t vocab, std::size_t d) { return vocab * d; }

using AnyModel = std::variant<PheModel, AdaModel, EeModel, PeeModel>;

inline AnyModel make_model(ModelId id, const EncoderConfig& enc, const FeatureLayout& layout,
                           const LikelihoodHead& head, TrainConfig train, std::uint64_t seed) {
    if (ada_epochs(id) > 0) train.epochs_online = ada_epochs(id);
    switch (id) {
        case ModelId::phe: return PheModel(enc, layout, head, train, seed);
        case ModelId::slow_ada:
        case ModelId::medium_ada:
        case ModelId::fast_ada: return AdaModel(enc, layout, head, train, seed);
        case ModelId::ee: return EeModel(enc, layout, head, train, seed);
        case ModelId::pee: return PeeModel(enc, layout, head, train, seed);
    }
    throw std::logic_error("make_model: unreachable");
}

// Plain likelihood fine-tuning of the point tables on new data (head frozen).
inline void ada_fit_online(AdaModel& m, std::span<const Record> data, std::size_t epochs) {
    m.advance_stage();
    m.fit_online(data, epochs);
}

// Row of `item` in an expandable table, appending a fresh row on first sight.
template <class Table>
std::size_t ee_lookup_or_grow(VocabMap& vocab, Table& table, std::string_view item, Rng& rng,
                              double mean_std = kInitMeanStd) {
    const auto [row, inserted] = vocab.lookup_or_insert(item);
    if (inserted) append_rows(table, 1, rng, mean_std);
    return row;
}

// Same as PHE's online step, over private per-item rows.
inline void pee_fit_online(PeeModel& m, std::span<const Record> data) {
    m.advance_stage();
    m.fit_online(data);
}

}  // namespace phe
