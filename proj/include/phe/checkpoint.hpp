#pragma once

// Model checkpoints as JSON. Doubles are written in shortest round-trip
// form, so save -> load reproduces every parameter bit for bit.

#include <fstream>
#include <string>

#include <json.hpp>

#include "phe/errors.hpp"
#include "phe/inference.hpp"

namespace phe {

inline nlohmann::json matrix_to_json(const Matrix& m) {
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
    const auto r = j.at("rows").get<Eigen::Index>(), c = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != r * c) throw DataError("checkpoint: matrix size mismatch");
    Matrix m(r, c);
    std::copy(data.begin(), data.end(), m.data());
    return m;
}

template <class Table>
nlohmann::json table_to_json(const Table& t) {
    if constexpr (is_probabilistic_v<Table>) return {{"mu", matrix_to_json(t.mu)}, {"rho", matrix_to_json(t.rho)}};
    else return {{"values", matrix_to_json(t.values)}};
}

template <class Table>
void table_from_json(const nlohmann::json& j, Table& t) {
    if constexpr (is_probabilistic_v<Table>) {
        t.mu = matrix_from_json(j.at("mu"));
        t.rho = matrix_from_json(j.at("rho"));
    } else {
        t.values = matrix_from_json(j.at("values"));
    }
}

template <class Table, class Indexer>
nlohmann::json save_checkpoint(const Model<Table, Indexer>& m) {
    nlohmann::json j;
    j["hash"] = m.encoder().spec;
    j["aggregation"] = to_string(m.encoder().aggregation);
    j["column_namespacing"] = m.encoder().column_namespacing;
    j["head_kind"] = to_string(m.head().kind());
    j["stage"] = m.stage();
    j["step"] = m.step_count();
    j["table_e"] = table_to_json(m.table_e());
    j["table_w"] = table_to_json(m.table_w());
    const Vector& p = m.head().params();
    j["head_params"] = std::vector<double>(p.data(), p.data() + p.size());
    if constexpr (is_probabilistic_v<Table>) {
        j["prior_e"] = {{"mean", matrix_to_json(m.prior_e().mean())}, {"scale", matrix_to_json(m.prior_e().scale())}};
        j["prior_w"] = {{"mean", matrix_to_json(m.prior_w().mean())}, {"scale", matrix_to_json(m.prior_w().scale())}};
    }
    if constexpr (Indexer::grows) j["vocabulary"] = m.indexer().vocab.items();
    return j;
}

// Loads into a model constructed with the same configuration.
template <class Table, class Indexer>
void load_checkpoint(const nlohmann::json& j, Model<Table, Indexer>& m) {
    try {
        if (j.at("hash").get<HashSpec>() != m.encoder().spec) throw DataError("checkpoint: hash spec differs from the model's");
        if (j.at("head_kind").get<std::string>() != to_string(m.head().kind()))
            throw DataError("checkpoint: head kind differs from the model's");
        table_from_json(j.at("table_e"), m.table_e());
        table_from_json(j.at("table_w"), m.table_w());
        const auto p = j.at("head_params").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(p.size()) != m.head().params().size())
            throw DataError("checkpoint: head parameter count differs");
        std::copy(p.begin(), p.end(), m.head().params().data());
        if constexpr (is_probabilistic_v<Table>) {
            m.set_priors(PriorSnapshot(matrix_from_json(j.at("prior_e").at("mean")), matrix_from_json(j.at("prior_e").at("scale"))),
                         PriorSnapshot(matrix_from_json(j.at("prior_w").at("mean")), matrix_from_json(j.at("prior_w").at("scale"))));
        }
        if constexpr (Indexer::grows) {
            m.indexer().vocab = VocabMap();
            for (const auto& item : j.at("vocabulary").get<std::vector<std::string>>()) m.indexer().vocab.lookup_or_insert(item);
            if (m.indexer().vocab.size() != m.table_e().rows()) throw DataError("checkpoint: vocabulary and table disagree");
        }
        m.set_stage(j.at("stage").get<std::size_t>());
        m.set_step_count(j.at("step").get<std::size_t>());
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("checkpoint: ") + e.what());
    }
}

template <class Table, class Indexer>
void write_checkpoint(const std::string& path, const Model<Table, Indexer>& m) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint '" + path + "'");
    out << save_checkpoint(m).dump() << '\n';
}

}  // namespace phe
