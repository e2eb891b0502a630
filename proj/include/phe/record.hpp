#pragma once

// Typed stream records as consumed by models.

#include <cstddef>
#include <string>
#include <vector>

namespace phe {

enum class TargetKind { cls, real, count };

struct Record {
    std::vector<std::string> cats;  // one value per categorical column, schema order
    std::vector<double> numeric;    // numeric block, schema order
    double target = 0.0;            // class index, real value or count
    double timestamp = 0.0;
    std::size_t line = 0;           // source line, for diagnostics
};

// What a model sees of the schema: the feature layout and the target type.
struct FeatureLayout {
    std::vector<std::string> cat_columns;
    std::size_t numeric_dim = 0;
    bool rating_mode = false;  // append e_0 * e_1 after the column embeddings
    TargetKind target = TargetKind::cls;
    std::size_t num_classes = 2;

    std::size_t feature_dim(std::size_t embed_dim) const {
        return numeric_dim + embed_dim * (cat_columns.size() + (rating_mode ? 1 : 0));
    }
};

struct Dataset {
    FeatureLayout layout;
    std::vector<std::string> class_labels;
    std::vector<Record> records;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }

    Dataset subset(const std::vector<std::size_t>& idx) const {
        Dataset out{layout, class_labels, {}};
        out.records.reserve(idx.size());
        for (auto i : idx) out.records.push_back(records.at(i));
        return out;
    }
};

}  // namespace phe
