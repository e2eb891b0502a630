#pragma once

// Streaming evaluation: CSV ingestion against a schema, vocabulary-group
// splits, the predict -> score -> update loop, continual-learning matrices.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "phe/errors.hpp"
#include "phe/inference.hpp"
#include "phe/record.hpp"

namespace phe {

enum class ColumnKind { categorical, numeric, target_class, target_real, target_count, timestamp, ignore };

inline ColumnKind parse_column_kind(std::string_view s) {
    if (s == "categorical") return ColumnKind::categorical;
    if (s == "numeric") return ColumnKind::numeric;
    if (s == "target-class") return ColumnKind::target_class;
    if (s == "target-real") return ColumnKind::target_real;
    if (s == "target-count") return ColumnKind::target_count;
    if (s == "timestamp") return ColumnKind::timestamp;
    if (s == "ignore") return ColumnKind::ignore;
    throw ConfigError("columns: unknown kind '" + std::string(s) + "'");
}

enum class MissingPolicy { token, drop_row };

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::ignore;
};

struct Schema {
    std::vector<ColumnSpec> columns;
    std::string missing_value = "?";          // raw cell value meaning "missing"
    std::string missing_token = "<missing>";  // item used for missing categoricals
    MissingPolicy missing = MissingPolicy::token;
    bool zscore = true;                       // numeric columns, fitted on the init split
    bool ignore_other_columns = false;        // CSV columns not listed are skipped
    bool rating_mode = false;
    std::vector<std::string> classes;         // class labels; inferred (sorted) when empty
    std::optional<std::pair<double, double>> target_range;  // real targets mapped to [0, 1]

    void validate() const {
        std::size_t targets = 0;
        std::set<std::string> names;
        for (const auto& c : columns) {
            if (!names.insert(c.name).second) throw ConfigError("columns: duplicate column '" + c.name + "'");
            if (c.kind == ColumnKind::target_class || c.kind == ColumnKind::target_real ||
                c.kind == ColumnKind::target_count)
                ++targets;
        }
        if (targets != 1) throw ConfigError("columns: exactly one target column is required");
        if (rating_mode && categorical_columns().size() < 2)
            throw ConfigError("columns: rating_mode needs two categorical columns");
        if (target_range && !(target_range->second > target_range->first))
            throw ConfigError("target_range: upper bound must exceed lower bound");
    }

    std::vector<std::string> names_of(ColumnKind k) const {
        std::vector<std::string> out;
        for (const auto& c : columns)
            if (c.kind == k) out.push_back(c.name);
        return out;
    }
    std::vector<std::string> categorical_columns() const { return names_of(ColumnKind::categorical); }
    std::vector<std::string> numeric_columns() const { return names_of(ColumnKind::numeric); }

    const ColumnSpec& target() const {
        for (const auto& c : columns)
            if (c.kind == ColumnKind::target_class || c.kind == ColumnKind::target_real ||
                c.kind == ColumnKind::target_count)
                return c;
        throw ConfigError("columns: no target column");
    }

    TargetKind target_kind() const {
        switch (target().kind) {
            case ColumnKind::target_class: return TargetKind::cls;
            case ColumnKind::target_real: return TargetKind::real;
            default: return TargetKind::count;
        }
    }
};

inline void from_json(const nlohmann::json& j, Schema& s) {
    static const std::set<std::string> known = {"columns",        "missing_value", "missing_token",
                                                "missing",        "normalize",     "ignore_other_columns",
                                                "rating_mode",    "classes",       "target_range"};
    for (const auto& [k, _] : j.items())
        if (!known.count(k)) throw ConfigError("schema." + k + ": unknown key");
    if (!j.contains("columns") || !j.at("columns").is_array()) throw ConfigError("schema.columns: expected an array");
    for (const auto& c : j.at("columns")) {
        for (const auto& [k, _] : c.items())
            if (k != "name" && k != "kind") throw ConfigError("schema.columns[]." + k + ": unknown key");
        if (!c.contains("name") || !c.contains("kind")) throw ConfigError("schema.columns[]: name and kind are required");
        s.columns.push_back({c.at("name").get<std::string>(), parse_column_kind(c.at("kind").get<std::string>())});
    }
    s.missing_value = j.value("missing_value", s.missing_value);
    s.missing_token = j.value("missing_token", s.missing_token);
    if (j.contains("missing")) {
        const auto m = j.at("missing").get<std::string>();
        if (m == "token") s.missing = MissingPolicy::token;
        else if (m == "drop_row") s.missing = MissingPolicy::drop_row;
        else throw ConfigError("schema.missing: expected token or drop_row");
    }
    if (j.contains("normalize")) {
        const auto n = j.at("normalize").get<std::string>();
        if (n == "zscore") s.zscore = true;
        else if (n == "none") s.zscore = false;
        else throw ConfigError("schema.normalize: expected zscore or none");
    }
    s.ignore_other_columns = j.value("ignore_other_columns", false);
    s.rating_mode = j.value("rating_mode", false);
    if (j.contains("classes")) s.classes = j.at("classes").get<std::vector<std::string>>();
    if (j.contains("target_range")) {
        const auto r = j.at("target_range").get<std::vector<double>>();
        if (r.size() != 2) throw ConfigError("schema.target_range: expected [lo, hi]");
        s.target_range = std::make_pair(r[0], r[1]);
    }
    s.validate();
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(std::move(cur));
    for (auto& s : out) {
        const auto b = s.find_first_not_of(' ');
        const auto e = s.find_last_not_of(' ');
        s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    }
    return out;
}

struct IngestReport {
    std::size_t rows_read = 0;
    std::size_t rows_dropped = 0;
};

inline Dataset ingest_csv(std::istream& in, const Schema& schema, IngestReport* report = nullptr) {
    schema.validate();
    std::string line;
    if (!std::getline(in, line)) throw DataError("csv: empty input");
    const auto header = split_csv_line(line);
    std::unordered_map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < header.size(); ++i) pos[header[i]] = i;
    for (const auto& c : schema.columns)
        if (!pos.count(c.name)) throw DataError("csv: missing column '" + c.name + "'");
    if (!schema.ignore_other_columns) {
        std::set<std::string> listed;
        for (const auto& c : schema.columns) listed.insert(c.name);
        for (const auto& h : header)
            if (!listed.count(h)) throw DataError("csv: column '" + h + "' is not in the schema");
    }

    Dataset ds;
    ds.layout.cat_columns = schema.categorical_columns();
    ds.layout.numeric_dim = schema.numeric_columns().size();
    ds.layout.rating_mode = schema.rating_mode;
    ds.layout.target = schema.target_kind();
    const auto& tcol = schema.target();
    std::map<std::string, std::size_t> class_index;
    for (std::size_t i = 0; i < schema.classes.size(); ++i) class_index[schema.classes[i]] = i;
    std::vector<std::string> raw_classes;  // when inferring

    IngestReport rep;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        ++rep.rows_read;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw DataError("csv line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                            " fields, got " + std::to_string(cells.size()));
        Record r;
        r.line = lineno;
        bool drop = false;
        std::string target_cell;
        for (const auto& c : schema.columns) {
            const std::string& v = cells[pos[c.name]];
            const bool missing = v.empty() || v == schema.missing_value;
            if (missing && schema.missing == MissingPolicy::drop_row && c.kind != ColumnKind::ignore) drop = true;
            switch (c.kind) {
                case ColumnKind::categorical: r.cats.push_back(missing ? schema.missing_token : v); break;
                case ColumnKind::numeric:
                case ColumnKind::timestamp: {
                    double x = 0.0;
                    if (!missing) {
                        std::size_t used = 0;
                        try {
                            x = std::stod(v, &used);
                        } catch (const std::exception&) {
                            used = 0;
                        }
                        if (used != v.size())
                            throw DataError("csv line " + std::to_string(lineno) + ": column '" + c.name +
                                            "' is not numeric: '" + v + "'");
                    } else if (c.kind == ColumnKind::timestamp && !drop) {
                        throw DataError("csv line " + std::to_string(lineno) + ": missing timestamp");
                    }
                    if (c.kind == ColumnKind::numeric) r.numeric.push_back(missing ? std::nan("") : x);
                    else r.timestamp = x;
                    break;
                }
                case ColumnKind::target_class:
                case ColumnKind::target_real:
                case ColumnKind::target_count: target_cell = v; break;
                case ColumnKind::ignore: break;
            }
        }
        if (drop) {
            ++rep.rows_dropped;
            continue;
        }
        if (target_cell.empty() || target_cell == schema.missing_value)
            throw DataError("csv line " + std::to_string(lineno) + ": missing target");
        if (tcol.kind == ColumnKind::target_class) {
            if (!schema.classes.empty()) {
                auto it = class_index.find(target_cell);
                if (it == class_index.end())
                    throw DataError("csv line " + std::to_string(lineno) + ": unknown class '" + target_cell + "'");
                r.target = static_cast<double>(it->second);
            } else {
                raw_classes.push_back(target_cell);
            }
        } else {
            std::size_t used = 0;
            try {
                r.target = std::stod(target_cell, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != target_cell.size() || !std::isfinite(r.target))
                throw DataError("csv line " + std::to_string(lineno) + ": unparseable target '" + target_cell + "'");
            if (tcol.kind == ColumnKind::target_count && (r.target < 0 || r.target != std::floor(r.target)))
                throw DataError("csv line " + std::to_string(lineno) + ": count target must be a nonnegative integer");
            if (schema.target_range)
                r.target = (r.target - schema.target_range->first) /
                           (schema.target_range->second - schema.target_range->first);
        }
        ds.records.push_back(std::move(r));
    }
    if (tcol.kind == ColumnKind::target_class) {
        if (schema.classes.empty()) {
            std::set<std::string> uniq(raw_classes.begin(), raw_classes.end());
            ds.class_labels.assign(uniq.begin(), uniq.end());
            std::map<std::string, std::size_t> idx;
            for (std::size_t i = 0; i < ds.class_labels.size(); ++i) idx[ds.class_labels[i]] = i;
            for (std::size_t i = 0; i < ds.records.size(); ++i) ds.records[i].target = static_cast<double>(idx[raw_classes[i]]);
        } else {
            ds.class_labels = schema.classes;
        }
        ds.layout.num_classes = std::max<std::size_t>(2, ds.class_labels.size());
    }
    if (report != nullptr) *report = rep;
    return ds;
}

inline Dataset ingest_csv(const std::string& path, const Schema& schema, IngestReport* report = nullptr) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset '" + path + "'");
    return ingest_csv(in, schema, report);
}

// Per-column z-score parameters fitted on one split and applied to any.
struct Normalizer {
    std::vector<double> mean, sd;

    static Normalizer fit(std::span<const Record> records, std::size_t dim) {
        Normalizer n;
        n.mean.assign(dim, 0.0);
        n.sd.assign(dim, 1.0);
        for (std::size_t j = 0; j < dim; ++j) {
            double s = 0, s2 = 0;
            std::size_t c = 0;
            for (const auto& r : records)
                if (std::isfinite(r.numeric[j])) s += r.numeric[j], ++c;
            const double m = c > 0 ? s / static_cast<double>(c) : 0.0;
            for (const auto& r : records)
                if (std::isfinite(r.numeric[j])) s2 += (r.numeric[j] - m) * (r.numeric[j] - m);
            const double var = c > 1 ? s2 / static_cast<double>(c) : 0.0;
            n.mean[j] = m;
            n.sd[j] = var > 0 ? std::sqrt(var) : 1.0;
        }
        return n;
    }

    // Missing numeric values become 0 (the init-split mean).
    void apply(std::vector<Record>& records) const {
        for (auto& r : records)
            for (std::size_t j = 0; j < mean.size(); ++j)
                r.numeric[j] = std::isfinite(r.numeric[j]) ? (r.numeric[j] - mean[j]) / sd[j] : 0.0;
    }
};

inline void fill_missing_numeric(std::vector<Record>& records) {
    for (auto& r : records)
        for (auto& x : r.numeric)
            if (!std::isfinite(x)) x = 0.0;
}

inline std::size_t column_index(const FeatureLayout& layout, const std::string& column) {
    auto it = std::find(layout.cat_columns.begin(), layout.cat_columns.end(), column);
    if (it == layout.cat_columns.end()) throw ConfigError("column '" + column + "' is not a categorical column");
    return static_cast<std::size_t>(it - layout.cat_columns.begin());
}

// Distinct items of a categorical column, in first-seen order.
inline std::vector<std::string> vocabulary(const Dataset& ds, const std::string& column) {
    const std::size_t c = column_index(ds.layout, column);
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& r : ds.records)
        if (seen.insert(r.cats[c]).second) out.push_back(r.cats[c]);
    return out;
}

// Distinct (column, item) pairs over all categorical columns.
inline std::size_t total_vocabulary(const Dataset& ds) {
    std::size_t v = 0;
    for (const auto& c : ds.layout.cat_columns) v += vocabulary(ds, c).size();
    return v;
}

struct Group {
    std::vector<std::string> items;
    Dataset train, test;
};

// Assigns records to groups by the item set owning their value in `column`,
// then splits each group 2:1 into train / test.
inline std::vector<Group> partition_by_items(const Dataset& ds, const std::string& column,
                                             const std::vector<std::vector<std::string>>& item_groups,
                                             std::uint64_t seed, double train_fraction = 2.0 / 3.0) {
    const std::size_t c = column_index(ds.layout, column);
    std::unordered_map<std::string, std::size_t> owner;
    for (std::size_t g = 0; g < item_groups.size(); ++g)
        for (const auto& it : item_groups[g])
            if (!owner.emplace(it, g).second) throw ConfigError("groups: item '" + it + "' listed twice");
    std::vector<std::vector<std::size_t>> members(item_groups.size());
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        auto it = owner.find(ds.records[i].cats[c]);
        if (it == owner.end())
            throw DataError("groups: item '" + ds.records[i].cats[c] + "' of column '" + column + "' has no group");
        members[it->second].push_back(i);
    }
    Rng rng(seed ^ 0x5eed5eed5eedULL);
    std::vector<Group> out;
    for (std::size_t g = 0; g < item_groups.size(); ++g) {
        auto idx = members[g];
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto ntrain = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
        std::vector<std::size_t> tr(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(ntrain));
        std::vector<std::size_t> te(idx.begin() + static_cast<std::ptrdiff_t>(ntrain), idx.end());
        std::sort(tr.begin(), tr.end());
        std::sort(te.begin(), te.end());
        out.push_back({item_groups[g], ds.subset(tr), ds.subset(te)});
    }
    return out;
}

// Seeded random split of the column's vocabulary into near-equal groups;
// the larger groups come last.
inline std::vector<std::vector<std::string>> split_vocabulary(std::vector<std::string> vocab, std::size_t n_groups,
                                                              std::uint64_t seed) {
    if (n_groups == 0 || n_groups > vocab.size())
        throw ConfigError("groups: n_groups must be between 1 and the vocabulary size (" +
                          std::to_string(vocab.size()) + ")");
    std::sort(vocab.begin(), vocab.end());
    Rng rng(seed);
    std::shuffle(vocab.begin(), vocab.end(), rng);
    std::vector<std::vector<std::string>> groups(n_groups);
    const std::size_t base = vocab.size() / n_groups, extra = vocab.size() % n_groups;
    std::size_t k = 0;
    for (std::size_t g = 0; g < n_groups; ++g) {
        const std::size_t n = base + (g >= n_groups - extra ? 1 : 0);
        for (std::size_t i = 0; i < n; ++i) groups[g].push_back(vocab[k++]);
    }
    return groups;
}

inline std::vector<Group> partition_by_vocab(const Dataset& ds, const std::string& column, std::size_t n_groups,
                                             std::uint64_t seed) {
    return partition_by_items(ds, column, split_vocabulary(vocabulary(ds, column), n_groups, seed), seed);
}

// ---- metrics

struct StepMetric {
    std::size_t step = 0;
    std::size_t stage = 0;
    double value = 0;
    std::size_t count = 0;
};

struct MetricsLog {
    std::string model;
    std::string metric;  // "accuracy" (percent) or "mae"
    std::vector<StepMetric> steps;
    std::vector<std::vector<double>> R;  // R[t][a], a <= t (continual runs)

    void append(StepMetric m) { steps.push_back(m); }

    double mean() const {
        if (steps.empty()) return 0.0;
        double s = 0;
        for (const auto& m : steps) s += m.value;
        return s / static_cast<double>(steps.size());
    }

    // Mean over steps [from, to) given as fractions of the run.
    double mean_between(double from, double to) const {
        const auto n = steps.size();
        const auto a = static_cast<std::size_t>(std::floor(from * static_cast<double>(n)));
        const auto b = static_cast<std::size_t>(std::floor(to * static_cast<double>(n)));
        if (b <= a) return 0.0;
        double s = 0;
        for (std::size_t i = a; i < b; ++i) s += steps[i].value;
        return s / static_cast<double>(b - a);
    }

    // Count-weighted average over all steps (e.g. cumulative MAE).
    double cumulative() const {
        double s = 0, n = 0;
        for (const auto& m : steps) s += m.value * static_cast<double>(m.count), n += static_cast<double>(m.count);
        return n > 0 ? s / n : 0.0;
    }

    double r_bar(std::size_t t) const {
        const auto& row = R.at(t);
        double s = 0;
        for (std::size_t a = 0; a <= t; ++a) s += row.at(a);
        return s / static_cast<double>(t + 1);
    }

    void write_jsonl(std::ostream& os) const {
        for (const auto& m : steps) {
            nlohmann::json j{{"step", m.step}, {"stage", m.stage}, {"model", model}, {"metric", metric},
                             {"value", m.value}, {"n", m.count}};
            os << j.dump() << '\n';
        }
        for (std::size_t t = 0; t < R.size(); ++t) {
            nlohmann::json j{{"group", t + 1}, {"model", model}, {"R", R[t]}, {"R_bar", r_bar(t)}};
            os << j.dump() << '\n';
        }
    }
};

// Score of a batch before the model sees its targets: percent correct for
// class targets, mean absolute error otherwise.
template <class M>
StepMetric score_batch(M& model, std::span<const Record> batch) {
    const auto pred = model.predict(batch);
    StepMetric m;
    m.count = batch.size();
    double s = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (model.layout().target == TargetKind::cls)
            s += argmax_lowest(pred[i]) == static_cast<std::size_t>(batch[i].target) ? 1.0 : 0.0;
        else
            s += std::abs(pred[i][0] - batch[i].target);
    }
    m.value = model.layout().target == TargetKind::cls ? 100.0 * s / static_cast<double>(batch.size())
                                                       : s / static_cast<double>(batch.size());
    return m;
}

struct StreamProtocol {
    std::size_t batch_size = 128;
    bool update = true;  // false: evaluation only
};

// predict -> score -> (advance stage, update) for every batch.
template <class M>
MetricsLog run_stream(M& model, const std::vector<std::vector<Record>>& batches, const StreamProtocol& proto,
                      const std::string& model_name) {
    MetricsLog log;
    log.model = model_name;
    log.metric = model.layout().target == TargetKind::cls ? "accuracy" : "mae";
    for (std::size_t t = 0; t < batches.size(); ++t) {
        StepMetric m = score_batch(model, std::span<const Record>(batches[t]));
        m.step = t;
        m.stage = model.stage();
        log.append(m);
        if (proto.update) {
            model.advance_stage();
            model.fit_online(batches[t]);
        }
    }
    return log;
}

inline std::vector<std::vector<Record>> make_batches(std::vector<Record> records, std::size_t batch_size) {
    std::vector<std::vector<Record>> out;
    for (std::size_t i = 0; i < records.size(); i += batch_size) {
        const auto stop = std::min(records.size(), i + batch_size);
        out.emplace_back(std::make_move_iterator(records.begin() + static_cast<std::ptrdiff_t>(i)),
                         std::make_move_iterator(records.begin() + static_cast<std::ptrdiff_t>(stop)));
    }
    return out;
}

// Groups records sharing a timestamp window [t0 + k*width, t0 + (k+1)*width).
inline std::vector<std::vector<Record>> make_time_batches(std::vector<Record> records, double width) {
    std::stable_sort(records.begin(), records.end(),
                     [](const Record& a, const Record& b) { return a.timestamp < b.timestamp; });
    std::vector<std::vector<Record>> out;
    if (records.empty()) return out;
    const double t0 = records.front().timestamp;
    long long cur = -1;
    for (auto& r : records) {
        const auto k = static_cast<long long>(std::floor((r.timestamp - t0) / width));
        if (k != cur) {
            out.emplace_back();
            cur = k;
        }
        out.back().push_back(std::move(r));
    }
    return out;
}

// Sequential group training: group 0 trains everything, later groups only
// the embeddings (with a stage boundary before each). R[t][a] is the score
// on group a's test split after training group t.
template <class M>
MetricsLog run_continual(M& model, const std::vector<Group>& groups, const std::string& model_name) {
    MetricsLog log;
    log.model = model_name;
    log.metric = model.layout().target == TargetKind::cls ? "accuracy" : "mae";
    for (std::size_t t = 0; t < groups.size(); ++t) {
        if (t == 0) {
            model.fit_initial(groups[0].train.records);
        } else {
            model.advance_stage();
            model.fit_online(groups[t].train.records);
        }
        std::vector<double> row;
        for (std::size_t a = 0; a <= t; ++a) {
            StepMetric m = score_batch(model, std::span<const Record>(groups[a].test.records));
            row.push_back(m.value);
        }
        log.append({t, model.stage(), 0.0, 0});
        log.R.push_back(row);
        log.steps.back().value = log.r_bar(t);
    }
    return log;
}

// Gaussian kernel smoothing with reflected boundaries (d c b a | a b c d | d c b a).
inline std::vector<double> smooth_gaussian(const std::vector<double>& x, double bandwidth) {
    if (bandwidth <= 0.0 || x.size() < 2) return x;
    const auto radius = static_cast<long long>(std::ceil(4.0 * bandwidth));
    std::vector<double> w(static_cast<std::size_t>(2 * radius + 1));
    double total = 0;
    for (long long k = -radius; k <= radius; ++k) {
        const double v = std::exp(-0.5 * static_cast<double>(k * k) / (bandwidth * bandwidth));
        w[static_cast<std::size_t>(k + radius)] = v;
        total += v;
    }
    for (auto& v : w) v /= total;
    const auto n = static_cast<long long>(x.size());
    auto reflect = [n](long long i) {
        const long long period = 2 * n;
        i %= period;
        if (i < 0) i += period;
        return i < n ? i : period - 1 - i;
    };
    std::vector<double> out(x.size(), 0.0);
    for (long long i = 0; i < n; ++i) {
        double s = 0;
        for (long long k = -radius; k <= radius; ++k)
            s += w[static_cast<std::size_t>(k + radius)] * x[static_cast<std::size_t>(reflect(i + k))];
        out[static_cast<std::size_t>(i)] = s;
    }
    return out;
}

}  // namespace phe
