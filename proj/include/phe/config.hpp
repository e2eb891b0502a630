#pragma once

// Experiment configuration (one JSON file per experiment). Everything is
// validated before any computation; unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "phe/baselines.hpp"
#include "phe/errors.hpp"
#include "phe/exact_demo.hpp"
#include "phe/harness.hpp"
#include "phe/synthetic.hpp"

namespace phe {

enum class ExperimentKind { online_stream, continual_groups, demo, bench };

inline ExperimentKind parse_experiment_kind(std::string_view s) {
    if (s == "online_stream") return ExperimentKind::online_stream;
    if (s == "continual_groups") return ExperimentKind::continual_groups;
    if (s == "demo") return ExperimentKind::demo;
    if (s == "bench") return ExperimentKind::bench;
    throw ConfigError("kind: expected online_stream, continual_groups, demo or bench; got '" + std::string(s) + "'");
}

inline std::string to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::online_stream: return "online_stream";
        case ExperimentKind::continual_groups: return "continual_groups";
        case ExperimentKind::demo: return "demo";
        case ExperimentKind::bench: return "bench";
    }
    return "?";
}

enum class StreamOrder { shuffle, timestamp };

struct StreamConfig {
    double init_fraction = 0.2;  // random portion used for fit_initial
    std::size_t batch_size = 128;
    StreamOrder order = StreamOrder::shuffle;
    double time_width = 1.0;     // timestamp window per batch (timestamp order)
    double init_until = 0.0;     // timestamp order: records with t < init_until initialise
    std::vector<std::string> update_columns;  // empty: every categorical column
    double smoothing_bandwidth = 0.0;         // only for the emitted plot series
};

struct ContinualConfig {
    std::string column;
    std::size_t n_groups = 4;
    std::vector<std::vector<std::string>> groups;  // explicit item groups override n_groups
};

struct HeadConfig {
    HeadKind kind = HeadKind::categorical_linear;
    std::size_t hidden = 16;
    double sigma_y = 1.0;
};

struct BenchConfig {
    std::size_t records = 4096;
    std::size_t vocabulary = 1000;
    std::size_t columns = 4;
    std::size_t repeats = 5;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::online_stream;
    std::vector<ModelId> models{ModelId::phe};
    EncoderConfig encoder;
    HeadConfig head;
    TrainConfig train;
    std::optional<Schema> schema;
    std::optional<SyntheticRatingConfig> synthetic;
    std::string dataset;  // resolved against the config's directory
    std::string output_dir = "out";
    std::uint64_t seed = 0;
    std::size_t repeats = 1;  // runs with seeds seed, seed+1, ...
    std::map<ModelId, std::size_t> epochs_online_overrides;  // per-model online epoch budget
    StreamConfig stream;
    ContinualConfig continual;
    demo::AlternatingConfig demo;
    BenchConfig bench;
    nlohmann::json source;  // the parsed document, echoed into summaries
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& where, std::initializer_list<std::string_view> known) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [k, _] : j.items()) {
        bool ok = false;
        for (auto n : known) ok = ok || k == n;
        if (!ok) throw ConfigError((where.empty() ? "" : where + ".") + k + ": unknown key");
    }
}

template <class T>
T get_field(const nlohmann::json& j, const std::string& where, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

inline std::size_t get_count(const nlohmann::json& j, const std::string& where, const char* key, std::size_t fallback,
                             std::size_t min = 0) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(min))
        throw ConfigError(where + "." + key + ": must be an integer >= " + std::to_string(min));
    return v.get<std::size_t>();
}

}  // namespace detail

inline TrainConfig parse_train(const nlohmann::json& j) {
    using detail::get_count;
    using detail::get_field;
    detail::check_keys(j, "train",
                       {"learning_rate", "batch_size", "epochs_initial", "epochs_online", "mc_samples_train",
                        "mc_samples_predict", "beta1", "beta2", "epsilon", "optimizer", "reset_optimizer_each_stage",
                        "kl_weight", "init_mean_std", "init_sigma", "record_trajectory"});
    TrainConfig t;
    t.learning_rate = get_field(j, "train", "learning_rate", t.learning_rate);
    t.batch_size = get_count(j, "train", "batch_size", t.batch_size, 1);
    t.epochs_initial = get_count(j, "train", "epochs_initial", t.epochs_initial);
    t.epochs_online = get_count(j, "train", "epochs_online", t.epochs_online);
    t.mc_samples_train = get_count(j, "train", "mc_samples_train", t.mc_samples_train, 1);
    t.mc_samples_predict = get_count(j, "train", "mc_samples_predict", t.mc_samples_predict, 1);
    t.beta1 = get_field(j, "train", "beta1", t.beta1);
    t.beta2 = get_field(j, "train", "beta2", t.beta2);
    t.epsilon = get_field(j, "train", "epsilon", t.epsilon);
    if (j.contains("optimizer")) t.optimizer = parse_optimizer(get_field<std::string>(j, "train", "optimizer", ""));
    t.reset_optimizer_each_stage = get_field(j, "train", "reset_optimizer_each_stage", t.reset_optimizer_each_stage);
    t.kl_weight = get_field(j, "train", "kl_weight", t.kl_weight);
    t.init_mean_std = get_field(j, "train", "init_mean_std", t.init_mean_std);
    t.init_sigma = get_field(j, "train", "init_sigma", t.init_sigma);
    t.record_trajectory = get_field(j, "train", "record_trajectory", t.record_trajectory);
    t.validate();
    return t;
}

inline ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
    using detail::get_count;
    using detail::get_field;
    detail::check_keys(j, "", {"kind", "model", "models", "hash", "encoder", "head", "train", "schema", "synthetic",
                               "dataset", "output_dir", "seed", "repeats", "epochs_online_overrides", "stream", "continual", "demo", "bench"});
    ExperimentConfig c;
    c.source = j;
    if (!j.contains("kind")) throw ConfigError("kind: required");
    c.kind = parse_experiment_kind(get_field<std::string>(j, "config", "kind", ""));
    if (j.contains("model") && j.contains("models")) throw ConfigError("model/models: give one, not both");
    if (j.contains("model")) c.models = {parse_model_id(get_field<std::string>(j, "config", "model", ""))};
    if (j.contains("models")) {
        c.models.clear();
        for (const auto& m : j.at("models")) c.models.push_back(parse_model_id(m.get<std::string>()));
        if (c.models.empty()) throw ConfigError("models: must not be empty");
    }
    if (j.contains("hash")) c.encoder.spec = j.at("hash").get<HashSpec>();
    if (j.contains("encoder")) {
        const auto& e = j.at("encoder");
        detail::check_keys(e, "encoder", {"aggregation", "column_namespacing"});
        if (e.contains("aggregation")) c.encoder.aggregation = parse_aggregation(e.at("aggregation").get<std::string>());
        c.encoder.column_namespacing = get_field(e, "encoder", "column_namespacing", true);
    }
    if (j.contains("head")) {
        const auto& h = j.at("head");
        detail::check_keys(h, "head", {"kind", "hidden", "sigma_y"});
        if (h.contains("kind")) c.head.kind = parse_head_kind(h.at("kind").get<std::string>());
        c.head.hidden = get_count(h, "head", "hidden", c.head.hidden, 1);
        c.head.sigma_y = get_field(h, "head", "sigma_y", c.head.sigma_y);
        if (!(c.head.sigma_y > 0)) throw ConfigError("head.sigma_y: must be > 0");
    }
    if (j.contains("train")) c.train = parse_train(j.at("train"));
    if (j.contains("schema")) c.schema = j.at("schema").get<Schema>();
    if (j.contains("synthetic")) {
        const auto& s = j.at("synthetic");
        detail::check_keys(s, "synthetic", {"users", "items", "days", "ratings_per_day", "rank", "drift", "noise",
                                            "user_bias_sd", "item_bias_sd", "interaction_sd", "zipf",
                                            "arrival_span", "seed_fraction"});
        SyntheticRatingConfig sc;
        sc.users = get_count(s, "synthetic", "users", sc.users);
        sc.items = get_count(s, "synthetic", "items", sc.items);
        sc.days = get_count(s, "synthetic", "days", sc.days);
        sc.ratings_per_day = get_count(s, "synthetic", "ratings_per_day", sc.ratings_per_day);
        sc.rank = get_count(s, "synthetic", "rank", sc.rank);
        sc.drift = get_field(s, "synthetic", "drift", sc.drift);
        sc.noise = get_field(s, "synthetic", "noise", sc.noise);
        sc.user_bias_sd = get_field(s, "synthetic", "user_bias_sd", sc.user_bias_sd);
        sc.item_bias_sd = get_field(s, "synthetic", "item_bias_sd", sc.item_bias_sd);
        sc.interaction_sd = get_field(s, "synthetic", "interaction_sd", sc.interaction_sd);
        sc.zipf = get_field(s, "synthetic", "zipf", sc.zipf);
        sc.arrival_span = get_field(s, "synthetic", "arrival_span", sc.arrival_span);
        sc.seed_fraction = get_field(s, "synthetic", "seed_fraction", sc.seed_fraction);
        sc.validate();
        c.synthetic = sc;
    }
    if (j.contains("dataset")) {
        std::filesystem::path p = get_field<std::string>(j, "config", "dataset", "");
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        c.dataset = p.lexically_normal().string();
    }
    c.output_dir = get_field(j, "config", "output_dir", c.output_dir);
    c.seed = get_field(j, "config", "seed", c.seed);
    c.repeats = get_count(j, "config", "repeats", c.repeats, 1);
    if (j.contains("epochs_online_overrides")) {
        const auto& o = j.at("epochs_online_overrides");
        if (!o.is_object()) throw ConfigError("epochs_online_overrides: expected an object");
        for (const auto& [k, _] : o.items())
            c.epochs_online_overrides[parse_model_id(k)] = get_count(o, "epochs_online_overrides", k.c_str(), 0);
    }
    if (j.contains("stream")) {
        const auto& s = j.at("stream");
        detail::check_keys(s, "stream", {"init_fraction", "batch_size", "order", "time_width", "init_until",
                                         "update_columns", "smoothing_bandwidth"});
        auto& st = c.stream;
        st.init_fraction = get_field(s, "stream", "init_fraction", st.init_fraction);
        st.batch_size = get_count(s, "stream", "batch_size", st.batch_size, 1);
        if (s.contains("order")) {
            const auto o = s.at("order").get<std::string>();
            if (o == "shuffle") st.order = StreamOrder::shuffle;
            else if (o == "timestamp") st.order = StreamOrder::timestamp;
            else throw ConfigError("stream.order: expected shuffle or timestamp");
        }
        st.time_width = get_field(s, "stream", "time_width", st.time_width);
        st.init_until = get_field(s, "stream", "init_until", st.init_until);
        st.update_columns = get_field(s, "stream", "update_columns", st.update_columns);
        st.smoothing_bandwidth = get_field(s, "stream", "smoothing_bandwidth", st.smoothing_bandwidth);
        if (!(st.init_fraction > 0 && st.init_fraction < 1)) throw ConfigError("stream.init_fraction: must be in (0, 1)");
        if (!(st.time_width > 0)) throw ConfigError("stream.time_width: must be > 0");
        if (st.smoothing_bandwidth < 0) throw ConfigError("stream.smoothing_bandwidth: must be >= 0");
    }
    if (j.contains("continual")) {
        const auto& s = j.at("continual");
        detail::check_keys(s, "continual", {"column", "n_groups", "groups"});
        c.continual.column = get_field<std::string>(s, "continual", "column", "");
        c.continual.n_groups = get_count(s, "continual", "n_groups", c.continual.n_groups, 1);
        c.continual.groups = get_field(s, "continual", "groups", c.continual.groups);
    }
    if (j.contains("demo")) {
        const auto& s = j.at("demo");
        detail::check_keys(s, "demo", {"repeats", "cycles", "eta", "sigma_obs", "steps_per_stage", "learning_rate",
                                       "mc_samples_predict"});
        auto& d = c.demo;
        d.repeats = get_count(s, "demo", "repeats", d.repeats, 1);
        d.cycles = get_count(s, "demo", "cycles", d.cycles, 1);
        d.eta = get_field(s, "demo", "eta", d.eta);
        d.phe.sigma_obs = get_field(s, "demo", "sigma_obs", d.phe.sigma_obs);
        d.phe.steps_per_stage = get_count(s, "demo", "steps_per_stage", d.phe.steps_per_stage, 1);
        d.phe.learning_rate = get_field(s, "demo", "learning_rate", d.phe.learning_rate);
        d.phe.mc_samples_predict = get_count(s, "demo", "mc_samples_predict", d.phe.mc_samples_predict, 1);
        if (!(d.eta >= 0)) throw ConfigError("demo.eta: must be >= 0");
        if (!(d.phe.sigma_obs > 0)) throw ConfigError("demo.sigma_obs: must be > 0");
        if (!(d.phe.learning_rate > 0)) throw ConfigError("demo.learning_rate: must be > 0");
    }
    if (j.contains("bench")) {
        const auto& s = j.at("bench");
        detail::check_keys(s, "bench", {"records", "vocabulary", "columns", "repeats"});
        c.bench.records = get_count(s, "bench", "records", c.bench.records, 1);
        c.bench.vocabulary = get_count(s, "bench", "vocabulary", c.bench.vocabulary, 1);
        c.bench.columns = get_count(s, "bench", "columns", c.bench.columns, 1);
        c.bench.repeats = get_count(s, "bench", "repeats", c.bench.repeats, 1);
    }

    // Cross-field checks.
    const bool needs_data = c.kind == ExperimentKind::online_stream || c.kind == ExperimentKind::continual_groups;
    if (needs_data) {
        const bool has_csv = !c.dataset.empty();
        if (has_csv == c.synthetic.has_value()) throw ConfigError("dataset/synthetic: exactly one data source is required");
        if (has_csv && !c.schema) throw ConfigError("schema: required with a dataset");
        if (c.synthetic && c.stream.order != StreamOrder::timestamp)
            throw ConfigError("stream.order: synthetic ratings stream in timestamp order");
        if (c.schema) {
            const auto cats = c.schema->categorical_columns();
            for (const auto& col : c.stream.update_columns)
                if (std::find(cats.begin(), cats.end(), col) == cats.end())
                    throw ConfigError("stream.update_columns: '" + col + "' is not a categorical column");
        }
    }
    if (c.kind == ExperimentKind::continual_groups) {
        if (c.continual.column.empty()) throw ConfigError("continual.column: required");
        if (c.schema) {
            const auto cats = c.schema->categorical_columns();
            if (std::find(cats.begin(), cats.end(), c.continual.column) == cats.end())
                throw ConfigError("continual.column: '" + c.continual.column + "' is not a categorical column");
        }
    }
    if (needs_data && c.head.kind == HeadKind::identity_gaussian)
        throw ConfigError("head.kind: identity-gaussian is only for the demo");
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config '" + path + "': " + e.what());
    }
    try {
        return parse_config(j, std::filesystem::path(path).parent_path());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

inline LikelihoodHead make_head(const HeadConfig& h, const FeatureLayout& layout, std::size_t embed_dim) {
    const std::size_t F = layout.feature_dim(embed_dim);
    switch (h.kind) {
        case HeadKind::categorical_linear:
            if (layout.target != TargetKind::cls) throw ConfigError("head.kind: categorical-linear needs a class target");
            return CategoricalLinear(F, layout.num_classes);
        case HeadKind::gaussian_mlp:
            if (layout.target != TargetKind::real) throw ConfigError("head.kind: gaussian-mlp needs a real target");
            return GaussianMlp(F, h.hidden, h.sigma_y);
        case HeadKind::poisson_linear:
            if (layout.target != TargetKind::count) throw ConfigError("head.kind: poisson-linear needs a count target");
            return PoissonLinear(F);
        case HeadKind::identity_gaussian: return IdentityGaussian(h.sigma_y);
    }
    throw std::logic_error("make_head: unreachable");
}

}  // namespace phe
