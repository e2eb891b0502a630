#pragma once

// Runs a validated ExperimentConfig end to end and writes its outputs:
//   metrics_<model>_s<seed>.jsonl   per-step scores (and R matrix rows)
//   trajectory_<model>_s<seed>.jsonl  training losses
//   checkpoint_<model>_s<seed>.json
//   smoothed_<model>_s<seed>.csv    optional plot series
//   demo_trace.csv                  demo experiments
//   summary.json                    aggregates, parameter counts, wall time

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "phe/checkpoint.hpp"
#include "phe/config.hpp"
#include "phe/exact_demo.hpp"
#include "phe/harness.hpp"
#include "phe/synthetic.hpp"

namespace phe {

inline Dataset load_dataset(const ExperimentConfig& cfg) {
    if (cfg.synthetic) return make_synthetic_ratings(*cfg.synthetic, cfg.seed);
    if (cfg.dataset.empty()) throw ConfigError("dataset: required for " + to_string(cfg.kind));
    return ingest_csv(cfg.dataset, *cfg.schema);
}

struct StreamData {
    FeatureLayout layout;
    std::vector<Record> init;
    std::vector<std::vector<Record>> batches;
};

// Splits a dataset into the initialisation portion and the incoming batches,
// then normalises numeric columns with statistics of the init portion only.
inline StreamData prepare_stream(const ExperimentConfig& cfg, Dataset ds) {
    StreamData s;
    s.layout = ds.layout;
    auto& recs = ds.records;
    if (recs.size() < 2) throw DataError("dataset: needs at least two records");
    if (cfg.stream.order == StreamOrder::shuffle) {
        Rng rng(cfg.seed);
        std::shuffle(recs.begin(), recs.end(), rng);
        const auto n_init = static_cast<std::size_t>(std::ceil(cfg.stream.init_fraction * static_cast<double>(recs.size())));
        s.init.assign(recs.begin(), recs.begin() + static_cast<std::ptrdiff_t>(n_init));
        std::vector<Record> rest(recs.begin() + static_cast<std::ptrdiff_t>(n_init), recs.end());
        s.batches = make_batches(std::move(rest), cfg.stream.batch_size);
    } else {
        std::stable_sort(recs.begin(), recs.end(), [](const Record& a, const Record& b) { return a.timestamp < b.timestamp; });
        std::size_t n_init = 0;
        if (cfg.stream.init_until > 0) {
            while (n_init < recs.size() && recs[n_init].timestamp < cfg.stream.init_until) ++n_init;
        } else {
            n_init = static_cast<std::size_t>(std::ceil(cfg.stream.init_fraction * static_cast<double>(recs.size())));
        }
        s.init.assign(recs.begin(), recs.begin() + static_cast<std::ptrdiff_t>(n_init));
        std::vector<Record> rest(recs.begin() + static_cast<std::ptrdiff_t>(n_init), recs.end());
        s.batches = make_time_batches(std::move(rest), cfg.stream.time_width);
    }
    if (s.init.empty() || s.batches.empty()) throw DataError("stream: init split or stream is empty");
    if (cfg.schema && cfg.schema->zscore && s.layout.numeric_dim > 0) {
        const auto norm = Normalizer::fit(s.init, s.layout.numeric_dim);
        norm.apply(s.init);
        for (auto& b : s.batches) norm.apply(b);
    } else {
        fill_missing_numeric(s.init);
        for (auto& b : s.batches) fill_missing_numeric(b);
    }
    return s;
}

inline std::vector<Group> prepare_groups(const ExperimentConfig& cfg, const Dataset& ds) {
    auto groups = cfg.continual.groups.empty()
                      ? partition_by_vocab(ds, cfg.continual.column, cfg.continual.n_groups, cfg.seed)
                      : partition_by_items(ds, cfg.continual.column, cfg.continual.groups, cfg.seed);
    if (cfg.schema && cfg.schema->zscore && ds.layout.numeric_dim > 0) {
        const auto norm = Normalizer::fit(groups.at(0).train.records, ds.layout.numeric_dim);
        for (auto& g : groups) norm.apply(g.train.records), norm.apply(g.test.records);
    } else {
        for (auto& g : groups) fill_missing_numeric(g.train.records), fill_missing_numeric(g.test.records);
    }
    return groups;
}

struct RunResult {
    ModelId model = ModelId::phe;
    std::uint64_t seed = 0;
    MetricsLog log;
    std::size_t embedding_params = 0;
    nlohmann::json checkpoint;
    std::vector<TrajectoryEntry> trajectory;
};

inline AnyModel build_model(const ExperimentConfig& cfg, ModelId id, const FeatureLayout& layout, std::uint64_t seed) {
    AnyModel m = make_model(id, cfg.encoder, layout, make_head(cfg.head, layout, cfg.encoder.spec.embed_dim), cfg.train, seed);
    const auto ov = cfg.epochs_online_overrides.find(id);
    std::visit(
        [&](auto& model) {
            model.set_online_columns(cfg.stream.update_columns);
            if (ov != cfg.epochs_online_overrides.end()) model.train_config().epochs_online = ov->second;
        },
        m);
    return m;
}

inline RunResult run_online_model(const ExperimentConfig& cfg, ModelId id, const StreamData& data, std::uint64_t seed) {
    AnyModel any = build_model(cfg, id, data.layout, seed);
    RunResult res;
    res.model = id;
    res.seed = seed;
    std::visit(
        [&](auto& m) {
            m.fit_initial(data.init);
            res.log = run_stream(m, data.batches, StreamProtocol{cfg.stream.batch_size, true}, to_string(id));
            res.embedding_params = m.embedding_param_count();
            res.checkpoint = save_checkpoint(m);
            res.trajectory = m.trajectory();
        },
        any);
    return res;
}

inline RunResult run_continual_model(const ExperimentConfig& cfg, ModelId id, const std::vector<Group>& groups,
                                     const FeatureLayout& layout, std::uint64_t seed) {
    AnyModel any = build_model(cfg, id, layout, seed);
    RunResult res;
    res.model = id;
    res.seed = seed;
    std::visit(
        [&](auto& m) {
            res.log = run_continual(m, groups, to_string(id));
            res.embedding_params = m.embedding_param_count();
            res.checkpoint = save_checkpoint(m);
            res.trajectory = m.trajectory();
        },
        any);
    return res;
}

inline std::string run_tag(const RunResult& r) { return to_string(r.model) + "_s" + std::to_string(r.seed); }

inline double quartile_mean(const MetricsLog& log, int q) {
    return log.mean_between(0.25 * q, 0.25 * (q + 1));
}

inline nlohmann::json run_summary(const RunResult& r) {
    nlohmann::json j{{"model", to_string(r.model)},
                     {"seed", r.seed},
                     {"metric", r.log.metric},
                     {"steps", r.log.steps.size()},
                     {"mean", r.log.mean()},
                     {"cumulative", r.log.cumulative()},
                     {"first_quartile", quartile_mean(r.log, 0)},
                     {"last_quartile", quartile_mean(r.log, 3)},
                     {"embedding_params", r.embedding_params}};
    if (!r.log.R.empty()) j["final_R_bar"] = r.log.r_bar(r.log.R.size() - 1);
    return j;
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DataError("cannot write '" + p.string() + "'");
    out << s;
}

inline void write_run_files(const std::filesystem::path& dir, const RunResult& r, double bandwidth) {
    const std::string tag = run_tag(r);
    std::ostringstream m;
    r.log.write_jsonl(m);
    write_text(dir / ("metrics_" + tag + ".jsonl"), m.str());
    if (!r.trajectory.empty()) {
        std::ostringstream t;
        write_jsonl(t, r.trajectory);
        write_text(dir / ("trajectory_" + tag + ".jsonl"), t.str());
    }
    write_text(dir / ("checkpoint_" + tag + ".json"), r.checkpoint.dump() + "\n");
    if (bandwidth > 0 && !r.log.steps.empty()) {
        std::vector<double> v;
        for (const auto& s : r.log.steps) v.push_back(s.value);
        const auto sm = smooth_gaussian(v, bandwidth);
        std::ostringstream c;
        c << "step,value,smoothed\n";
        char buf[96];
        for (std::size_t i = 0; i < v.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", i, v[i], sm[i]);
            c << buf;
        }
        write_text(dir / ("smoothed_" + tag + ".csv"), c.str());
    }
}

struct ExperimentOutput {
    std::vector<RunResult> runs;
    nlohmann::json summary;
};

using Progress = std::function<void(const std::string&)>;

inline nlohmann::json demo_summary(const demo::AlternatingResult& r, const demo::AlternatingConfig& cfg) {
    auto vec = [](const demo::Vec3& v) { return std::vector<double>{v[0], v[1], v[2]}; };
    return {{"exact_mean", vec(r.exact_mean)}, {"phe_mean", vec(r.phe_mean)}, {"ogd_e", vec(r.ogd_e)},
            {"steps", r.trace.size() / 3},     {"eta", cfg.eta},               {"sigma_obs", cfg.phe.sigma_obs}};
}

// Synthetic throughput benchmark of one ELBO gradient pass per model.
inline nlohmann::json run_bench(const ExperimentConfig& cfg, const Progress& progress) {
    FeatureLayout layout;
    for (std::size_t c = 0; c < cfg.bench.columns; ++c) layout.cat_columns.push_back("c" + std::to_string(c));
    layout.target = TargetKind::cls;
    Rng rng(cfg.seed);
    std::uniform_int_distribution<std::size_t> item(0, cfg.bench.vocabulary - 1);
    std::vector<Record> recs(cfg.bench.records);
    for (auto& r : recs) {
        for (std::size_t c = 0; c < cfg.bench.columns; ++c) r.cats.push_back("v" + std::to_string(item(rng)));
        r.target = static_cast<double>(rng() % 2);
    }
    nlohmann::json out = nlohmann::json::array();
    for (ModelId id : cfg.models) {
        AnyModel any = build_model(cfg, id, layout, cfg.seed);
        std::visit(
            [&](auto& m) {
                using Tbl = std::decay_t<decltype(m.table_e())>;
                m.prepare(recs);
                std::vector<const Record*> ptrs;
                for (const auto& r : recs) ptrs.push_back(&r);
                ModelGrads<Tbl> grads;
                Rng brng(cfg.seed);
                const auto t0 = std::chrono::steady_clock::now();
                for (std::size_t k = 0; k < cfg.bench.repeats; ++k)
                    m.batch_loss(ptrs, static_cast<double>(recs.size()), brng, &grads);
                const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                const double rate = static_cast<double>(recs.size() * cfg.bench.repeats) / std::max(secs, 1e-12);
                out.push_back({{"model", to_string(id)}, {"records_per_second", rate}});
                if (progress) progress(to_string(id) + ": " + std::to_string(static_cast<long long>(rate)) + " records/s");
            },
            any);
    }
    return out;
}

inline ExperimentOutput run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                       const Progress& progress = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    std::filesystem::create_directories(out_dir);
    ExperimentOutput out;
    nlohmann::json summary{{"kind", to_string(cfg.kind)}, {"seed", cfg.seed}, {"config", cfg.source}};
    auto say = [&](const std::string& s) {
        if (progress) progress(s);
    };

    switch (cfg.kind) {
        case ExperimentKind::online_stream:
        case ExperimentKind::continual_groups: {
            const Dataset ds = load_dataset(cfg);
            summary["records"] = ds.size();
            summary["vocabulary"] = total_vocabulary(ds);
            summary["phe_params_formula"] = phe_param_count(cfg.encoder.spec);
            summary["pee_params_formula"] = pee_param_count(total_vocabulary(ds), cfg.encoder.spec.embed_dim);
            std::optional<StreamData> stream;
            std::vector<Group> groups;
            if (cfg.kind == ExperimentKind::online_stream) {
                stream = prepare_stream(cfg, ds);
                summary["init_records"] = stream->init.size();
                summary["stream_batches"] = stream->batches.size();
            } else {
                groups = prepare_groups(cfg, ds);
                nlohmann::json g = nlohmann::json::array();
                for (const auto& gr : groups)
                    g.push_back({{"items", gr.items}, {"train", gr.train.size()}, {"test", gr.test.size()}});
                summary["groups"] = g;
            }
            nlohmann::json runs = nlohmann::json::array();
            for (std::size_t rep = 0; rep < cfg.repeats; ++rep) {
                const std::uint64_t seed = cfg.seed + rep;
                for (ModelId id : cfg.models) {
                    RunResult r = stream ? run_online_model(cfg, id, *stream, seed)
                                         : run_continual_model(cfg, id, groups, ds.layout, seed);
                    write_run_files(out_dir, r, cfg.stream.smoothing_bandwidth);
                    runs.push_back(run_summary(r));
                    char buf[160];
                    if (r.log.R.empty())
                        std::snprintf(buf, sizeof buf, "%s seed %llu: mean %s %.4f", to_string(id).c_str(),
                                      static_cast<unsigned long long>(seed), r.log.metric.c_str(), r.log.mean());
                    else
                        std::snprintf(buf, sizeof buf, "%s seed %llu: final R_bar %.4f", to_string(id).c_str(),
                                      static_cast<unsigned long long>(seed), r.log.r_bar(r.log.R.size() - 1));
                    say(buf);
                    out.runs.push_back(std::move(r));
                }
            }
            summary["runs"] = runs;
            break;
        }
        case ExperimentKind::demo: {
            const auto res = demo::alternating_demo(cfg.demo, cfg.seed);
            std::ostringstream csv;
            demo::write_trace_csv(csv, res);
            write_text(out_dir / "demo_trace.csv", csv.str());
            summary["demo"] = demo_summary(res, cfg.demo);
            say("demo trace: " + std::to_string(res.trace.size()) + " rows");
            break;
        }
        case ExperimentKind::bench: {
            summary["bench"] = run_bench(cfg, progress);
            break;
        }
    }
    summary["wall_time_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_text(out_dir / "summary.json", summary.dump(2) + "\n");
    out.summary = std::move(summary);
    return out;
}

struct ParamCounts {
    std::size_t phe = 0;
    std::size_t vocabulary = 0;
    std::size_t pee = 0;
    std::size_t ee = 0;
    double ratio = 0;  // phe / pee
};

inline ParamCounts param_counts(const ExperimentConfig& cfg) {
    ParamCounts p;
    p.phe = phe_param_count(cfg.encoder.spec);
    if (cfg.kind == ExperimentKind::demo) {
        p.vocabulary = 2;
    } else if (cfg.synthetic || !cfg.dataset.empty()) {
        p.vocabulary = total_vocabulary(load_dataset(cfg));
    }
    const std::size_t d = cfg.encoder.spec.embed_dim;
    p.pee = pee_param_count(p.vocabulary, d);
    p.ee = ee_param_count(p.vocabulary, d);
    p.ratio = p.pee > 0 ? static_cast<double>(p.phe) / static_cast<double>(p.pee) : 0.0;
    return p;
}

}  // namespace phe
