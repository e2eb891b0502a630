#include <catch_amalgamated.hpp>

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "phe/baselines.hpp"
#include "phe/harness.hpp"

using namespace phe;
using Catch::Approx;

namespace {

Schema toy_schema() {
    Schema s;
    s.columns = {{"color", ColumnKind::categorical}, {"size", ColumnKind::numeric}, {"label", ColumnKind::target_class}};
    return s;
}

Dataset toy_csv(const std::string& body, const Schema& s = toy_schema()) {
    std::istringstream in("color,size,label\n" + body);
    return ingest_csv(in, s);
}

std::string expect_data_error(const std::string& body, const Schema& s = toy_schema()) {
    try {
        toy_csv(body, s);
    } catch (const DataError& e) {
        return e.what();
    }
    return "";
}

// Learns labels by record line and answers class 0 for anything it has not
// been trained on: any leak of a batch's targets before scoring would show.
struct Canary {
    FeatureLayout layout_;
    std::size_t stage_ = 0;
    std::map<std::size_t, double> seen;
    const FeatureLayout& layout() const { return layout_; }
    std::size_t stage() const { return stage_; }
    void advance_stage() { ++stage_; }
    void fit_initial(std::span<const Record> d) { fit_online(d); }
    void fit_online(std::span<const Record> d) {
        for (const auto& r : d) seen[r.line] = r.target;
    }
    std::vector<Vector> predict(std::span<const Record> d) const {
        std::vector<Vector> out;
        for (const auto& r : d) {
            Vector p = Vector::Zero(2);
            auto it = seen.find(r.line);
            p[it == seen.end() ? 0 : static_cast<Eigen::Index>(it->second)] = 1.0;
            out.push_back(p);
        }
        return out;
    }
};

std::vector<Record> labelled(std::size_t n, std::size_t first_line, double label = 1.0) {
    std::vector<Record> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i].cats = {"v" + std::to_string(i % 3)};
        out[i].target = label;
        out[i].line = first_line + i;
    }
    return out;
}

Dataset letters(std::size_t per_item) {
    Dataset ds;
    ds.layout.cat_columns = {"c"};
    for (char ch = 'a'; ch <= 'h'; ++ch)
        for (std::size_t i = 0; i < per_item; ++i) {
            Record r;
            r.cats = {std::string(1, ch)};
            r.target = static_cast<double>((ch - 'a') % 2);
            r.line = ds.records.size() + 2;
            ds.records.push_back(r);
        }
    return ds;
}

}  // namespace

TEST_CASE("a three-line CSV ingests into records") {
    const auto ds = toy_csv("red,1.5,yes\nblue,2,no\n\"dark, green\", 3 ,yes\n");
    REQUIRE(ds.records.size() == 3);
    CHECK(ds.layout.cat_columns == std::vector<std::string>{"color"});
    CHECK(ds.layout.numeric_dim == 1);
    CHECK(ds.class_labels == std::vector<std::string>{"no", "yes"});
    CHECK(ds.records[0].target == 1.0);
    CHECK(ds.records[1].target == 0.0);
    CHECK(ds.records[2].cats[0] == "dark, green");
    CHECK(ds.records[2].numeric[0] == 3.0);
    CHECK(ds.records[2].line == 4);
}

TEST_CASE("missing values follow the schema policy") {
    auto s = toy_schema();
    const auto ds = toy_csv("?,?,yes\nred,1,no\n", s);
    CHECK(ds.records[0].cats[0] == "<missing>");
    CHECK(std::isnan(ds.records[0].numeric[0]));
    s.missing = MissingPolicy::drop_row;
    std::istringstream in("color,size,label\n?,1,yes\nred,1,no\n");
    IngestReport rep;
    const auto dropped = ingest_csv(in, s, &rep);
    CHECK(dropped.records.size() == 1);
    CHECK(rep.rows_read == 2);
    CHECK(rep.rows_dropped == 1);
}

TEST_CASE("malformed rows are data errors naming the line") {
    CHECK_THAT(expect_data_error("red,1,yes\nblue,2\n"), Catch::Matchers::ContainsSubstring("line 3"));
    CHECK_THAT(expect_data_error("red,abc,yes\n"), Catch::Matchers::ContainsSubstring("line 2"));
    CHECK_THAT(expect_data_error("red,1,?\n"), Catch::Matchers::ContainsSubstring("missing target"));
    auto s = toy_schema();
    s.classes = {"no", "yes"};
    CHECK_THAT(expect_data_error("red,1,maybe\n", s), Catch::Matchers::ContainsSubstring("unknown class"));
    std::istringstream empty("");
    CHECK_THROWS_AS(ingest_csv(empty, toy_schema()), DataError);
    CHECK_THROWS_AS(ingest_csv(std::string("/nonexistent/file.csv"), toy_schema()), DataError);
}

TEST_CASE("schemas need exactly one target") {
    Schema s;
    s.columns = {{"a", ColumnKind::categorical}};
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.columns.push_back({"y", ColumnKind::target_real});
    s.columns.push_back({"z", ColumnKind::target_class});
    CHECK_THROWS_AS(s.validate(), ConfigError);
    CHECK_THROWS_AS(parse_column_kind("text"), ConfigError);
}

TEST_CASE("z-scoring fitted on the init split centres and scales it") {
    std::vector<Record> init(200), rest(50);
    Rng rng(1);
    std::normal_distribution<double> g(5.0, 3.0);
    for (auto& r : init) r.numeric = {g(rng), 7.0};
    for (auto& r : rest) r.numeric = {g(rng) + 100.0, std::nan("")};
    const auto n = Normalizer::fit(init, 2);
    n.apply(init);
    n.apply(rest);
    double m = 0, v = 0;
    for (const auto& r : init) m += r.numeric[0];
    m /= 200;
    for (const auto& r : init) v += (r.numeric[0] - m) * (r.numeric[0] - m);
    CHECK(m == Approx(0.0).margin(1e-12));
    CHECK(std::sqrt(v / 200) == Approx(1.0).epsilon(1e-12));
    CHECK(init[0].numeric[1] == 0.0);  // constant column
    CHECK(rest[0].numeric[1] == 0.0);  // missing -> init mean
    CHECK(rest[0].numeric[0] > 20.0);  // later data is not refitted
}

TEST_CASE("items never seen in training are predicted without error") {
    Schema s;
    s.columns = {{"c", ColumnKind::categorical}, {"y", ColumnKind::target_class}};
    std::istringstream train_csv("c,y\na,0\nb,1\na,0\n"), test_csv("c,y\nzzz,1\n");
    const auto train = ingest_csv(train_csv, s);
    auto test = ingest_csv(test_csv, s);
    test.layout.num_classes = 2;
    EncoderConfig e;
    e.spec = HashSpec::from_seed(5, 2, 3, 2, 1);
    TrainConfig tc;
    tc.epochs_initial = 3;
    auto m = PheModel(e, train.layout, CategoricalLinear(2, 2), tc, 1);
    m.fit_initial(train.records);
    const auto p = m.predict(test.records);
    CHECK(p[0].sum() == Approx(1.0));
}

TEST_CASE("vocabulary partitions cover every item exactly once") {
    const std::vector<std::string> vocab{"a", "b", "c", "d", "e", "f", "g", "h"};
    const auto groups = split_vocabulary(vocab, 4, 3);
    REQUIRE(groups.size() == 4);
    std::multiset<std::string> all;
    for (const auto& g : groups) {
        CHECK(g.size() == 2);
        all.insert(g.begin(), g.end());
    }
    CHECK(all == std::multiset<std::string>(vocab.begin(), vocab.end()));
    CHECK(split_vocabulary(vocab, 4, 3) == groups);
    CHECK(split_vocabulary({"b", "a", "c", "d", "e", "f", "g", "h"}, 4, 3) == groups);

    const auto nine = split_vocabulary({"1", "2", "3", "4", "5", "6", "7", "8", "9"}, 4, 11);
    CHECK(nine[0].size() == 2);
    CHECK(nine[1].size() == 2);
    CHECK(nine[2].size() == 2);
    CHECK(nine[3].size() == 3);
    CHECK_THROWS_AS(split_vocabulary(vocab, 9, 1), ConfigError);
    CHECK_THROWS_AS(split_vocabulary(vocab, 0, 1), ConfigError);
}

TEST_CASE("record partitions follow the item groups with a 2:1 split") {
    const auto ds = letters(30);
    const auto groups = partition_by_vocab(ds, "c", 4, 5);
    std::size_t total = 0;
    for (const auto& g : groups) {
        const std::set<std::string> items(g.items.begin(), g.items.end());
        CHECK(g.train.records.size() == 40);
        CHECK(g.test.records.size() == 20);
        std::set<std::size_t> lines;
        for (const auto* part : {&g.train, &g.test})
            for (const auto& r : part->records) {
                CHECK(items.count(r.cats[0]) == 1);
                CHECK(lines.insert(r.line).second);
            }
        total += lines.size();
    }
    CHECK(total == ds.records.size());
    CHECK_THROWS_AS(partition_by_items(ds, "c", {{"a", "b"}, {"b"}}, 1), ConfigError);
    CHECK_THROWS_AS(partition_by_items(ds, "c", {{"a", "b"}}, 1), DataError);
}

TEST_CASE("the mushroom odor vocabulary splits 2,2,2,3") {
    Schema s;
    s.columns = {{"class", ColumnKind::target_class}, {"odor", ColumnKind::categorical}};
    s.ignore_other_columns = true;
    const auto ds = ingest_csv(std::string(PHE_SOURCE_DIR) + "/data/mushroom.csv", s);
    const auto vocab = vocabulary(ds, "odor");
    REQUIRE(vocab.size() == 9);
    const auto groups = partition_by_vocab(ds, "odor", 4, 7);
    std::vector<std::size_t> sizes;
    for (const auto& g : groups) sizes.push_back(g.items.size());
    CHECK(sizes == std::vector<std::size_t>{2, 2, 2, 3});
}

TEST_CASE("the stream protocol scores every batch before training on it") {
    Canary c;
    std::vector<std::vector<Record>> batches;
    for (std::size_t b = 0; b < 5; ++b) batches.push_back(labelled(10, 100 * b));
    const auto log = run_stream(c, batches, {10, true}, "canary");
    REQUIRE(log.steps.size() == 5);
    for (const auto& m : log.steps) CHECK(m.value == 0.0);
    CHECK(c.seen.size() == 50);
    CHECK(c.stage() == 5);
    // seen data is recalled, so the canary would have reported any leak
    CHECK(score_batch(c, std::span<const Record>(batches[2])).value == 100.0);
}

TEST_CASE("zero online epochs equal pure evaluation") {
    Dataset ds = letters(20);
    ds.layout.num_classes = 2;
    EncoderConfig e;
    e.spec = HashSpec::from_seed(5, 2, 3, 3, 1);
    TrainConfig tc;
    tc.epochs_initial = 20;
    tc.epochs_online = 0;
    auto make = [&] {
        auto m = PheModel(e, ds.layout, CategoricalLinear(3, 2), tc, 4);
        m.fit_initial(std::span<const Record>(ds.records).first(40));
        return m;
    };
    auto batches = make_batches(std::vector<Record>(ds.records.begin() + 40, ds.records.end()), 16);
    auto a = make(), b = make();
    const auto la = run_stream(a, batches, {16, true}, "phe");
    const auto lb = run_stream(b, batches, {16, false}, "phe");
    REQUIRE(la.steps.size() == lb.steps.size());
    for (std::size_t i = 0; i < la.steps.size(); ++i) CHECK(la.steps[i].value == lb.steps[i].value);
    CHECK(a.table_e().mu == b.table_e().mu);
}

TEST_CASE("batches keep order and time windows group by timestamp") {
    auto recs = labelled(10, 1);
    const auto b = make_batches(recs, 4);
    REQUIRE(b.size() == 3);
    CHECK(b[2].size() == 2);
    CHECK(b[1][0].line == 5);
    for (std::size_t i = 0; i < recs.size(); ++i) recs[i].timestamp = static_cast<double>((9 - i) / 3);
    const auto tb = make_time_batches(recs, 1.0);
    REQUIRE(tb.size() == 4);
    CHECK(tb[0].size() == 3);
    CHECK(tb[0][0].line == 8);  // stable within a window
    CHECK(tb[3].size() == 1);
    CHECK(tb[3][0].line == 1);
    CHECK(make_time_batches(recs, 2.0).size() == 2);
}

TEST_CASE("continual runs fill a lower-triangular R matrix") {
    Dataset ds = letters(30);
    ds.layout.num_classes = 2;
    const auto groups = partition_by_vocab(ds, "c", 4, 2);
    EncoderConfig e;
    e.spec = HashSpec::from_seed(9, 2, 3, 3, 1);
    TrainConfig tc;
    tc.epochs_initial = 30;
    tc.epochs_online = 5;

    SECTION("one group: R_bar is the test accuracy") {
        auto m = PheModel(e, ds.layout, CategoricalLinear(3, 2), tc, 4);
        auto m2 = m;
        const auto log = run_continual(m, {groups[0]}, "phe");
        REQUIRE(log.R.size() == 1);
        m2.fit_initial(groups[0].train.records);
        CHECK(log.r_bar(0) == score_batch(m2, std::span<const Record>(groups[0].test.records)).value);
    }
    SECTION("P-EE keeps earlier groups' scores on disjoint vocabularies") {
        auto m = PeeModel(e, ds.layout, CategoricalLinear(3, 2), tc, 4);
        const auto log = run_continual(m, groups, "pee");
        REQUIRE(log.R.size() == 4);
        for (std::size_t t = 0; t < 4; ++t) {
            REQUIRE(log.R[t].size() == t + 1);
            for (std::size_t a = 0; a < t; ++a) CHECK(log.R[t][a] == Approx(log.R[a][a]).margin(1e-9));
            CHECK(log.steps[t].value == log.r_bar(t));
        }
    }
}

TEST_CASE("metric summaries") {
    MetricsLog log;
    for (std::size_t i = 0; i < 8; ++i) log.append({i, i, static_cast<double>(i), i + 1});
    CHECK(log.mean() == 3.5);
    CHECK(log.mean_between(0.0, 0.25) == 0.5);
    CHECK(log.mean_between(0.75, 1.0) == 6.5);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < 8; ++i) num += static_cast<double>(i * (i + 1)), den += static_cast<double>(i + 1);
    CHECK(log.cumulative() == Approx(num / den));
    log.R = {{90}, {80, 70}};
    CHECK(log.r_bar(1) == 75.0);
    std::ostringstream a, b;
    log.write_jsonl(a);
    log.write_jsonl(b);
    CHECK(a.str() == b.str());
    CHECK(a.str().find("\"R_bar\":75.0") != std::string::npos);
}

TEST_CASE("Gaussian smoothing") {
    const std::vector<double> flat(20, 3.0);
    for (double v : smooth_gaussian(flat, 2.5)) CHECK(v == Approx(3.0).epsilon(1e-12));
    std::vector<double> x(41, 0.0);
    x[20] = 1.0;
    const auto s = smooth_gaussian(x, 2.0);
    double total = 0;
    for (double v : s) total += v;
    CHECK(total == Approx(1.0).epsilon(1e-12));
    CHECK(s[19] == Approx(s[21]).epsilon(1e-15));
    CHECK(s[20] > s[19]);
    CHECK(smooth_gaussian(x, 0.0) == x);
    const std::vector<double> ramp{1, 2, 3, 4, 5};
    CHECK(smooth_gaussian(ramp, 0.0) == ramp);
}
