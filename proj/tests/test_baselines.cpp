#include <catch_amalgamated.hpp>

#include <cstring>

#include "phe/baselines.hpp"
#include "phe/checkpoint.hpp"
#include "phe/exact_demo.hpp"

using namespace phe;

namespace {

FeatureLayout two_columns() {
    FeatureLayout l;
    l.cat_columns = {"a", "b"};
    l.numeric_dim = 1;
    l.target = TargetKind::cls;
    return l;
}

EncoderConfig encoder() {
    EncoderConfig e;
    e.spec = HashSpec::from_seed(7, 3, 11, 5, 7);
    return e;
}

std::vector<Record> data(std::size_t n, std::size_t items) {
    std::vector<Record> out;
    for (std::size_t i = 0; i < n; ++i) {
        Record r;
        r.cats = {"x" + std::to_string(i % items), "y" + std::to_string((i + 1) % items)};
        r.numeric = {0.1 * static_cast<double>(i % 5)};
        r.target = static_cast<double>(i % 2);
        r.line = i + 1;
        out.push_back(r);
    }
    return out;
}

AnyModel model(ModelId id, TrainConfig tc = {}) {
    const auto l = two_columns();
    const auto e = encoder();
    return make_model(id, e, l, CategoricalLinear(l.feature_dim(e.spec.embed_dim), 2), tc, 3);
}

const ModelId kAll[] = {ModelId::phe, ModelId::slow_ada, ModelId::medium_ada, ModelId::fast_ada, ModelId::ee, ModelId::pee};

}  // namespace

TEST_CASE("model names round-trip and unknown names are config errors") {
    for (auto id : kAll) CHECK(parse_model_id(to_string(id)) == id);
    CHECK_THROWS_AS(parse_model_id("sparse"), ConfigError);
}

TEST_CASE("Ada variants differ only in online epochs") {
    CHECK(ada_epochs(ModelId::slow_ada) == 1);
    CHECK(ada_epochs(ModelId::medium_ada) == 5);
    CHECK(ada_epochs(ModelId::fast_ada) == 15);
    for (auto id : {ModelId::slow_ada, ModelId::medium_ada, ModelId::fast_ada}) {
        auto m = model(id);
        CHECK(std::get<AdaModel>(m).train_config().epochs_online == ada_epochs(id));
    }
}

TEST_CASE("zero epochs leave every model unchanged") {
    const auto d = data(40, 6);
    for (auto id : kAll) {
        auto m = model(id);
        std::visit(
            [&](auto& mm) {
                mm.prepare(d);
                // advance_stage replaces the prior by design; everything else must stay put
                auto params = [&] {
                    auto j = save_checkpoint(mm);
                    for (const char* k : {"stage", "prior_e", "prior_w"}) j.erase(k);
                    return j.dump();
                };
                const auto before = params();
                mm.fit(d, 0);
                mm.advance_stage();
                mm.fit_online(d, 0);
                CHECK(params() == before);
            },
            m);
    }
}

TEST_CASE("Ada with plain SGD reproduces the closed-form OGD recursion bit for bit") {
    const double eta = 0.1;
    TrainConfig tc;
    tc.optimizer = OptimizerKind::sgd;
    tc.learning_rate = eta;
    tc.batch_size = 1;
    tc.init_mean_std = 0.0;
    tc.epochs_initial = 1;
    AdaModel m(demo::demo_encoder(), demo::demo_layout(), IdentityGaussian(1.0), tc, 1);
    REQUIRE(m.table_e().rows() == 3);
    REQUIRE(m.table_e().cols() == 1);

    const auto schedule = demo::alternating_schedule(3, 4);
    const auto obs = demo::noiseless(schedule);
    const auto ogd = demo::ogd_run(eta, obs);
    REQUIRE(ogd.trajectory.size() == obs.size() + 1);
    for (std::size_t t = 0; t < obs.size(); ++t) {
        const std::vector<Record> one{demo::demo_record(obs[t].x, obs[t].y)};
        if (t == 0) {
            m.fit_initial(one);
        } else {
            m.advance_stage();
            m.fit_online(one, 1);
        }
        const auto& e = m.table_e().values;
        for (Eigen::Index h = 0; h < 3; ++h) CHECK(e(h, 0) == ogd.trajectory[t + 1][h]);
    }
}

TEST_CASE("expandable tables grow one row per distinct item") {
    VocabMap vocab;
    Rng rng(1);
    DeterministicTable t;
    t.values.resize(0, 4);
    CHECK(ee_lookup_or_grow(vocab, t, "a", rng) == 0);
    CHECK(ee_lookup_or_grow(vocab, t, "b", rng) == 1);
    CHECK(ee_lookup_or_grow(vocab, t, "a", rng) == 0);
    CHECK(t.rows() == 2);
    CHECK(vocab.size() == 2);
}

TEST_CASE("embedding parameter counts follow the table sizes") {
    CHECK(phe_param_count(HashSpec::from_seed(7, 3, 11, 20, 7)) == 346);
    CHECK(phe_param_count(HashSpec::from_seed(1, 1, 1, 1, 7)) == 4);
    CHECK(ee_param_count(98, 20) == 1960);
    CHECK(pee_param_count(98, 20) == 3920);

    auto ee = std::get<EeModel>(model(ModelId::ee));
    auto pee = std::get<PeeModel>(model(ModelId::pee));
    auto phe = std::get<PheModel>(model(ModelId::phe));
    const std::size_t phe_before = phe.embedding_param_count();
    CHECK(phe_before == phe_param_count(encoder().spec));
    CHECK(ee.embedding_param_count() == 0);
    const auto d = data(30, 6);
    ee.prepare(d);
    pee.prepare(d);
    phe.prepare(d);
    const std::size_t v = 12;  // six values in each of two columns
    CHECK(ee.embedding_param_count() == ee_param_count(v, 5));
    CHECK(pee.embedding_param_count() == pee_param_count(v, 5));
    CHECK(phe.embedding_param_count() == phe_before);
    ee.prepare(data(30, 9));
    CHECK(ee.embedding_param_count() == ee_param_count(18, 5));
}

TEST_CASE("all systems share the feature layout and the head") {
    const auto l = two_columns();
    for (auto id : kAll) {
        auto m = model(id);
        std::visit(
            [&](const auto& mm) {
                CHECK(mm.head().kind() == HeadKind::categorical_linear);
                CHECK(mm.head().feature_dim() == l.feature_dim(5));
                CHECK(mm.head().params().size() == static_cast<Eigen::Index>(2 * l.feature_dim(5) + 2));
            },
            m);
    }
}

TEST_CASE("P-EE items never interfere") {
    TrainConfig tc;
    tc.epochs_initial = 5;
    tc.epochs_online = 10;
    auto m = std::get<PeeModel>(model(ModelId::pee, tc));
    const auto d = data(40, 4);
    m.fit_initial(d);
    const Matrix mu = m.table_e().mu, rho = m.table_e().rho;
    std::vector<Record> only_a;
    for (const auto& r : d)
        if (r.cats[0] == "x1") only_a.push_back(r);
    REQUIRE(!only_a.empty());
    pee_fit_online(m, only_a);
    const auto ra = *m.indexer().vocab.find(hash_key(m.encoder(), "a", "x1"));
    const auto rb = *m.indexer().vocab.find(hash_key(m.encoder(), "b", "y2"));
    for (Eigen::Index i = 0; i < mu.rows(); ++i) {
        const bool touched = i == static_cast<Eigen::Index>(ra) || i == static_cast<Eigen::Index>(rb);
        const bool same = std::memcmp(m.table_e().mu.row(i).eval().data(), mu.row(i).eval().data(), sizeof(double) * 5) == 0 &&
                          std::memcmp(m.table_e().rho.row(i).eval().data(), rho.row(i).eval().data(), sizeof(double) * 5) == 0;
        CHECK(same != touched);
    }
}

TEST_CASE("EE rows of items absent from an online batch do not move") {
    TrainConfig tc;
    tc.epochs_initial = 5;
    auto m = std::get<EeModel>(model(ModelId::ee, tc));
    m.fit_initial(data(40, 4));
    const Matrix before = m.table_e().values;
    m.advance_stage();
    m.fit_online(data(8, 2), 3);  // only x0, x1 and y0, y1
    std::size_t moved = 0;
    for (Eigen::Index i = 0; i < before.rows(); ++i)
        if (m.table_e().values.row(i) != before.row(i)) ++moved;
    CHECK(moved == 4);
}
