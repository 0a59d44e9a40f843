#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "supmeter/errors.hpp"
#include "supmeter/gradcheck.hpp"
#include "supmeter/grokking.hpp"
#include "supmeter/parity.hpp"
#include "test_util.hpp"

using namespace supmeter;
using namespace supmeter::tasks;

namespace {

// Label oracle written from the task definition, not from gen_parity.
double parity_oracle(const Matrix& X, std::size_t s, std::size_t n_tasks, std::size_t bits) {
    std::size_t task = n_tasks;
    for (std::size_t t = 0; t < n_tasks; ++t)
        if (X(t, s) == 1.0) task = t;
    REQUIRE(task < n_tasks);
    int sum = 0;
    for (std::size_t k = 0; k < bits; ++k) sum += static_cast<int>(X(n_tasks + task * bits + k, s));
    return static_cast<double>(sum % 2);
}

ParityData small_parity(std::size_t n, std::uint64_t seed) {
    ParityConfig cfg;
    cfg.n_samples = n;
    Rng rng(seed);
    return gen_parity(cfg, rng);
}

Matrix as_row(const std::vector<double>& v) {
    Matrix m(1, v.size());
    std::copy(v.begin(), v.end(), m.data().begin());
    return m;
}

}  // namespace

TEST_CASE("parity: label examples") {
    // Hand-built inputs scored with the oracle used throughout this file.
    Matrix X(15, 2);
    X(0, 0) = 1.0;
    X(3, 0) = 1.0, X(4, 0) = 0.0, X(5, 0) = 1.0, X(6, 0) = 1.0;
    X(2, 1) = 1.0;
    CHECK(parity_oracle(X, 0, 3, 4) == 1.0);
    CHECK(parity_oracle(X, 1, 3, 4) == 0.0);
}

TEST_CASE("parity: generated labels match the oracle; flips behave") {
    const ParityData d = small_parity(1000, 31);
    REQUIRE(d.X.rows() == 15);
    REQUIRE(d.X.cols() == 1000);
    for (std::size_t s = 0; s < 1000; ++s) {
        CHECK(d.y[s] == parity_oracle(d.X, s, 3, 4));
        double control = 0.0;
        for (std::size_t t = 0; t < 3; ++t) control += d.X(t, s);
        CHECK(control == 1.0);
        Matrix col = gather_columns(d.X, std::vector<std::size_t>{s});
        for (std::size_t k = 3; k < 15; ++k) {
            Matrix flipped = col;
            flipped(k, 0) = 1.0 - flipped(k, 0);
            const bool in_active = (k - 3) / 4 == d.task[s];
            CHECK((parity_oracle(flipped, 0, 3, 4) != d.y[s]) == in_active);
        }
    }
}

TEST_CASE("parity: stratified 80/20 split") {
    const ParityData d = small_parity(2000, 32);
    CHECK(d.train.size() + d.test.size() == 2000);
    std::set<std::size_t> all(d.train.begin(), d.train.end());
    for (std::size_t s : d.test) CHECK(all.insert(s).second);
    CHECK(all.size() == 2000);
    CHECK(std::is_sorted(d.train.begin(), d.train.end()));
    for (std::size_t t = 0; t < 3; ++t)
        for (double label : {0.0, 1.0}) {
            double tr = 0, te = 0;
            for (std::size_t s : d.train) tr += d.task[s] == t && d.y[s] == label ? 1 : 0;
            for (std::size_t s : d.test) te += d.task[s] == t && d.y[s] == label ? 1 : 0;
            CHECK(std::abs(tr / (tr + te) - 0.8) < 0.01);
        }
    const ParityData again = small_parity(2000, 32);
    CHECK(again.X == d.X);
    CHECK(again.train == d.train);
}

TEST_CASE("mlp: gradients pass finite differences at 20 points, with and without dropout") {
    Rng rng(33);
    const ParityData d = small_parity(64, 34);
    MlpConfig cfg;
    cfg.hidden = 10;
    int points = 0;
    while (points < 20) {
        const ParityMlp m = init_mlp(cfg, rng);
        std::vector<std::size_t> idx(8);
        for (auto& i : idx) i = rng.below(64);
        const Matrix X = gather_columns(d.X, idx);
        std::vector<double> y;
        for (auto i : idx) y.push_back(d.y[i]);
        Matrix pre = matmul(m.W1, X);
        add_column_broadcast(pre, m.b1);
        if (testing::min_abs(pre) < 1e-6) continue;
        const Matrix mask = dropout_mask(rng, 10, 8, 0.3);
        const Matrix* maskp = points % 2 == 0 ? nullptr : &mask;

        const auto g = loss_and_grad(m, X, y, maskp);
        auto with = [&](auto edit) {
            ParityMlp c = m;
            edit(c);
            return loss_and_grad(c, X, y, maskp).loss;
        };
        CHECK(grad_check([&](const Matrix& W) { return with([&](ParityMlp& c) { c.W1 = W; }); }, g.grad_W1,
                         m.W1) < 1e-4);
        CHECK(grad_check([&](const Matrix& W) { return with([&](ParityMlp& c) { c.W2 = W; }); }, g.grad_W2,
                         m.W2) < 1e-4);
        CHECK(grad_check(
                  [&](const Matrix& b) {
                      return with([&](ParityMlp& c) { c.b1.assign(b.data().begin(), b.data().end()); });
                  },
                  as_row(g.grad_b1), as_row(m.b1)) < 1e-4);
        CHECK(grad_check([&](const Matrix& b) { return with([&](ParityMlp& c) { c.b2[0] = b(0, 0); }); },
                         as_row(g.grad_b2), as_row(m.b2)) < 1e-4);
        ++points;
    }
}

TEST_CASE("mlp: dropout mask statistics within 3 sigma") {
    Rng rng(35);
    for (double rate : {0.1, 0.5, 0.9}) {
        const Matrix mask = dropout_mask(rng, 64, 2000, rate);
        double zeros = 0.0;
        for (double v : mask.data()) {
            zeros += v == 0.0 ? 1.0 : 0.0;
            CHECK((v == 0.0 || v == doctest::Approx(1.0 / (1.0 - rate))));
        }
        const double n = static_cast<double>(mask.size());
        CHECK(std::abs(zeros - n * rate) < 3.0 * std::sqrt(n * rate * (1.0 - rate)));
    }
}

TEST_CASE("mlp: training solves parity; dropout 0 is the plain network") {
    const ParityData d = small_parity(4096, 36);
    MlpConfig cfg;
    cfg.hidden = 64;
    cfg.epochs = 300;
    cfg.seed = 2;
    const auto plain = train_parity_mlp(cfg, d);
    CHECK(plain.test_accuracy > 0.95);
    CHECK(plain.last_epoch_units == 0);

    cfg.epochs = 20;
    const auto a = train_parity_mlp(cfg, d);
    const auto b = train_parity_mlp(cfg, d);
    CHECK(a.model.W1 == b.model.W1);

    cfg.dropout = 0.4;
    const auto dropped = train_parity_mlp(cfg, d);
    const double n = static_cast<double>(dropped.last_epoch_units);
    REQUIRE(n > 0.0);
    CHECK(std::abs(static_cast<double>(dropped.last_epoch_dropped) - 0.4 * n) < 3.0 * std::sqrt(n * 0.4 * 0.6));

    // The training split holds every ordered (task, bits) pattern often enough
    // that heavy dropout must cost accuracy relative to the clean network.
    cfg.epochs = 300;
    cfg.dropout = 0.9;
    CHECK(train_parity_mlp(cfg, d).test_accuracy <= plain.test_accuracy);
}

TEST_CASE("mlp: hidden extraction stages") {
    Rng rng(37);
    MlpConfig cfg;
    cfg.hidden = 8;
    const ParityMlp m = init_mlp(cfg, rng);
    const ParityData d = small_parity(50, 38);
    const Matrix pre = extract_hidden(m, d.X, HiddenStage::pre_relu);
    const Matrix post = extract_hidden(m, d.X);
    REQUIRE(pre.rows() == 8);
    for (std::size_t i = 0; i < pre.size(); ++i) CHECK(post.data()[i] == std::max(pre.data()[i], 0.0));
    CHECK_THROWS_AS(extract_hidden(m, Matrix(14, 2)), ShapeError);
}

TEST_CASE("grok: split is a disjoint exhaustive partition") {
    GrokConfig cfg;
    const GrokSplit s = make_split(cfg);
    const std::size_t total = 53 * 53;
    CHECK(s.train.size() == static_cast<std::size_t>(std::llround(0.4 * total)));
    CHECK(s.train.size() + s.test.size() == total);
    std::vector<std::size_t> all = s.train;
    all.insert(all.end(), s.test.begin(), s.test.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < total; ++i) CHECK(all[i] == i);
}

TEST_CASE("grok: logits shape and gradients at 20 random inits") {
    GrokConfig cfg;
    cfg.modulus = 11;
    cfg.embed_dim = 4;
    cfg.hidden = 6;
    Rng rng(39);
    for (int point = 0; point < 20; ++point) {
        cfg.shared_embedding = point % 4 == 3;
        const GrokModel m = init_grok(cfg, rng);
        std::vector<std::size_t> pairs(7);
        for (auto& p : pairs) p = rng.below(121);
        const auto f = forward(m, pairs);
        CHECK(f.logits.rows() == 11);
        CHECK(f.logits.cols() == 7);

        const auto g = loss_and_grad(m, pairs);
        auto with = [&](auto edit) {
            GrokModel c = m;
            edit(c);
            return loss_and_grad(c, pairs).loss;
        };
        CHECK(grad_check([&](const Matrix& W) { return with([&](GrokModel& c) { c.W1 = W; }); }, g.W1, m.W1) <
              1e-4);
        CHECK(grad_check([&](const Matrix& W) { return with([&](GrokModel& c) { c.W2 = W; }); }, g.W2, m.W2) <
              1e-4);
        CHECK(grad_check([&](const Matrix& W) { return with([&](GrokModel& c) { c.W3 = W; }); }, g.W3, m.W3) <
              1e-4);
        CHECK(grad_check([&](const Matrix& E) { return with([&](GrokModel& c) { c.embed_a = E; }); }, g.embed_a,
                         m.embed_a) < 1e-4);
        if (!cfg.shared_embedding) {
            CHECK(grad_check([&](const Matrix& E) { return with([&](GrokModel& c) { c.embed_b = E; }); },
                             g.embed_b, m.embed_b) < 1e-4);
        }
    }
}

TEST_CASE("grok: small run checkpoints and is deterministic") {
    GrokConfig cfg;
    cfg.modulus = 7;
    cfg.steps = 300;
    cfg.checkpoint_every = 100;
    cfg.hidden = 16;
    cfg.embed_dim = 4;
    const auto a = train_grok(cfg);
    REQUIRE(a.checkpoints.size() == 3);
    CHECK(a.checkpoints[2].step == 300);
    CHECK(a.checkpoints[2].train_acc > 0.9);
    const auto b = train_grok(cfg);
    CHECK(a.checkpoints[2].model.W3 == b.checkpoints[2].model.W3);
    const auto j = checkpoint_json(a.checkpoints[0]);
    CHECK(j.at("params").contains("embed_b"));
    CHECK(grok_config_from_json(to_json(cfg)).modulus == 7);

    cfg.train_fraction = 1.0;
    CHECK_THROWS_AS(train_grok(cfg), ConfigError);
}
