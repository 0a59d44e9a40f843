#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "supmeter/errors.hpp"
#include "supmeter/gradcheck.hpp"
#include "supmeter/toymodel.hpp"
#include "test_util.hpp"

using namespace supmeter;
using namespace supmeter::toy;

namespace {

ToyConfig small_config(double sparsity) {
    ToyConfig cfg;
    cfg.sparsity = sparsity;
    cfg.seed = 3;
    return cfg;
}

ToyModel random_model(Rng& rng, std::size_t N, std::size_t M) {
    ToyModel m{testing::random_matrix(rng, N, M), std::vector<double>(M)};
    for (double& b : m.b) b = rng.uniform(-0.3, 0.3);
    return m;
}

// Smallest |pre-activation| over the batch, to keep finite differences off ReLU kinks.
double kink_distance(const ToyModel& m, const Matrix& f) {
    Matrix pre = matmul_tn(m.W, matmul(m.W, f));
    add_column_broadcast(pre, m.b);
    return testing::min_abs(pre);
}

double off_diagonal_norm(const Matrix& G) {
    double acc = 0.0;
    for (std::size_t i = 0; i < G.rows(); ++i)
        for (std::size_t j = 0; j < G.cols(); ++j)
            if (i != j) acc += G(i, j) * G(i, j);
    return std::sqrt(acc);
}

}  // namespace

TEST_CASE("importance weights decay geometrically from 1") {
    const auto w = importance_weights(small_config(0.5));
    REQUIRE(w.size() == 20);
    CHECK(w[0] == 1.0);
    CHECK(w[3] == doctest::Approx(0.343));
    for (std::size_t i = 1; i < w.size(); ++i) CHECK(w[i] < w[i - 1]);
}

TEST_CASE("config validation") {
    ToyConfig cfg;
    cfg.sparsity = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = ToyConfig{};
    cfg.N = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = ToyConfig{};
    cfg.importance_decay = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("sample_features: sparsity extremes") {
    Rng rng(11);
    const Matrix dense = sample_features(small_config(0.0), rng, 500);
    CHECK(testing::min_abs(dense) > 0.0);
    for (double v : dense.data()) CHECK(v < 1.0);

    // S = 0.999 over 10 x 20 entries: 0.2 nonzeros expected; 5 would be a 10-sigma event.
    const Matrix sparse = sample_features(small_config(0.999), rng, 10);
    std::size_t nonzero = 0;
    for (double v : sparse.data()) nonzero += v != 0.0 ? 1U : 0U;
    CHECK(nonzero < 5);
}

TEST_CASE("sample_features: nonzero rate within 3 sigma of 1 - S") {
    for (double S : {0.3, 0.9}) {
        Rng rng(derive_seed(5, "rate", static_cast<std::uint64_t>(S * 10)));
        const Matrix f = sample_features(small_config(S), rng, 50000);  // 10^6 entries
        double nonzero = 0.0;
        for (double v : f.data()) nonzero += v != 0.0 ? 1.0 : 0.0;
        const double n = static_cast<double>(f.size());
        const double sigma = std::sqrt(n * S * (1.0 - S));
        CHECK(std::abs(nonzero - n * (1.0 - S)) < 3.0 * sigma);
    }
}

TEST_CASE("forward: identity reconstruction and saturation") {
    Rng rng(12);
    ToyModel id{Matrix::identity(5), std::vector<double>(5, 0.0)};
    const Matrix f = testing::random_matrix(rng, 5, 8, 0.0, 1.0);
    const auto r = forward(id, f);
    CHECK(r.output == f);
    CHECK(r.hidden == f);

    ToyModel neg = random_model(rng, 5, 20);
    for (double& b : neg.b) b = -10.0;
    const auto z = forward(neg, testing::random_matrix(rng, 20, 6, 0.0, 1.0));
    for (double v : z.output.data()) CHECK(v == 0.0);

    CHECK_THROWS_AS(forward(neg, Matrix(5, 2)), ShapeError);
}

TEST_CASE("forward: matches per-element oracle") {
    Rng rng(13);
    const ToyModel m = random_model(rng, 5, 20);
    const Matrix f = testing::random_matrix(rng, 20, 7, 0.0, 1.0);
    const auto r = forward(m, f);
    for (std::size_t s = 0; s < 7; ++s) {
        std::vector<double> x(5, 0.0);
        for (std::size_t n = 0; n < 5; ++n)
            for (std::size_t i = 0; i < 20; ++i) x[n] += m.W(n, i) * f(i, s);
        for (std::size_t i = 0; i < 20; ++i) {
            double pre = m.b[i];
            for (std::size_t n = 0; n < 5; ++n) pre += m.W(n, i) * x[n];
            CHECK(r.output(i, s) == doctest::Approx(std::max(pre, 0.0)).epsilon(1e-12));
        }
        for (std::size_t n = 0; n < 5; ++n) CHECK(r.hidden(n, s) == doctest::Approx(x[n]).epsilon(1e-12));
    }
}

TEST_CASE("loss_and_grad: perfect reconstruction has zero loss and gradient") {
    Rng rng(14);
    ToyModel id{Matrix::identity(4), std::vector<double>(4, 0.0)};
    const Matrix f = testing::random_matrix(rng, 4, 9, 0.1, 1.0);
    const auto g = loss_and_grad(id, f, std::vector<double>(4, 1.0));
    CHECK(g.loss == 0.0);
    CHECK(frobenius_sq(g.grad_W) == 0.0);
    for (double v : g.grad_b) CHECK(v == 0.0);
}

TEST_CASE("loss_and_grad: scalar case matches hand derivative") {
    // M = N = 1, ω = 1: f' = relu(w^2 f + b), L = (f - f')^2.
    const double w = 0.8, b = 0.1, f = 0.6;
    ToyModel m{Matrix::from_rows({{w}}), {b}};
    const auto g = loss_and_grad(m, Matrix::from_rows({{f}}), {1.0});
    const double out = w * w * f + b;
    CHECK(g.loss == doctest::Approx((f - out) * (f - out)).epsilon(1e-14));
    CHECK(g.grad_W(0, 0) == doctest::Approx(2.0 * (out - f) * 2.0 * w * f).epsilon(1e-14));
    CHECK(g.grad_b[0] == doctest::Approx(2.0 * (out - f)).epsilon(1e-14));
}

TEST_CASE("loss_and_grad: gradients pass finite differences at 20 points") {
    Rng rng(15);
    ToyConfig cfg = small_config(0.5);
    const auto omega = importance_weights(cfg);
    int points = 0;
    while (points < 20) {
        const ToyModel m = random_model(rng, 5, 20);
        const Matrix f = sample_features(cfg, rng, 6);
        if (kink_distance(m, f) < 1e-6) continue;
        const auto g = loss_and_grad(m, f, omega);
        CHECK(grad_check([&](const Matrix& W) { return loss(ToyModel{W, m.b}, f, omega); }, g.grad_W, m.W) <
              1e-4);
        Matrix b_row(1, 20);
        for (std::size_t i = 0; i < 20; ++i) b_row(0, i) = m.b[i];
        Matrix gb(1, 20);
        for (std::size_t i = 0; i < 20; ++i) gb(0, i) = g.grad_b[i];
        CHECK(grad_check(
                  [&](const Matrix& bm) {
                      return loss(ToyModel{m.W, std::vector<double>(bm.data().begin(), bm.data().end())}, f,
                                  omega);
                  },
                  gb, b_row) < 1e-4);
        ++points;
    }
}

TEST_CASE("interference matrix: oracle, identity, symmetric PSD") {
    Rng rng(16);
    ToyModel id{Matrix::identity(5), std::vector<double>(5)};
    CHECK(interference_matrix(id) == Matrix::identity(5));

    const ToyModel m = random_model(rng, 5, 20);
    const Matrix G = interference_matrix(m);
    CHECK(max_abs_diff(G, testing::naive_matmul(transpose(m.W), m.W)) < 1e-12);
    Eigen::MatrixXd E(20, 20);
    for (std::size_t i = 0; i < 20; ++i)
        for (std::size_t j = 0; j < 20; ++j) {
            CHECK(G(i, j) == G(j, i));
            E(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = G(i, j);
        }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(E);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);
}

TEST_CASE("psi_frobenius: identity, pentagon, homogeneity") {
    CHECK(psi_frobenius(ToyModel{Matrix::identity(5), std::vector<double>(5)}) == 1.0);

    // Five unit-norm directions packed into two neurons.
    Matrix W(2, 5);
    for (std::size_t i = 0; i < 5; ++i) {
        const double a = 2.0 * M_PI * static_cast<double>(i) / 5.0;
        W(0, i) = std::cos(a);
        W(1, i) = std::sin(a);
    }
    CHECK(psi_frobenius(ToyModel{W, std::vector<double>(5)}) == doctest::Approx(2.5).epsilon(1e-14));

    Rng rng(17);
    const ToyModel m = random_model(rng, 5, 20);
    ToyModel scaled{3.0 * m.W, m.b};
    CHECK(psi_frobenius(scaled) == doctest::Approx(9.0 * psi_frobenius(m)).epsilon(1e-13));
}

TEST_CASE("train: loss falls, deterministic, and sparsity grows interference") {
    ToyConfig cfg = small_config(0.0);
    cfg.steps = 3000;
    double prev_offdiag = -1.0;
    for (double S : {0.0, 0.9, 0.99}) {
        cfg.sparsity = S;
        const auto r = train(cfg);
        CHECK(r.final_loss < r.initial_loss);
        const double off = off_diagonal_norm(interference_matrix(r.model));
        CHECK(off > prev_offdiag);
        prev_offdiag = off;
    }
    cfg.sparsity = 0.7;
    cfg.steps = 400;
    const auto a = train(cfg);
    const auto b = train(cfg);
    CHECK(a.model.W == b.model.W);
    CHECK(a.model.b == b.model.b);
    CHECK(a.final_loss == b.final_loss);
}

TEST_CASE("train: runaway learning rate raises a divergence error") {
    ToyConfig cfg = small_config(0.2);
    cfg.lr = 1e200;
    cfg.steps = 50;
    CHECK_THROWS_AS(train(cfg), DivergenceError);
}

TEST_CASE("checkpoint JSON round-trips") {
    ToyConfig cfg = small_config(0.8);
    Rng rng(18);
    const ToyModel m = random_model(rng, 5, 20);
    const auto j = checkpoint_json(cfg, m, 0.25);
    CHECK(j.at("final_loss").get<double>() == 0.25);
    const ToyModel back = model_from_checkpoint(nlohmann::json::parse(j.dump()));
    CHECK(back.W == m.W);
    CHECK(back.b == m.b);
    const ToyConfig c2 = config_from_json(j.at("config"));
    CHECK(c2.sparsity == 0.8);
    CHECK(c2.seed == cfg.seed);
}
