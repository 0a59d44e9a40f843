#include "supmeter/sae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Dense>

#include "supmeter/adam.hpp"
#include "supmeter/errors.hpp"
#include "supmeter/json_io.hpp"

namespace supmeter::sae {

namespace {

struct Accumulator {
    double recon = 0.0;
    double l1 = 0.0;
    Matrix grad_W;
    std::vector<double> grad_b;
};

// Forward + backward for `count` samples stored sample-major (count x N).
// Only active dictionary rows touch the decoder and the weight gradient, so
// the cost is D*N for encoding plus O(active * N) for the rest.
void accumulate_batch(const SparseAutoencoder& sae, std::span<const double> xs, std::size_t count,
                      double l1, Accumulator& acc, bool want_grad) {
    const std::size_t N = sae.input_dim();
    const std::size_t D = sae.dict_size();
    const double scale = 2.0 / static_cast<double>(count);
    const double l1_scaled = l1 / static_cast<double>(count);
    std::vector<double> z(D);
    std::vector<std::size_t> active;
    active.reserve(D);
    std::vector<double> xr(N);
    std::vector<double> g(N);
    const double* W = sae.W_enc.data().data();

    for (std::size_t s = 0; s < count; ++s) {
        const double* x = xs.data() + s * N;
        active.clear();
        for (std::size_t d = 0; d < D; ++d) {
            const double* w = W + d * N;
            double pre = sae.b[d];
            for (std::size_t n = 0; n < N; ++n) pre += w[n] * x[n];
            if (pre > 0.0) {
                z[d] = pre;
                active.push_back(d);
            }
        }
        std::fill(xr.begin(), xr.end(), 0.0);
        double zsum = 0.0;
        for (std::size_t d : active) {
            const double* w = W + d * N;
            const double zd = z[d];
            zsum += zd;
            for (std::size_t n = 0; n < N; ++n) xr[n] += zd * w[n];
        }
        double rsq = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            const double r = xr[n] - x[n];
            rsq += r * r;
            g[n] = scale * r;
        }
        acc.recon += rsq;
        acc.l1 += zsum;
        if (!want_grad) continue;
        double* GW = acc.grad_W.data().data();
        for (std::size_t d : active) {
            const double* w = W + d * N;
            double delta = l1_scaled;
            for (std::size_t n = 0; n < N; ++n) delta += w[n] * g[n];
            acc.grad_b[d] += delta;
            double* gw = GW + d * N;
            const double zd = z[d];
            for (std::size_t n = 0; n < N; ++n) gw[n] += delta * x[n] + zd * g[n];
        }
    }
}

Matrix sample_major(const Matrix& X) { return transpose(X); }

void check_input(const SparseAutoencoder& sae, const Matrix& X, const char* op) {
    if (X.rows() != sae.input_dim()) {
        throw ShapeError(std::string(op) + ": input has " + std::to_string(X.rows()) +
                         " rows, SAE expects " + std::to_string(sae.input_dim()));
    }
}

}  // namespace

void SaeConfig::validate() const {
    if (N == 0) throw ConfigError("sae: N must be positive");
    if (D < 1) throw ConfigError("sae: D must be at least 1");
    if (!(l1 >= 0.0)) throw ConfigError("sae: l1 must be non-negative");
    if (!(lr > 0.0)) throw ConfigError("sae: lr must be positive");
    if (batch == 0) throw ConfigError("sae: batch must be positive");
}

SparseAutoencoder init_sae(const SaeConfig& cfg, Rng& rng) {
    SparseAutoencoder s{Matrix(cfg.D, cfg.N), std::vector<double>(cfg.D, 0.0)};
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.N));
    for (std::size_t d = 0; d < cfg.D; ++d) {
        auto row = s.W_enc.row(d);
        double norm_sq = 0.0;
        for (double& w : row) {
            w = rng.uniform(-bound, bound);
            norm_sq += w * w;
        }
        const double norm = std::sqrt(norm_sq);
        if (norm > 0.0)
            for (double& w : row) w /= norm;
    }
    return s;
}

Matrix encode(const SparseAutoencoder& sae, const Matrix& X) {
    check_input(sae, X, "sae::encode");
    Matrix Z = matmul(sae.W_enc, X);
    add_column_broadcast(Z, sae.b);
    for (double& v : Z.data()) v = v > 0.0 ? v : 0.0;
    return Z;
}

Matrix decode(const SparseAutoencoder& sae, const Matrix& Z) {
    if (Z.rows() != sae.dict_size()) {
        throw ShapeError("sae::decode: code has " + std::to_string(Z.rows()) + " rows, SAE has " +
                         std::to_string(sae.dict_size()) + " features");
    }
    return matmul_tn(sae.W_enc, Z);
}

SaeGradients loss_and_grad(const SparseAutoencoder& sae, const Matrix& X, double l1) {
    check_input(sae, X, "sae::loss_and_grad");
    const Matrix xs = sample_major(X);
    Accumulator acc{0.0, 0.0, Matrix(sae.dict_size(), sae.input_dim()),
                    std::vector<double>(sae.dict_size(), 0.0)};
    accumulate_batch(sae, xs.data(), X.cols(), l1, acc, true);
    const double inv = 1.0 / static_cast<double>(X.cols());
    SaeGradients g;
    g.recon_loss = acc.recon * inv;
    g.l1_loss = l1 * acc.l1 * inv;
    g.loss = g.recon_loss + g.l1_loss;
    g.grad_W = std::move(acc.grad_W);
    g.grad_b = std::move(acc.grad_b);
    return g;
}

SaeLosses evaluate(const SparseAutoencoder& sae, const Matrix& X, double l1) {
    check_input(sae, X, "sae::evaluate");
    const Matrix xs = sample_major(X);
    Accumulator acc{};
    accumulate_batch(sae, xs.data(), X.cols(), l1, acc, false);
    const double inv = 1.0 / static_cast<double>(X.cols());
    SaeLosses out;
    out.recon = acc.recon * inv;
    out.l1 = l1 * acc.l1 * inv;
    out.loss = out.recon + out.l1;
    return out;
}

Matrix standardize_rows(const Matrix& X) {
    Matrix out = X;
    const double n = static_cast<double>(X.cols());
    for (std::size_t r = 0; r < X.rows(); ++r) {
        auto row = out.row(r);
        double mean = 0.0;
        for (double v : row) mean += v;
        mean /= n;
        double var = 0.0;
        for (double v : row) var += (v - mean) * (v - mean);
        var /= n;
        const double sd = std::sqrt(var);
        for (double& v : row) v = sd > 0.0 ? (v - mean) / sd : v - mean;
    }
    return out;
}

SaeTrainResult train(const SaeConfig& cfg, const Matrix& X_in) {
    cfg.validate();
    if (X_in.rows() != cfg.N) {
        throw ShapeError("sae::train: activations have " + std::to_string(X_in.rows()) +
                         " rows, config N = " + std::to_string(cfg.N));
    }
    const std::size_t S = X_in.cols();
    if (S < cfg.batch) {
        throw ConfigError("sae::train: " + std::to_string(S) + " samples is fewer than batch " +
                          std::to_string(cfg.batch));
    }
    const Matrix X = cfg.standardize ? standardize_rows(X_in) : X_in;
    const Matrix xs = sample_major(X);
    const std::size_t N = cfg.N;

    Rng rng(derive_seed(cfg.seed, "sae-train"));
    SaeTrainResult result;
    result.sae = init_sae(cfg, rng);

    AdamOptions opts;
    opts.lr = cfg.lr;
    AdamState sw(cfg.D, cfg.N, opts);
    AdamState sb(cfg.D, 1, opts);

    std::vector<std::size_t> order(S);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> batch_buf(cfg.batch * N);
    Accumulator acc{0.0, 0.0, Matrix(cfg.D, N), std::vector<double>(cfg.D, 0.0)};
    std::uint64_t step = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < S; start += cfg.batch) {
            const std::size_t count = std::min(cfg.batch, S - start);
            for (std::size_t k = 0; k < count; ++k) {
                auto src = xs.row(order[start + k]);
                std::copy(src.begin(), src.end(), batch_buf.begin() + static_cast<std::ptrdiff_t>(k * N));
            }
            acc.recon = 0.0;
            acc.l1 = 0.0;
            acc.grad_W.fill(0.0);
            std::fill(acc.grad_b.begin(), acc.grad_b.end(), 0.0);
            accumulate_batch(result.sae, std::span<const double>(batch_buf.data(), count * N), count,
                             cfg.l1, acc, true);
            const double batch_loss = (acc.recon + cfg.l1 * acc.l1) / static_cast<double>(count);
            if (!std::isfinite(batch_loss)) throw DivergenceError("SAE training", step);
            adam_step(result.sae.W_enc, acc.grad_W, sw);
            adam_step(std::span<double>(result.sae.b), acc.grad_b, sb);
            ++step;
        }
    }
    if (!all_finite(result.sae.W_enc)) throw DivergenceError("SAE training", step);
    result.final_losses = evaluate(result.sae, X, cfg.l1);
    return result;
}

std::optional<OptimalityReport> optimality_residual(const SparseAutoencoder& sae, const Matrix& X,
                                                    double l1, OptimalityForm form,
                                                    double tau_active) {
    check_input(sae, X, "sae::optimality_residual");
    if (form == OptimalityForm::budget && !(l1 > 0.0))
        throw ConfigError("optimality_residual: budget form needs l1 > 0");
    const std::size_t N = sae.input_dim();
    const std::size_t D = sae.dict_size();
    const Matrix Z = encode(sae, X);
    const Matrix Xr = decode(sae, Z);

    std::vector<double> norms_sq(D);
    for (std::size_t d = 0; d < D; ++d) {
        double acc = 0.0;
        for (double w : sae.W_enc.row(d)) acc += w * w;
        norms_sq[d] = acc;
    }

    std::vector<double> residuals;
    std::vector<double> leave_one_out(N);
    for (std::size_t s = 0; s < X.cols(); ++s) {
        for (std::size_t d = 0; d < D; ++d) {
            const double zi = Z(d, s);
            if (!(zi > tau_active)) continue;
            auto w = sae.W_enc.row(d);
            // x - W_{-i}ᵀ z_{-i} = (x - x') + z_i w_i
            double proj = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                leave_one_out[n] = X(n, s) - Xr(n, s) + zi * w[n];
                proj += w[n] * leave_one_out[n];
            }
            double target = 0.0;
            if (form == OptimalityForm::stationary) {
                target = norms_sq[d] > 0.0 ? (proj - 0.5 * l1) / norms_sq[d] : 0.0;
            } else {
                target = std::abs(proj) / l1;
            }
            residuals.push_back(std::abs(std::abs(zi) - target) / (std::abs(zi) + 1e-8));
        }
    }
    if (residuals.empty()) return std::nullopt;

    std::sort(residuals.begin(), residuals.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(residuals.size() - 1);
        const auto k = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(k);
        if (k + 1 >= residuals.size()) return residuals.back();
        return residuals[k] + frac * (residuals[k + 1] - residuals[k]);
    };
    return OptimalityReport{residuals.size(), quantile(0.5), quantile(0.9)};
}

std::vector<double> covariance_spectrum(const Matrix& A) {
    const std::size_t n = A.rows();
    const std::size_t S = A.cols();
    if (S < 2) throw ShapeError("covariance_spectrum: need at least two samples");
    Eigen::MatrixXd centered(n, S);
    for (std::size_t r = 0; r < n; ++r) {
        double mean = 0.0;
        for (double v : A.row(r)) mean += v;
        mean /= static_cast<double>(S);
        for (std::size_t c = 0; c < S; ++c) centered(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = A(r, c) - mean;
    }
    const Eigen::MatrixXd cov = centered * centered.transpose() / static_cast<double>(S - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov, Eigen::EigenvaluesOnly);
    std::vector<double> ev(solver.eigenvalues().data(), solver.eigenvalues().data() + n);
    std::sort(ev.begin(), ev.end(), std::greater<>());
    return ev;
}

std::size_t numerical_rank(const std::vector<double>& spectrum, double rel_tol) {
    if (spectrum.empty()) return 0;
    const double top = *std::max_element(spectrum.begin(), spectrum.end());
    if (!(top > 0.0)) return 0;
    return static_cast<std::size_t>(
        std::count_if(spectrum.begin(), spectrum.end(), [&](double e) { return e > rel_tol * top; }));
}

nlohmann::json to_json(const SaeConfig& cfg) {
    return {{"N", cfg.N},         {"D", cfg.D},         {"l1", cfg.l1},
            {"lr", cfg.lr},       {"epochs", cfg.epochs}, {"batch", cfg.batch},
            {"seed", cfg.seed},   {"standardize", cfg.standardize}};
}

SaeConfig config_from_json(const nlohmann::json& j, SaeConfig base) {
    base.N = j.value("N", base.N);
    base.D = j.value("D", base.D);
    base.l1 = j.value("l1", base.l1);
    base.lr = j.value("lr", base.lr);
    base.epochs = j.value("epochs", base.epochs);
    base.batch = j.value("batch", base.batch);
    base.seed = j.value("seed", base.seed);
    base.standardize = j.value("standardize", base.standardize);
    return base;
}

nlohmann::json checkpoint_json(const SaeConfig& cfg, const SparseAutoencoder& sae,
                               const SaeLosses& losses) {
    return {{"config", to_json(cfg)},
            {"W_enc", matrix_to_json(sae.W_enc)},
            {"b", sae.b},
            {"final_losses", {{"loss", losses.loss}, {"recon", losses.recon}, {"l1", losses.l1}}}};
}

SparseAutoencoder sae_from_checkpoint(const nlohmann::json& j) {
    SparseAutoencoder s{matrix_from_json(j.at("W_enc")), vector_from_json(j.at("b"))};
    if (s.b.size() != s.W_enc.rows()) throw IoError("SAE checkpoint: b length does not match W_enc");
    return s;
}

}  // namespace supmeter::sae
