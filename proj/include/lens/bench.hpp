#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "lens/csv.hpp"
#include "lens/ensemble.hpp"
#include "lens/gp.hpp"
#include "lens/nngp.hpp"
#include "lens/ole.hpp"
#include "lens/parallel.hpp"
#include "lens/rng.hpp"
#include "lens/tensor.hpp"

namespace lens {

// Synthetic regression benchmark configuration. T = D_x * lambda training
// points; the held-out scoring set has max(50, T) points.
struct BenchConfig {
    std::size_t dx = 10;
    std::size_t lambda = 1;
    double eps_std = 0.1;
    std::uint64_t seed = 0;
    std::size_t n_val = 0;  // extra validation points, disjoint from train and test

    std::size_t n_train() const { return dx * lambda; }
    std::size_t n_test() const { return std::max<std::size_t>(50, n_train()); }

    void validate() const {
        if (dx < 1) throw std::invalid_argument("BenchConfig: D_x must be >= 1");
        if (lambda < 1) throw std::invalid_argument("BenchConfig: lambda must be >= 1");
        if (!(eps_std > 0.0)) throw std::invalid_argument("BenchConfig: eps_std must be > 0");
    }
};

struct Dataset {
    Tensor X, y;            // training split [T x D], [T x 1]
    Tensor X_test, y_test;  // held-out scoring split
    Tensor X_val, y_val;    // optional ranking split (empty when n_val == 0)
    Tensor f, f_test, f_val;  // latent function values, kept for diagnostics
};

// y = f(x) + eps, x ~ N(0, I), eps ~ N(0, eps_std^2), with f drawn once from
// the NNGP prior jointly over every split so the GP oracle is the exact
// Bayes reference for the data. Deterministic given cfg.seed.
inline Dataset gen_dataset(const BenchConfig& cfg, const KernelSpec& kernel) {
    cfg.validate();
    Rng rng(cfg.seed);

    const std::size_t n_train = cfg.n_train();
    const std::size_t n_val = cfg.n_val;
    const std::size_t n_test = cfg.n_test();
    const std::size_t total = n_train + n_val + n_test;

    Tensor joint = Tensor::matrix(total, cfg.dx);
    std::normal_distribution<double> std_normal(0.0, 1.0);
    for (double& v : joint.values()) v = std_normal(rng);

    const Eigen::MatrixXd K = detail::kernel_matrix(joint, joint, kernel);
    auto [L, jitter] = detail::cholesky_with_jitter(K, 0.0);
    (void)jitter;

    Eigen::VectorXd z(total);
    for (std::size_t i = 0; i < total; ++i) z(static_cast<Eigen::Index>(i)) = std_normal(rng);
    const Eigen::VectorXd fv = L.triangularView<Eigen::Lower>() * z;

    auto slice = [&](std::size_t begin, std::size_t count) {
        Tensor X = Tensor::matrix(count, cfg.dx);
        Tensor f = Tensor::matrix(count, 1);
        Tensor y = Tensor::matrix(count, 1);
        for (std::size_t r = 0; r < count; ++r) {
            for (std::size_t c = 0; c < cfg.dx; ++c) X.at(r, c) = joint.at(begin + r, c);
            f.at(r, 0) = fv(static_cast<Eigen::Index>(begin + r));
            y.at(r, 0) = f.at(r, 0) + cfg.eps_std * std_normal(rng);
        }
        return std::make_tuple(std::move(X), std::move(f), std::move(y));
    };

    Dataset ds;
    std::tie(ds.X, ds.f, ds.y) = slice(0, n_train);
    std::tie(ds.X_val, ds.f_val, ds.y_val) = slice(n_train, n_val);
    std::tie(ds.X_test, ds.f_test, ds.y_test) = slice(n_train + n_val, n_test);
    return ds;
}

// KL(p || q) between univariate Gaussians:
//   log(sq/sp) + (sp^2 + (mp - mq)^2) / (2 sq^2) - 1/2.
// Exactly zero when p == q.
inline double kl_gauss(const GaussianPrediction& p, const GaussianPrediction& q) {
    if (!std::isfinite(p.mean) || !std::isfinite(p.var) || !std::isfinite(q.mean) ||
        !std::isfinite(q.var)) {
        throw std::invalid_argument("kl_gauss: non-finite input");
    }
    if (!(p.var > 0.0) || !(q.var > 0.0)) {
        throw std::invalid_argument("kl_gauss: variances must be positive");
    }
    const double dm = p.mean - q.mean;
    return 0.5 * std::log(q.var / p.var) + (p.var + dm * dm) / (2.0 * q.var) - 0.5;
}

struct QualityScore {
    double mean_kl = 0.0;
    std::vector<double> kls;
};

// Q(M): mean KL between model and oracle predictive distributions, pointwise
// over the scoring set. Roundoff below zero is clamped.
inline QualityScore quality_score(const std::vector<GaussianPrediction>& model_preds,
                                  const std::vector<GaussianPrediction>& oracle_preds) {
    if (model_preds.size() != oracle_preds.size()) {
        throw std::invalid_argument("quality_score: prediction list length mismatch");
    }
    if (model_preds.empty()) {
        throw std::invalid_argument("quality_score: empty prediction lists");
    }
    QualityScore score;
    score.kls.reserve(model_preds.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < model_preds.size(); ++i) {
        const double kl = std::max(kl_gauss(model_preds[i], oracle_preds[i]), 0.0);
        score.kls.push_back(kl);
        sum += kl;
    }
    score.mean_kl = sum / static_cast<double>(score.kls.size());
    return score;
}

// ---- Experiment sweep ---------------------------------------------------------

struct TrainSpec {
    std::vector<std::size_t> hidden = {32, 32};  // relu widths between input and scalar output
    int epochs = 300;
    double lr = 0.01;
    std::size_t batch_size = 32;
    int samples_per_batch = 0;  // 0 -> K
};

inline std::vector<LayerKind> mlp_arch(std::size_t input_dim,
                                       const std::vector<std::size_t>& hidden) {
    std::vector<LayerKind> arch;
    std::size_t in = input_dim;
    for (std::size_t h : hidden) {
        arch.push_back(LayerKind::dense_relu(in, h));
        in = h;
    }
    arch.push_back(LayerKind::dense(in, 1));
    return arch;
}

enum class MethodKind { layer_ensemble, deep_ensemble };

struct MethodSpec {
    MethodKind kind = MethodKind::layer_ensemble;
    int ensembles = 3;                   // K
    std::size_t n_predict_samples = 20;  // J for layer ensembles; deep uses J = K
    double prior_scale = 1.0;

    std::size_t predict_samples() const {
        return kind == MethodKind::deep_ensemble ? static_cast<std::size_t>(ensembles)
                                                 : n_predict_samples;
    }
    std::string name() const {
        return kind == MethodKind::deep_ensemble ? "deep_ensemble" : "layer_ensemble";
    }
};

struct SweepSpec {
    std::vector<std::size_t> dx_values = {10};
    std::vector<std::size_t> lambda_values = {1, 10};
    std::vector<double> eps_values = {0.01, 0.1, 1.0};
    int n_seeds = 10;
    std::uint64_t master_seed = 0;
    std::vector<MethodSpec> methods;
    TrainSpec train;
    KernelSpec kernel;
    int threads = 1;
    bool timing = false;
};

struct SweepRow {
    std::string method;
    int ensembles = 0;  // K
    std::size_t n_samples = 0;  // J
    std::size_t dx = 0;
    std::size_t lambda = 0;
    double eps = 0.0;
    int seed = 0;
    double q = 0.0;
    double wall_ms = 0.0;
};

struct SweepFailure {
    std::string cell;
    std::string message;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::vector<SweepFailure> failures;
};

// Trains one method on one benchmark cell and scores it against the GP
// oracle on the held-out split. The dataset seed ignores the method so
// methods sharing a (cell, seed) pair see identical data.
inline double run_cell(const MethodSpec& method, const TrainSpec& train, const KernelSpec& kernel,
                       std::size_t dx, std::size_t lambda, double eps, std::size_t eps_idx,
                       int seed_idx, std::uint64_t master_seed) {
    const std::uint64_t data_seed = derive_seed(master_seed, 1, dx, lambda, eps_idx, seed_idx);
    const std::uint64_t model_seed = derive_seed(master_seed, 2, dx, lambda, eps_idx, seed_idx,
                                                 static_cast<int>(method.kind));
    const std::uint64_t train_seed = derive_seed(master_seed, 3, dx, lambda, eps_idx, seed_idx,
                                                 static_cast<int>(method.kind));
    const std::uint64_t predict_seed = derive_seed(master_seed, 4, dx, lambda, eps_idx, seed_idx,
                                                   static_cast<int>(method.kind));

    BenchConfig cfg;
    cfg.dx = dx;
    cfg.lambda = lambda;
    cfg.eps_std = eps;
    cfg.seed = data_seed;
    const Dataset ds = gen_dataset(cfg, kernel);

    const GpPosterior oracle = gp_fit(ds.X, ds.y, kernel, eps * eps);
    const auto oracle_preds = gp_predict_all(oracle, ds.X_test, /*include_noise=*/true);

    LayerEnsembleModel model(mlp_arch(dx, train.hidden), method.ensembles, method.prior_scale,
                             model_seed);
    const int k = method.ensembles;
    const std::size_t n = model.n_layers();

    std::optional<SampleSet> pool;
    TrainConfig tc;
    tc.lr = train.lr;
    tc.batch_size = train.batch_size;
    if (method.kind == MethodKind::deep_ensemble) {
        pool = deep_ensemble_samples(k, static_cast<int>(n));
        tc.sample_pool = &*pool;
        tc.samples_per_batch = k;  // whole pool every batch
    } else {
        tc.samples_per_batch = train.samples_per_batch;
    }

    Rng train_rng(train_seed);
    model.record_seed(train_seed);
    for (int e = 0; e < train.epochs; ++e) {
        train_epoch(model, ds.X, ds.y, tc, train_rng);
    }

    SampleSet predict_set = [&] {
        if (method.kind == MethodKind::deep_ensemble) {
            return deep_ensemble_samples(k, static_cast<int>(n));
        }
        Rng predict_rng(predict_seed);
        return random_samples(k, static_cast<int>(n), method.predict_samples(), predict_rng);
    }();

    const auto model_preds = predict(model, predict_set, ds.X_test);
    return quality_score(model_preds, oracle_preds).mean_kl;
}

// Full grid x methods x seeds. Cells run independently (parallelizable);
// failures are recorded and the sweep continues.
inline SweepResult run_sweep(const SweepSpec& spec) {
    struct Cell {
        std::size_t method_idx, dx, lambda, eps_idx;
        int seed_idx;
    };
    std::vector<Cell> cells;
    for (std::size_t m = 0; m < spec.methods.size(); ++m) {
        for (std::size_t dx : spec.dx_values) {
            for (std::size_t lambda : spec.lambda_values) {
                for (std::size_t e = 0; e < spec.eps_values.size(); ++e) {
                    for (int s = 0; s < spec.n_seeds; ++s) {
                        cells.push_back({m, dx, lambda, e, s});
                    }
                }
            }
        }
    }

    std::vector<std::optional<SweepRow>> slots(cells.size());
    std::vector<std::optional<SweepFailure>> failures(cells.size());
    parallel_for(cells.size(), spec.threads, [&](std::size_t i) {
        const Cell& c = cells[i];
        const MethodSpec& method = spec.methods[c.method_idx];
        const double eps = spec.eps_values[c.eps_idx];
        try {
            const auto t0 = std::chrono::steady_clock::now();
            const double q = run_cell(method, spec.train, spec.kernel, c.dx, c.lambda, eps,
                                      c.eps_idx, c.seed_idx, spec.master_seed);
            const auto t1 = std::chrono::steady_clock::now();
            SweepRow row;
            row.method = method.name();
            row.ensembles = method.ensembles;
            row.n_samples = method.predict_samples();
            row.dx = c.dx;
            row.lambda = c.lambda;
            row.eps = eps;
            row.seed = c.seed_idx;
            row.q = q;
            row.wall_ms =
                spec.timing ? std::chrono::duration<double, std::milli>(t1 - t0).count() : 0.0;
            slots[i] = std::move(row);
        } catch (const std::exception& ex) {
            failures[i] = SweepFailure{
                method.name() + " D_x=" + std::to_string(c.dx) + " lambda=" +
                    std::to_string(c.lambda) + " eps=" + format_config_double(eps) +
                    " seed=" + std::to_string(c.seed_idx),
                ex.what()};
        }
    });

    SweepResult result;
    for (auto& slot : slots) {
        if (slot) result.rows.push_back(std::move(*slot));
    }
    for (auto& f : failures) {
        if (f) result.failures.push_back(std::move(*f));
    }
    return result;
}

inline constexpr const char* kSweepCsvHeader = "method,K,J,D_x,lambda,eps,seed,Q,wall_ms";

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
    os << kSweepCsvHeader << '\n';
    for (const auto& r : rows) {
        os << r.method << ',' << r.ensembles << ',' << r.n_samples << ',' << r.dx << ','
           << r.lambda << ',' << format_config_double(r.eps) << ',' << r.seed << ','
           << format_double(r.q) << ',' << format_wall_ms(r.wall_ms) << '\n';
    }
}

struct MethodSummary {
    std::string method;
    std::size_t n = 0;
    double mean_q = 0.0;
    double std_q = 0.0;  // population standard deviation
};

inline std::vector<MethodSummary> summarize_sweep(const std::vector<SweepRow>& rows) {
    std::vector<MethodSummary> out;
    for (const auto& r : rows) {
        auto it = std::find_if(out.begin(), out.end(),
                               [&](const MethodSummary& s) { return s.method == r.method; });
        if (it == out.end()) {
            out.push_back({r.method, 0, 0.0, 0.0});
            it = out.end() - 1;
        }
        it->mean_q += r.q;
        ++it->n;
    }
    for (auto& s : out) s.mean_q /= static_cast<double>(s.n);
    for (const auto& r : rows) {
        auto it = std::find_if(out.begin(), out.end(),
                               [&](const MethodSummary& s) { return s.method == r.method; });
        const double d = r.q - it->mean_q;
        it->std_q += d * d;
    }
    for (auto& s : out) s.std_q = std::sqrt(s.std_q / static_cast<double>(s.n));
    return out;
}

}  // namespace lens
