#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lens/nn.hpp"
#include "lens/rng.hpp"
#include "lens/tensor.hpp"

namespace lens {

// Variance floor applied to every predictive variance. KL against a
// zero-variance Gaussian is undefined, so a single sample (or a degenerate
// model) still yields a usable prediction.
inline constexpr double kVarFloor = 1e-9;

struct GaussianPrediction {
    double mean = 0.0;
    double var = 0.0;
};

// One sampled subnetwork: option index per layer, each in [0, K).
struct LayerSample {
    std::vector<int> indices;

    LayerSample() = default;
    explicit LayerSample(std::vector<int> idx) : indices(std::move(idx)) {}

    std::size_t size() const { return indices.size(); }
    int operator[](std::size_t i) const { return indices[i]; }

    friend auto operator<=>(const LayerSample& a, const LayerSample& b) {
        return a.indices <=> b.indices;
    }
    friend bool operator==(const LayerSample&, const LayerSample&) = default;

    std::string to_string(char sep = '-') const {
        std::string s;
        for (std::size_t i = 0; i < indices.size(); ++i) {
            if (i) s.push_back(sep);
            s += std::to_string(indices[i]);
        }
        return s;
    }
};

// A set of distinct layer samples of equal length.
class SampleSet {
public:
    explicit SampleSet(std::vector<LayerSample> samples) : samples_(std::move(samples)) {
        if (samples_.empty()) {
            throw std::invalid_argument("SampleSet: must hold at least one sample");
        }
        const std::size_t n = samples_.front().size();
        for (const auto& s : samples_) {
            if (s.size() != n) {
                throw std::invalid_argument("SampleSet: inconsistent sample lengths");
            }
        }
        auto sorted = samples_;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
            throw std::invalid_argument("SampleSet: duplicate samples");
        }
    }

    std::size_t size() const { return samples_.size(); }
    std::size_t sample_length() const { return samples_.front().size(); }
    const LayerSample& operator[](std::size_t i) const { return samples_[i]; }
    const std::vector<LayerSample>& samples() const { return samples_; }

    auto begin() const { return samples_.begin(); }
    auto end() const { return samples_.end(); }

private:
    std::vector<LayerSample> samples_;
};

// N layers with K weight options each, plus a frozen prior copy of the same
// structure. A concrete subnetwork is selected by a LayerSample.
class LayerEnsembleModel {
public:
    LayerEnsembleModel(std::vector<LayerKind> arch, int ensembles, double prior_scale,
                       std::uint64_t seed)
        : arch_(std::move(arch)), k_(ensembles), prior_scale_(prior_scale) {
        validate_arch();
        if (k_ < 1) throw std::invalid_argument("LayerEnsembleModel: K must be >= 1");
        if (prior_scale_ < 0.0) {
            throw std::invalid_argument("LayerEnsembleModel: prior_scale must be >= 0");
        }
        Rng rng(seed);
        seed_history_.push_back(seed);
        options_ = init_bank(rng);
        prior_options_ = init_bank(rng);
        update_counts_.assign(n_layers(), std::vector<std::uint64_t>(k_, 0));
    }

    // Assembles a model from explicit parts (checkpoint restore).
    LayerEnsembleModel(std::vector<LayerKind> arch, int ensembles, double prior_scale,
                       std::vector<std::vector<DenseWeights>> options,
                       std::vector<std::vector<DenseWeights>> prior_options,
                       std::vector<std::uint64_t> seed_history)
        : arch_(std::move(arch)),
          k_(ensembles),
          prior_scale_(prior_scale),
          options_(std::move(options)),
          prior_options_(std::move(prior_options)),
          seed_history_(std::move(seed_history)) {
        validate_arch();
        validate_bank(options_);
        validate_bank(prior_options_);
        update_counts_.assign(n_layers(), std::vector<std::uint64_t>(k_, 0));
    }

    std::size_t n_layers() const { return arch_.size(); }
    int ensembles_per_layer() const { return k_; }
    double prior_scale() const { return prior_scale_; }
    void set_prior_scale(double s) {
        if (s < 0.0) throw std::invalid_argument("prior_scale must be >= 0");
        prior_scale_ = s;
    }

    std::size_t input_dim() const { return arch_.front().in; }
    std::size_t output_dim() const { return arch_.back().out; }
    const std::vector<LayerKind>& arch() const { return arch_; }

    const DenseWeights& option(std::size_t layer, int q) const { return options_[layer][q]; }
    DenseWeights& option(std::size_t layer, int q) { return options_[layer][q]; }
    const DenseWeights& prior_option(std::size_t layer, int q) const {
        return prior_options_[layer][q];
    }

    const std::vector<std::vector<DenseWeights>>& options() const { return options_; }
    const std::vector<std::vector<DenseWeights>>& prior_options() const { return prior_options_; }

    const std::vector<std::vector<std::uint64_t>>& update_counts() const { return update_counts_; }
    void record_update(std::size_t layer, int q) { ++update_counts_[layer][q]; }

    const std::vector<std::uint64_t>& seed_history() const { return seed_history_; }
    void record_seed(std::uint64_t s) { seed_history_.push_back(s); }

    void validate_sample(const LayerSample& s) const {
        if (s.size() != n_layers()) {
            throw std::invalid_argument("LayerSample: length != layer count");
        }
        for (int q : s.indices) {
            if (q < 0 || q >= k_) {
                throw std::invalid_argument("LayerSample: option index out of [0, K)");
            }
        }
    }

    void validate_samples(const SampleSet& set) const {
        for (const auto& s : set) validate_sample(s);
    }

private:
    void validate_arch() const {
        if (arch_.empty()) throw std::invalid_argument("LayerEnsembleModel: empty architecture");
        for (std::size_t i = 0; i + 1 < arch_.size(); ++i) {
            if (arch_[i].out != arch_[i + 1].in) {
                throw std::invalid_argument("LayerEnsembleModel: layer dims do not chain");
            }
        }
    }

    std::vector<std::vector<DenseWeights>> init_bank(Rng& rng) const {
        std::vector<std::vector<DenseWeights>> bank(n_layers());
        for (std::size_t i = 0; i < n_layers(); ++i) {
            bank[i].reserve(k_);
            for (int q = 0; q < k_; ++q) bank[i].push_back(init_dense(arch_[i], rng));
        }
        return bank;
    }

    void validate_bank(const std::vector<std::vector<DenseWeights>>& bank) const {
        if (bank.size() != n_layers()) {
            throw std::invalid_argument("LayerEnsembleModel: bank layer count mismatch");
        }
        for (std::size_t i = 0; i < n_layers(); ++i) {
            if (bank[i].size() != static_cast<std::size_t>(k_)) {
                throw std::invalid_argument("LayerEnsembleModel: bank option count mismatch");
            }
            for (const auto& w : bank[i]) {
                if (w.in() != arch_[i].in || w.out() != arch_[i].out) {
                    throw std::invalid_argument("LayerEnsembleModel: option shape mismatch");
                }
            }
        }
    }

    std::vector<LayerKind> arch_;
    int k_ = 1;
    double prior_scale_ = 1.0;
    std::vector<std::vector<DenseWeights>> options_;
    std::vector<std::vector<DenseWeights>> prior_options_;
    std::vector<std::vector<std::uint64_t>> update_counts_;
    std::vector<std::uint64_t> seed_history_;
};

// Each index drawn independently and uniformly from [0, K).
inline LayerSample sample_layers(const LayerEnsembleModel& model, Rng& rng) {
    std::vector<int> idx(model.n_layers());
    for (auto& q : idx) q = draw_index(rng, model.ensembles_per_layer());
    return LayerSample(std::move(idx));
}

// trained(x; sample) + prior_scale * prior(x; sample). Both nets select the
// same option index at every layer. The prior chain is skipped entirely when
// prior_scale == 0.
inline Tensor forward_sample(const LayerEnsembleModel& model, const LayerSample& sample,
                             const Tensor& x) {
    model.validate_sample(sample);
    Tensor out = x;
    for (std::size_t i = 0; i < model.n_layers(); ++i) {
        out = dense_forward(model.option(i, sample[i]), out, model.arch()[i].relu());
    }
    if (model.prior_scale() != 0.0) {
        Tensor p = x;
        for (std::size_t i = 0; i < model.n_layers(); ++i) {
            p = dense_forward(model.prior_option(i, sample[i]), p, model.arch()[i].relu());
        }
        const double scale = model.prior_scale();
        for (std::size_t i = 0; i < out.size(); ++i) {
            out.values()[i] = out.values()[i] + scale * p.values()[i];
        }
    }
    return out;
}

// Per-row mean and population variance over per-sample scalar outputs.
// Outputs must all be [batch x 1]; summation follows the given output order.
inline std::vector<GaussianPrediction> gaussian_stats(const std::vector<Tensor>& outputs) {
    if (outputs.empty()) {
        throw std::invalid_argument("gaussian_stats: empty sample set");
    }
    const Tensor& first = outputs.front();
    if (first.rank() != 2 || first.cols() != 1) {
        throw std::invalid_argument("gaussian_stats: outputs must be [batch x 1]");
    }
    for (const auto& t : outputs) {
        if (!t.same_shape(first)) {
            throw std::invalid_argument("gaussian_stats: inconsistent output shapes");
        }
    }
    const std::size_t batch = first.rows();
    const double inv_j = 1.0 / static_cast<double>(outputs.size());
    std::vector<GaussianPrediction> preds(batch);
    for (std::size_t r = 0; r < batch; ++r) {
        double sum = 0.0;
        for (const auto& t : outputs) sum += t.at(r, 0);
        const double mean = sum * inv_j;
        double ss = 0.0;
        for (const auto& t : outputs) {
            const double d = t.at(r, 0) - mean;
            ss += d * d;
        }
        preds[r] = {mean, std::max(ss * inv_j, kVarFloor)};
    }
    return preds;
}

// ---- Sample-set constructors ------------------------------------------------

// K pairwise disjoint samples: sample j selects option j at every layer.
inline SampleSet deep_ensemble_samples(int k, int n) {
    if (k < 1 || n < 1) throw std::invalid_argument("deep_ensemble_samples: K, N must be >= 1");
    std::vector<LayerSample> out;
    out.reserve(k);
    for (int j = 0; j < k; ++j) out.emplace_back(std::vector<int>(n, j));
    return SampleSet(std::move(out));
}

// Shared trunk of length T (option 0), ensembled tail: sample j is
// [0]*T ++ [j]*(N-T). T == N degenerates to the single sample [0]*N.
inline SampleSet sub_ensemble_samples(int k, int n, int trunk_len) {
    if (k < 1 || n < 1) throw std::invalid_argument("sub_ensemble_samples: K, N must be >= 1");
    if (trunk_len < 0 || trunk_len > n) {
        throw std::invalid_argument("sub_ensemble_samples: trunk length out of [0, N]");
    }
    if (trunk_len == n) {
        return SampleSet({LayerSample(std::vector<int>(n, 0))});
    }
    std::vector<LayerSample> out;
    out.reserve(k);
    for (int j = 0; j < k; ++j) {
        std::vector<int> idx(n, j);
        std::fill(idx.begin(), idx.begin() + trunk_len, 0);
        out.emplace_back(std::move(idx));
    }
    return SampleSet(std::move(out));
}

namespace detail {
// K^N if it fits below the cap, otherwise cap + 1.
inline std::uint64_t pow_capped(int k, int n, std::uint64_t cap) {
    std::uint64_t v = 1;
    for (int i = 0; i < n; ++i) {
        if (v > cap / static_cast<std::uint64_t>(k)) return cap + 1;
        v *= static_cast<std::uint64_t>(k);
    }
    return v;
}
}  // namespace detail

inline constexpr std::uint64_t kFullEnumerationCap = 1u << 20;

// All K^N samples in lexicographic order.
inline SampleSet full_samples(int k, int n) {
    if (k < 1 || n < 1) throw std::invalid_argument("full_samples: K, N must be >= 1");
    const std::uint64_t total = detail::pow_capped(k, n, kFullEnumerationCap);
    if (total > kFullEnumerationCap) {
        throw std::invalid_argument("full_samples: K^N exceeds enumeration cap");
    }
    std::vector<LayerSample> out;
    out.reserve(total);
    std::vector<int> idx(n, 0);
    for (std::uint64_t c = 0; c < total; ++c) {
        out.emplace_back(idx);
        for (int i = n - 1; i >= 0; --i) {
            if (++idx[i] < k) break;
            idx[i] = 0;
        }
    }
    return SampleSet(std::move(out));
}

// J distinct samples drawn uniformly without replacement, seeded.
inline SampleSet random_samples(int k, int n, std::size_t j, Rng& rng) {
    if (k < 1 || n < 1) throw std::invalid_argument("random_samples: K, N must be >= 1");
    if (j < 1) throw std::invalid_argument("random_samples: J must be >= 1");
    const std::uint64_t total = detail::pow_capped(k, n, kFullEnumerationCap);
    if (j > total) {
        throw std::invalid_argument("random_samples: J exceeds K^N");
    }
    if (total <= kFullEnumerationCap && j * 2 >= total) {
        // Dense draw: partial Fisher-Yates over the full enumeration.
        auto all = full_samples(k, n).samples();
        for (std::size_t i = 0; i < j; ++i) {
            std::uniform_int_distribution<std::size_t> d(i, all.size() - 1);
            std::swap(all[i], all[d(rng)]);
        }
        all.resize(j);
        return SampleSet(std::move(all));
    }
    std::set<std::vector<int>> seen;
    std::vector<LayerSample> out;
    out.reserve(j);
    while (out.size() < j) {
        std::vector<int> idx(n);
        for (auto& q : idx) q = draw_index(rng, k);
        if (seen.insert(idx).second) out.emplace_back(std::move(idx));
    }
    return SampleSet(std::move(out));
}

// ---- Training ---------------------------------------------------------------

struct TrainConfig {
    double lr = 0.01;
    std::size_t batch_size = 32;
    // 0 means "use K samples per batch".
    int samples_per_batch = 0;
    // When set, samples are drawn from this pool instead of the full
    // categorical product. If samples_per_batch equals the pool size the
    // whole pool is used every batch (the deep-ensemble training regime).
    const SampleSet* sample_pool = nullptr;
};

// One pass over (X, y): per batch, draws fresh layer samples, averages the
// per-sample MSE losses, and applies SGD to the selected trained options
// only. Prior weights are never touched. Returns the mean batch loss.
inline double train_epoch(LayerEnsembleModel& model, const Tensor& X, const Tensor& y,
                          const TrainConfig& cfg, Rng& rng) {
    if (X.rank() != 2 || y.rank() != 2 || X.rows() != y.rows()) {
        throw std::invalid_argument("train_epoch: X/y shape mismatch");
    }
    if (X.rows() == 0) throw std::invalid_argument("train_epoch: empty data");
    if (X.cols() != model.input_dim() || y.cols() != model.output_dim()) {
        throw std::invalid_argument("train_epoch: data dims do not match model");
    }
    if (cfg.lr < 0.0) throw std::invalid_argument("train_epoch: lr must be >= 0");
    if (cfg.batch_size < 1) throw std::invalid_argument("train_epoch: batch_size must be >= 1");
    const int spb = cfg.samples_per_batch > 0 ? cfg.samples_per_batch : model.ensembles_per_layer();
    if (cfg.sample_pool) model.validate_samples(*cfg.sample_pool);

    const std::size_t n_layers = model.n_layers();
    const int k = model.ensembles_per_layer();
    const bool use_whole_pool =
        cfg.sample_pool && cfg.sample_pool->size() == static_cast<std::size_t>(spb);

    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < X.rows(); start += cfg.batch_size) {
        const std::size_t end = std::min(start + cfg.batch_size, X.rows());
        const std::size_t rows = end - start;
        Tensor xb = Tensor::matrix(rows, X.cols());
        Tensor yb = Tensor::matrix(rows, y.cols());
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < X.cols(); ++c) xb.at(r, c) = X.at(start + r, c);
            for (std::size_t c = 0; c < y.cols(); ++c) yb.at(r, c) = y.at(start + r, c);
        }

        std::vector<LayerSample> draws;
        draws.reserve(spb);
        for (int s = 0; s < spb; ++s) {
            if (use_whole_pool) {
                draws.push_back((*cfg.sample_pool)[s]);
            } else if (cfg.sample_pool) {
                draws.push_back(
                    (*cfg.sample_pool)[draw_index(rng, static_cast<int>(cfg.sample_pool->size()))]);
            } else {
                draws.push_back(sample_layers(model, rng));
            }
        }

        // Gradient accumulators for every (layer, option); only touched slots
        // receive a step.
        std::vector<std::vector<Tensor>> acc_w(n_layers), acc_b(n_layers);
        std::vector<std::vector<bool>> touched(n_layers, std::vector<bool>(k, false));
        for (std::size_t i = 0; i < n_layers; ++i) {
            acc_w[i].assign(k, Tensor());
            acc_b[i].assign(k, Tensor());
        }

        double batch_loss = 0.0;
        const double sample_weight = 1.0 / static_cast<double>(spb);
        for (const auto& sample : draws) {
            std::vector<Tensor> acts;
            acts.reserve(n_layers + 1);
            acts.push_back(xb);
            for (std::size_t i = 0; i < n_layers; ++i) {
                acts.push_back(
                    dense_forward(model.option(i, sample[i]), acts.back(), model.arch()[i].relu()));
            }
            Tensor pred = acts.back();
            if (model.prior_scale() != 0.0) {
                Tensor p = xb;
                for (std::size_t i = 0; i < n_layers; ++i) {
                    p = dense_forward(model.prior_option(i, sample[i]), p, model.arch()[i].relu());
                }
                const double scale = model.prior_scale();
                for (std::size_t i = 0; i < pred.size(); ++i) {
                    pred.values()[i] += scale * p.values()[i];
                }
            }
            auto [loss, grad] = mse_loss(pred, yb);
            batch_loss += loss * sample_weight;

            // Backprop through the trained chain only; d(pred)/d(trained) = 1.
            Tensor g = std::move(grad);
            for (std::size_t ii = n_layers; ii-- > 0;) {
                const int q = sample[ii];
                DenseGrads dg =
                    dense_backward(model.option(ii, q), acts[ii], g, model.arch()[ii].relu());
                if (!touched[ii][q]) {
                    acc_w[ii][q] = std::move(dg.grad_W);
                    acc_b[ii][q] = std::move(dg.grad_b);
                    touched[ii][q] = true;
                } else {
                    for (std::size_t e = 0; e < acc_w[ii][q].size(); ++e) {
                        acc_w[ii][q].values()[e] += dg.grad_W.values()[e];
                    }
                    for (std::size_t e = 0; e < acc_b[ii][q].size(); ++e) {
                        acc_b[ii][q].values()[e] += dg.grad_b.values()[e];
                    }
                }
                model.record_update(ii, q);
                g = std::move(dg.grad_x);
            }
        }

        if (cfg.lr > 0.0) {
            for (std::size_t i = 0; i < n_layers; ++i) {
                for (int q = 0; q < k; ++q) {
                    if (!touched[i][q]) continue;
                    DenseWeights& w = model.option(i, q);
                    for (std::size_t e = 0; e < w.W.size(); ++e) {
                        w.W.values()[e] -= cfg.lr * sample_weight * acc_w[i][q].values()[e];
                    }
                    for (std::size_t e = 0; e < w.b.size(); ++e) {
                        w.b.values()[e] -= cfg.lr * sample_weight * acc_b[i][q].values()[e];
                    }
                }
            }
        }

        loss_sum += batch_loss;
        ++n_batches;
    }
    return loss_sum / static_cast<double>(n_batches);
}

}  // namespace lens
