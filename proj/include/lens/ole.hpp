#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lens/ensemble.hpp"
#include "lens/tensor.hpp"

namespace lens {

// Lexicographic ascending order over index vectors: earlier layers compare
// first, later indices break ties.
inline SampleSet sort_samples(const SampleSet& samples) {
    auto v = samples.samples();
    std::sort(v.begin(), v.end());
    return SampleSet(std::move(v));
}

// Tracks how many intermediate activations an evaluator holds at once.
// The network input counts for the duration of a call; tensors handed to the
// caller's output list stop counting once released.
struct ActivationMeter {
    std::size_t live = 0;
    std::size_t peak = 0;

    void acquire() {
        ++live;
        peak = std::max(peak, live);
    }
    void release() { --live; }
};

// Prefix trie over a sorted sample set. Node 0 is the virtual root
// (depth 0); every other node is one layer application (depth d, option q)
// with children in ascending option order. Root-to-leaf paths biject with
// the samples; a leaf stores its sample's position in the sorted order.
struct ExecutionPlan {
    struct Node {
        int depth = 0;
        int option = -1;
        int leaf_pos = -1;  // >= 0 iff this node terminates a sample
        std::vector<int> children;
    };

    std::vector<Node> nodes;      // nodes[0] is the virtual root
    std::vector<LayerSample> sorted_samples;
    std::size_t n_layers = 0;

    std::size_t n_samples() const { return sorted_samples.size(); }

    // Total layer applications: one per trie node, root excluded.
    std::uint64_t layer_execs() const { return nodes.size() - 1; }

    std::uint64_t naive_execs() const {
        return static_cast<std::uint64_t>(n_samples()) * n_layers;
    }
};

// Reifies the recursion tree of shared-prefix evaluation: sorts the set and
// inserts each sample, reusing nodes along its common prefix.
inline ExecutionPlan build_plan(const SampleSet& samples) {
    ExecutionPlan plan;
    plan.sorted_samples = sort_samples(samples).samples();
    plan.n_layers = samples.sample_length();
    plan.nodes.push_back({});  // virtual root

    for (std::size_t pos = 0; pos < plan.sorted_samples.size(); ++pos) {
        const LayerSample& s = plan.sorted_samples[pos];
        int cur = 0;
        for (std::size_t d = 0; d < plan.n_layers; ++d) {
            const int q = s[static_cast<int>(d)];
            const auto& kids = plan.nodes[cur].children;
            // Sorted insertion order: a shared prefix is always the last child.
            if (!kids.empty() && plan.nodes[kids.back()].option == q) {
                cur = kids.back();
            } else {
                plan.nodes.push_back({static_cast<int>(d) + 1, q, -1, {}});
                const int child = static_cast<int>(plan.nodes.size()) - 1;
                plan.nodes[cur].children.push_back(child);
                cur = child;
            }
        }
        plan.nodes[cur].leaf_pos = static_cast<int>(pos);
    }
    return plan;
}

// Depth-indented "d:q" rendering of the trie, for debugging.
inline std::string dump_plan(const ExecutionPlan& plan) {
    std::string out;
    auto walk = [&](auto&& self, int node) -> void {
        for (int child : plan.nodes[node].children) {
            const auto& n = plan.nodes[child];
            out.append(static_cast<std::size_t>(n.depth - 1) * 2, ' ');
            out += std::to_string(n.depth);
            out += ':';
            out += std::to_string(n.option);
            out += '\n';
            self(self, child);
        }
    };
    walk(walk, 0);
    return out;
}

namespace detail {

// Walks the trie depth-first for one weight bank, executing every node's
// layer exactly once. Activations live only along the current path, so at
// most N+1 are held at any time (input included); a finished subtree's
// output is dropped before its sibling runs.
inline void walk_plan(const ExecutionPlan& plan,
                      const std::vector<std::vector<DenseWeights>>& bank,
                      const std::vector<LayerKind>& arch, int node, const Tensor& input,
                      std::vector<Tensor>& results, ActivationMeter* meter) {
    for (int child : plan.nodes[node].children) {
        const auto& n = plan.nodes[child];
        const std::size_t layer = static_cast<std::size_t>(n.depth) - 1;
        Tensor out = dense_forward(bank[layer][n.option], input, arch[layer].relu());
        if (meter) meter->acquire();
        if (n.leaf_pos >= 0) {
            results[n.leaf_pos] = std::move(out);
            if (meter) meter->release();
        } else {
            walk_plan(plan, bank, arch, child, out, results, meter);
            if (meter) meter->release();
        }
    }
}

}  // namespace detail

// Shared-prefix evaluation: each distinct layer prefix of the sorted sample
// set is computed once and reused by every sample sharing it. Output entry t
// equals forward_sample(model, sorted_samples[t], x) bitwise; the prior
// network walks the same trie when prior_scale != 0.
inline std::vector<Tensor> ole_eval(const LayerEnsembleModel& model, const ExecutionPlan& plan,
                                    const Tensor& x, ActivationMeter* meter = nullptr) {
    if (plan.n_layers != model.n_layers()) {
        throw std::invalid_argument("ole_eval: plan depth != model layer count");
    }
    for (const auto& s : plan.sorted_samples) model.validate_sample(s);
    if (x.rank() != 2 || x.cols() != model.input_dim()) {
        throw std::invalid_argument("ole_eval: input shape mismatch");
    }

    if (meter) meter->acquire();  // the input x
    std::vector<Tensor> results(plan.n_samples());
    detail::walk_plan(plan, model.options(), model.arch(), 0, x, results, meter);
    if (model.prior_scale() != 0.0) {
        std::vector<Tensor> prior_results(plan.n_samples());
        detail::walk_plan(plan, model.prior_options(), model.arch(), 0, x, prior_results, meter);
        const double scale = model.prior_scale();
        for (std::size_t t = 0; t < results.size(); ++t) {
            for (std::size_t i = 0; i < results[t].size(); ++i) {
                results[t].values()[i] =
                    results[t].values()[i] + scale * prior_results[t].values()[i];
            }
        }
    }
    if (meter) meter->release();
    return results;
}

inline std::vector<Tensor> ole_eval(const LayerEnsembleModel& model, const SampleSet& samples,
                                    const Tensor& x, ActivationMeter* meter = nullptr) {
    return ole_eval(model, build_plan(samples), x, meter);
}

// The independent per-sample evaluator kept as the oracle for ole_eval:
// forward_sample for each sample in sorted order, sharing nothing.
inline std::vector<Tensor> naive_eval(const LayerEnsembleModel& model, const SampleSet& samples,
                                      const Tensor& x) {
    model.validate_samples(samples);
    const SampleSet sorted = sort_samples(samples);
    std::vector<Tensor> results;
    results.reserve(sorted.size());
    for (const auto& s : sorted) results.push_back(forward_sample(model, s, x));
    return results;
}

// All samples advanced layer by layer in lockstep, the way a vectorized
// ensemble runs. Holds one activation per sample simultaneously, which is
// what the trie walk avoids.
inline std::vector<Tensor> batched_eval(const LayerEnsembleModel& model, const SampleSet& samples,
                                        const Tensor& x, ActivationMeter* meter = nullptr) {
    model.validate_samples(samples);
    const SampleSet sorted = sort_samples(samples);
    if (meter) meter->acquire();  // the input x

    auto run_bank = [&](const std::vector<std::vector<DenseWeights>>& bank) {
        std::vector<Tensor> cur(sorted.size(), x);
        for (std::size_t t = 0; t < sorted.size(); ++t) {
            if (meter) meter->acquire();
        }
        for (std::size_t layer = 0; layer < model.n_layers(); ++layer) {
            for (std::size_t t = 0; t < sorted.size(); ++t) {
                Tensor next =
                    dense_forward(bank[layer][sorted[t][layer]], cur[t], model.arch()[layer].relu());
                if (meter) meter->acquire();
                cur[t] = std::move(next);
                if (meter) meter->release();
            }
        }
        for (std::size_t t = 0; t < sorted.size(); ++t) {
            if (meter) meter->release();
        }
        return cur;
    };

    std::vector<Tensor> results = run_bank(model.options());
    if (model.prior_scale() != 0.0) {
        std::vector<Tensor> prior_results = run_bank(model.prior_options());
        const double scale = model.prior_scale();
        for (std::size_t t = 0; t < results.size(); ++t) {
            for (std::size_t i = 0; i < results[t].size(); ++i) {
                results[t].values()[i] =
                    results[t].values()[i] + scale * prior_results[t].values()[i];
            }
        }
    }
    if (meter) meter->release();
    return results;
}

// Predictive mean/variance over a sample set, evaluated through the shared-
// prefix scheduler. Bitwise identical to averaging forward_sample outputs,
// and invariant to the input ordering of the set (evaluation is over the
// sorted order).
inline std::vector<GaussianPrediction> predict(const LayerEnsembleModel& model,
                                               const SampleSet& samples, const Tensor& x) {
    if (model.output_dim() != 1) {
        throw std::invalid_argument("predict: scalar-output architecture required");
    }
    return gaussian_stats(ole_eval(model, samples, x));
}

struct ExecStats {
    std::uint64_t layer_execs = 0;   // trie node count (one net)
    std::uint64_t naive_execs = 0;   // J * N
    std::size_t peak_live_activations = 0;  // trie walk, input included
    double speedup_execs = 1.0;      // naive / actual
};

struct MeasureResult {
    ExecStats stats;
    std::size_t peak_live_batched = 0;  // lockstep all-samples evaluation
    double wall_ms_ole = 0.0;
    double wall_ms_naive = 0.0;
};

namespace detail {

template <typename F>
double median_wall_ms(F&& f, int repetitions) {
    std::vector<double> times;
    times.reserve(repetitions);
    f();  // warm-up
    for (int r = 0; r < repetitions; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        const auto t1 = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(times.begin(), times.end());
    const std::size_t mid = times.size() / 2;
    return times.size() % 2 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
}

}  // namespace detail

// Exec counts, activation peaks, and median wall-clock (after one warm-up)
// for both evaluators on the same input.
inline MeasureResult measure(const LayerEnsembleModel& model, const SampleSet& samples,
                             const Tensor& x, int repetitions = 5) {
    if (repetitions < 1) throw std::invalid_argument("measure: repetitions must be >= 1");
    const ExecutionPlan plan = build_plan(samples);

    MeasureResult res;
    res.stats.layer_execs = plan.layer_execs();
    res.stats.naive_execs = plan.naive_execs();
    res.stats.speedup_execs =
        static_cast<double>(res.stats.naive_execs) / static_cast<double>(res.stats.layer_execs);

    ActivationMeter ole_meter;
    ole_eval(model, plan, x, &ole_meter);
    res.stats.peak_live_activations = ole_meter.peak;

    ActivationMeter batched_meter;
    batched_eval(model, samples, x, &batched_meter);
    res.peak_live_batched = batched_meter.peak;

    res.wall_ms_ole = detail::median_wall_ms([&] { ole_eval(model, plan, x); }, repetitions);
    res.wall_ms_naive = detail::median_wall_ms([&] { naive_eval(model, samples, x); }, repetitions);
    return res;
}

}  // namespace lens
