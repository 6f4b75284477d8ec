#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "jtsp/errors.hpp"

namespace jtsp {

using Vec = std::vector<double>;

// Row-major dense matrix.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    std::size_t size() const { return data.size(); }
};

// Sparse view of a mostly-zero feature vector; entries sorted by index.
struct SparseVec {
    std::size_t dim = 0;
    std::vector<std::pair<std::uint32_t, double>> entries;

    Vec to_dense() const;
    static SparseVec from_dense(const Vec& v);
};

bool all_finite(const Vec& v);

// Lowest index wins ties.
int argmax(const Vec& v);

// Numerically stable softmax (max subtraction). Throws on empty or non-finite input.
Vec softmax(const Vec& logits);

// -log p[target]. Throws if target is out of range.
double cross_entropy(const Vec& p, int target);

// Gradient of cross_entropy w.r.t. the logits that produced p: p - onehot(target).
Vec cross_entropy_grad(const Vec& p, int target);

enum class Activation { kIdentity, kRelu, kTanh };

// Per-example forward state kept for the backward pass.
struct DenseCache {
    Vec input;              // dense input, if the dense path was used
    SparseVec sparse_input; // sparse input, if the sparse path was used
    Vec pre;                // pre-activation W*x + b
    bool sparse = false;

    bool valid() const { return !pre.empty(); }
};

// Deterministic counter-based random stream (splitmix64). Identical seeds give
// identical draw sequences on every platform.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // [0, 1) with 53 random bits.
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // [0, n). n must be > 0.
    std::size_t next_index(std::size_t n);

    // Fisher-Yates; the result depends only on the stream state.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[next_index(i)]);
        }
    }

private:
    std::uint64_t state_;
};

// Fully connected layer y = act(W*x + b) with gradient buffers alongside the
// parameters. backward() accumulates into grad_W / grad_b.
struct DenseLayer {
    Mat W; // out x in
    Vec b;
    Mat grad_W;
    Vec grad_b;
    Activation act = Activation::kIdentity;

    DenseLayer() = default;
    DenseLayer(std::size_t in_dim, std::size_t out_dim, Activation a);

    std::size_t in_dim() const { return W.cols; }
    std::size_t out_dim() const { return W.rows; }

    // Uniform in +-sqrt(6/(fan_in+fan_out)), biases zero.
    void init_glorot(RandomStream& rng);
    void zero_grad();

    Vec forward(const Vec& x) const;
    Vec forward(const Vec& x, DenseCache& cache) const;
    Vec forward(const SparseVec& x, DenseCache& cache) const;

    // Returns dL/dx for dense caches; an empty vector for sparse ones (the
    // input layer has nothing upstream). Throws std::logic_error when the
    // forward cache is missing.
    Vec backward(const DenseCache& cache, const Vec& upstream);
};

// Non-owning handle to one parameter tensor and its gradient buffer.
struct TensorRef {
    std::string name;
    Vec* value = nullptr;
    Vec* grad = nullptr;
    bool frozen = false;
};

Vec flatten_values(const std::vector<TensorRef>& tensors);
Vec flatten_grads(const std::vector<TensorRef>& tensors);
void assign_values(const std::vector<TensorRef>& tensors, const Vec& flat);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Adaptive-moment optimizer with bias correction. Frozen tensors are skipped
// entirely: values and moments stay bit-identical.
class AdamOptimizer {
public:
    AdamOptimizer() = default;
    explicit AdamOptimizer(AdamConfig cfg) : cfg_(cfg) {}

    // Throws TrainingError on non-finite gradients.
    void step(const std::vector<TensorRef>& tensors);

    std::int64_t step_count() const { return step_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    std::int64_t step_ = 0;
    std::vector<Vec> m_;
    std::vector<Vec> v_;
};

// Central finite differences, component-wise.
Vec finite_diff_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double eps);

} // namespace jtsp
