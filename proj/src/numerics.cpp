#include "jtsp/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace jtsp {

Vec SparseVec::to_dense() const {
    Vec out(dim, 0.0);
    for (const auto& [idx, val] : entries) {
        out[idx] = val;
    }
    return out;
}

SparseVec SparseVec::from_dense(const Vec& v) {
    SparseVec s;
    s.dim = v.size();
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] != 0.0) {
            s.entries.emplace_back(std::uint32_t(i), v[i]);
        }
    }
    return s;
}

bool all_finite(const Vec& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

int argmax(const Vec& v) {
    if (v.empty()) throw std::invalid_argument("argmax: empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return int(best);
}

Vec softmax(const Vec& logits) {
    if (logits.empty()) throw std::invalid_argument("softmax: empty input");
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : logits) {
        if (!std::isfinite(x)) throw std::invalid_argument("softmax: non-finite logit");
        mx = std::max(mx, x);
    }
    Vec out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& p : out) p /= sum;
    return out;
}

double cross_entropy(const Vec& p, int target) {
    if (target < 0 || std::size_t(target) >= p.size()) {
        throw std::invalid_argument("cross_entropy: target out of range");
    }
    return -std::log(std::max(p[std::size_t(target)], 1e-300));
}

Vec cross_entropy_grad(const Vec& p, int target) {
    if (target < 0 || std::size_t(target) >= p.size()) {
        throw std::invalid_argument("cross_entropy: target out of range");
    }
    Vec g = p;
    g[std::size_t(target)] -= 1.0;
    return g;
}

std::size_t RandomStream::next_index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("next_index: n must be positive");
    return std::size_t((unsigned __int128)next_u64() * n >> 64);
}

namespace {

double activate(Activation act, double pre) {
    switch (act) {
    case Activation::kIdentity: return pre;
    case Activation::kRelu: return pre > 0.0 ? pre : 0.0;
    case Activation::kTanh: return std::tanh(pre);
    }
    return pre;
}

double activate_grad(Activation act, double pre) {
    switch (act) {
    case Activation::kIdentity: return 1.0;
    case Activation::kRelu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::kTanh: {
        double t = std::tanh(pre);
        return 1.0 - t * t;
    }
    }
    return 1.0;
}

} // namespace

DenseLayer::DenseLayer(std::size_t in_dim, std::size_t out_dim, Activation a)
    : W(out_dim, in_dim), b(out_dim, 0.0), grad_W(out_dim, in_dim), grad_b(out_dim, 0.0), act(a) {}

void DenseLayer::init_glorot(RandomStream& rng) {
    double limit = std::sqrt(6.0 / double(W.rows + W.cols));
    for (double& w : W.data) w = rng.uniform(-limit, limit);
    std::fill(b.begin(), b.end(), 0.0);
}

void DenseLayer::zero_grad() {
    std::fill(grad_W.data.begin(), grad_W.data.end(), 0.0);
    std::fill(grad_b.begin(), grad_b.end(), 0.0);
}

Vec DenseLayer::forward(const Vec& x) const {
    DenseCache cache;
    return forward(x, cache);
}

Vec DenseLayer::forward(const Vec& x, DenseCache& cache) const {
    if (x.size() != W.cols) {
        throw std::invalid_argument("dense_forward: input size " + std::to_string(x.size()) +
                                    ", expected " + std::to_string(W.cols));
    }
    cache.sparse = false;
    cache.input = x;
    cache.sparse_input = {};
    cache.pre.assign(W.rows, 0.0);
    for (std::size_t j = 0; j < W.rows; ++j) {
        const double* wr = &W.data[j * W.cols];
        double acc = b[j];
        for (std::size_t i = 0; i < W.cols; ++i) acc += wr[i] * x[i];
        cache.pre[j] = acc;
    }
    Vec y(W.rows);
    for (std::size_t j = 0; j < W.rows; ++j) y[j] = activate(act, cache.pre[j]);
    return y;
}

Vec DenseLayer::forward(const SparseVec& x, DenseCache& cache) const {
    if (x.dim != W.cols) {
        throw std::invalid_argument("dense_forward: input size " + std::to_string(x.dim) +
                                    ", expected " + std::to_string(W.cols));
    }
    cache.sparse = true;
    cache.input.clear();
    cache.sparse_input = x;
    cache.pre = b;
    for (const auto& [idx, val] : x.entries) {
        for (std::size_t j = 0; j < W.rows; ++j) {
            cache.pre[j] += W(j, idx) * val;
        }
    }
    Vec y(W.rows);
    for (std::size_t j = 0; j < W.rows; ++j) y[j] = activate(act, cache.pre[j]);
    return y;
}

Vec DenseLayer::backward(const DenseCache& cache, const Vec& upstream) {
    if (!cache.valid()) throw std::logic_error("dense_backward: forward cache missing");
    if (upstream.size() != W.rows) {
        throw std::invalid_argument("dense_backward: upstream size " + std::to_string(upstream.size()) +
                                    ", expected " + std::to_string(W.rows));
    }
    Vec dpre(W.rows);
    for (std::size_t j = 0; j < W.rows; ++j) {
        dpre[j] = upstream[j] * activate_grad(act, cache.pre[j]);
        grad_b[j] += dpre[j];
    }
    if (cache.sparse) {
        for (const auto& [idx, val] : cache.sparse_input.entries) {
            for (std::size_t j = 0; j < W.rows; ++j) {
                grad_W(j, idx) += dpre[j] * val;
            }
        }
        return {};
    }
    const Vec& x = cache.input;
    Vec dx(W.cols, 0.0);
    for (std::size_t j = 0; j < W.rows; ++j) {
        double* gw = &grad_W.data[j * W.cols];
        const double* wr = &W.data[j * W.cols];
        double dj = dpre[j];
        for (std::size_t i = 0; i < W.cols; ++i) {
            gw[i] += dj * x[i];
            dx[i] += wr[i] * dj;
        }
    }
    return dx;
}

Vec flatten_values(const std::vector<TensorRef>& tensors) {
    Vec flat;
    for (const auto& t : tensors) flat.insert(flat.end(), t.value->begin(), t.value->end());
    return flat;
}

Vec flatten_grads(const std::vector<TensorRef>& tensors) {
    Vec flat;
    for (const auto& t : tensors) flat.insert(flat.end(), t.grad->begin(), t.grad->end());
    return flat;
}

void assign_values(const std::vector<TensorRef>& tensors, const Vec& flat) {
    std::size_t pos = 0;
    for (const auto& t : tensors) {
        if (pos + t.value->size() > flat.size()) {
            throw std::invalid_argument("assign_values: flat vector too short");
        }
        std::copy(flat.begin() + long(pos), flat.begin() + long(pos + t.value->size()), t.value->begin());
        pos += t.value->size();
    }
    if (pos != flat.size()) throw std::invalid_argument("assign_values: flat vector size mismatch");
}

void AdamOptimizer::step(const std::vector<TensorRef>& tensors) {
    if (m_.empty()) {
        m_.resize(tensors.size());
        v_.resize(tensors.size());
        for (std::size_t i = 0; i < tensors.size(); ++i) {
            m_[i].assign(tensors[i].value->size(), 0.0);
            v_[i].assign(tensors[i].value->size(), 0.0);
        }
    } else if (m_.size() != tensors.size()) {
        throw std::logic_error("optimizer_step: tensor count changed");
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(step_));
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const TensorRef& t = tensors[i];
        if (t.value->size() != m_[i].size()) {
            throw std::logic_error("optimizer_step: tensor shape changed: " + t.name);
        }
        if (t.frozen) continue;
        Vec& val = *t.value;
        const Vec& g = *t.grad;
        for (std::size_t k = 0; k < val.size(); ++k) {
            double gk = g[k];
            if (!std::isfinite(gk)) {
                throw TrainingError("optimizer_step: non-finite gradient in " + t.name);
            }
            m_[i][k] = cfg_.beta1 * m_[i][k] + (1.0 - cfg_.beta1) * gk;
            v_[i][k] = cfg_.beta2 * v_[i][k] + (1.0 - cfg_.beta2) * gk * gk;
            double mhat = m_[i][k] / bc1;
            double vhat = v_[i][k] / bc2;
            val[k] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
        }
    }
}

Vec finite_diff_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double eps) {
    Vec g(x.size());
    Vec probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double orig = probe[i];
        probe[i] = orig + eps;
        double fp = f(probe);
        probe[i] = orig - eps;
        double fm = f(probe);
        probe[i] = orig;
        g[i] = (fp - fm) / (2.0 * eps);
    }
    return g;
}

} // namespace jtsp
