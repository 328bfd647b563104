#include "debias/tensor.hpp"

#include "debias/errors.hpp"

#include <cmath>
#include <limits>

namespace debias {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace

SeededRng::SeededRng(std::uint64_t seed, std::string_view stream_label) {
    // Child stream = hash of (seed, label); mixed twice so nearby seeds and
    // similar labels land far apart.
    std::uint64_t s = seed ^ fnv1a64(stream_label);
    state_ = splitmix64(s);
    state_ = splitmix64(s) ^ state_;
}

std::uint64_t SeededRng::next_u64() {
    return splitmix64(state_);
}

std::uint64_t SeededRng::bounded(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v = next_u64();
    while (v >= limit) {
        v = next_u64();
    }
    return v % n;
}

double SeededRng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double SeededRng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double r = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * r;
    has_spare_ = true;
    return u * r;
}

Vector SeededRng::standard_normal(Index n) {
    Vector out(n);
    for (Index i = 0; i < n; ++i) {
        out[i] = normal();
    }
    return out;
}

Matrix SeededRng::standard_normal(Index rows, Index cols) {
    Matrix out(rows, cols);
    for (Index r = 0; r < rows; ++r) {
        for (Index c = 0; c < cols; ++c) {
            out(r, c) = normal();
        }
    }
    return out;
}

AffineLayer::AffineLayer(Index out_dim, Index in_dim)
    : weight(Matrix::Zero(out_dim, in_dim)),
      bias(Vector::Zero(out_dim)),
      grad_weight(Matrix::Zero(out_dim, in_dim)),
      grad_bias(Vector::Zero(out_dim)) {}

AffineLayer AffineLayer::uniform_init(Index out_dim, Index in_dim, SeededRng& rng) {
    AffineLayer layer(out_dim, in_dim);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (Index r = 0; r < out_dim; ++r) {
        for (Index c = 0; c < in_dim; ++c) {
            layer.weight(r, c) = rng.uniform(-bound, bound);
        }
    }
    return layer;
}

void AffineLayer::zero_grad() {
    grad_weight.setZero();
    grad_bias.setZero();
}

namespace {

void check_in_dim(const AffineLayer& layer, Index got, const char* op) {
    if (got != layer.in_dim()) {
        throw ShapeError(std::string(op) + ": layer expects input of length " +
                         std::to_string(layer.in_dim()) + ", got " + std::to_string(got));
    }
}

void check_out_dim(const AffineLayer& layer, Index got, const char* op) {
    if (got != layer.out_dim()) {
        throw ShapeError(std::string(op) + ": layer produces output of length " +
                         std::to_string(layer.out_dim()) + ", gradient has length " +
                         std::to_string(got));
    }
}

} // namespace

Vector affine_forward(const AffineLayer& layer, const Vector& x) {
    check_in_dim(layer, x.size(), "affine_forward");
    return layer.weight * x + layer.bias;
}

Matrix affine_forward(const AffineLayer& layer, const Matrix& x) {
    check_in_dim(layer, x.cols(), "affine_forward");
    return (x * layer.weight.transpose()).rowwise() + layer.bias.transpose();
}

Vector affine_backward(AffineLayer& layer, const Vector& x, const Vector& grad_out) {
    check_in_dim(layer, x.size(), "affine_backward");
    check_out_dim(layer, grad_out.size(), "affine_backward");
    layer.grad_weight.noalias() += grad_out * x.transpose();
    layer.grad_bias += grad_out;
    return layer.weight.transpose() * grad_out;
}

Matrix affine_backward(AffineLayer& layer, const Matrix& x, const Matrix& grad_out) {
    check_in_dim(layer, x.cols(), "affine_backward");
    check_out_dim(layer, grad_out.cols(), "affine_backward");
    if (x.rows() != grad_out.rows()) {
        throw ShapeError("affine_backward: batch sizes differ, input has " +
                         std::to_string(x.rows()) + " rows, gradient has " +
                         std::to_string(grad_out.rows()));
    }
    layer.grad_weight.noalias() += grad_out.transpose() * x;
    layer.grad_bias += grad_out.colwise().sum().transpose();
    return grad_out * layer.weight;
}

AdamState::AdamState(const AffineLayer& layer, AdamConfig cfg)
    : m_weight(Matrix::Zero(layer.out_dim(), layer.in_dim())),
      v_weight(Matrix::Zero(layer.out_dim(), layer.in_dim())),
      m_bias(Vector::Zero(layer.out_dim())),
      v_bias(Vector::Zero(layer.out_dim())),
      config(cfg) {}

namespace {

template <typename Param>
void adam_update(Param& param, const Param& grad, Param& m, Param& v, long step,
                 const AdamConfig& cfg, double lr) {
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v.array().matrix() + (1.0 - cfg.beta2) * grad.array().square().matrix();
    param.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.epsilon);
}

} // namespace

void adam_step(AffineLayer& layer, AdamState& state, double lr, std::string_view block_name) {
    if (lr <= 0.0) {
        throw ValidationError("adam_step: learning rate must be positive, got " +
                              std::to_string(lr));
    }
    if (!layer.grad_weight.allFinite() || !layer.grad_bias.allFinite()) {
        throw NumericError("adam_step: non-finite gradient in block '" +
                           std::string(block_name) + "'");
    }
    state.step_count += 1;
    adam_update(layer.weight, layer.grad_weight, state.m_weight, state.v_weight,
                state.step_count, state.config, lr);
    adam_update(layer.bias, layer.grad_bias, state.m_bias, state.v_bias,
                state.step_count, state.config, lr);
    layer.zero_grad();
}

} // namespace debias
