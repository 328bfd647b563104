#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace debias {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Deterministic random stream. Identical (seed, stream_label, call sequence)
// yields an identical output sequence on every platform: the generator is
// splitmix64 seeded by hashing (seed, stream_label), and every distribution
// is implemented here instead of <random>, whose distributions are
// implementation-defined.
//
// Stream labels used across the pipeline: "init", "reparam", "shuffle",
// "synth", "poison".
class SeededRng {
public:
    SeededRng(std::uint64_t seed, std::string_view stream_label);

    std::uint64_t next_u64();
    // Uniform in [0, n), unbiased via rejection. n must be > 0.
    std::uint64_t bounded(std::uint64_t n);
    double uniform(); // [0, 1), 53-bit resolution
    double uniform(double lo, double hi);
    double normal(); // standard normal, polar Box-Muller
    Vector standard_normal(Index n);
    Matrix standard_normal(Index rows, Index cols);

    // Fisher-Yates, deterministic order.
    template <typename T>
    void shuffle(std::vector<T>& values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            std::swap(values[i - 1], values[bounded(i)]);
        }
    }

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Dense affine map y = W x + b with gradient accumulators mirroring the
// parameter shapes. Gradients are accumulated by affine_backward and
// consumed (zeroed) by adam_step.
struct AffineLayer {
    Matrix weight;      // out x in
    Vector bias;        // out
    Matrix grad_weight; // same shape as weight
    Vector grad_bias;   // same shape as bias

    AffineLayer() = default;
    AffineLayer(Index out_dim, Index in_dim); // zero-initialized

    // Weights uniform in +-1/sqrt(in_dim), biases zero.
    static AffineLayer uniform_init(Index out_dim, Index in_dim, SeededRng& rng);

    Index in_dim() const { return weight.cols(); }
    Index out_dim() const { return weight.rows(); }
    void zero_grad();
};

Vector affine_forward(const AffineLayer& layer, const Vector& x);
// Batch variant; each row of x is one example.
Matrix affine_forward(const AffineLayer& layer, const Matrix& x);

// Accumulates grad_weight += grad_out * x^T and grad_bias += grad_out,
// returns the input gradient W^T grad_out. Parameters are not modified.
Vector affine_backward(AffineLayer& layer, const Vector& x, const Vector& grad_out);
// Batch variant; accumulation order over the batch is fixed (single GEMM).
Matrix affine_backward(AffineLayer& layer, const Matrix& x, const Matrix& grad_out);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// First/second moment estimates for one layer, shapes mirror the parameters.
struct AdamState {
    Matrix m_weight, v_weight;
    Vector m_bias, v_bias;
    long step_count = 0;
    AdamConfig config;

    AdamState() = default;
    explicit AdamState(const AffineLayer& layer, AdamConfig cfg = {});
};

// One bias-corrected adaptive-moment update from the layer's accumulated
// gradients; consumes (zeros) the gradients and increments step_count.
// Non-finite gradients raise NumericError naming block_name.
void adam_step(AffineLayer& layer, AdamState& state, double lr,
               std::string_view block_name = "layer");

} // namespace debias
