#pragma once

#include "debias/tensor.hpp"

namespace debias {

// Linear encoder to (mean, log-variance), linear decoder. Log-variance is
// clamped to +-kLogVarLimit before use; the clamp gradient is zero outside
// the interval.
inline constexpr double kLogVarLimit = 10.0;

// Initial value of the log-variance bias (sigma ~= 0.14).
inline constexpr double kInitLogVar = -4.0;

struct VaeParams {
    AffineLayer enc_mu;     // D -> L
    AffineLayer enc_logvar; // D -> L
    AffineLayer dec;        // L -> D

    Index input_dim() const { return enc_mu.in_dim(); }
    Index latent_dim() const { return enc_mu.out_dim(); }

    static VaeParams init(Index input_dim, Index latent_dim, SeededRng& rng);
    void zero_grad();
};

struct Encoded {
    Matrix mu;     // rows = examples
    Matrix logvar; // clamped
};

Encoded encode(const VaeParams& vae, const Matrix& x);
// z = mu + exp(logvar / 2) .* eps
Matrix reparameterize(const Matrix& mu, const Matrix& logvar, const Matrix& eps);
Matrix decode(const VaeParams& vae, const Matrix& z);

// Single-example conveniences.
std::pair<Vector, Vector> encode(const VaeParams& vae, const Vector& x);
Vector reparameterize(const Vector& mu, const Vector& logvar, const Vector& eps);
Vector decode(const VaeParams& vae, const Vector& z);

// Mean over examples of the per-example mean over feature dimensions of the
// squared error.
double recon_loss(const Matrix& x, const Matrix& x_hat);
double recon_loss(const Vector& x, const Vector& x_hat);

// Mean over examples of the per-example closed-form divergence to the unit
// Gaussian: 0.5 * sum_i (exp(lv_i) + mu_i^2 - 1 - lv_i).
double kl_loss(const Matrix& mu, const Matrix& logvar);
double kl_loss(const Vector& mu, const Vector& logvar);

// d(recon_loss)/d(x_hat).
Matrix recon_loss_grad(const Matrix& x, const Matrix& x_hat);
// d(kl_loss)/d(mu) and d(kl_loss)/d(logvar).
void kl_loss_grad(const Matrix& mu, const Matrix& logvar, Matrix& d_mu, Matrix& d_logvar);

// Everything step B of the trainer needs to backpropagate.
struct VaeCache {
    Matrix x;
    Matrix mu;
    Matrix logvar_raw; // pre-clamp, for the clamp gradient mask
    Matrix logvar;
    Matrix eps;
    Matrix z;
    Matrix x_hat;
};

VaeCache vae_forward(const VaeParams& vae, const Matrix& x, const Matrix& eps);

// Accumulates parameter gradients for a scalar loss with the given upstream
// gradients: d_xhat (decoder output), d_z_extra (paths that consume z
// directly, e.g. the adversary; pass an empty matrix when unused), and the
// direct mu/logvar terms (e.g. the divergence loss; empty when unused).
void vae_backward(VaeParams& vae, const VaeCache& cache, const Matrix& d_xhat,
                  const Matrix& d_z_extra, const Matrix& d_mu_extra,
                  const Matrix& d_logvar_extra);

} // namespace debias
