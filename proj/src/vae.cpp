#include "debias/vae.hpp"

#include "debias/errors.hpp"

namespace debias {

VaeParams VaeParams::init(Index input_dim, Index latent_dim, SeededRng& rng) {
    if (input_dim < 1 || latent_dim < 1) {
        throw ValidationError("VaeParams::init: dimensions must be >= 1, got input " +
                              std::to_string(input_dim) + ", latent " +
                              std::to_string(latent_dim));
    }
    VaeParams vae;
    vae.enc_mu = AffineLayer::uniform_init(latent_dim, input_dim, rng);
    vae.enc_logvar = AffineLayer::uniform_init(latent_dim, input_dim, rng);
    // Start the posterior narrow. A unit-variance start needs far more
    // optimizer travel than short runs provide, and until the variance
    // shrinks the sampled latents hide low-amplitude demographic channels
    // from the adversary that the deterministic transform later exposes.
    vae.enc_logvar.bias.setConstant(kInitLogVar);
    vae.dec = AffineLayer::uniform_init(input_dim, latent_dim, rng);
    return vae;
}

void VaeParams::zero_grad() {
    enc_mu.zero_grad();
    enc_logvar.zero_grad();
    dec.zero_grad();
}

Encoded encode(const VaeParams& vae, const Matrix& x) {
    Encoded enc;
    enc.mu = affine_forward(vae.enc_mu, x);
    enc.logvar = affine_forward(vae.enc_logvar, x)
                     .array()
                     .min(kLogVarLimit)
                     .max(-kLogVarLimit)
                     .matrix();
    return enc;
}

std::pair<Vector, Vector> encode(const VaeParams& vae, const Vector& x) {
    const Encoded enc = encode(vae, Matrix(x.transpose()));
    return {enc.mu.row(0).transpose(), enc.logvar.row(0).transpose()};
}

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shapes differ, " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
    }
}

} // namespace

Matrix reparameterize(const Matrix& mu, const Matrix& logvar, const Matrix& eps) {
    check_same_shape(mu, logvar, "reparameterize");
    check_same_shape(mu, eps, "reparameterize");
    return mu.array() + (logvar.array() / 2.0).exp() * eps.array();
}

Vector reparameterize(const Vector& mu, const Vector& logvar, const Vector& eps) {
    return reparameterize(Matrix(mu.transpose()), Matrix(logvar.transpose()),
                          Matrix(eps.transpose()))
        .row(0)
        .transpose();
}

Matrix decode(const VaeParams& vae, const Matrix& z) {
    return affine_forward(vae.dec, z);
}

Vector decode(const VaeParams& vae, const Vector& z) {
    return affine_forward(vae.dec, z);
}

double recon_loss(const Matrix& x, const Matrix& x_hat) {
    check_same_shape(x, x_hat, "recon_loss");
    return (x - x_hat).array().square().mean();
}

double recon_loss(const Vector& x, const Vector& x_hat) {
    return recon_loss(Matrix(x.transpose()), Matrix(x_hat.transpose()));
}

double kl_loss(const Matrix& mu, const Matrix& logvar) {
    check_same_shape(mu, logvar, "kl_loss");
    const double total =
        0.5 * (logvar.array().exp() + mu.array().square() - 1.0 - logvar.array()).sum();
    return total / static_cast<double>(mu.rows());
}

double kl_loss(const Vector& mu, const Vector& logvar) {
    return kl_loss(Matrix(mu.transpose()), Matrix(logvar.transpose()));
}

Matrix recon_loss_grad(const Matrix& x, const Matrix& x_hat) {
    check_same_shape(x, x_hat, "recon_loss_grad");
    const double scale = 2.0 / static_cast<double>(x.rows() * x.cols());
    return scale * (x_hat - x);
}

void kl_loss_grad(const Matrix& mu, const Matrix& logvar, Matrix& d_mu, Matrix& d_logvar) {
    check_same_shape(mu, logvar, "kl_loss_grad");
    const double scale = 1.0 / static_cast<double>(mu.rows());
    d_mu = scale * mu;
    d_logvar = (0.5 * scale) * (logvar.array().exp() - 1.0).matrix();
}

VaeCache vae_forward(const VaeParams& vae, const Matrix& x, const Matrix& eps) {
    VaeCache cache;
    cache.x = x;
    cache.mu = affine_forward(vae.enc_mu, x);
    cache.logvar_raw = affine_forward(vae.enc_logvar, x);
    cache.logvar = cache.logvar_raw.array().min(kLogVarLimit).max(-kLogVarLimit).matrix();
    cache.eps = eps;
    cache.z = reparameterize(cache.mu, cache.logvar, eps);
    cache.x_hat = decode(vae, cache.z);
    return cache;
}

void vae_backward(VaeParams& vae, const VaeCache& cache, const Matrix& d_xhat,
                  const Matrix& d_z_extra, const Matrix& d_mu_extra,
                  const Matrix& d_logvar_extra) {
    Matrix d_z = affine_backward(vae.dec, cache.z, d_xhat);
    if (d_z_extra.size() > 0) {
        d_z += d_z_extra;
    }
    Matrix d_mu = d_z;
    if (d_mu_extra.size() > 0) {
        d_mu += d_mu_extra;
    }
    // z = mu + exp(lv/2) * eps  =>  dz/dlv = 0.5 * exp(lv/2) * eps
    Matrix d_logvar =
        (d_z.array() * cache.eps.array() * (cache.logvar.array() / 2.0).exp() * 0.5).matrix();
    if (d_logvar_extra.size() > 0) {
        d_logvar += d_logvar_extra;
    }
    // Clamp gradient: zero outside the open interval.
    const auto inside = (cache.logvar_raw.array() > -kLogVarLimit) &&
                        (cache.logvar_raw.array() < kLogVarLimit);
    d_logvar = (inside).select(d_logvar, Matrix::Zero(d_logvar.rows(), d_logvar.cols()));

    affine_backward(vae.enc_mu, cache.x, d_mu);
    affine_backward(vae.enc_logvar, cache.x, d_logvar);
}

} // namespace debias
