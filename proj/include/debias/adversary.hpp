#pragma once

#include "debias/tensor.hpp"

#include <string>
#include <vector>

namespace debias {

enum class BranchKind { binary, continuous };

const char* to_string(BranchKind kind);
BranchKind branch_kind_from_string(const std::string& s);

struct AttributeSpec {
    std::string name;
    BranchKind kind;
};

// One predictor head per demographic attribute: affine layers with rectifier
// units between them, final output width 1. Binary branches squash through a
// sigmoid; continuous branches emit the raw affine output.
struct AdversaryBranch {
    BranchKind kind = BranchKind::binary;
    std::string attribute;
    std::vector<AffineLayer> layers;

    static AdversaryBranch init(BranchKind kind, std::string attribute, Index input_dim,
                                const std::vector<Index>& hidden, SeededRng& rng);
    void zero_grad();
};

struct AdversaryParams {
    std::vector<AdversaryBranch> branches;
    Index input_dim = 0;

    static AdversaryParams init(Index latent_dim, const std::vector<AttributeSpec>& attributes,
                                const std::vector<Index>& hidden, SeededRng& rng);
    void zero_grad();
};

// Per-branch forward activations kept for the backward pass.
struct BranchCache {
    std::vector<Matrix> inputs;  // input to each layer
    std::vector<Matrix> preacts; // affine outputs before the rectifier
    Vector prediction;           // sigmoid output (binary) or raw output (continuous)
};

struct AdversaryForward {
    std::vector<BranchCache> caches; // aligned with params.branches
};

// Predictions per branch; binary branches land strictly inside (0, 1) after
// the loss-side clamp.
AdversaryForward adversary_forward(const AdversaryParams& params, const Matrix& z);

// Mean over examples; probabilities clamped to [1e-7, 1 - 1e-7].
double bce_loss(const Vector& p, const Vector& targets);
double mse_loss(const Vector& predictions, const Vector& targets);

struct AdversaryLoss {
    double total = 0.0;
    std::vector<std::pair<std::string, double>> per_branch;
};

// targets must contain one entry per branch, keyed by attribute name; binary
// targets must be 0/1. Total is the exact sum of the branch losses.
AdversaryLoss adversary_loss(const AdversaryParams& params, const AdversaryForward& forward,
                             const std::vector<std::pair<std::string, Vector>>& targets);

// Backward pass of coeff * total loss. Always returns d(loss)/dz; accumulates
// branch parameter gradients only when accumulate_params is true (the encoder
// update treats the adversary as a frozen function).
Matrix adversary_backward(AdversaryParams& params, const AdversaryForward& forward,
                          const std::vector<std::pair<std::string, Vector>>& targets,
                          double coeff, bool accumulate_params);
Matrix adversary_input_grad(const AdversaryParams& params, const AdversaryForward& forward,
                            const std::vector<std::pair<std::string, Vector>>& targets,
                            double coeff);

} // namespace debias
