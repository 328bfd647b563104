#include "debias/adversary.hpp"

#include "debias/errors.hpp"

#include <cmath>

namespace debias {

const char* to_string(BranchKind kind) {
    return kind == BranchKind::binary ? "binary" : "continuous";
}

BranchKind branch_kind_from_string(const std::string& s) {
    if (s == "binary") return BranchKind::binary;
    if (s == "continuous") return BranchKind::continuous;
    throw ValidationError("unknown branch kind '" + s + "'");
}

AdversaryBranch AdversaryBranch::init(BranchKind kind, std::string attribute, Index input_dim,
                                      const std::vector<Index>& hidden, SeededRng& rng) {
    AdversaryBranch branch;
    branch.kind = kind;
    branch.attribute = std::move(attribute);
    Index in = input_dim;
    for (const Index width : hidden) {
        if (width < 1) {
            throw ValidationError("adversary hidden width must be >= 1, got " +
                                  std::to_string(width));
        }
        branch.layers.push_back(AffineLayer::uniform_init(width, in, rng));
        in = width;
    }
    branch.layers.push_back(AffineLayer::uniform_init(1, in, rng));
    return branch;
}

void AdversaryBranch::zero_grad() {
    for (auto& layer : layers) layer.zero_grad();
}

AdversaryParams AdversaryParams::init(Index latent_dim,
                                      const std::vector<AttributeSpec>& attributes,
                                      const std::vector<Index>& hidden, SeededRng& rng) {
    if (attributes.empty()) {
        throw ValidationError("adversary needs at least one attribute branch");
    }
    AdversaryParams params;
    params.input_dim = latent_dim;
    for (const auto& attr : attributes) {
        params.branches.push_back(
            AdversaryBranch::init(attr.kind, attr.name, latent_dim, hidden, rng));
    }
    return params;
}

void AdversaryParams::zero_grad() {
    for (auto& branch : branches) branch.zero_grad();
}

namespace {

constexpr double kProbClamp = 1e-7;

Matrix relu(const Matrix& x) {
    return x.array().max(0.0).matrix();
}

Vector sigmoid(const Vector& x) {
    return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

const Vector& target_for(const std::vector<std::pair<std::string, Vector>>& targets,
                         const std::string& attribute) {
    for (const auto& [name, values] : targets) {
        if (name == attribute) return values;
    }
    throw ValidationError("adversary: missing target for attribute '" + attribute + "'");
}

Matrix affine_input_grad(const AffineLayer& layer, const Matrix& grad_out) {
    return grad_out * layer.weight;
}

} // namespace

AdversaryForward adversary_forward(const AdversaryParams& params, const Matrix& z) {
    if (z.cols() != params.input_dim) {
        throw ShapeError("adversary_forward: expected input of width " +
                         std::to_string(params.input_dim) + ", got " + std::to_string(z.cols()));
    }
    AdversaryForward fwd;
    fwd.caches.reserve(params.branches.size());
    for (const auto& branch : params.branches) {
        BranchCache cache;
        Matrix h = z;
        for (std::size_t l = 0; l < branch.layers.size(); ++l) {
            cache.inputs.push_back(h);
            Matrix pre = affine_forward(branch.layers[l], h);
            cache.preacts.push_back(pre);
            h = l + 1 < branch.layers.size() ? relu(pre) : pre;
        }
        Vector out = h.col(0);
        cache.prediction = branch.kind == BranchKind::binary ? sigmoid(out) : out;
        fwd.caches.push_back(std::move(cache));
    }
    return fwd;
}

double bce_loss(const Vector& p, const Vector& targets) {
    if (p.size() != targets.size()) {
        throw ShapeError("bce_loss: " + std::to_string(p.size()) + " predictions vs " +
                         std::to_string(targets.size()) + " targets");
    }
    for (Index i = 0; i < targets.size(); ++i) {
        if (targets[i] != 0.0 && targets[i] != 1.0) {
            throw ValidationError("bce_loss: binary target out of domain: " +
                                  std::to_string(targets[i]));
        }
    }
    const auto pc = p.array().min(1.0 - kProbClamp).max(kProbClamp);
    return -(targets.array() * pc.log() + (1.0 - targets.array()) * (1.0 - pc).log()).mean();
}

double mse_loss(const Vector& predictions, const Vector& targets) {
    if (predictions.size() != targets.size()) {
        throw ShapeError("mse_loss: " + std::to_string(predictions.size()) + " predictions vs " +
                         std::to_string(targets.size()) + " targets");
    }
    return (predictions - targets).array().square().mean();
}

AdversaryLoss adversary_loss(const AdversaryParams& params, const AdversaryForward& forward,
                             const std::vector<std::pair<std::string, Vector>>& targets) {
    AdversaryLoss loss;
    for (std::size_t b = 0; b < params.branches.size(); ++b) {
        const auto& branch = params.branches[b];
        const Vector& target = target_for(targets, branch.attribute);
        const double value = branch.kind == BranchKind::binary
                                 ? bce_loss(forward.caches[b].prediction, target)
                                 : mse_loss(forward.caches[b].prediction, target);
        loss.per_branch.emplace_back(branch.attribute, value);
        loss.total += value;
    }
    return loss;
}

namespace {

template <bool Accumulate>
Matrix backward_impl(AdversaryParams& params, const AdversaryForward& forward,
                     const std::vector<std::pair<std::string, Vector>>& targets, double coeff) {
    Matrix d_z;
    for (std::size_t b = 0; b < params.branches.size(); ++b) {
        auto& branch = params.branches[b];
        const auto& cache = forward.caches[b];
        const Vector& target = target_for(targets, branch.attribute);
        const double n = static_cast<double>(target.size());

        // Gradient w.r.t. the raw affine output of the last layer.
        Vector d_out(target.size());
        if (branch.kind == BranchKind::binary) {
            // d(BCE)/d(logit) = p - y; zero where the clamp is active.
            for (Index i = 0; i < target.size(); ++i) {
                const double p = cache.prediction[i];
                d_out[i] = (p <= kProbClamp || p >= 1.0 - kProbClamp)
                               ? 0.0
                               : coeff * (p - target[i]) / n;
            }
        } else {
            d_out = (coeff * 2.0 / n) * (cache.prediction - target);
        }

        Matrix grad = d_out;
        for (std::size_t l = branch.layers.size(); l-- > 0;) {
            if (l + 1 < branch.layers.size()) {
                // Rectifier gradient mask.
                grad = (cache.preacts[l].array() > 0.0)
                           .select(grad, Matrix::Zero(grad.rows(), grad.cols()));
            }
            if constexpr (Accumulate) {
                grad = affine_backward(branch.layers[l], cache.inputs[l], grad);
            } else {
                grad = affine_input_grad(branch.layers[l], grad);
            }
        }
        if (d_z.size() == 0) {
            d_z = grad;
        } else {
            d_z += grad;
        }
    }
    return d_z;
}

} // namespace

Matrix adversary_backward(AdversaryParams& params, const AdversaryForward& forward,
                          const std::vector<std::pair<std::string, Vector>>& targets,
                          double coeff, bool accumulate_params) {
    return accumulate_params ? backward_impl<true>(params, forward, targets, coeff)
                             : backward_impl<false>(params, forward, targets, coeff);
}

Matrix adversary_input_grad(const AdversaryParams& params, const AdversaryForward& forward,
                            const std::vector<std::pair<std::string, Vector>>& targets,
                            double coeff) {
    return backward_impl<false>(const_cast<AdversaryParams&>(params), forward, targets, coeff);
}

} // namespace debias
