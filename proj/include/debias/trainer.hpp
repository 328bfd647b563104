#pragma once

#include "debias/adversary.hpp"
#include "debias/data.hpp"
#include "debias/vae.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace debias {

inline constexpr int kCheckpointFormatVersion = 1;

// KL weight on the summed-per-latent divergence. The reconstruction term is a
// per-dimension mean, so workable KL weights scale like 1/input_dim; this
// default is sized for embeddings in the tens-to-hundreds of dimensions and
// should be lowered further for very wide inputs.
inline constexpr double kDefaultBetaKl = 0.001;

inline std::vector<AttributeSpec> default_attributes() {
    return {{"sex", BranchKind::binary}, {"age", BranchKind::continuous}};
}

struct TrainConfig {
    int epochs = 100;
    int batch_size = 32;
    double lr_vae = 0.0005;
    double lr_adv = 0.002;
    Index latent_dim = 500;
    double beta_kl = kDefaultBetaKl;
    double lambda_adv = 1.0;
    int adv_steps_per_vae_step = 1;
    std::uint64_t seed = 0;
    std::vector<AttributeSpec> attributes = default_attributes();
    std::vector<Index> adversary_hidden = {64};
    // First-moment decay for the adversary's optimizer. Alternating play
    // needs the adversary to track sign flips quickly; heavy momentum makes
    // it chase stale directions.
    double adv_adam_beta1 = 0.9;
    // When > 0, the returned encoder/decoder are an exponential moving
    // average of the training trajectory (per update, this decay). The
    // min-max game oscillates around the scrubbed solution; the trajectory
    // mean sits at it.
    double ema_decay = 0.0;
};

struct LossHistory {
    std::vector<double> recon;
    std::vector<double> kl;
    std::vector<double> adv;
    std::vector<double> total; // recon + beta_kl * kl - lambda_adv * adv
};

struct Checkpoint {
    int format_version = kCheckpointFormatVersion;
    TrainConfig config;
    Standardization standardization; // feature z-score fitted on the train split
    double age_mean = 0.0;           // continuous-target scaling for the age branch
    double age_std = 1.0;
    VaeParams vae;
    AdversaryParams adversary;
    int epoch = 0;
    LossHistory history;
};

enum class OutputSpace { reconstruction, latent };

const char* to_string(OutputSpace space);
OutputSpace output_space_from_string(const std::string& s);

struct TransformMode {
    OutputSpace output_space = OutputSpace::reconstruction;
    bool deterministic = true; // eps = 0
};

// Alternating min-max loop. Per batch: step A updates only the adversary on
// the total adversarial loss, with the latent batch treated as a fixed input
// (adv_steps_per_vae_step times); step B updates only the encoder/decoder on
// recon + beta_kl * KL - lambda_adv * adv. Standardizes the dataset first
// when it arrives raw. Aborts with NumericError on a non-finite loss.
Checkpoint train(const EmbeddingDataset& dataset, const TrainConfig& config);

// Replaces features by the decoded reconstruction (mapped back through the
// inverse standardization, dimension preserved) or by the latent mean
// (dimension becomes latent_dim). Labels and splits are untouched.
EmbeddingDataset transform_dataset(const Checkpoint& checkpoint, const EmbeddingDataset& dataset,
                                   const TransformMode& mode = {});

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const std::string& text);

// Building blocks of the loop, exposed so the phase isolation is checkable:
// step A takes the VAE nowhere and step B takes the adversary by const
// reference, so neither phase can touch the other side's parameters.

// One adversary optimizer update on a fixed latent batch; returns the total
// adversarial loss before the update. opt must align with the adversary's
// layers (branch by branch, in order).
double adversary_update_step(AdversaryParams& adversary, std::vector<AdamState>& opt,
                             const Matrix& z,
                             const std::vector<std::pair<std::string, Vector>>& targets,
                             double lr_adv);

struct StepLosses {
    double recon = 0.0;
    double kl = 0.0;
    double adv = 0.0;
    double objective = 0.0;
};

// One encoder/decoder optimizer update; opt holds {enc_mu, enc_logvar, dec}.
StepLosses vae_update_step(VaeParams& vae, std::vector<AdamState>& opt,
                           const AdversaryParams& adversary, const Matrix& x, const Matrix& eps,
                           const std::vector<std::pair<std::string, Vector>>& targets,
                           double beta_kl, double lambda_adv, double lr_vae);

} // namespace debias
