#include "debias/trainer.hpp"

#include "debias/errors.hpp"
#include "debias/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

using nlohmann::json;

namespace debias {

const char* to_string(OutputSpace space) {
    return space == OutputSpace::reconstruction ? "reconstruction" : "latent";
}

OutputSpace output_space_from_string(const std::string& s) {
    if (s == "reconstruction") return OutputSpace::reconstruction;
    if (s == "latent") return OutputSpace::latent;
    throw ValidationError("unknown output space '" + s + "', expected reconstruction or latent");
}

namespace {

void validate_config(const TrainConfig& config) {
    if (config.epochs < 1) throw ValidationError("train: epochs must be >= 1");
    if (config.batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
    if (config.latent_dim < 1) throw ValidationError("train: latent_dim must be >= 1");
    if (config.lr_vae <= 0.0) throw ValidationError("train: lr_vae must be > 0");
    if (config.lr_adv <= 0.0) throw ValidationError("train: lr_adv must be > 0");
    if (config.beta_kl < 0.0) throw ValidationError("train: beta_kl must be >= 0");
    if (config.lambda_adv < 0.0) throw ValidationError("train: lambda_adv must be >= 0");
    if (config.adv_steps_per_vae_step < 1) {
        throw ValidationError("train: adv_steps_per_vae_step must be >= 1");
    }
    if (config.attributes.empty()) {
        throw ValidationError("train: attribute list must not be empty");
    }
    for (const auto& attr : config.attributes) {
        const bool known = (attr.name == "sex" && attr.kind == BranchKind::binary) ||
                           (attr.name == "age" && attr.kind == BranchKind::continuous);
        if (!known) {
            throw ValidationError("train: unknown attribute '" + attr.name +
                                  "' (supported: sex, age)");
        }
    }
}

// Targets for one batch, in attribute order. Age targets are standardized so
// the continuous branch loss is commensurate with the binary one.
std::vector<std::pair<std::string, Vector>> batch_targets(
    const EmbeddingDataset& dataset, const std::vector<std::size_t>& rows,
    const std::vector<AttributeSpec>& attributes, double age_mean, double age_std) {
    std::vector<std::pair<std::string, Vector>> targets;
    for (const auto& attr : attributes) {
        Vector t(static_cast<Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const auto& rec = dataset.records[rows[r]];
            t[static_cast<Index>(r)] =
                attr.name == "sex" ? rec.sex : (rec.age - age_mean) / age_std;
        }
        targets.emplace_back(attr.name, std::move(t));
    }
    return targets;
}

Matrix batch_features(const EmbeddingDataset& dataset, const std::vector<std::size_t>& rows) {
    Matrix x(static_cast<Index>(rows.size()), dataset.dimension);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        x.row(static_cast<Index>(r)) = dataset.records[rows[r]].features.transpose();
    }
    return x;
}

} // namespace

double adversary_update_step(AdversaryParams& adversary, std::vector<AdamState>& opt,
                             const Matrix& z,
                             const std::vector<std::pair<std::string, Vector>>& targets,
                             double lr_adv) {
    const AdversaryForward fwd = adversary_forward(adversary, z);
    const AdversaryLoss loss = adversary_loss(adversary, fwd, targets);
    adversary_backward(adversary, fwd, targets, 1.0, /*accumulate_params=*/true);
    std::size_t slot = 0;
    for (auto& branch : adversary.branches) {
        for (std::size_t l = 0; l < branch.layers.size(); ++l) {
            adam_step(branch.layers[l], opt.at(slot), lr_adv,
                      "adversary/" + branch.attribute + "/layer" + std::to_string(l));
            ++slot;
        }
    }
    return loss.total;
}

StepLosses vae_update_step(VaeParams& vae, std::vector<AdamState>& opt,
                           const AdversaryParams& adversary, const Matrix& x, const Matrix& eps,
                           const std::vector<std::pair<std::string, Vector>>& targets,
                           double beta_kl, double lambda_adv, double lr_vae) {
    const VaeCache cache = vae_forward(vae, x, eps);

    StepLosses losses;
    losses.recon = recon_loss(cache.x, cache.x_hat);
    losses.kl = kl_loss(cache.mu, cache.logvar);

    const Matrix d_xhat = recon_loss_grad(cache.x, cache.x_hat);
    Matrix d_mu_kl, d_logvar_kl;
    kl_loss_grad(cache.mu, cache.logvar, d_mu_kl, d_logvar_kl);

    Matrix d_z_adv;
    if (lambda_adv != 0.0) {
        const AdversaryForward fwd = adversary_forward(adversary, cache.z);
        losses.adv = adversary_loss(adversary, fwd, targets).total;
        d_z_adv = adversary_input_grad(adversary, fwd, targets, -lambda_adv);
    } else {
        // Still recorded, but the adversary never influences this update.
        const AdversaryForward fwd = adversary_forward(adversary, cache.z);
        losses.adv = adversary_loss(adversary, fwd, targets).total;
    }
    losses.objective = losses.recon + beta_kl * losses.kl - lambda_adv * losses.adv;

    vae_backward(vae, cache, d_xhat, d_z_adv, beta_kl * d_mu_kl, beta_kl * d_logvar_kl);
    adam_step(vae.enc_mu, opt.at(0), lr_vae, "vae/enc_mu");
    adam_step(vae.enc_logvar, opt.at(1), lr_vae, "vae/enc_logvar");
    adam_step(vae.dec, opt.at(2), lr_vae, "vae/dec");
    return losses;
}

Checkpoint train(const EmbeddingDataset& input, const TrainConfig& config) {
    validate_config(config);

    const EmbeddingDataset dataset =
        input.standardization ? input : standardize_fit_transform(input);
    const auto train_rows = dataset.split_indices(Split::train);
    if (train_rows.empty()) {
        throw ValidationError("train: train split is empty");
    }

    Checkpoint ckpt;
    ckpt.config = config;
    ckpt.standardization = *dataset.standardization;

    // Continuous-target scaling on the train split.
    double age_sum = 0.0;
    for (const auto i : train_rows) age_sum += dataset.records[i].age;
    ckpt.age_mean = age_sum / static_cast<double>(train_rows.size());
    double age_var = 0.0;
    for (const auto i : train_rows) {
        const double d = dataset.records[i].age - ckpt.age_mean;
        age_var += d * d;
    }
    ckpt.age_std = std::max(std::sqrt(age_var / static_cast<double>(train_rows.size())), 1e-8);

    SeededRng init_rng(config.seed, "init");
    ckpt.vae = VaeParams::init(dataset.dimension, config.latent_dim, init_rng);
    ckpt.adversary = AdversaryParams::init(config.latent_dim, config.attributes,
                                           config.adversary_hidden, init_rng);

    std::vector<AdamState> vae_opt = {AdamState(ckpt.vae.enc_mu), AdamState(ckpt.vae.enc_logvar),
                                      AdamState(ckpt.vae.dec)};
    AdamConfig adv_adam;
    adv_adam.beta1 = config.adv_adam_beta1;
    std::vector<AdamState> adv_opt;
    for (const auto& branch : ckpt.adversary.branches) {
        for (const auto& layer : branch.layers) {
            adv_opt.emplace_back(layer, adv_adam);
        }
    }

    VaeParams vae_ema = ckpt.vae;
    const bool use_ema = config.ema_decay > 0.0;
    const auto ema_update = [&](AffineLayer& avg, const AffineLayer& now) {
        avg.weight = config.ema_decay * avg.weight + (1.0 - config.ema_decay) * now.weight;
        avg.bias = config.ema_decay * avg.bias + (1.0 - config.ema_decay) * now.bias;
    };

    SeededRng shuffle_rng(config.seed, "shuffle");
    SeededRng reparam_rng(config.seed, "reparam");

    std::vector<std::size_t> order = train_rows;
    const double n_train = static_cast<double>(train_rows.size());

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_recon = 0.0, epoch_kl = 0.0, epoch_adv = 0.0, epoch_total = 0.0;

        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            const std::vector<std::size_t> rows(order.begin() + start, order.begin() + stop);
            const Matrix x = batch_features(dataset, rows);
            const Matrix eps =
                reparam_rng.standard_normal(static_cast<Index>(rows.size()), config.latent_dim);
            const auto targets =
                batch_targets(dataset, rows, config.attributes, ckpt.age_mean, ckpt.age_std);

            // Step A: the encoder is frozen, so the latent batch is fixed
            // across the repeated adversary updates.
            const Encoded enc = encode(ckpt.vae, x);
            const Matrix z = reparameterize(enc.mu, enc.logvar, eps);
            for (int k = 0; k < config.adv_steps_per_vae_step; ++k) {
                adversary_update_step(ckpt.adversary, adv_opt, z, targets, config.lr_adv);
            }

            // Step B.
            const StepLosses losses =
                vae_update_step(ckpt.vae, vae_opt, ckpt.adversary, x, eps, targets,
                                config.beta_kl, config.lambda_adv, config.lr_vae);
            if (!std::isfinite(losses.objective)) {
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(start / config.batch_size) +
                                   " (recon=" + std::to_string(losses.recon) +
                                   ", kl=" + std::to_string(losses.kl) +
                                   ", adv=" + std::to_string(losses.adv) + ")");
            }
            if (use_ema) {
                ema_update(vae_ema.enc_mu, ckpt.vae.enc_mu);
                ema_update(vae_ema.enc_logvar, ckpt.vae.enc_logvar);
                ema_update(vae_ema.dec, ckpt.vae.dec);
            }
            const double w = static_cast<double>(rows.size());
            epoch_recon += w * losses.recon;
            epoch_kl += w * losses.kl;
            epoch_adv += w * losses.adv;
            epoch_total += w * losses.objective;
        }

        ckpt.history.recon.push_back(epoch_recon / n_train);
        ckpt.history.kl.push_back(epoch_kl / n_train);
        ckpt.history.adv.push_back(epoch_adv / n_train);
        ckpt.history.total.push_back(epoch_total / n_train);
        ckpt.epoch = epoch + 1;
    }
    if (use_ema) {
        ckpt.vae = std::move(vae_ema);
    }
    return ckpt;
}

EmbeddingDataset transform_dataset(const Checkpoint& checkpoint, const EmbeddingDataset& input,
                                   const TransformMode& mode) {
    if (input.dimension != checkpoint.vae.input_dim()) {
        throw ShapeError("transform_dataset: dataset dimension " +
                         std::to_string(input.dimension) + " does not match checkpoint input " +
                         std::to_string(checkpoint.vae.input_dim()));
    }
    EmbeddingDataset standardized;
    if (input.standardization) {
        if (input.standardization->mean != checkpoint.standardization.mean ||
            input.standardization->stddev != checkpoint.standardization.stddev) {
            throw ValidationError(
                "transform_dataset: dataset was standardized with different parameters "
                "than the checkpoint");
        }
        standardized = input;
    } else {
        standardized = standardize_apply(input, checkpoint.standardization);
    }

    const Index n = static_cast<Index>(standardized.records.size());
    Matrix x(n, standardized.dimension);
    for (Index i = 0; i < n; ++i) {
        x.row(i) = standardized.records[static_cast<std::size_t>(i)].features.transpose();
    }

    const Encoded enc = encode(checkpoint.vae, x);
    Matrix z;
    if (mode.deterministic) {
        z = enc.mu;
    } else {
        SeededRng rng(checkpoint.config.seed, "reparam");
        z = reparameterize(enc.mu, enc.logvar, rng.standard_normal(n, enc.mu.cols()));
    }

    EmbeddingDataset out = input;
    out.standardization.reset();
    if (mode.output_space == OutputSpace::reconstruction) {
        const Matrix x_hat = decode(checkpoint.vae, z);
        for (Index i = 0; i < n; ++i) {
            out.records[static_cast<std::size_t>(i)].features =
                (x_hat.row(i).transpose().array() * checkpoint.standardization.stddev.array() +
                 checkpoint.standardization.mean.array())
                    .matrix();
        }
    } else {
        out.dimension = z.cols();
        for (Index i = 0; i < n; ++i) {
            out.records[static_cast<std::size_t>(i)].features = z.row(i).transpose();
        }
    }
    return out;
}

namespace {

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Index c = 0; c < m.cols(); ++c) {
            row.push_back(m(r, c));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& j) {
    const auto rows = static_cast<Index>(j.size());
    if (rows == 0) return Matrix(0, 0);
    const auto cols = static_cast<Index>(j.at(0).size());
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r) {
        const auto& row = j.at(static_cast<std::size_t>(r));
        if (static_cast<Index>(row.size()) != cols) {
            throw ParseError("checkpoint: ragged matrix rows");
        }
        for (Index c = 0; c < cols; ++c) {
            m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
        }
    }
    return m;
}

json vector_to_json(const Vector& v) {
    json arr = json::array();
    for (Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

Vector vector_from_json(const json& j) {
    Vector v(static_cast<Index>(j.size()));
    for (Index i = 0; i < v.size(); ++i) {
        v[i] = j.at(static_cast<std::size_t>(i)).get<double>();
    }
    return v;
}

json layer_to_json(const AffineLayer& layer) {
    return json{{"weight", matrix_to_json(layer.weight)}, {"bias", vector_to_json(layer.bias)}};
}

AffineLayer layer_from_json(const json& j) {
    AffineLayer layer;
    layer.weight = matrix_from_json(j.at("weight"));
    layer.bias = vector_from_json(j.at("bias"));
    layer.grad_weight = Matrix::Zero(layer.weight.rows(), layer.weight.cols());
    layer.grad_bias = Vector::Zero(layer.bias.size());
    return layer;
}

} // namespace

std::string checkpoint_to_json(const Checkpoint& ckpt) {
    json attributes = json::array();
    for (const auto& attr : ckpt.config.attributes) {
        attributes.push_back({{"name", attr.name}, {"kind", to_string(attr.kind)}});
    }
    json branches = json::array();
    for (const auto& branch : ckpt.adversary.branches) {
        json layers = json::array();
        for (const auto& layer : branch.layers) layers.push_back(layer_to_json(layer));
        branches.push_back({{"attribute", branch.attribute},
                            {"kind", to_string(branch.kind)},
                            {"layers", std::move(layers)}});
    }
    const json j{
        {"format_version", ckpt.format_version},
        {"config",
         {{"epochs", ckpt.config.epochs},
          {"batch_size", ckpt.config.batch_size},
          {"lr_vae", ckpt.config.lr_vae},
          {"lr_adv", ckpt.config.lr_adv},
          {"latent_dim", ckpt.config.latent_dim},
          {"beta_kl", ckpt.config.beta_kl},
          {"lambda_adv", ckpt.config.lambda_adv},
          {"adv_steps_per_vae_step", ckpt.config.adv_steps_per_vae_step},
          {"seed", ckpt.config.seed},
          {"attributes", std::move(attributes)},
          {"adversary_hidden", ckpt.config.adversary_hidden},
          {"adv_adam_beta1", ckpt.config.adv_adam_beta1},
          {"ema_decay", ckpt.config.ema_decay}}},
        {"standardization",
         {{"mean", vector_to_json(ckpt.standardization.mean)},
          {"stddev", vector_to_json(ckpt.standardization.stddev)}}},
        {"age_mean", ckpt.age_mean},
        {"age_std", ckpt.age_std},
        {"epoch", ckpt.epoch},
        {"history",
         {{"recon", ckpt.history.recon},
          {"kl", ckpt.history.kl},
          {"adv", ckpt.history.adv},
          {"total", ckpt.history.total}}},
        {"vae",
         {{"enc_mu", layer_to_json(ckpt.vae.enc_mu)},
          {"enc_logvar", layer_to_json(ckpt.vae.enc_logvar)},
          {"dec", layer_to_json(ckpt.vae.dec)}}},
        {"adversary",
         {{"input_dim", ckpt.adversary.input_dim}, {"branches", std::move(branches)}}}};
    return j.dump();
}

Checkpoint checkpoint_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("checkpoint parse error: ") + e.what());
    }
    try {
        const int version = j.at("format_version").get<int>();
        if (version != kCheckpointFormatVersion) {
            throw ValidationError("checkpoint format version " + std::to_string(version) +
                                  " unsupported; this build reads version " +
                                  std::to_string(kCheckpointFormatVersion));
        }
        Checkpoint ckpt;
        const auto& jc = j.at("config");
        ckpt.config.epochs = jc.at("epochs").get<int>();
        ckpt.config.batch_size = jc.at("batch_size").get<int>();
        ckpt.config.lr_vae = jc.at("lr_vae").get<double>();
        ckpt.config.lr_adv = jc.at("lr_adv").get<double>();
        ckpt.config.latent_dim = jc.at("latent_dim").get<Index>();
        ckpt.config.beta_kl = jc.at("beta_kl").get<double>();
        ckpt.config.lambda_adv = jc.at("lambda_adv").get<double>();
        ckpt.config.adv_steps_per_vae_step = jc.at("adv_steps_per_vae_step").get<int>();
        ckpt.config.seed = jc.at("seed").get<std::uint64_t>();
        ckpt.config.attributes.clear();
        for (const auto& ja : jc.at("attributes")) {
            ckpt.config.attributes.push_back({ja.at("name").get<std::string>(),
                                              branch_kind_from_string(ja.at("kind"))});
        }
        ckpt.config.adversary_hidden = jc.at("adversary_hidden").get<std::vector<Index>>();
        ckpt.config.adv_adam_beta1 = jc.at("adv_adam_beta1").get<double>();
        ckpt.config.ema_decay = jc.at("ema_decay").get<double>();

        ckpt.standardization.mean = vector_from_json(j.at("standardization").at("mean"));
        ckpt.standardization.stddev = vector_from_json(j.at("standardization").at("stddev"));
        ckpt.age_mean = j.at("age_mean").get<double>();
        ckpt.age_std = j.at("age_std").get<double>();
        ckpt.epoch = j.at("epoch").get<int>();
        ckpt.history.recon = j.at("history").at("recon").get<std::vector<double>>();
        ckpt.history.kl = j.at("history").at("kl").get<std::vector<double>>();
        ckpt.history.adv = j.at("history").at("adv").get<std::vector<double>>();
        ckpt.history.total = j.at("history").at("total").get<std::vector<double>>();

        ckpt.vae.enc_mu = layer_from_json(j.at("vae").at("enc_mu"));
        ckpt.vae.enc_logvar = layer_from_json(j.at("vae").at("enc_logvar"));
        ckpt.vae.dec = layer_from_json(j.at("vae").at("dec"));

        ckpt.adversary.input_dim = j.at("adversary").at("input_dim").get<Index>();
        for (const auto& jb : j.at("adversary").at("branches")) {
            AdversaryBranch branch;
            branch.attribute = jb.at("attribute").get<std::string>();
            branch.kind = branch_kind_from_string(jb.at("kind"));
            for (const auto& jl : jb.at("layers")) {
                branch.layers.push_back(layer_from_json(jl));
            }
            ckpt.adversary.branches.push_back(std::move(branch));
        }
        return ckpt;
    } catch (const json::exception& e) {
        throw ParseError(std::string("checkpoint field error: ") + e.what());
    }
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    atomic_write_file(path, checkpoint_to_json(checkpoint) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return checkpoint_from_json(read_file(path));
}

} // namespace debias
