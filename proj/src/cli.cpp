#include "debias/cli.hpp"

#include "debias/data.hpp"
#include "debias/errors.hpp"
#include "debias/eval.hpp"
#include "debias/io.hpp"
#include "debias/poison_bench.hpp"
#include "debias/trainer.hpp"
#include "debias/version.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>

using nlohmann::json;

namespace debias {

namespace {

namespace fs = std::filesystem;

// Every artifact-producing run drops a manifest next to its outputs so the
// run is reproducible from the manifest alone.
void write_manifest(const fs::path& anchor, const std::string& command, const json& config,
                    const std::vector<std::string>& outputs) {
    json j{{"tool", kToolName},
           {"version", kToolVersion},
           {"command", command},
           {"config", config},
           {"outputs", outputs}};
    fs::path path = anchor;
    path += ".manifest.json";
    atomic_write_file(path, j.dump(2) + "\n");
}

std::string join_tasks(const std::vector<Task>& tasks) {
    std::string out;
    for (const auto task : tasks) {
        if (!out.empty()) out += ',';
        out += to_string(task);
    }
    return out;
}

struct SynthOptions {
    SynthConfig config;
    std::string out;
};

void add_synth(CLI::App& app, SynthOptions& opt) {
    auto* cmd = app.add_subcommand("synth", "Generate a synthetic embedding dataset");
    cmd->add_option("--out", opt.out, "Output CSV path")->required();
    cmd->add_option("--n-train", opt.config.n_train, "Training records")->capture_default_str();
    cmd->add_option("--n-test", opt.config.n_test, "Test records")->capture_default_str();
    cmd->add_option("--dim", opt.config.dimension, "Feature dimension")->capture_default_str();
    cmd->add_option("--sex-strength", opt.config.sex_strength, "Sex signal strength")
        ->capture_default_str();
    cmd->add_option("--age-strength", opt.config.age_strength, "Age signal strength")
        ->capture_default_str();
    cmd->add_option("--task-strength", opt.config.task_strength, "Task signal strength")
        ->capture_default_str();
    cmd->add_option("--task-group-bias", opt.config.task_group_bias,
                    "Logit-scale label-rate shift between sexes")
        ->capture_default_str();
    cmd->add_option("--overlap-dims", opt.config.overlap_dims,
                    "Task dims that also carry the sex signal")
        ->capture_default_str();
    cmd->add_option("--noise-sigma", opt.config.noise_sigma, "Noise scale")
        ->capture_default_str();
    cmd->add_option("--seed", opt.config.seed, "Random seed")->capture_default_str();
}

int run_synth(const SynthOptions& opt) {
    const EmbeddingDataset dataset = synth_generate(opt.config);
    write_csv(dataset, opt.out);
    const json config{{"n_train", opt.config.n_train},
                      {"n_test", opt.config.n_test},
                      {"dimension", opt.config.dimension},
                      {"sex_strength", opt.config.sex_strength},
                      {"age_strength", opt.config.age_strength},
                      {"task_strength", opt.config.task_strength},
                      {"task_group_bias", opt.config.task_group_bias},
                      {"overlap_dims", opt.config.overlap_dims},
                      {"noise_sigma", opt.config.noise_sigma},
                      {"seed", opt.config.seed}};
    write_manifest(opt.out, "synth", config, {opt.out});
    return 0;
}

struct TrainOptions {
    TrainConfig config;
    std::string data;
    std::string out_checkpoint;
};

void add_train(CLI::App& app, TrainOptions& opt) {
    auto* cmd = app.add_subcommand("train", "Train the adversarial debiaser");
    cmd->add_option("--data", opt.data, "Input dataset CSV")->required();
    cmd->add_option("--out-checkpoint", opt.out_checkpoint, "Checkpoint output path")->required();
    cmd->add_option("--epochs", opt.config.epochs, "Training epochs")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--batch-size", opt.config.batch_size, "Batch size")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--lr-vae", opt.config.lr_vae, "Encoder/decoder learning rate")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--lr-adv", opt.config.lr_adv, "Adversary learning rate")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--latent-dim", opt.config.latent_dim, "Latent dimension")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--beta-kl", opt.config.beta_kl,
                    "KL weight (scale down for very wide inputs)")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--lambda-adv", opt.config.lambda_adv, "Adversarial weight")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--adv-steps", opt.config.adv_steps_per_vae_step,
                    "Adversary updates per encoder update")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed", opt.config.seed, "Random seed")->capture_default_str();
}

json train_config_to_json(const TrainConfig& c, const std::string& data) {
    return json{{"data", data},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"lr_vae", c.lr_vae},
                {"lr_adv", c.lr_adv},
                {"latent_dim", c.latent_dim},
                {"beta_kl", c.beta_kl},
                {"lambda_adv", c.lambda_adv},
                {"adv_steps_per_vae_step", c.adv_steps_per_vae_step},
                {"seed", c.seed}};
}

int run_train(const TrainOptions& opt) {
    const EmbeddingDataset dataset = load_csv(opt.data);
    const Checkpoint ckpt = train(dataset, opt.config);
    save_checkpoint(ckpt, opt.out_checkpoint);
    write_manifest(opt.out_checkpoint, "train", train_config_to_json(opt.config, opt.data),
                   {opt.out_checkpoint});
    std::cout << "trained " << ckpt.epoch << " epochs; final recon "
              << format_double(ckpt.history.recon.back()) << ", kl "
              << format_double(ckpt.history.kl.back()) << ", adv "
              << format_double(ckpt.history.adv.back()) << "\n";
    return 0;
}

struct TransformOptions {
    std::string checkpoint;
    std::string data;
    std::string out;
    std::string space = "reconstruction";
    bool stochastic = false;
};

void add_transform(CLI::App& app, TransformOptions& opt) {
    auto* cmd = app.add_subcommand("transform", "Apply a trained debiaser to a dataset");
    cmd->add_option("--checkpoint", opt.checkpoint, "Checkpoint path")->required();
    cmd->add_option("--data", opt.data, "Input dataset CSV")->required();
    cmd->add_option("--out", opt.out, "Output dataset CSV")->required();
    cmd->add_option("--space", opt.space, "Output space: reconstruction|latent")
        ->capture_default_str()
        ->check(CLI::IsMember({"reconstruction", "latent"}));
    cmd->add_flag("--stochastic", opt.stochastic, "Sample the latent instead of using the mean");
}

int run_transform(const TransformOptions& opt) {
    const Checkpoint ckpt = load_checkpoint(opt.checkpoint);
    const EmbeddingDataset dataset = load_csv(opt.data);
    TransformMode mode;
    mode.output_space = output_space_from_string(opt.space);
    mode.deterministic = !opt.stochastic;
    const EmbeddingDataset transformed = transform_dataset(ckpt, dataset, mode);
    write_csv(transformed, opt.out);
    const json config{{"checkpoint", opt.checkpoint},
                      {"data", opt.data},
                      {"space", opt.space},
                      {"stochastic", opt.stochastic},
                      {"seed", ckpt.config.seed}};
    write_manifest(opt.out, "transform", config, {opt.out});
    return 0;
}

struct ProbeOptions {
    std::string data;
    std::string out_report;
    std::string attributes = "sex,age";
    std::string tasks = "cancer_1y,cancer_2y";
};

std::vector<Task> parse_task_list(const std::string& csv) {
    std::vector<Task> tasks;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) tasks.push_back(task_from_string(item));
    }
    if (tasks.empty()) {
        throw ValidationError("--tasks: list must not be empty");
    }
    return tasks;
}

void add_probe(CLI::App& app, ProbeOptions& opt) {
    auto* cmd = app.add_subcommand("probe", "Run demographic and task probes on a dataset");
    cmd->add_option("--data", opt.data, "Dataset CSV")->required();
    cmd->add_option("--out-report", opt.out_report, "Report output path")->required();
    cmd->add_option("--attributes", opt.attributes, "Demographic attributes (sex,age)")
        ->capture_default_str();
    cmd->add_option("--tasks", opt.tasks, "Task list")->capture_default_str();
}

int run_probe(const ProbeOptions& opt) {
    if (opt.attributes != "sex,age" && opt.attributes != "sex" && opt.attributes != "age") {
        throw ValidationError("--attributes: expected sex,age (subsets: sex | age)");
    }
    const EmbeddingDataset dataset = load_csv(opt.data);
    EvalConfig config;
    config.tasks = parse_task_list(opt.tasks);
    const AgeGrouping age_groups = binarize_age(dataset);
    const DatasetEval eval = evaluate_dataset(dataset, age_groups, "dataset", config);
    atomic_write_file(opt.out_report,
                      dataset_eval_to_json(eval, age_groups.threshold, config.threshold));
    const json jconfig{{"data", opt.data},
                       {"attributes", opt.attributes},
                       {"tasks", join_tasks(config.tasks)}};
    write_manifest(opt.out_report, "probe", jconfig, {opt.out_report});
    return 0;
}

struct FairnessOptions {
    std::string original;
    std::string debiased;
    std::string out_report;
};

void add_fairness(CLI::App& app, FairnessOptions& opt) {
    auto* cmd =
        app.add_subcommand("fairness", "Compare probes and EOD before/after debiasing");
    cmd->add_option("--original", opt.original, "Original dataset CSV")->required();
    cmd->add_option("--debiased", opt.debiased, "Debiased dataset CSV")->required();
    cmd->add_option("--out-report", opt.out_report, "Report output path")->required();
}

int run_fairness(const FairnessOptions& opt) {
    const EmbeddingDataset original = load_csv(opt.original);
    const EmbeddingDataset debiased = load_csv(opt.debiased);
    const FairnessReport report = fairness_report(original, debiased);
    atomic_write_file(opt.out_report, fairness_report_to_json(report));
    const json config{{"original", opt.original}, {"debiased", opt.debiased}};
    write_manifest(opt.out_report, "fairness", config, {opt.out_report});
    return 0;
}

struct PoisonOptions {
    std::string original;
    std::string debiased;
    std::string out_dir;
    std::vector<double> fractions = {0.0, 0.25, 0.5, 0.75, 1.0};
    std::uint64_t seed = 0;
};

void add_poison(CLI::App& app, PoisonOptions& opt) {
    auto* cmd = app.add_subcommand("poison", "Label-flipping robustness sweep");
    cmd->add_option("--original", opt.original, "Original dataset CSV")->required();
    cmd->add_option("--debiased", opt.debiased, "Debiased dataset CSV")->required();
    cmd->add_option("--out-dir", opt.out_dir, "Output directory")->required();
    cmd->add_option("--fractions", opt.fractions, "Flip fractions, ascending")
        ->delimiter(',')
        ->capture_default_str();
    cmd->add_option("--seed", opt.seed, "Random seed")->capture_default_str();
}

int run_poison(const PoisonOptions& opt) {
    const EmbeddingDataset original = load_csv(opt.original);
    const EmbeddingDataset debiased = load_csv(opt.debiased);
    PoisonSweepConfig config;
    config.fractions = opt.fractions;
    config.seed = opt.seed;
    const PoisonCurve curve = run_poison_sweep(original, debiased, config);

    fs::create_directories(opt.out_dir);
    const fs::path dir(opt.out_dir);
    atomic_write_file(dir / "poison.csv", poison_curve_to_csv(curve));
    atomic_write_file(dir / "poison.json", poison_curve_to_json(curve));
    write_poison_charts(curve, dir);

    json fractions = json::array();
    for (const double f : config.fractions) fractions.push_back(f);
    const json jconfig{{"original", opt.original},
                       {"debiased", opt.debiased},
                       {"fractions", std::move(fractions)},
                       {"seed", opt.seed}};
    write_manifest(dir / "poison", "poison", jconfig,
                   {(dir / "poison.csv").string(), (dir / "poison.json").string()});
    return 0;
}

struct SweepOptions {
    TrainConfig config;
    std::string data;
    std::string out_dir;
    std::vector<Index> dims;
};

void add_sweep(CLI::App& app, SweepOptions& opt) {
    auto* cmd = app.add_subcommand("sweep", "Latent-dimension trade-off sweep");
    cmd->add_option("--data", opt.data, "Dataset CSV")->required();
    cmd->add_option("--dims", opt.dims, "Latent dimensions to test")->delimiter(',')->required();
    cmd->add_option("--out-dir", opt.out_dir, "Output directory")->required();
    cmd->add_option("--epochs", opt.config.epochs, "Training epochs")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--batch-size", opt.config.batch_size, "Batch size")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--lr-vae", opt.config.lr_vae, "Encoder/decoder learning rate")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--lr-adv", opt.config.lr_adv, "Adversary learning rate")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--beta-kl", opt.config.beta_kl, "KL weight")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--lambda-adv", opt.config.lambda_adv, "Adversarial weight")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--adv-steps", opt.config.adv_steps_per_vae_step,
                    "Adversary updates per encoder update")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed", opt.config.seed, "Random seed")->capture_default_str();
}

int run_sweep(const SweepOptions& opt) {
    const EmbeddingDataset dataset = load_csv(opt.data);
    const SweepResult result = latent_sweep(dataset, opt.dims, opt.config);

    fs::create_directories(opt.out_dir);
    const fs::path dir(opt.out_dir);
    atomic_write_file(dir / "sweep.csv", sweep_to_csv(result));
    atomic_write_file(dir / "sweep.json", sweep_to_json(result));

    json dims = json::array();
    for (const Index d : opt.dims) dims.push_back(d);
    json config = train_config_to_json(opt.config, opt.data);
    config["dims"] = std::move(dims);
    config.erase("latent_dim"); // swept, not fixed
    write_manifest(dir / "sweep", "sweep", config,
                   {(dir / "sweep.csv").string(), (dir / "sweep.json").string()});
    return 0;
}

} // namespace

int cli_run(const std::vector<std::string>& args) {
    CLI::App app{"Adversarial debiasing of embedding datasets"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);

    SynthOptions synth_opt;
    TrainOptions train_opt;
    TransformOptions transform_opt;
    ProbeOptions probe_opt;
    FairnessOptions fairness_opt;
    PoisonOptions poison_opt;
    SweepOptions sweep_opt;

    add_synth(app, synth_opt);
    add_train(app, train_opt);
    add_transform(app, transform_opt);
    add_probe(app, probe_opt);
    add_fairness(app, fairness_opt);
    add_poison(app, poison_opt);
    add_sweep(app, sweep_opt);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }

    try {
        if (app.got_subcommand("synth")) return run_synth(synth_opt);
        if (app.got_subcommand("train")) return run_train(train_opt);
        if (app.got_subcommand("transform")) return run_transform(transform_opt);
        if (app.got_subcommand("probe")) return run_probe(probe_opt);
        if (app.got_subcommand("fairness")) return run_fairness(fairness_opt);
        if (app.got_subcommand("poison")) return run_poison(poison_opt);
        if (app.got_subcommand("sweep")) return run_sweep(sweep_opt);
        std::cerr << "no subcommand given\n";
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return 2;
    }
}

} // namespace debias
