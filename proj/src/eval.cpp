#include "debias/eval.hpp"

#include "debias/errors.hpp"
#include "debias/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

using nlohmann::json;

namespace debias {

const char* to_string(BinaryTarget target) {
    switch (target) {
    case BinaryTarget::sex: return "sex";
    case BinaryTarget::cancer_1y: return "cancer_1y";
    default: return "cancer_2y";
    }
}

BinaryTarget binary_target_for(Task task) {
    return task == Task::cancer_1y ? BinaryTarget::cancer_1y : BinaryTarget::cancer_2y;
}

namespace {

constexpr double kProbeLr = 0.1;
constexpr int kProbeMaxIterations = 500;
constexpr double kProbeGradTol = 1e-6;
constexpr double kRidgeDamping = 1e-6;
constexpr double kStdFloor = 1e-8;

Vector labels_for(const EmbeddingDataset& dataset, Split split, BinaryTarget target) {
    switch (target) {
    case BinaryTarget::sex: return dataset.sex_of(split);
    case BinaryTarget::cancer_1y: return dataset.task_labels_of(split, Task::cancer_1y);
    default: return dataset.task_labels_of(split, Task::cancer_2y);
    }
}

Vector sigmoid(const Vector& x) {
    return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

double mean_bce(const Vector& p, const Vector& y) {
    const auto pc = p.array().min(1.0 - 1e-12).max(1e-12);
    return -(y.array() * pc.log() + (1.0 - y.array()) * (1.0 - pc).log()).mean();
}

} // namespace

LogisticProbe fit_logistic_probe(const EmbeddingDataset& dataset, BinaryTarget target) {
    const Matrix x_raw = dataset.features_of(Split::train);
    const Vector y = labels_for(dataset, Split::train, target);
    const Index n = x_raw.rows();
    if (n == 0) {
        throw ValidationError("fit_logistic_probe: train split is empty");
    }
    const double positives = y.sum();
    if (positives == 0.0 || positives == static_cast<double>(n)) {
        throw ValidationError(std::string("fit_logistic_probe: train split has a single class for '") +
                              to_string(target) + "'");
    }

    LogisticProbe probe;
    probe.feature_mean = x_raw.colwise().mean().transpose();
    probe.feature_std =
        ((x_raw.rowwise() - probe.feature_mean.transpose()).array().square().colwise().mean())
            .sqrt()
            .max(kStdFloor)
            .transpose();
    const Matrix x = ((x_raw.rowwise() - probe.feature_mean.transpose()).array().rowwise() /
                      probe.feature_std.transpose().array())
                         .matrix();

    probe.weights = Vector::Zero(x.cols());
    probe.bias = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (int it = 0; it < kProbeMaxIterations; ++it) {
        const Vector p = sigmoid(x * probe.weights + Vector::Constant(n, probe.bias));
        const Vector residual = p - y;
        const Vector grad_w = inv_n * (x.transpose() * residual);
        const double grad_b = residual.mean();
        const double grad_norm = std::sqrt(grad_w.squaredNorm() + grad_b * grad_b);
        if (grad_norm < kProbeGradTol) break;
        probe.weights -= kProbeLr * grad_w;
        probe.bias -= kProbeLr * grad_b;
        probe.iterations = it + 1;
    }
    probe.final_loss = mean_bce(sigmoid(x * probe.weights + Vector::Constant(n, probe.bias)), y);
    return probe;
}

Vector probe_scores(const LogisticProbe& probe, const EmbeddingDataset& dataset, Split split) {
    const Matrix x_raw = dataset.features_of(split);
    if (x_raw.cols() != probe.weights.size()) {
        throw ShapeError("probe_scores: probe expects dimension " +
                         std::to_string(probe.weights.size()) + ", dataset has " +
                         std::to_string(x_raw.cols()));
    }
    const Matrix x = ((x_raw.rowwise() - probe.feature_mean.transpose()).array().rowwise() /
                      probe.feature_std.transpose().array())
                         .matrix();
    return sigmoid(x * probe.weights + Vector::Constant(x.rows(), probe.bias));
}

LinearProbe fit_linear_probe(const EmbeddingDataset& dataset) {
    const Matrix x = dataset.features_of(Split::train);
    const Vector y = dataset.ages_of(Split::train);
    if (x.rows() == 0) {
        throw ValidationError("fit_linear_probe: train split is empty");
    }
    const Index d = x.cols();
    Matrix design(x.rows(), d + 1);
    design.leftCols(d) = x;
    design.col(d).setOnes();
    Matrix gram = design.transpose() * design;
    gram.diagonal().array() += kRidgeDamping;
    const Vector solution = gram.ldlt().solve(design.transpose() * y);
    LinearProbe probe;
    probe.weights = solution.head(d);
    probe.bias = solution[d];
    return probe;
}

Vector probe_predictions(const LinearProbe& probe, const EmbeddingDataset& dataset, Split split) {
    const Matrix x = dataset.features_of(split);
    if (x.cols() != probe.weights.size()) {
        throw ShapeError("probe_predictions: probe expects dimension " +
                         std::to_string(probe.weights.size()) + ", dataset has " +
                         std::to_string(x.cols()));
    }
    return (x * probe.weights).array() + probe.bias;
}

double auc(const Vector& scores, const Vector& labels) {
    if (scores.size() != labels.size()) {
        throw ShapeError("auc: " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(labels.size()) + " labels");
    }
    const Index n = scores.size();
    double n_pos = 0.0;
    for (Index i = 0; i < n; ++i) {
        if (labels[i] != 0.0 && labels[i] != 1.0) {
            throw ValidationError("auc: labels must be 0 or 1");
        }
        n_pos += labels[i];
    }
    const double n_neg = static_cast<double>(n) - n_pos;
    if (n_pos == 0.0 || n_neg == 0.0) {
        throw ValidationError("auc: both classes must be present");
    }

    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(),
              [&](Index a, Index b) { return scores[a] < scores[b]; });

    // Average ranks within tie groups, then the Mann-Whitney statistic.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k) {
            if (labels[order[k]] == 1.0) rank_sum_pos += avg_rank;
        }
        i = j + 1;
    }
    const double u = rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0;
    return u / (n_pos * n_neg);
}

double accuracy(const Vector& scores, const Vector& labels, double threshold) {
    if (scores.size() != labels.size() || scores.size() == 0) {
        throw ShapeError("accuracy: needs equal-length, non-empty scores and labels");
    }
    double correct = 0.0;
    for (Index i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] >= threshold;
        if (predicted == (labels[i] == 1.0)) correct += 1.0;
    }
    return correct / static_cast<double>(scores.size());
}

double mae(const Vector& predictions, const Vector& targets) {
    if (predictions.size() != targets.size() || predictions.size() == 0) {
        throw ShapeError("mae: needs equal-length, non-empty predictions and targets");
    }
    return (predictions - targets).array().abs().mean();
}

EodResult eod(const Vector& scores, const Vector& labels, const std::vector<int>& groups,
              double threshold) {
    if (scores.size() != labels.size() ||
        static_cast<std::size_t>(scores.size()) != groups.size()) {
        throw ShapeError("eod: scores, labels and groups must have equal length");
    }
    double pos[2] = {0.0, 0.0};
    double flagged[2] = {0.0, 0.0};
    for (Index i = 0; i < scores.size(); ++i) {
        const int g = groups[static_cast<std::size_t>(i)];
        if (g != 0 && g != 1) {
            throw ValidationError("eod: group tags must be 0 or 1");
        }
        if (labels[i] == 1.0) {
            pos[g] += 1.0;
            if (scores[i] >= threshold) flagged[g] += 1.0;
        }
    }
    EodResult result;
    if (pos[0] > 0.0) result.tpr_group0 = flagged[0] / pos[0];
    if (pos[1] > 0.0) result.tpr_group1 = flagged[1] / pos[1];
    if (result.tpr_group0 && result.tpr_group1) {
        result.defined = true;
        result.value = std::abs(*result.tpr_group0 - *result.tpr_group1);
    }
    return result;
}

namespace {

std::vector<int> subset(const std::vector<int>& all, const std::vector<std::size_t>& idx) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (const auto i : idx) out.push_back(all[i]);
    return out;
}

} // namespace

DatasetEval evaluate_dataset(const EmbeddingDataset& dataset, const AgeGrouping& age_groups,
                             const std::string& label, const EvalConfig& config) {
    if (age_groups.is_old.size() != dataset.records.size()) {
        throw ShapeError("evaluate_dataset: age grouping covers " +
                         std::to_string(age_groups.is_old.size()) + " records, dataset has " +
                         std::to_string(dataset.records.size()));
    }
    DatasetEval eval;
    eval.label = label;

    const auto test_idx = dataset.split_indices(Split::test);
    const std::vector<int> sex_groups = [&] {
        std::vector<int> g;
        g.reserve(test_idx.size());
        for (const auto i : test_idx) g.push_back(dataset.records[i].sex);
        return g;
    }();
    const std::vector<int> age_groups_test = subset(age_groups.is_old, test_idx);

    const LogisticProbe sex_probe = fit_logistic_probe(dataset, BinaryTarget::sex);
    const Vector sex_scores = probe_scores(sex_probe, dataset, Split::test);
    const Vector sex_labels = dataset.sex_of(Split::test);
    eval.sex_auc = auc(sex_scores, sex_labels);
    eval.sex_accuracy = accuracy(sex_scores, sex_labels, config.threshold);

    const LinearProbe age_probe = fit_linear_probe(dataset);
    eval.age_mae = mae(probe_predictions(age_probe, dataset, Split::test),
                       dataset.ages_of(Split::test));

    for (const Task task : config.tasks) {
        const LogisticProbe task_probe = fit_logistic_probe(dataset, binary_target_for(task));
        const Vector scores = probe_scores(task_probe, dataset, Split::test);
        const Vector labels = dataset.task_labels_of(Split::test, task);
        TaskMetrics metrics;
        metrics.auc = auc(scores, labels);
        metrics.accuracy = accuracy(scores, labels, config.threshold);
        metrics.eod_sex = eod(scores, labels, sex_groups, config.threshold);
        metrics.eod_age = eod(scores, labels, age_groups_test, config.threshold);
        eval.tasks[to_string(task)] = metrics;
    }
    return eval;
}

namespace {

void check_aligned(const EmbeddingDataset& a, const EmbeddingDataset& b) {
    if (a.records.size() != b.records.size()) {
        throw ValidationError("fairness_report: datasets have different sizes");
    }
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        const auto& ra = a.records[i];
        const auto& rb = b.records[i];
        if (ra.record_id != rb.record_id || ra.split != rb.split || ra.sex != rb.sex ||
            ra.age != rb.age || ra.cancer_1y != rb.cancer_1y || ra.cancer_2y != rb.cancer_2y) {
            throw ValidationError("fairness_report: datasets disagree at record '" +
                                  ra.record_id + "'");
        }
    }
}

} // namespace

FairnessReport fairness_report(const EmbeddingDataset& original, const EmbeddingDataset& debiased,
                               const EvalConfig& config) {
    check_aligned(original, debiased);
    const AgeGrouping age_groups = binarize_age(original);

    FairnessReport report;
    report.age_threshold = age_groups.threshold;
    report.eod_threshold = config.threshold;
    report.original = evaluate_dataset(original, age_groups, "original", config);
    report.debiased = evaluate_dataset(debiased, age_groups, "debiased", config);
    return report;
}

namespace {

json eod_to_json(const EodResult& e) {
    json j;
    j["defined"] = e.defined;
    j["value"] = e.value ? json(*e.value) : json(nullptr);
    j["tpr_group0"] = e.tpr_group0 ? json(*e.tpr_group0) : json(nullptr);
    j["tpr_group1"] = e.tpr_group1 ? json(*e.tpr_group1) : json(nullptr);
    return j;
}

EodResult eod_from_json(const json& j) {
    EodResult e;
    e.defined = j.at("defined").get<bool>();
    if (!j.at("value").is_null()) e.value = j.at("value").get<double>();
    if (!j.at("tpr_group0").is_null()) e.tpr_group0 = j.at("tpr_group0").get<double>();
    if (!j.at("tpr_group1").is_null()) e.tpr_group1 = j.at("tpr_group1").get<double>();
    return e;
}

json eval_to_json(const DatasetEval& eval) {
    json tasks;
    for (const auto& [name, metrics] : eval.tasks) {
        tasks[name] = {{"auc", metrics.auc},
                       {"accuracy", metrics.accuracy},
                       {"eod_sex", eod_to_json(metrics.eod_sex)},
                       {"eod_age", eod_to_json(metrics.eod_age)}};
    }
    return json{{"label", eval.label},
                {"sex_auc", eval.sex_auc},
                {"sex_accuracy", eval.sex_accuracy},
                {"age_mae", eval.age_mae},
                {"tasks", std::move(tasks)}};
}

DatasetEval eval_from_json(const json& j) {
    DatasetEval eval;
    eval.label = j.at("label").get<std::string>();
    eval.sex_auc = j.at("sex_auc").get<double>();
    eval.sex_accuracy = j.at("sex_accuracy").get<double>();
    eval.age_mae = j.at("age_mae").get<double>();
    for (const auto& [name, jm] : j.at("tasks").items()) {
        TaskMetrics metrics;
        metrics.auc = jm.at("auc").get<double>();
        metrics.accuracy = jm.at("accuracy").get<double>();
        metrics.eod_sex = eod_from_json(jm.at("eod_sex"));
        metrics.eod_age = eod_from_json(jm.at("eod_age"));
        eval.tasks[name] = metrics;
    }
    return eval;
}

} // namespace

std::string dataset_eval_to_json(const DatasetEval& eval, double age_threshold,
                                 double eod_threshold) {
    const json j{{"format_version", 1},
                 {"age_threshold", age_threshold},
                 {"eod_threshold", eod_threshold},
                 {"evaluation", eval_to_json(eval)}};
    return j.dump(2) + "\n";
}

std::string fairness_report_to_json(const FairnessReport& report) {
    const json j{{"format_version", report.format_version},
                 {"age_threshold", report.age_threshold},
                 {"eod_threshold", report.eod_threshold},
                 {"original", eval_to_json(report.original)},
                 {"debiased", eval_to_json(report.debiased)}};
    return j.dump(2) + "\n";
}

FairnessReport fairness_report_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("fairness report parse error: ") + e.what());
    }
    try {
        FairnessReport report;
        report.format_version = j.at("format_version").get<int>();
        if (report.format_version != 1) {
            throw ValidationError("fairness report format version " +
                                  std::to_string(report.format_version) +
                                  " unsupported; this build reads version 1");
        }
        report.age_threshold = j.at("age_threshold").get<double>();
        report.eod_threshold = j.at("eod_threshold").get<double>();
        report.original = eval_from_json(j.at("original"));
        report.debiased = eval_from_json(j.at("debiased"));
        return report;
    } catch (const json::exception& e) {
        throw ParseError(std::string("fairness report field error: ") + e.what());
    }
}

SweepResult latent_sweep(const EmbeddingDataset& dataset, std::vector<Index> dims,
                         const TrainConfig& base_config) {
    if (dims.empty()) {
        throw ValidationError("latent_sweep: dims must not be empty");
    }
    for (const Index dim : dims) {
        if (dim < 1 || dim > dataset.dimension) {
            throw ValidationError("latent_sweep: latent dim " + std::to_string(dim) +
                                  " outside [1, " + std::to_string(dataset.dimension) + "]");
        }
    }
    std::sort(dims.begin(), dims.end());

    SweepResult result;
    for (const Index dim : dims) {
        TrainConfig config = base_config;
        config.latent_dim = dim;
        const Checkpoint ckpt = train(dataset, config);
        const EmbeddingDataset debiased = transform_dataset(ckpt, dataset);
        const AgeGrouping age_groups = binarize_age(debiased);
        const DatasetEval eval = evaluate_dataset(debiased, age_groups, "debiased");

        SweepRow row;
        row.latent_dim = dim;
        row.sex_auc = eval.sex_auc;
        row.age_mae = eval.age_mae;
        row.task1_auc = eval.tasks.at("cancer_1y").auc;
        row.task2_auc = eval.tasks.at("cancer_2y").auc;
        result.rows.push_back(row);
    }
    return result;
}

std::string sweep_to_json(const SweepResult& result) {
    json rows = json::array();
    for (const auto& row : result.rows) {
        rows.push_back({{"latent_dim", row.latent_dim},
                        {"sex_auc", row.sex_auc},
                        {"age_mae", row.age_mae},
                        {"task1_auc", row.task1_auc},
                        {"task2_auc", row.task2_auc}});
    }
    const json j{{"format_version", result.format_version}, {"rows", std::move(rows)}};
    return j.dump(2) + "\n";
}

std::string sweep_to_csv(const SweepResult& result) {
    std::string out = "latent_dim,sex_auc,age_mae,task1_auc,task2_auc\n";
    for (const auto& row : result.rows) {
        out += std::to_string(row.latent_dim);
        out += ',';
        out += format_double(row.sex_auc);
        out += ',';
        out += format_double(row.age_mae);
        out += ',';
        out += format_double(row.task1_auc);
        out += ',';
        out += format_double(row.task2_auc);
        out += '\n';
    }
    return out;
}

} // namespace debias
