#pragma once

#include "debias/data.hpp"
#include "debias/trainer.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace debias {

// Labels a logistic probe can be trained against.
enum class BinaryTarget { sex, cancer_1y, cancer_2y };

const char* to_string(BinaryTarget target);
BinaryTarget binary_target_for(Task task);

// Linear classifier fitted by full-batch gradient descent (lr 0.1, at most
// 500 iterations, stop when the gradient norm drops below 1e-6, zero init)
// on internally standardized features. Trained on the train split only.
struct LogisticProbe {
    Vector weights;
    double bias = 0.0;
    Vector feature_mean;
    Vector feature_std;
    int iterations = 0;
    double final_loss = 0.0;
};

LogisticProbe fit_logistic_probe(const EmbeddingDataset& dataset, BinaryTarget target);
Vector probe_scores(const LogisticProbe& probe, const EmbeddingDataset& dataset, Split split);

// Ordinary least squares against age via normal equations with ridge damping
// 1e-6 on the Gram matrix (bias column included). Train split only.
struct LinearProbe {
    Vector weights;
    double bias = 0.0;
};

LinearProbe fit_linear_probe(const EmbeddingDataset& dataset);
Vector probe_predictions(const LinearProbe& probe, const EmbeddingDataset& dataset, Split split);

// Probability that a random positive outranks a random negative; ties count
// one half (rank-statistic formulation). Requires both classes.
double auc(const Vector& scores, const Vector& labels);
// Fraction correct at the threshold; a score equal to the threshold is
// predicted positive.
double accuracy(const Vector& scores, const Vector& labels, double threshold = 0.5);
double mae(const Vector& predictions, const Vector& targets);

// Equal Opportunity Difference: |TPR_a - TPR_b| at the threshold. A group
// without positives yields an undefined (flagged) result rather than 0.
struct EodResult {
    bool defined = false;
    std::optional<double> value;
    std::optional<double> tpr_group0;
    std::optional<double> tpr_group1;
};

EodResult eod(const Vector& scores, const Vector& labels, const std::vector<int>& groups,
              double threshold = 0.5);

struct EvalConfig {
    double threshold = 0.5;
    std::vector<Task> tasks = {Task::cancer_1y, Task::cancer_2y};
};

struct TaskMetrics {
    double auc = 0.0;
    double accuracy = 0.0;
    EodResult eod_sex;
    EodResult eod_age;
};

struct DatasetEval {
    std::string label; // "original" | "debiased" | custom
    double sex_auc = 0.0;
    double sex_accuracy = 0.0;
    double age_mae = 0.0;
    std::map<std::string, TaskMetrics> tasks;
};

// Fits all probes on the dataset's train split and evaluates on its test
// split; age groups come from the given train-median grouping.
DatasetEval evaluate_dataset(const EmbeddingDataset& dataset, const AgeGrouping& age_groups,
                             const std::string& label, const EvalConfig& config = {});

struct FairnessReport {
    int format_version = 1;
    double age_threshold = 0.0;
    double eod_threshold = 0.5;
    DatasetEval original;
    DatasetEval debiased;
};

// Before/after comparison; the datasets must share record ids, labels,
// demographics and splits.
FairnessReport fairness_report(const EmbeddingDataset& original, const EmbeddingDataset& debiased,
                               const EvalConfig& config = {});

std::string fairness_report_to_json(const FairnessReport& report);
FairnessReport fairness_report_from_json(const std::string& text);
std::string dataset_eval_to_json(const DatasetEval& eval, double age_threshold,
                                 double eod_threshold);

struct SweepRow {
    Index latent_dim = 0;
    double sex_auc = 0.0;
    double age_mae = 0.0;
    double task1_auc = 0.0;
    double task2_auc = 0.0;
};

struct SweepResult {
    int format_version = 1;
    std::vector<SweepRow> rows; // ordered by latent_dim ascending
};

// Trains one debiaser per latent dimension (shared seed) and evaluates the
// debiased embeddings with the standard probes.
SweepResult latent_sweep(const EmbeddingDataset& dataset, std::vector<Index> dims,
                         const TrainConfig& base_config);

std::string sweep_to_json(const SweepResult& result);
std::string sweep_to_csv(const SweepResult& result);

} // namespace debias
