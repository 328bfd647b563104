#pragma once

#include "debias/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace debias {

enum class Split { train, test };

const char* to_string(Split split);
Split split_from_string(const std::string& s, int line_number);

// Downstream prediction horizons.
enum class Task { cancer_1y, cancer_2y };

const char* to_string(Task task);
Task task_from_string(const std::string& s);

struct EmbeddingRecord {
    std::string record_id;
    std::string patient_id;
    int sex = 0; // 0 = female, 1 = male
    double age = 0.0;
    int cancer_1y = 0;
    int cancer_2y = 0;
    Split split = Split::train;
    Vector features;

    int task_label(Task task) const { return task == Task::cancer_1y ? cancer_1y : cancer_2y; }
    void set_task_label(Task task, int value) {
        (task == Task::cancer_1y ? cancer_1y : cancer_2y) = value;
    }
};

struct Standardization {
    Vector mean;
    Vector stddev; // floored at 1e-8
};

// The universal currency of the pipeline. Immutable by convention: every
// transforming operation returns a new dataset.
struct EmbeddingDataset {
    Index dimension = 0;
    std::vector<EmbeddingRecord> records;
    std::optional<Standardization> standardization;

    std::vector<std::size_t> split_indices(Split split) const;
    // Rows are records of the given split, in record order.
    Matrix features_of(Split split) const;
    Vector ages_of(Split split) const;
    Vector sex_of(Split split) const;
    Vector task_labels_of(Split split, Task task) const;
};

// CSV schema: record_id,patient_id,sex,age,cancer_1y,cancer_2y,split,f0,...
// Dimension inferred from the header. Raises ParseError with a line number
// on schema violations and ValidationError on patient overlap across splits.
EmbeddingDataset load_csv(const std::filesystem::path& path);

// Inverse of load_csv; floats rendered with up to 17 significant digits so
// values round-trip exactly. Written atomically (temp file + rename).
void write_csv(const EmbeddingDataset& dataset, const std::filesystem::path& path);

// Per-feature z-score with moments fitted on the train split only; stddev
// floored at 1e-8. The fitted parameters are stored on the returned dataset.
EmbeddingDataset standardize_fit_transform(const EmbeddingDataset& dataset);
// Apply existing parameters (e.g. a checkpoint's) to an unstandardized dataset.
EmbeddingDataset standardize_apply(const EmbeddingDataset& dataset, const Standardization& params);

struct SynthConfig {
    Index n_train = 2000;
    Index n_test = 500;
    Index dimension = 64;
    // Disjoint index sets; empty means "use defaults for this dimension"
    // (four equal blocks covering the front of the feature vector, task dims
    // split between the two horizons).
    std::vector<Index> sex_signal_dims;
    std::vector<Index> age_signal_dims;
    std::vector<Index> task_signal_dims;
    double sex_strength = 1.0;
    double age_strength = 1.0;
    double task_strength = 3.0;
    // Logit-scale label shift between the sexes; the knob that makes EOD
    // nonzero on the original embeddings.
    double task_group_bias = 0.4;
    // Logit-scale label slope in normalized age; gives the age-group EOD a
    // signal the same way task_group_bias does for sex.
    double age_task_bias = 0.4;
    // First overlap_dims task dims also carry the sex signal (trade-off knob).
    Index overlap_dims = 0;
    double noise_sigma = 1.0;
    // Multiplier on the shared low-rank background amplitudes. The background
    // must dominate the spectrum for small-latent sweeps to starve the task
    // signal the way narrow bottlenecks do on real embeddings.
    double background_scale = 1.5;
    // Logit shift of the extra second-horizon draw (the 2-year label is the
    // union of the 1-year label and this draw).
    double second_task_logit_shift = -1.4;
    double age_min = 55.0;
    double age_max = 74.0;
    // Latent risk model: risk blends unit noise with the (normalized) sex and
    // age factors; labels are Bernoulli in a logistic link on the risk, so
    // task probes top out below 1.0 and demographic signal has marginal value.
    double risk_sex_weight = 0.2;
    double risk_age_weight = 0.2;
    double label_sharpness = 2.2;
    double task_base_logit = -2.2;
    // The planted task channel is the risk plus this much shared noise, so
    // demographic dims keep marginal value for a task probe and the original
    // embeddings show a real TPR gap.
    double task_channel_noise = 0.4;
    std::uint64_t seed = 0;
};

// Synthetic embeddings with planted demographic and task signals plus a
// structured (low-rank) background so that the spectrum resembles foundation
// model embeddings: a few strong non-demographic directions on top,
// incompressible white noise at the bottom. Deterministic per seed;
// patient-disjoint splits by construction.
EmbeddingDataset synth_generate(const SynthConfig& config);

struct PoisonSpec {
    int target_group = 1; // sex value whose train labels are attacked
    Task task = Task::cancer_1y;
    double fraction = 0.0; // in [0, 1]
    std::uint64_t seed = 0;
};

// Flips the task label (y <- 1-y) for exactly round(fraction * n_group) train
// records of the targeted sex group, chosen by seeded shuffle. Rounding is
// half away from zero. Features, demographics, the other group and the test
// split are untouched.
EmbeddingDataset poison_labels(const EmbeddingDataset& dataset, const PoisonSpec& spec);

struct AgeGrouping {
    double threshold = 0.0;       // train-split median age
    std::vector<int> is_old;      // per record: 0 = young (age <= median), 1 = old
};

AgeGrouping binarize_age(const EmbeddingDataset& dataset);

} // namespace debias
