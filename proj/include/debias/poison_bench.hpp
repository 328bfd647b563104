#pragma once

#include "debias/data.hpp"
#include "debias/eval.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace debias {

struct PoisonSweepConfig {
    std::vector<double> fractions = {0.0, 0.25, 0.5, 0.75, 1.0}; // sorted ascending
    std::vector<int> target_groups = {0, 1};
    std::vector<Task> tasks = {Task::cancer_1y, Task::cancer_2y};
    std::uint64_t seed = 0;
};

struct PoisonCell {
    std::string embedding; // "original" | "debiased"
    Task task = Task::cancer_1y;
    int target_group = 0;
    double fraction = 0.0;
    EodResult eod;
};

struct PoisonCurve {
    int format_version = 1;
    std::vector<PoisonCell> cells; // complete grid, deterministic order
};

// For each grid cell: poisons the train labels of the target group at the
// given fraction (same seed across embedding kinds, so the flip sets are
// identical), refits the task probe from scratch, and evaluates EOD on the
// clean test split. The test split is never poisoned.
PoisonCurve run_poison_sweep(const EmbeddingDataset& original, const EmbeddingDataset& debiased,
                             const PoisonSweepConfig& config);

// CSV rows: embedding,task,target_group,fraction,eod,tpr_a,tpr_b
std::string poison_curve_to_csv(const PoisonCurve& curve);
std::string poison_curve_to_json(const PoisonCurve& curve);

// One SVG per (task, target_group), original vs debiased polylines.
void write_poison_charts(const PoisonCurve& curve, const std::filesystem::path& out_dir);

} // namespace debias
