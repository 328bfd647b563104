#include "debias/poison_bench.hpp"

#include "debias/errors.hpp"
#include "debias/io.hpp"
#include "debias/svg.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

using nlohmann::json;

namespace debias {

namespace {

const char* group_name(int group) {
    return group == 1 ? "male" : "female";
}

void check_aligned(const EmbeddingDataset& a, const EmbeddingDataset& b) {
    if (a.records.size() != b.records.size()) {
        throw ValidationError("run_poison_sweep: datasets have different sizes");
    }
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        const auto& ra = a.records[i];
        const auto& rb = b.records[i];
        if (ra.record_id != rb.record_id || ra.split != rb.split || ra.sex != rb.sex ||
            ra.cancer_1y != rb.cancer_1y || ra.cancer_2y != rb.cancer_2y) {
            throw ValidationError("run_poison_sweep: datasets disagree at record '" +
                                  ra.record_id + "'");
        }
    }
}

std::uint64_t cell_seed(std::uint64_t base, Task task, int group, std::size_t fraction_index) {
    const std::string label = std::string("poison/") + to_string(task) + "/g" +
                              std::to_string(group) + "/f" + std::to_string(fraction_index);
    SeededRng rng(base, label);
    return rng.next_u64();
}

} // namespace

PoisonCurve run_poison_sweep(const EmbeddingDataset& original, const EmbeddingDataset& debiased,
                             const PoisonSweepConfig& config) {
    check_aligned(original, debiased);
    if (config.fractions.empty()) {
        throw ValidationError("run_poison_sweep: fractions must not be empty");
    }
    if (!std::is_sorted(config.fractions.begin(), config.fractions.end())) {
        throw ValidationError("run_poison_sweep: fractions must be sorted ascending");
    }
    for (const double f : config.fractions) {
        if (f < 0.0 || f > 1.0) {
            throw ValidationError("run_poison_sweep: fraction " + std::to_string(f) +
                                  " outside [0, 1]");
        }
    }
    for (const int g : config.target_groups) {
        if (g != 0 && g != 1) {
            throw ValidationError("run_poison_sweep: target group must be 0 or 1");
        }
    }

    PoisonCurve curve;
    const std::pair<const char*, const EmbeddingDataset*> kinds[] = {{"original", &original},
                                                                     {"debiased", &debiased}};
    for (const auto& [kind, dataset] : kinds) {
        for (const Task task : config.tasks) {
            for (const int group : config.target_groups) {
                for (std::size_t fi = 0; fi < config.fractions.size(); ++fi) {
                    PoisonSpec spec;
                    spec.target_group = group;
                    spec.task = task;
                    spec.fraction = config.fractions[fi];
                    spec.seed = cell_seed(config.seed, task, group, fi);
                    const EmbeddingDataset poisoned = poison_labels(*dataset, spec);

                    const LogisticProbe probe =
                        fit_logistic_probe(poisoned, binary_target_for(task));
                    const Vector scores = probe_scores(probe, poisoned, Split::test);
                    const Vector labels = poisoned.task_labels_of(Split::test, task);
                    std::vector<int> sex_groups;
                    for (const auto i : poisoned.split_indices(Split::test)) {
                        sex_groups.push_back(poisoned.records[i].sex);
                    }

                    PoisonCell cell;
                    cell.embedding = kind;
                    cell.task = task;
                    cell.target_group = group;
                    cell.fraction = config.fractions[fi];
                    cell.eod = eod(scores, labels, sex_groups);
                    curve.cells.push_back(std::move(cell));
                }
            }
        }
    }
    return curve;
}

std::string poison_curve_to_csv(const PoisonCurve& curve) {
    std::string out = "embedding,task,target_group,fraction,eod,tpr_a,tpr_b\n";
    const auto opt = [](const std::optional<double>& v) {
        return v ? format_double(*v) : std::string("nan");
    };
    for (const auto& cell : curve.cells) {
        out += cell.embedding;
        out += ',';
        out += to_string(cell.task);
        out += ',';
        out += group_name(cell.target_group);
        out += ',';
        out += format_double(cell.fraction);
        out += ',';
        out += opt(cell.eod.value);
        out += ',';
        out += opt(cell.eod.tpr_group0);
        out += ',';
        out += opt(cell.eod.tpr_group1);
        out += '\n';
    }
    return out;
}

std::string poison_curve_to_json(const PoisonCurve& curve) {
    json cells = json::array();
    for (const auto& cell : curve.cells) {
        json jc{{"embedding", cell.embedding},
                {"task", to_string(cell.task)},
                {"target_group", group_name(cell.target_group)},
                {"fraction", cell.fraction},
                {"eod_defined", cell.eod.defined}};
        jc["eod"] = cell.eod.value ? json(*cell.eod.value) : json(nullptr);
        jc["tpr_a"] = cell.eod.tpr_group0 ? json(*cell.eod.tpr_group0) : json(nullptr);
        jc["tpr_b"] = cell.eod.tpr_group1 ? json(*cell.eod.tpr_group1) : json(nullptr);
        cells.push_back(std::move(jc));
    }
    const json j{{"format_version", curve.format_version}, {"cells", std::move(cells)}};
    return j.dump(2) + "\n";
}

void write_poison_charts(const PoisonCurve& curve, const std::filesystem::path& out_dir) {
    // Collect the (task, group) pairs present, in first-seen order.
    std::vector<std::pair<Task, int>> panels;
    for (const auto& cell : curve.cells) {
        const std::pair<Task, int> key{cell.task, cell.target_group};
        if (std::find(panels.begin(), panels.end(), key) == panels.end()) {
            panels.push_back(key);
        }
    }
    for (const auto& [task, group] : panels) {
        LineChart chart;
        chart.title = std::string("EOD under label flipping: ") + to_string(task) + ", " +
                      group_name(group) + " group poisoned";
        chart.x_label = "flipped fraction of targeted group";
        chart.y_label = "EOD (clean test)";
        chart.x_ticks = {0.0, 0.25, 0.5, 0.75, 1.0};
        chart.y_ticks = {0.0, 0.25, 0.5, 0.75, 1.0};

        ChartSeries original{"original", "#1f77b4", {}};
        ChartSeries debiased{"debiased", "#d62728", {}};
        for (const auto& cell : curve.cells) {
            if (cell.task != task || cell.target_group != group || !cell.eod.value) continue;
            auto& series = cell.embedding == "original" ? original : debiased;
            series.points.emplace_back(cell.fraction, *cell.eod.value);
        }
        chart.series = {std::move(original), std::move(debiased)};

        const std::string name =
            std::string("poison_") + to_string(task) + "_" + group_name(group) + ".svg";
        atomic_write_file(out_dir / name, render_line_chart(chart));
    }
}

} // namespace debias
