#include "debias/data.hpp"

#include "debias/errors.hpp"
#include "debias/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace debias {

const char* to_string(Split split) {
    return split == Split::train ? "train" : "test";
}

Split split_from_string(const std::string& s, int line_number) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    throw ParseError("line " + std::to_string(line_number) +
                     ": split must be 'train' or 'test', got '" + s + "'");
}

const char* to_string(Task task) {
    return task == Task::cancer_1y ? "cancer_1y" : "cancer_2y";
}

Task task_from_string(const std::string& s) {
    if (s == "cancer_1y") return Task::cancer_1y;
    if (s == "cancer_2y") return Task::cancer_2y;
    throw ValidationError("unknown task '" + s + "', expected cancer_1y or cancer_2y");
}

std::vector<std::size_t> EmbeddingDataset::split_indices(Split split) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].split == split) idx.push_back(i);
    }
    return idx;
}

Matrix EmbeddingDataset::features_of(Split split) const {
    const auto idx = split_indices(split);
    Matrix out(static_cast<Index>(idx.size()), dimension);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        out.row(static_cast<Index>(r)) = records[idx[r]].features.transpose();
    }
    return out;
}

Vector EmbeddingDataset::ages_of(Split split) const {
    const auto idx = split_indices(split);
    Vector out(static_cast<Index>(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) {
        out[static_cast<Index>(r)] = records[idx[r]].age;
    }
    return out;
}

Vector EmbeddingDataset::sex_of(Split split) const {
    const auto idx = split_indices(split);
    Vector out(static_cast<Index>(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) {
        out[static_cast<Index>(r)] = records[idx[r]].sex;
    }
    return out;
}

Vector EmbeddingDataset::task_labels_of(Split split, Task task) const {
    const auto idx = split_indices(split);
    Vector out(static_cast<Index>(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) {
        out[static_cast<Index>(r)] = records[idx[r]].task_label(task);
    }
    return out;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

double parse_double(const std::string& s, int line_number, const std::string& column) {
    double value = 0.0;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    const auto result = std::from_chars(begin, end, value);
    if (result.ec != std::errc() || result.ptr != end || s.empty()) {
        throw ParseError("line " + std::to_string(line_number) + ": column " + column +
                         " is not numeric: '" + s + "'");
    }
    if (!std::isfinite(value)) {
        throw ParseError("line " + std::to_string(line_number) + ": column " + column +
                         " is not finite: '" + s + "'");
    }
    return value;
}

int parse_binary(const std::string& s, int line_number, const std::string& column) {
    if (s == "0") return 0;
    if (s == "1") return 1;
    throw ParseError("line " + std::to_string(line_number) + ": column " + column +
                     " must be 0 or 1, got '" + s + "'");
}

constexpr int kFixedColumns = 7;

} // namespace

EmbeddingDataset load_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open dataset file '" + path.string() + "'");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError("line 1: empty file, expected CSV header");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const auto header = split_line(line);
    const char* fixed[kFixedColumns] = {"record_id", "patient_id", "sex",
                                        "age",       "cancer_1y",  "cancer_2y",
                                        "split"};
    if (header.size() < kFixedColumns + 1) {
        throw ParseError("line 1: header has " + std::to_string(header.size()) +
                         " columns, expected at least " + std::to_string(kFixedColumns + 1));
    }
    for (int i = 0; i < kFixedColumns; ++i) {
        if (header[static_cast<std::size_t>(i)] != fixed[i]) {
            throw ParseError("line 1: column " + std::to_string(i + 1) + " must be '" +
                             fixed[i] + "', got '" + header[static_cast<std::size_t>(i)] + "'");
        }
    }
    const Index dimension = static_cast<Index>(header.size()) - kFixedColumns;
    for (Index d = 0; d < dimension; ++d) {
        const std::string expected = "f" + std::to_string(d);
        if (header[static_cast<std::size_t>(kFixedColumns + d)] != expected) {
            throw ParseError("line 1: feature column " + std::to_string(d) + " must be '" +
                             expected + "', got '" +
                             header[static_cast<std::size_t>(kFixedColumns + d)] + "'");
        }
    }

    EmbeddingDataset dataset;
    dataset.dimension = dimension;
    std::unordered_set<std::string> seen_records;
    std::unordered_map<std::string, Split> patient_split;

    int line_number = 1;
    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_line(line);
        if (fields.size() != header.size()) {
            throw ParseError("line " + std::to_string(line_number) + ": expected " +
                             std::to_string(header.size()) + " columns, got " +
                             std::to_string(fields.size()));
        }
        EmbeddingRecord rec;
        rec.record_id = fields[0];
        rec.patient_id = fields[1];
        if (rec.record_id.empty()) {
            throw ParseError("line " + std::to_string(line_number) + ": empty record_id");
        }
        if (!seen_records.insert(rec.record_id).second) {
            throw ParseError("line " + std::to_string(line_number) + ": duplicate record_id '" +
                             rec.record_id + "'");
        }
        rec.sex = parse_binary(fields[2], line_number, "sex");
        rec.age = parse_double(fields[3], line_number, "age");
        rec.cancer_1y = parse_binary(fields[4], line_number, "cancer_1y");
        rec.cancer_2y = parse_binary(fields[5], line_number, "cancer_2y");
        rec.split = split_from_string(fields[6], line_number);
        rec.features.resize(dimension);
        for (Index d = 0; d < dimension; ++d) {
            rec.features[d] = parse_double(fields[static_cast<std::size_t>(kFixedColumns + d)],
                                           line_number, "f" + std::to_string(d));
        }

        const auto it = patient_split.find(rec.patient_id);
        if (it == patient_split.end()) {
            patient_split.emplace(rec.patient_id, rec.split);
        } else if (it->second != rec.split) {
            throw ValidationError("integrity error: patient_id '" + rec.patient_id +
                                  "' appears in both train and test splits (line " +
                                  std::to_string(line_number) + ")");
        }
        dataset.records.push_back(std::move(rec));
    }
    return dataset;
}

void write_csv(const EmbeddingDataset& dataset, const std::filesystem::path& path) {
    std::string out;
    out.reserve(dataset.records.size() * (32 + 24 * static_cast<std::size_t>(dataset.dimension)));
    out += "record_id,patient_id,sex,age,cancer_1y,cancer_2y,split";
    for (Index d = 0; d < dataset.dimension; ++d) {
        out += ",f";
        out += std::to_string(d);
    }
    out += '\n';
    for (const auto& rec : dataset.records) {
        out += rec.record_id;
        out += ',';
        out += rec.patient_id;
        out += ',';
        out += std::to_string(rec.sex);
        out += ',';
        out += format_double(rec.age);
        out += ',';
        out += std::to_string(rec.cancer_1y);
        out += ',';
        out += std::to_string(rec.cancer_2y);
        out += ',';
        out += to_string(rec.split);
        for (Index d = 0; d < dataset.dimension; ++d) {
            out += ',';
            out += format_double(rec.features[d]);
        }
        out += '\n';
    }
    atomic_write_file(path, out);
}

namespace {

constexpr double kStdFloor = 1e-8;

} // namespace

EmbeddingDataset standardize_fit_transform(const EmbeddingDataset& dataset) {
    if (dataset.standardization) {
        throw ValidationError("standardize_fit_transform: dataset is already standardized");
    }
    const auto train_idx = dataset.split_indices(Split::train);
    if (train_idx.empty()) {
        throw ValidationError("standardize_fit_transform: train split is empty");
    }
    Vector mean = Vector::Zero(dataset.dimension);
    for (const auto i : train_idx) {
        mean += dataset.records[i].features;
    }
    mean /= static_cast<double>(train_idx.size());
    Vector var = Vector::Zero(dataset.dimension);
    for (const auto i : train_idx) {
        var.array() += (dataset.records[i].features - mean).array().square();
    }
    var /= static_cast<double>(train_idx.size());
    Vector stddev = var.array().sqrt().max(kStdFloor);

    EmbeddingDataset out = dataset;
    for (auto& rec : out.records) {
        rec.features = ((rec.features - mean).array() / stddev.array()).matrix();
    }
    out.standardization = Standardization{std::move(mean), std::move(stddev)};
    return out;
}

EmbeddingDataset standardize_apply(const EmbeddingDataset& dataset, const Standardization& params) {
    if (dataset.standardization) {
        throw ValidationError("standardize_apply: dataset is already standardized");
    }
    if (params.mean.size() != dataset.dimension || params.stddev.size() != dataset.dimension) {
        throw ShapeError("standardize_apply: parameters have dimension " +
                         std::to_string(params.mean.size()) + ", dataset has " +
                         std::to_string(dataset.dimension));
    }
    EmbeddingDataset out = dataset;
    for (auto& rec : out.records) {
        rec.features = ((rec.features - params.mean).array() / params.stddev.array()).matrix();
    }
    out.standardization = params;
    return out;
}

namespace {

// Fixed low-rank background structure: amplitude multipliers for the shared
// factors, plus the white-noise scale, both relative to noise_sigma. Chosen
// so the top of the spectrum is dominated by non-demographic structure, the
// way foundation-model embeddings behave.
constexpr double kBackgroundScales[] = {10.0, 9.0, 8.0, 7.5, 7.0, 6.5};
constexpr int kNumBackground = 6;
constexpr double kWhiteScale = 0.5;
// Correlation between the two horizon risks.
constexpr double kHorizonCorr = 0.6;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void validate_dims(const std::vector<Index>& dims, Index dimension, const char* name,
                   std::vector<bool>& used) {
    for (const Index d : dims) {
        if (d < 0 || d >= dimension) {
            throw ValidationError(std::string("synth_generate: ") + name + " index " +
                                  std::to_string(d) + " outside dimension " +
                                  std::to_string(dimension));
        }
        if (used[static_cast<std::size_t>(d)]) {
            throw ValidationError(std::string("synth_generate: ") + name + " index " +
                                  std::to_string(d) + " assigned to more than one signal set");
        }
        used[static_cast<std::size_t>(d)] = true;
    }
}

std::string zero_padded(Index value) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06lld", static_cast<long long>(value));
    return buf;
}

} // namespace

EmbeddingDataset synth_generate(const SynthConfig& config) {
    if (config.n_train < 1 || config.n_test < 1) {
        throw ValidationError("synth_generate: n_train and n_test must be >= 1");
    }
    if (config.dimension < 4) {
        throw ValidationError("synth_generate: dimension must be >= 4");
    }
    if (config.noise_sigma <= 0.0) {
        throw ValidationError("synth_generate: noise_sigma must be > 0");
    }
    if (config.age_max <= config.age_min) {
        throw ValidationError("synth_generate: age_max must exceed age_min");
    }

    SynthConfig cfg = config;
    if (cfg.sex_signal_dims.empty() && cfg.age_signal_dims.empty() &&
        cfg.task_signal_dims.empty()) {
        // Default layout: four equal blocks at the front, remainder carries
        // background and white noise only.
        const Index q = std::max<Index>(1, cfg.dimension / 5);
        for (Index d = 0; d < q; ++d) cfg.sex_signal_dims.push_back(d);
        for (Index d = q; d < 2 * q; ++d) cfg.age_signal_dims.push_back(d);
        for (Index d = 2 * q; d < std::min(cfg.dimension, 4 * q); ++d) {
            cfg.task_signal_dims.push_back(d);
        }
    }
    std::vector<bool> used(static_cast<std::size_t>(cfg.dimension), false);
    validate_dims(cfg.sex_signal_dims, cfg.dimension, "sex_signal_dims", used);
    validate_dims(cfg.age_signal_dims, cfg.dimension, "age_signal_dims", used);
    validate_dims(cfg.task_signal_dims, cfg.dimension, "task_signal_dims", used);
    if (cfg.task_signal_dims.size() < 2) {
        throw ValidationError("synth_generate: task_signal_dims needs at least 2 indices");
    }
    if (cfg.overlap_dims < 0 ||
        static_cast<std::size_t>(cfg.overlap_dims) > cfg.task_signal_dims.size()) {
        throw ValidationError("synth_generate: overlap_dims outside task set size");
    }
    const double risk_noise_var =
        1.0 - cfg.risk_sex_weight * cfg.risk_sex_weight - cfg.risk_age_weight * cfg.risk_age_weight;
    if (risk_noise_var <= 0.0) {
        throw ValidationError("synth_generate: risk_sex_weight^2 + risk_age_weight^2 must be < 1");
    }

    const std::size_t task_split = cfg.task_signal_dims.size() / 2;
    const double age_mid = 0.5 * (cfg.age_min + cfg.age_max);
    const double age_scale = (cfg.age_max - cfg.age_min) / std::sqrt(12.0);

    SeededRng rng(cfg.seed, "synth");

    // Shared background directions, unit length, drawn once.
    std::vector<Vector> background(kNumBackground);
    for (int j = 0; j < kNumBackground; ++j) {
        Vector g = rng.standard_normal(cfg.dimension);
        background[j] = g / g.norm();
    }

    EmbeddingDataset dataset;
    dataset.dimension = cfg.dimension;
    dataset.records.reserve(static_cast<std::size_t>(cfg.n_train + cfg.n_test));

    const Index total = cfg.n_train + cfg.n_test;
    for (Index i = 0; i < total; ++i) {
        EmbeddingRecord rec;
        rec.record_id = "r" + zero_padded(i);
        rec.patient_id = "p" + zero_padded(i);
        rec.split = i < cfg.n_train ? Split::train : Split::test;

        rec.sex = rng.uniform() < 0.5 ? 1 : 0;
        rec.age = rng.uniform(cfg.age_min, cfg.age_max);
        const double sex_c = 2.0 * rec.sex - 1.0;
        const double age_c = (rec.age - age_mid) / age_scale;

        Vector bg_coeff = rng.standard_normal(kNumBackground);
        const double risk1 = std::sqrt(risk_noise_var) * rng.normal() +
                             cfg.risk_sex_weight * sex_c + cfg.risk_age_weight * age_c;
        const double risk2 =
            kHorizonCorr * risk1 + std::sqrt(1.0 - kHorizonCorr * kHorizonCorr) * rng.normal();
        const double channel1 = risk1 + cfg.task_channel_noise * rng.normal();
        const double channel2 = risk2 + cfg.task_channel_noise * rng.normal();

        const double group_shift =
            cfg.task_group_bias * (rec.sex - 0.5) + cfg.age_task_bias * age_c;
        const double p1 = sigmoid(cfg.label_sharpness * risk1 + group_shift + cfg.task_base_logit);
        rec.cancer_1y = rng.uniform() < p1 ? 1 : 0;
        const double p2 = sigmoid(cfg.label_sharpness * risk2 + group_shift +
                                  cfg.task_base_logit + cfg.second_task_logit_shift);
        const int extra_2y = rng.uniform() < p2 ? 1 : 0;
        rec.cancer_2y = std::max(rec.cancer_1y, extra_2y);

        Vector features = cfg.noise_sigma * kWhiteScale * rng.standard_normal(cfg.dimension);
        for (int j = 0; j < kNumBackground; ++j) {
            features += bg_coeff[j] * cfg.noise_sigma * cfg.background_scale *
                        kBackgroundScales[j] * background[j];
        }
        for (const Index d : cfg.sex_signal_dims) {
            features[d] += sex_c * cfg.sex_strength;
        }
        for (const Index d : cfg.age_signal_dims) {
            features[d] += age_c * cfg.age_strength;
        }
        for (std::size_t k = 0; k < cfg.task_signal_dims.size(); ++k) {
            const double channel = k < task_split ? channel1 : channel2;
            features[cfg.task_signal_dims[k]] += channel * cfg.task_strength;
        }
        for (Index k = 0; k < cfg.overlap_dims; ++k) {
            features[cfg.task_signal_dims[static_cast<std::size_t>(k)]] +=
                sex_c * cfg.sex_strength;
        }
        rec.features = std::move(features);
        dataset.records.push_back(std::move(rec));
    }
    return dataset;
}

EmbeddingDataset poison_labels(const EmbeddingDataset& dataset, const PoisonSpec& spec) {
    if (spec.fraction < 0.0 || spec.fraction > 1.0) {
        throw ValidationError("poison_labels: fraction must be in [0, 1], got " +
                              std::to_string(spec.fraction));
    }
    if (spec.target_group != 0 && spec.target_group != 1) {
        throw ValidationError("poison_labels: target_group must be 0 or 1");
    }
    std::vector<std::size_t> group;
    for (std::size_t i = 0; i < dataset.records.size(); ++i) {
        const auto& rec = dataset.records[i];
        if (rec.split == Split::train && rec.sex == spec.target_group) {
            group.push_back(i);
        }
    }
    const auto n_flips = static_cast<std::size_t>(
        std::llround(spec.fraction * static_cast<double>(group.size())));
    SeededRng rng(spec.seed, "poison");
    rng.shuffle(group);

    EmbeddingDataset out = dataset;
    for (std::size_t k = 0; k < n_flips; ++k) {
        auto& rec = out.records[group[k]];
        rec.set_task_label(spec.task, 1 - rec.task_label(spec.task));
    }
    return out;
}

AgeGrouping binarize_age(const EmbeddingDataset& dataset) {
    std::vector<double> train_ages;
    for (const auto& rec : dataset.records) {
        if (rec.split == Split::train) train_ages.push_back(rec.age);
    }
    if (train_ages.empty()) {
        throw ValidationError("binarize_age: train split is empty");
    }
    std::sort(train_ages.begin(), train_ages.end());
    const std::size_t n = train_ages.size();
    const double median =
        n % 2 == 1 ? train_ages[n / 2] : 0.5 * (train_ages[n / 2 - 1] + train_ages[n / 2]);

    AgeGrouping grouping;
    grouping.threshold = median;
    grouping.is_old.reserve(dataset.records.size());
    for (const auto& rec : dataset.records) {
        grouping.is_old.push_back(rec.age <= median ? 0 : 1);
    }
    return grouping;
}

} // namespace debias
