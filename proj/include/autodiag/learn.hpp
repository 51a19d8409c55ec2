#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "autodiag/features.hpp"
#include "json.hpp"

namespace autodiag {

// Row-major feature matrix.
struct Matrix {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    double& at(size_t r, size_t c) { return data[r * cols + c]; }
    double at(size_t r, size_t c) const { return data[r * cols + c]; }
    std::span<const double> row(size_t r) const { return {data.data() + r * cols, cols}; }
};

Matrix matrix_from(const std::vector<FeatureVector>& rows);

enum class EnsembleKind { bagged_forest, extra_random_forest, gradient_boosted };
std::string to_string(EnsembleKind kind);
EnsembleKind ensemble_kind_from_string(const std::string& s);

struct TrainParams {
    int n_trees = 300;     // forests
    int max_depth = -1;    // negative: unbounded for forests, 3 for boosting
    int min_leaf = 1;
    int mtry = -1;         // negative: floor(sqrt(n_features)), minimum 1
    int boosting_rounds = 200;
    double learning_rate = 0.1;
    bool class_weights = false;  // inverse-frequency weights in split criteria
    int threads = 1;

    nlohmann::json to_json() const;
    static TrainParams from_json(const nlohmann::json& doc);
};

struct TreeNode {
    int32_t feature = -1;  // negative marks a leaf
    double threshold = 0.0;
    int32_t left = -1;
    int32_t right = -1;
    std::vector<double> histogram;  // classification leaves: raw class counts
    double value = 0.0;             // regression leaves (boosting)

    bool is_leaf() const { return feature < 0; }
};

struct DecisionTree {
    std::vector<TreeNode> nodes;
};

// Bagged or extra-randomized classification forest, or a gradient-boosted
// stack of per-class regression trees (round-major: trees[round*K + k]).
struct TreeEnsemble {
    EnsembleKind kind = EnsembleKind::bagged_forest;
    std::vector<DecisionTree> trees;
    std::vector<std::string> classes;
    std::vector<double> importances;  // per feature, sums to 1 unless degenerate
    size_t n_features = 0;
    double learning_rate = 0.1;
    std::vector<double> base_score;          // boosting: initial per-class log-odds
    std::vector<double> training_deviance;   // boosting: per-round training loss
    TrainParams params;

    std::vector<double> predict_row(std::span<const double> row) const;
    Matrix predict_proba(const Matrix& rows, int threads = 1) const;
};

// Deterministic under (data, params, seed); per-tree seeds are derived so
// parallel and serial training produce identical models.
TreeEnsemble train(EnsembleKind kind, const Matrix& rows,
                   const std::vector<std::string>& labels,
                   const TrainParams& params, uint64_t seed);

struct KeepRule {
    enum class Mode { top_k, cumulative };
    Mode mode = Mode::top_k;
    int k = 0;
    double cumulative_importance = 0.0;

    static KeepRule top(int k);
    static KeepRule cumulative(double threshold);
};

struct Reduction {
    std::vector<int> columns;  // ascending
    Matrix reduced;
};

// Keeps columns by descending reducer importance (ties to the lower column
// index) until the rule is satisfied.
Reduction reduce_features(const TreeEnsemble& reducer, const Matrix& rows,
                          const KeepRule& keep);
Matrix select_columns(const Matrix& rows, std::span<const int> columns);

struct EvalReport {
    std::vector<std::string> classes;
    // confusion[i][j] counts rows predicted class i whose true class is j;
    // the normalized view divides each column by its support
    std::vector<std::vector<double>> confusion_raw;
    std::vector<std::vector<double>> confusion_colnorm;
    double roc_auc = 0.0;   // macro one-vs-rest
    double pr_auc = 0.0;    // macro one-vs-rest
    double accuracy = 0.0;
    size_t n_rows = 0;

    nlohmann::json to_json() const;
    std::string format_table() const;
};

EvalReport evaluate(const TreeEnsemble& model, const Matrix& rows,
                    const std::vector<std::string>& labels, int threads = 1);
// Same report computed from an already-scored probability matrix; lets
// clip-level voted distributions go through identical bookkeeping.
EvalReport evaluate_scores(const Matrix& proba, const std::vector<std::string>& classes,
                           const std::vector<std::string>& labels);

// Threshold-sweep curve areas with tied scores grouped; positives flags one
// label as the positive class.
double roc_auc_binary(std::span<const double> scores, std::span<const uint8_t> positives);
double pr_auc_binary(std::span<const double> scores, std::span<const uint8_t> positives);

// Versioned binary container with a JSON header; extra carries caller
// metadata (feature config hash, stage name) and round-trips unchanged.
std::string serialize_model(const TreeEnsemble& model,
                            const nlohmann::json& extra = nlohmann::json::object());
TreeEnsemble deserialize_model(std::string_view data, nlohmann::json* extra = nullptr);
void save_model(const std::string& path, const TreeEnsemble& model,
                const nlohmann::json& extra = nlohmann::json::object());
struct LoadedModel {
    TreeEnsemble model;
    nlohmann::json extra;
};
LoadedModel load_model(const std::string& path);

struct GridModel {
    EnsembleKind kind = EnsembleKind::bagged_forest;
    TrainParams params;
};

struct GridSpec {
    std::vector<FeatureConfig> feature_configs;
    std::vector<GridModel> models;
    int n_folds = 3;
    double segment_length_s = 1.0;
    int segments_per_clip = 3;
};

struct GridResult {
    std::string cell_id;
    int feature_index = 0;
    int model_index = 0;
    double roc_auc = 0.0;
    double pr_auc = 0.0;
    double accuracy = 0.0;
    bool failed = false;
    std::string error;
};

// Evaluates every (feature config, model) cell on identical source-safe
// folds; results sorted by ROC-AUC, then PR-AUC, then cell id. Per-cell
// failures are recorded, not fatal.
std::vector<GridResult> grid_search(const GridSpec& spec,
                                    const std::vector<LabeledClip>& clips,
                                    const std::string& label_name, uint64_t seed,
                                    int threads = 1);
void write_grid_csv(const std::string& path, const std::vector<GridResult>& results);
nlohmann::json grid_to_json(const std::vector<GridResult>& results);

}  // namespace autodiag
