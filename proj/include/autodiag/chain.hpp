#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "autodiag/audio.hpp"
#include "autodiag/learn.hpp"

namespace autodiag {

// How a stage encodes upstream predictions into its feature rows.
// argmax_onehot appends |classes| indicator columns, probabilities
// appends the distribution, both concatenates the two.
enum class AugmentMode { argmax_onehot, probabilities, both };
std::string to_string(AugmentMode mode);
AugmentMode augment_mode_from_string(const std::string& s);

struct StageSpec {
    std::string label;                 // clip label this stage predicts
    AugmentMode augment = AugmentMode::both;
    EnsembleKind kind = EnsembleKind::gradient_boosted;
    TrainParams params;
    bool reduce = false;               // importance-reduce columns first
    EnsembleKind reducer_kind = EnsembleKind::bagged_forest;
    TrainParams reducer_params;
    KeepRule keep = KeepRule::top(64);

    nlohmann::json to_json() const;
    static StageSpec from_json(const nlohmann::json& doc);
};

// Ordered stage list; stage k sees every earlier stage's output. Training
// injects ground-truth upstream labels (teacher forcing), inference the
// predicted ones.
struct ChainSpec {
    std::vector<StageSpec> stages;
    FeatureConfig features;
    double segment_length_s = 1.0;
    int train_segments_per_clip = 3;

    void validate() const;
    nlohmann::json to_json() const;
    static ChainSpec from_json(const nlohmann::json& doc);
    // aspiration (extra forest, importance-reduced), then fuel (boosted),
    // then cylinders (boosted, class-weighted)
    static ChainSpec standard();
};

struct TrainedStage {
    std::string label;
    AugmentMode augment = AugmentMode::both;
    std::vector<int> columns;  // empty keeps the whole augmented row
    TreeEnsemble model;
};

struct TrainedChain {
    FeatureConfig features;
    double segment_length_s = 1.0;
    size_t base_width = 0;  // feature width before augmentation
    std::vector<TrainedStage> stages;

    // augmented input width a stage sees before any column reduction
    size_t stage_input_width(size_t stage) const;
};

struct StagePrediction {
    std::string stage;
    std::vector<std::string> classes;
    std::vector<double> distribution;  // averaged over segments, sums to 1
    std::string label;                 // argmax, exact ties to the first class
    double confidence = 0.0;           // max of distribution
};

struct ChainPrediction {
    std::vector<StagePrediction> stages;

    const StagePrediction& stage(const std::string& name) const;
    nlohmann::json to_json() const;
};

// Seed use is fixed so retraining reproduces byte-identical stages:
// clip c segments from derive(seed, 0xC4A0000 + c), stage k classifier
// from derive(seed, 0x57A60000 + k), stage k reducer from
// derive(seed, 0x57AF0000 + k).
TrainedChain train_chain(const ChainSpec& spec,
                         const std::vector<LabeledClip>& clips, uint64_t seed,
                         int threads = 1);

// Cuts segments, runs every stage per segment with one-hot/probability
// upstream augmentation, then averages each stage's distributions across
// segments and takes the argmax (the voting rule).
ChainPrediction predict_chain(const TrainedChain& chain, const AudioClip& clip,
                              int segments_per_clip, uint64_t seed,
                              int threads = 1);

// Elementwise mean of per-segment distributions; all rows must share one width.
std::vector<double> vote_average(const std::vector<std::vector<double>>& rows);

// Clip-level evaluation: one voted prediction per clip, scored against the
// clip labels, one report per stage.
std::map<std::string, EvalReport> evaluate_chain(const TrainedChain& chain,
                                                 const std::vector<LabeledClip>& clips,
                                                 int segments_per_clip, uint64_t seed,
                                                 int threads = 1);

std::string serialize_chain(const TrainedChain& chain);
TrainedChain deserialize_chain(std::string_view data);
void save_chain(const std::string& path, const TrainedChain& chain);
TrainedChain load_chain(const std::string& path);

}  // namespace autodiag
