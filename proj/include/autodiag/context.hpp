#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "autodiag/audio.hpp"
#include "json.hpp"

namespace autodiag {

// Three-state context value: unknown entries are pruned before matching
// rather than treated as data.
enum class Ternary : int { unknown = -1, no = 0, yes = 1 };
int to_int(Ternary t);
Ternary ternary_from_int(int v);

// Classifier confidence folded to a ternary answer: >= 0.8 is yes,
// <= 0.2 is no, anything between is unknown.
Ternary ternary_from_confidence(double p_yes);

struct ContextEntry {
    std::string name;
    Ternary value = Ternary::unknown;
};

// Ordered (name, value) list; order is the schema and must agree across
// query, references, and weights.
struct ContextVector {
    std::vector<ContextEntry> entries;

    void validate() const;  // unique, non-empty names
    std::vector<std::string> names() const;
    nlohmann::json to_json() const;
    static ContextVector from_json(const nlohmann::json& doc);
};

// Per-name importance for one diagnostic algorithm. Zero weight means
// the entry is irrelevant to this algorithm and is pruned like a -1.
struct ContextWeights {
    std::vector<std::pair<std::string, double>> weights;

    void validate() const;  // nonnegative, at least one positive
    double of(const std::string& name) const;
    nlohmann::json to_json() const;
    static ContextWeights from_json(const nlohmann::json& doc);
};

// One trained model's operating context; fully specified, so no unknowns.
struct ReferenceEntry {
    std::string model_id;
    ContextVector context;  // values in {no, yes} only
    int n_train = 0;        // vehicles behind the model, breaks ties
};

struct ReferenceContextDB {
    std::vector<ReferenceEntry> entries;

    void validate() const;  // shared schema, binary values, unique ids
    nlohmann::json to_json() const;
    static ReferenceContextDB from_json(const nlohmann::json& doc);
};

struct Pruned {
    ContextVector query;
    ReferenceContextDB db;
};

// Drops query entries that are unknown or carry zero weight, and the
// same-named column from every reference. Throws MatchError("no usable
// context") when nothing survives.
Pruned prune(const ContextVector& query, const ReferenceContextDB& db,
             const ContextWeights& weights);

struct MatchResult {
    std::string model_id;
    double distance = 0.0;
    double margin = 0.0;  // second-best minus best; infinity if single entry

    nlohmann::json to_json() const;
};

// Weighted Hamming nearest reference over a pruned query. Ties go to the
// larger n_train, then the lexicographically smaller model id.
MatchResult match_nearest(const ContextVector& query, const ReferenceContextDB& db,
                          const ContextWeights& weights);

// Idle comb detector: yes when some 5-60 Hz fundamental has at least 3
// harmonics at 3x the median of the sub-2 kHz Welch spectrum and the comb
// carries decisive total energy; no for silence or broadband; unknown
// for clips under 1 s or combs inside the margin band.
Ternary detect_engine_running(const AudioClip& clip);

}  // namespace autodiag
