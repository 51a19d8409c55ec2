#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "autodiag/chain.hpp"
#include "autodiag/context.hpp"
#include "autodiag/domain.hpp"
#include "json.hpp"

namespace autodiag {

// A point or region in the vehicle lattice. Unset fields are wildcards; a
// descriptor with no fields set is the universal root that covers every
// vehicle. Displacement compares by 0.1 L bucket, so values within the same
// bucket count as the same engine size.
struct VehicleDescriptor {
    std::optional<Fuel> fuel;
    std::optional<EngineLayout> configuration;
    std::optional<int> cylinders;
    std::optional<double> displacement_l;
    std::optional<Aspiration> aspiration;
    std::optional<std::string> make;
    std::optional<std::string> instance;

    int specificity() const;
    bool is_universal() const { return specificity() == 0; }

    // Snaps displacement onto its bucket so equal descriptors serialize
    // identically.
    VehicleDescriptor canonical() const;

    // Sets one attribute from its text form; "*" clears back to wildcard.
    void set_attribute(const std::string& name, const std::string& value);

    // "fuel=gasoline,cylinders=4"; empty input is the universal root.
    static VehicleDescriptor from_string(const std::string& text);

    std::string to_string() const;
    nlohmann::json to_json() const;
    static VehicleDescriptor from_json(const nlohmann::json& j);
};

long displacement_bucket(double liters);

// True when every attribute a pins down matches b: a covers b in the lattice.
bool generalizes(const VehicleDescriptor& a, const VehicleDescriptor& b);

struct ModelRecord {
    std::string record_id;
    VehicleDescriptor descriptor;
    std::string diagnostic_kind;
    int n_train = 1;
    std::string blob_sha;
    ContextVector required_context;

    void validate() const;
    nlohmann::json to_json() const;
    static ModelRecord from_json(const nlohmann::json& j);
};

struct ModelRegistry {
    uint64_t version = 0;
    std::vector<ModelRecord> records;

    void validate() const;
    nlohmann::json to_json() const;
    static ModelRegistry from_json(const nlohmann::json& j);
};

// Reads <dir>/index.json; a missing directory or index is an empty registry.
ModelRegistry open_registry(const std::string& dir);

// Bumps the version, rewrites index.json, and keeps the numbered snapshot
// under <dir>/snapshots/ so older indexes stay readable.
void save_registry(ModelRegistry& registry, const std::string& dir);

// Content-addressed blob store under <dir>/blobs/. Storing the same bytes
// twice is a no-op; loading verifies the digest before returning.
std::string store_blob(const std::string& dir, const std::string& bytes);
std::string load_blob(const std::string& dir, const std::string& sha);

// Stores the blob, stamps the record with its digest, and appends it.
std::string add_model(ModelRegistry& registry, const std::string& dir,
                      ModelRecord record, const std::string& blob);

// Most specific record of the requested kind with enough training vehicles
// whose descriptor covers the query. Ties fall to larger n_train, then
// lexicographic record id. When nothing has the support, the universal-root
// record of that kind answers regardless of min_n; with no root either, this
// throws MatchError.
const ModelRecord& select_model(const ModelRegistry& registry,
                                const VehicleDescriptor& query,
                                const std::string& kind, int min_n = 3);

// Builds a descriptor from chain stages whose confidence clears the floor;
// stage labels name descriptor attributes. A non-empty short list overrides
// classification: a single entry wins outright, several entries are ranked by
// agreement with the classified attributes (conflicting entries drop out).
VehicleDescriptor identify(const ChainPrediction& prediction,
                           double confidence_floor,
                           const std::vector<VehicleDescriptor>& short_list = {});

}  // namespace autodiag
