#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "autodiag/binio.hpp"
#include "autodiag/errors.hpp"
#include "autodiag/registry.hpp"
#include "autodiag/rng.hpp"
#include "doctest.h"

using namespace autodiag;

namespace {

VehicleDescriptor desc(const std::string& text) {
    return VehicleDescriptor::from_string(text);
}

ModelRecord record(const std::string& id, const std::string& descriptor,
                   const std::string& kind, int n_train) {
    ModelRecord r;
    r.record_id = id;
    r.descriptor = desc(descriptor);
    r.diagnostic_kind = kind;
    r.n_train = n_train;
    r.blob_sha = "0";
    return r;
}

StagePrediction stage(const std::string& name, const std::string& label,
                      double confidence) {
    StagePrediction s;
    s.stage = name;
    s.classes = {label, "other"};
    s.distribution = {confidence, 1.0 - confidence};
    s.label = label;
    s.confidence = confidence;
    return s;
}

VehicleDescriptor random_descriptor(Rng& rng, double wildcard_p) {
    const char* fuels[] = {"gasoline", "diesel"};
    const char* layouts[] = {"inline", "vee"};
    const char* cyls[] = {"4", "6"};
    const char* disps[] = {"2.0", "3.0"};
    const char* asps[] = {"natural", "turbo"};
    const char* makes[] = {"ford", "kia"};
    const char* insts[] = {"veh-a", "veh-b"};
    VehicleDescriptor d;
    const auto roll = [&](const char* name, const char* const* pool) {
        if (rng.next_double() >= wildcard_p) d.set_attribute(name, pool[rng.next_below(2)]);
    };
    roll("fuel", fuels);
    roll("configuration", layouts);
    roll("cylinders", cyls);
    roll("displacement_l", disps);
    roll("aspiration", asps);
    roll("make", makes);
    roll("instance", insts);
    return d;
}

// Clears a random subset of set attributes, which by construction yields a
// descriptor that covers the input.
VehicleDescriptor loosened(const VehicleDescriptor& d, Rng& rng) {
    VehicleDescriptor out = d;
    const auto drop = [&rng] { return rng.next_double() < 0.4; };
    if (out.fuel && drop()) out.fuel.reset();
    if (out.configuration && drop()) out.configuration.reset();
    if (out.cylinders && drop()) out.cylinders.reset();
    if (out.displacement_l && drop()) out.displacement_l.reset();
    if (out.aspiration && drop()) out.aspiration.reset();
    if (out.make && drop()) out.make.reset();
    if (out.instance && drop()) out.instance.reset();
    return out;
}

struct OraclePick {
    bool error = false;
    std::string id;
};

OraclePick oracle_select(const ModelRegistry& reg, const VehicleDescriptor& query,
                         const std::string& kind, int min_n) {
    std::vector<const ModelRecord*> eligible;
    for (const auto& r : reg.records) {
        if (r.diagnostic_kind == kind && r.n_train >= min_n &&
            generalizes(r.descriptor, query)) {
            eligible.push_back(&r);
        }
    }
    const auto rank = [](const ModelRecord* a, const ModelRecord* b) {
        if (a->descriptor.specificity() != b->descriptor.specificity()) {
            return a->descriptor.specificity() > b->descriptor.specificity();
        }
        if (a->n_train != b->n_train) return a->n_train > b->n_train;
        return a->record_id < b->record_id;
    };
    if (eligible.empty()) {
        for (const auto& r : reg.records) {
            if (r.diagnostic_kind == kind && r.descriptor.is_universal()) {
                eligible.push_back(&r);
            }
        }
    }
    if (eligible.empty()) return {true, ""};
    std::sort(eligible.begin(), eligible.end(), rank);
    return {false, eligible.front()->record_id};
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("registry_test_" + std::to_string(Rng(::getpid()).next_u64()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("specificity counts pinned attributes") {
    CHECK(desc("").specificity() == 0);
    CHECK(desc("").is_universal());
    CHECK(desc("fuel=gasoline").specificity() == 1);
    const auto full = desc(
        "fuel=gasoline,configuration=inline,cylinders=4,displacement_l=2.0,"
        "aspiration=turbo,make=ford,instance=joe");
    CHECK(full.specificity() == 7);
    CHECK_FALSE(full.is_universal());
}

TEST_CASE("ancestors cover descendants and clashes disqualify") {
    const auto full = desc(
        "fuel=gasoline,configuration=inline,cylinders=4,displacement_l=2.0,"
        "aspiration=turbo,make=ford,instance=joe");
    const auto parent = desc("fuel=gasoline,cylinders=4,aspiration=turbo");
    CHECK(generalizes(parent, full));
    CHECK_FALSE(generalizes(full, parent));  // the child pins attributes the parent lacks
    CHECK(generalizes(desc(""), full));
    CHECK(generalizes(desc(""), desc("")));
    CHECK_FALSE(generalizes(desc("fuel=diesel"), full));
    CHECK(generalizes(full, full));
}

TEST_CASE("displacement compares by tenth-liter bucket") {
    CHECK(displacement_bucket(2.0) == 20);
    CHECK(displacement_bucket(2.04) == 20);
    CHECK(displacement_bucket(1.96) == 20);
    CHECK(displacement_bucket(2.1) == 21);
    CHECK(generalizes(desc("displacement_l=2.0"), desc("displacement_l=2.04")));
    CHECK(generalizes(desc("displacement_l=1.96"), desc("displacement_l=2.0")));
    CHECK_FALSE(generalizes(desc("displacement_l=2.0"), desc("displacement_l=2.1")));
    CHECK(desc("displacement_l=2.04").to_json() == desc("displacement_l=1.97").to_json());
}

TEST_CASE("coverage is a partial order over random descriptors") {
    Rng rng(0x9A77E);
    int comparable = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        const auto c = random_descriptor(rng, 0.35);
        const auto b = loosened(c, rng);
        const auto a = loosened(b, rng);
        CHECK(generalizes(a, a));
        CHECK(generalizes(a, b));
        CHECK(generalizes(b, c));
        CHECK(generalizes(a, c));  // transitive along the constructed chain

        auto x = random_descriptor(rng, 0.45);
        auto y = random_descriptor(rng, 0.45);
        if (rng.next_below(2)) {
            y = x;  // force mutual coverage, with displacement off-grid in-bucket
            if (y.displacement_l) y.displacement_l = *y.displacement_l + 0.02;
        }
        if (generalizes(x, y) && generalizes(y, x)) {
            CHECK(x.to_json() == y.to_json());
            ++comparable;
        }
        if (generalizes(x, y) && generalizes(y, c)) CHECK(generalizes(x, c));
    }
    CHECK(comparable > 2000);  // antisymmetry must actually get exercised
}

TEST_CASE("selection walks to less specific records as support demands") {
    ModelRegistry reg;
    reg.records = {
        record("exact", "fuel=gasoline,configuration=inline,cylinders=4,displacement_l=2.0,aspiration=turbo,make=ford,instance=joe", "misfire", 2),
        record("i4-turbo", "fuel=gasoline,configuration=inline,cylinders=4,displacement_l=2.0,aspiration=turbo", "misfire", 6),
        record("all-gasoline", "fuel=gasoline", "misfire", 40),
        record("root", "", "misfire", 80),
    };
    const auto query = desc(
        "fuel=gasoline,configuration=inline,cylinders=4,displacement_l=2.0,"
        "aspiration=turbo,make=ford,instance=joe");

    CHECK(select_model(reg, query, "misfire", 1).record_id == "exact");
    CHECK(select_model(reg, query, "misfire", 5).record_id == "i4-turbo");
    CHECK(select_model(reg, query, "misfire", 20).record_id == "all-gasoline");
    CHECK(select_model(reg, query, "misfire", 50).record_id == "root");
    // none reaches the bar, yet the root still answers
    CHECK(select_model(reg, query, "misfire", 500).record_id == "root");
    CHECK_THROWS_AS(select_model(reg, query, "knock", 1), MatchError);

    const auto diesel = desc("fuel=diesel,cylinders=6");
    CHECK(select_model(reg, diesel, "misfire", 1).record_id == "root");
}

TEST_CASE("selection ties break by training support then record id") {
    ModelRegistry reg;
    reg.records = {
        record("b-late", "fuel=gasoline,cylinders=4", "misfire", 5),
        record("a-early", "fuel=gasoline,cylinders=4", "misfire", 5),
        record("bigger", "fuel=gasoline,aspiration=turbo", "misfire", 9),
    };
    const auto query = desc("fuel=gasoline,cylinders=4,aspiration=turbo");
    CHECK(select_model(reg, query, "misfire", 1).record_id == "bigger");
    reg.records[2].n_train = 5;
    CHECK(select_model(reg, query, "misfire", 1).record_id == "a-early");
}

TEST_CASE("selection equals the exhaustive oracle on random registries") {
    Rng rng(0x5E1EC7);
    int errors = 0, picks = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        ModelRegistry reg;
        const int n = 1 + static_cast<int>(rng.next_below(30));
        for (int i = 0; i < n; ++i) {
            char id[8];
            std::snprintf(id, sizeof(id), "r%02d", i);
            reg.records.push_back(
                record(id, "", rng.next_below(2) ? "misfire" : "knock",
                       1 + static_cast<int>(rng.next_below(9))));
            reg.records.back().descriptor = random_descriptor(rng, 0.55);
        }
        const auto query = random_descriptor(rng, 0.15);
        const std::string kind = rng.next_below(2) ? "misfire" : "knock";
        const int min_n = 1 + static_cast<int>(rng.next_below(6));

        const auto expect = oracle_select(reg, query, kind, min_n);
        if (expect.error) {
            CHECK_THROWS_AS(select_model(reg, query, kind, min_n), MatchError);
            ++errors;
        } else {
            CHECK(select_model(reg, query, kind, min_n).record_id == expect.id);
            ++picks;
        }
    }
    CHECK(picks > 300);
    CHECK(errors > 100);
}

TEST_CASE("raising the support bar never yields a more specific model") {
    Rng rng(0xB0057);
    for (int trial = 0; trial < 200; ++trial) {
        ModelRegistry reg;
        const int n = 1 + static_cast<int>(rng.next_below(20));
        for (int i = 0; i < n; ++i) {
            reg.records.push_back(record("r" + std::to_string(i), "", "misfire",
                                         1 + static_cast<int>(rng.next_below(9))));
            reg.records.back().descriptor = random_descriptor(rng, 0.5);
        }
        const auto query = random_descriptor(rng, 0.2);
        int prev_spec = 8;
        bool errored = false;
        for (int min_n = 1; min_n <= 10; ++min_n) {
            try {
                const auto& pick = select_model(reg, query, "misfire", min_n);
                CHECK_FALSE(errored);  // an error cannot heal by raising the bar
                CHECK(pick.descriptor.specificity() <= prev_spec);
                prev_spec = pick.descriptor.specificity();
            } catch (const MatchError&) {
                errored = true;
            }
        }
    }
}

TEST_CASE("identification keeps confident stages and wildcards the rest") {
    ChainPrediction pred;
    pred.stages = {stage("aspiration", "turbo", 0.91),
                   stage("fuel", "gasoline", 0.99),
                   stage("cylinders", "4", 0.55)};
    const auto d = identify(pred, 0.8);
    CHECK(d.to_json() == desc("fuel=gasoline,aspiration=turbo").to_json());

    ChainPrediction timid;
    timid.stages = {stage("aspiration", "turbo", 0.6), stage("fuel", "gasoline", 0.7)};
    CHECK(identify(timid, 0.8).is_universal());

    ChainPrediction offgrid;
    offgrid.stages = {stage("paint", "red", 0.99)};
    CHECK_THROWS_AS(identify(offgrid, 0.8), ConfigError);
}

TEST_CASE("a short list overrides what the audio says") {
    ChainPrediction pred;
    pred.stages = {stage("fuel", "gasoline", 0.99)};
    const auto mine = desc("fuel=diesel,cylinders=6,instance=my-truck");
    CHECK(identify(pred, 0.8, {mine}).to_json() == mine.to_json());

    const auto wagon = desc("fuel=gasoline,cylinders=4,instance=wagon");
    const auto picked = identify(pred, 0.8, {mine, wagon});
    CHECK(picked.to_json() == wagon.to_json());  // the diesel entry conflicts

    // every entry conflicts: classification stands
    const auto other = desc("fuel=diesel,instance=loaner");
    CHECK(identify(pred, 0.8, {mine, other}).to_json() ==
          desc("fuel=gasoline").to_json());
}

TEST_CASE("descriptor text and json forms reject nonsense and round-trip") {
    CHECK_THROWS_AS(desc("fuel=propane"), ConfigError);
    CHECK_THROWS_AS(desc("cylinders=zero"), ConfigError);
    CHECK_THROWS_AS(desc("cylinders=0"), ConfigError);
    CHECK_THROWS_AS(desc("displacement_l=-2"), ConfigError);
    CHECK_THROWS_AS(desc("banana=4"), ConfigError);
    CHECK_THROWS_AS(desc("fuel:gasoline"), ConfigError);

    const auto d = desc("fuel=gasoline,cylinders=4,displacement_l=1.98,make=kia");
    CHECK(VehicleDescriptor::from_json(d.to_json()).to_json() == d.to_json());
    CHECK(d.to_string() == "fuel=gasoline,cylinders=4,displacement_l=2.0,make=kia");
    CHECK(desc("").to_string() == "(universal)");
    CHECK(VehicleDescriptor::from_json(desc("").to_json()).is_universal());

    auto r = record("rec-1", "fuel=diesel", "knock", 4);
    r.required_context.entries = {{"engine_on", Ternary::yes}};
    CHECK(ModelRecord::from_json(r.to_json()).to_json() == r.to_json());

    CHECK_THROWS_AS(record("", "fuel=diesel", "knock", 4).validate(), ConfigError);
    CHECK_THROWS_AS(record("x", "fuel=diesel", "", 4).validate(), ConfigError);
    CHECK_THROWS_AS(record("x", "fuel=diesel", "knock", 0).validate(), ConfigError);

    ModelRegistry reg;
    reg.records = {record("dup", "", "knock", 1), record("dup", "", "knock", 2)};
    CHECK_THROWS_AS(reg.validate(), ConfigError);
}

TEST_CASE("registry persists through versioned snapshots and a blob store") {
    TempDir tmp;
    const std::string dir = tmp.path.string();

    auto reg = open_registry(dir);
    CHECK(reg.version == 0);
    CHECK(reg.records.empty());

    const std::string blob_a = "alpha model bytes";
    const std::string blob_b = "beta model bytes";
    const auto sha_a = add_model(reg, dir, record("rec-a", "fuel=gasoline", "misfire", 3), blob_a);
    const auto sha_b = add_model(reg, dir, record("rec-b", "", "misfire", 9), blob_b);
    CHECK(sha_a != sha_b);
    CHECK(store_blob(dir, blob_a) == sha_a);  // same bytes, same address
    CHECK_THROWS_AS(add_model(reg, dir, record("rec-a", "", "knock", 1), blob_a),
                    ConfigError);

    save_registry(reg, dir);
    CHECK(reg.version == 1);
    save_registry(reg, dir);
    CHECK(reg.version == 2);
    CHECK(std::filesystem::exists(tmp.path / "snapshots" / "index-v0001.json"));
    CHECK(std::filesystem::exists(tmp.path / "snapshots" / "index-v0002.json"));

    const auto reopened = open_registry(dir);
    CHECK(reopened.version == 2);
    CHECK(reopened.to_json() == reg.to_json());
    CHECK(load_blob(dir, sha_a) == blob_a);

    write_file((tmp.path / "blobs" / sha_b).string(), "tampered");
    CHECK_THROWS_AS(load_blob(dir, sha_b), ModelError);
    CHECK_THROWS_AS(load_blob(dir, std::string(64, '0')), IoError);

    write_file((tmp.path / "index.json").string(), "{not json");
    CHECK_THROWS_AS(open_registry(dir), ConfigError);
}
