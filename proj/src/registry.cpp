#include "autodiag/registry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "autodiag/binio.hpp"
#include "autodiag/errors.hpp"
#include "autodiag/hash.hpp"

namespace autodiag {

namespace fs = std::filesystem;
using nlohmann::json;

long displacement_bucket(double liters) {
    return std::lround(liters * 10.0);
}

int VehicleDescriptor::specificity() const {
    int n = 0;
    n += fuel.has_value();
    n += configuration.has_value();
    n += cylinders.has_value();
    n += displacement_l.has_value();
    n += aspiration.has_value();
    n += make.has_value();
    n += instance.has_value();
    return n;
}

VehicleDescriptor VehicleDescriptor::canonical() const {
    VehicleDescriptor d = *this;
    if (d.displacement_l) {
        d.displacement_l = static_cast<double>(displacement_bucket(*d.displacement_l)) / 10.0;
    }
    return d;
}

void VehicleDescriptor::set_attribute(const std::string& name,
                                      const std::string& value) {
    try {
        if (name == "fuel") {
            if (value == "*") fuel.reset(); else fuel = fuel_from_string(value);
        } else if (name == "configuration") {
            if (value == "*") configuration.reset();
            else configuration = layout_from_string(value);
        } else if (name == "cylinders") {
            if (value == "*") { cylinders.reset(); return; }
            size_t used = 0;
            const int n = std::stoi(value, &used);
            if (used != value.size() || n < 1) {
                throw ConfigError("cylinder count must be a positive integer, got '" + value + "'");
            }
            cylinders = n;
        } else if (name == "displacement_l" || name == "displacement") {
            if (value == "*") { displacement_l.reset(); return; }
            size_t used = 0;
            const double v = std::stod(value, &used);
            if (used != value.size() || !(v > 0.0)) {
                throw ConfigError("displacement must be a positive number of liters, got '" + value + "'");
            }
            displacement_l = v;
        } else if (name == "aspiration") {
            if (value == "*") aspiration.reset();
            else aspiration = aspiration_from_string(value);
        } else if (name == "make") {
            if (value == "*") make.reset(); else make = value;
        } else if (name == "instance") {
            if (value == "*") instance.reset(); else instance = value;
        } else {
            throw ConfigError("unknown descriptor attribute '" + name + "'");
        }
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    } catch (const std::invalid_argument&) {
        throw ConfigError("descriptor attribute " + name + " rejects value '" + value + "'");
    } catch (const std::out_of_range&) {
        throw ConfigError("descriptor attribute " + name + " rejects value '" + value + "'");
    }
}

VehicleDescriptor VehicleDescriptor::from_string(const std::string& text) {
    VehicleDescriptor d;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto first = item.find_first_not_of(" \t");
        if (first == std::string::npos) continue;
        const auto last = item.find_last_not_of(" \t");
        item = item.substr(first, last - first + 1);
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigError("descriptor terms look like name=value, got '" + item + "'");
        }
        d.set_attribute(item.substr(0, eq), item.substr(eq + 1));
    }
    return d;
}

std::string VehicleDescriptor::to_string() const {
    std::string out;
    const auto put = [&out](const std::string& name, const std::string& value) {
        if (!out.empty()) out += ",";
        out += name + "=" + value;
    };
    if (fuel) put("fuel", autodiag::to_string(*fuel));
    if (configuration) put("configuration", autodiag::to_string(*configuration));
    if (cylinders) put("cylinders", std::to_string(*cylinders));
    if (displacement_l) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.1f",
                      static_cast<double>(displacement_bucket(*displacement_l)) / 10.0);
        put("displacement_l", buf);
    }
    if (aspiration) put("aspiration", autodiag::to_string(*aspiration));
    if (make) put("make", *make);
    if (instance) put("instance", *instance);
    return out.empty() ? "(universal)" : out;
}

json VehicleDescriptor::to_json() const {
    const auto c = canonical();
    json j;
    j["fuel"] = c.fuel ? json(autodiag::to_string(*c.fuel)) : json("*");
    j["configuration"] =
        c.configuration ? json(autodiag::to_string(*c.configuration)) : json("*");
    j["cylinders"] = c.cylinders ? json(*c.cylinders) : json("*");
    j["displacement_l"] = c.displacement_l ? json(*c.displacement_l) : json("*");
    j["aspiration"] =
        c.aspiration ? json(autodiag::to_string(*c.aspiration)) : json("*");
    j["make"] = c.make ? json(*c.make) : json("*");
    j["instance"] = c.instance ? json(*c.instance) : json("*");
    return j;
}

VehicleDescriptor VehicleDescriptor::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("vehicle descriptor must be a json object");
    VehicleDescriptor d;
    try {
        for (const auto& [key, value] : j.items()) {
            if (value.is_string() && value.get<std::string>() == "*") continue;
            if (key == "cylinders" && value.is_number()) {
                d.set_attribute(key, std::to_string(value.get<int>()));
            } else if ((key == "displacement_l" || key == "displacement") &&
                       value.is_number()) {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%.6g", value.get<double>());
                d.set_attribute(key, buf);
            } else if (value.is_string()) {
                d.set_attribute(key, value.get<std::string>());
            } else {
                throw ConfigError("descriptor attribute " + key + " has a malformed value");
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed vehicle descriptor: ") + e.what());
    }
    return d;
}

namespace {

template <typename T>
bool wildcard_matches(const std::optional<T>& a, const std::optional<T>& b) {
    return !a || (b && *a == *b);
}

}  // namespace

bool generalizes(const VehicleDescriptor& a, const VehicleDescriptor& b) {
    if (a.displacement_l &&
        (!b.displacement_l || displacement_bucket(*a.displacement_l) !=
                                  displacement_bucket(*b.displacement_l))) {
        return false;
    }
    return wildcard_matches(a.fuel, b.fuel) &&
           wildcard_matches(a.configuration, b.configuration) &&
           wildcard_matches(a.cylinders, b.cylinders) &&
           wildcard_matches(a.aspiration, b.aspiration) &&
           wildcard_matches(a.make, b.make) &&
           wildcard_matches(a.instance, b.instance);
}

void ModelRecord::validate() const {
    if (record_id.empty()) throw ConfigError("model record needs an id");
    if (diagnostic_kind.empty()) {
        throw ConfigError("model record '" + record_id + "' needs a diagnostic kind");
    }
    if (n_train < 1) {
        throw ConfigError("model record '" + record_id +
                          "' must come from at least one training vehicle");
    }
    required_context.validate();
}

json ModelRecord::to_json() const {
    return json{{"record_id", record_id},
                {"descriptor", descriptor.to_json()},
                {"diagnostic_kind", diagnostic_kind},
                {"n_train", n_train},
                {"blob_sha", blob_sha},
                {"required_context", required_context.to_json()}};
}

ModelRecord ModelRecord::from_json(const json& j) {
    ModelRecord r;
    try {
        r.record_id = j.at("record_id").get<std::string>();
        r.descriptor = VehicleDescriptor::from_json(j.at("descriptor"));
        r.diagnostic_kind = j.at("diagnostic_kind").get<std::string>();
        r.n_train = j.at("n_train").get<int>();
        r.blob_sha = j.at("blob_sha").get<std::string>();
        r.required_context = ContextVector::from_json(j.at("required_context"));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed model record: ") + e.what());
    }
    r.validate();
    return r;
}

void ModelRegistry::validate() const {
    std::vector<std::string> ids;
    for (const auto& r : records) {
        r.validate();
        ids.push_back(r.record_id);
    }
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
        throw ConfigError("registry record ids must be unique");
    }
}

json ModelRegistry::to_json() const {
    json recs = json::array();
    for (const auto& r : records) recs.push_back(r.to_json());
    return json{{"version", version}, {"records", recs}};
}

ModelRegistry ModelRegistry::from_json(const json& j) {
    ModelRegistry reg;
    try {
        reg.version = j.at("version").get<uint64_t>();
        for (const auto& r : j.at("records")) {
            reg.records.push_back(ModelRecord::from_json(r));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed registry index: ") + e.what());
    }
    reg.validate();
    return reg;
}

ModelRegistry open_registry(const std::string& dir) {
    const fs::path index = fs::path(dir) / "index.json";
    if (!fs::exists(index)) return ModelRegistry{};
    json j;
    try {
        j = json::parse(read_file(index.string()));
    } catch (const json::exception& e) {
        throw ConfigError("registry index " + index.string() +
                          " is not valid json: " + e.what());
    }
    return ModelRegistry::from_json(j);
}

void save_registry(ModelRegistry& registry, const std::string& dir) {
    registry.validate();
    registry.version += 1;
    const fs::path root(dir);
    fs::create_directories(root / "snapshots");
    const std::string body = registry.to_json().dump(2);
    char name[32];
    std::snprintf(name, sizeof(name), "index-v%04llu.json",
                  static_cast<unsigned long long>(registry.version));
    write_file((root / "snapshots" / name).string(), body);
    write_file((root / "index.json").string(), body);
}

std::string store_blob(const std::string& dir, const std::string& bytes) {
    const std::string sha = sha256_hex(bytes);
    const fs::path blobs = fs::path(dir) / "blobs";
    fs::create_directories(blobs);
    const fs::path target = blobs / sha;
    if (!fs::exists(target)) write_file(target.string(), bytes);
    return sha;
}

std::string load_blob(const std::string& dir, const std::string& sha) {
    const std::string bytes = read_file((fs::path(dir) / "blobs" / sha).string());
    if (sha256_hex(bytes) != sha) {
        throw ModelError("model blob " + sha + " fails its digest check");
    }
    return bytes;
}

std::string add_model(ModelRegistry& registry, const std::string& dir,
                      ModelRecord record, const std::string& blob) {
    record.blob_sha = store_blob(dir, blob);
    record.validate();
    for (const auto& r : registry.records) {
        if (r.record_id == record.record_id) {
            throw ConfigError("registry already has a record '" + record.record_id + "'");
        }
    }
    registry.records.push_back(std::move(record));
    return registry.records.back().blob_sha;
}

const ModelRecord& select_model(const ModelRegistry& registry,
                                const VehicleDescriptor& query,
                                const std::string& kind, int min_n) {
    const ModelRecord* best = nullptr;
    const auto outranks = [](const ModelRecord& a, const ModelRecord& b) {
        const int sa = a.descriptor.specificity(), sb = b.descriptor.specificity();
        if (sa != sb) return sa > sb;
        if (a.n_train != b.n_train) return a.n_train > b.n_train;
        return a.record_id < b.record_id;
    };
    for (const auto& r : registry.records) {
        if (r.diagnostic_kind != kind || r.n_train < min_n) continue;
        if (!generalizes(r.descriptor, query)) continue;
        if (!best || outranks(r, *best)) best = &r;
    }
    if (best) return *best;
    // nothing has the support: the universal root answers no matter how
    // few vehicles trained it
    for (const auto& r : registry.records) {
        if (r.diagnostic_kind != kind || !r.descriptor.is_universal()) continue;
        if (!best || r.n_train > best->n_train ||
            (r.n_train == best->n_train && r.record_id < best->record_id)) {
            best = &r;
        }
    }
    if (!best) {
        throw MatchError("no applicable model of kind '" + kind + "' for " +
                         query.to_string());
    }
    return *best;
}

VehicleDescriptor identify(const ChainPrediction& prediction,
                           double confidence_floor,
                           const std::vector<VehicleDescriptor>& short_list) {
    VehicleDescriptor classified;
    for (const auto& stage : prediction.stages) {
        if (stage.confidence < confidence_floor) continue;
        classified.set_attribute(stage.stage, stage.label);
    }
    if (short_list.empty()) return classified;
    if (short_list.size() == 1) return short_list.front();

    const json cj = classified.to_json();
    const VehicleDescriptor* best = nullptr;
    int best_score = -1;
    for (const auto& member : short_list) {
        const json mj = member.to_json();
        int score = 0;
        bool conflict = false;
        for (const auto& [key, value] : cj.items()) {
            if (value.is_string() && value.get<std::string>() == "*") continue;
            const auto& mv = mj.at(key);
            if (mv.is_string() && mv.get<std::string>() == "*") continue;
            if (mv == value) ++score; else conflict = true;
        }
        if (conflict) continue;
        if (score > best_score) {
            best_score = score;
            best = &member;
        }
    }
    return best ? *best : classified;
}

}  // namespace autodiag
