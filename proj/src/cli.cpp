#include "autodiag/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "autodiag/audio.hpp"
#include "autodiag/binio.hpp"
#include "autodiag/chain.hpp"
#include "autodiag/context.hpp"
#include "autodiag/errors.hpp"
#include "autodiag/features.hpp"
#include "autodiag/hash.hpp"
#include "autodiag/learn.hpp"
#include "autodiag/registry.hpp"
#include "autodiag/rng.hpp"
#include "autodiag/synth.hpp"
#include "json.hpp"

namespace autodiag {

const char* kToolVersion = "0.3.0";

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Arguments that parse but don't add up to a runnable command.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void log_event(json j) { std::cerr << j.dump() << "\n"; }

void log_run(const std::string& subcommand, const json& config,
             const std::string& config_hash) {
    log_event(json{{"event", "run"},
                   {"tool", "autodiag"},
                   {"version", kToolVersion},
                   {"subcommand", subcommand},
                   {"config", config},
                   {"config_hash", config_hash}});
}

json load_json_file(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ConfigError(path + " is not valid json: " + e.what());
    }
}

// flags > config file > defaults: a value keeps its parsed flag when the
// flag appeared, otherwise the config file's entry wins if present.
template <typename T>
void resolve(const CLI::Option* opt, const json& cfg, const char* key, T& value) {
    if (opt->count() > 0 || !cfg.contains(key)) return;
    try {
        value = cfg.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key ") + key + ": " + e.what());
    }
}

std::vector<std::string> wav_paths(const std::string& dir) {
    if (!fs::is_directory(dir)) throw IoError("no such directory: " + dir);
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".wav") paths.push_back(entry.path().string());
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw DataError("no wav clips under " + dir);
    return paths;
}

std::vector<LabeledClip> load_labeled(const std::string& dir) {
    std::vector<LabeledClip> clips;
    for (const auto& path : wav_paths(dir)) {
        LabeledClip lc;
        lc.clip = ingest(path);
        lc.labels = read_sidecar(path).labels;
        clips.push_back(std::move(lc));
    }
    return clips;
}

void write_artifact(const std::string& path, const json& body) {
    write_file(path, body.dump(2) + "\n");
    log_event(json{{"event", "artifact"}, {"path", path}});
}

std::string hash_of(const json& config) { return fnv1a64_hex(config.dump()); }

struct SynthArgs {
    std::string out, config_path, mix_path;
    int vehicles = 16;
    int clips = 2;
    double duration = 6.0;
    uint64_t seed = 0;
    CLI::Option *o_vehicles, *o_clips, *o_duration, *o_seed;
};

std::vector<ClassCell> mix_from_json(const json& doc) {
    std::vector<ClassCell> mix;
    try {
        for (const auto& c : doc) {
            ClassCell cell;
            cell.fuel = fuel_from_string(c.at("fuel").get<std::string>());
            cell.cylinders = c.at("cylinders").get<int>();
            cell.aspiration = aspiration_from_string(c.at("aspiration").get<std::string>());
            if (c.contains("weight")) cell.weight = c.at("weight").get<double>();
            mix.push_back(cell);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed mix: ") + e.what());
    }
    return mix;
}

void cmd_synth(SynthArgs& a) {
    json cfg = a.config_path.empty() ? json::object() : load_json_file(a.config_path);
    resolve(a.o_vehicles, cfg, "vehicles", a.vehicles);
    resolve(a.o_clips, cfg, "clips_per_vehicle", a.clips);
    resolve(a.o_duration, cfg, "duration_s", a.duration);
    resolve(a.o_seed, cfg, "seed", a.seed);
    if (a.o_seed->count() == 0 && !cfg.contains("seed")) {
        throw UsageError("synth needs --seed (or a seed in --config)");
    }
    json mix_json = json::array();  // empty: full balanced mix
    if (!a.mix_path.empty()) mix_json = load_json_file(a.mix_path);
    else if (cfg.contains("mix")) mix_json = cfg.at("mix");
    const json resolved{{"out", a.out},
                        {"vehicles", a.vehicles},
                        {"clips_per_vehicle", a.clips},
                        {"duration_s", a.duration},
                        {"mix", mix_json},
                        {"seed", a.seed}};
    log_run("synth", resolved, hash_of(resolved));

    CorpusSpec spec;
    spec.mix = mix_from_json(mix_json);
    spec.n_vehicles = a.vehicles;
    spec.clips_per_vehicle = a.clips;
    spec.clip_duration_s = a.duration;
    spec.seed = a.seed;
    const auto corpus = generate_corpus(spec);

    fs::create_directories(a.out);
    json files = json::array();
    std::map<std::string, int> counter;
    for (const auto& lc : corpus) {
        char name[64];
        std::snprintf(name, sizeof(name), "%s-c%02d.wav", lc.clip.source_id.c_str(),
                      counter[lc.clip.source_id]++);
        const auto path = (fs::path(a.out) / name).string();
        write_clip(path, lc.clip, lc.labels);
        files.push_back(json{{"file", name},
                             {"source_id", lc.clip.source_id},
                             {"labels", lc.labels}});
    }
    write_artifact((fs::path(a.out) / "manifest.json").string(),
                   json{{"config", resolved},
                        {"config_hash", hash_of(resolved)},
                        {"clips", files}});
    std::cout << "wrote " << corpus.size() << " clips to " << a.out << "\n";
}

struct IngestArgs {
    std::string in, out;
};

void cmd_ingest(IngestArgs& a) {
    const json resolved{{"in", a.in}, {"out", a.out}};
    log_run("ingest", resolved, hash_of(resolved));
    fs::create_directories(a.out);
    json files = json::array();
    for (const auto& path : wav_paths(a.in)) {
        const auto clip = ingest(path);
        const auto meta = read_sidecar(path);
        const auto name = fs::path(path).filename().string();
        write_clip((fs::path(a.out) / name).string(), clip, meta.labels);
        files.push_back(json{{"file", name},
                             {"source_id", clip.source_id},
                             {"duration_s", clip.duration_s()}});
    }
    write_artifact((fs::path(a.out) / "manifest.json").string(),
                   json{{"config", resolved},
                        {"config_hash", hash_of(resolved)},
                        {"clips", files}});
    std::cout << "canonicalized " << files.size() << " clips into " << a.out << "\n";
}

struct FeaturizeArgs {
    std::string in, out, features_path, config_path;
    double segment_length = 1.0;
    int segments = 3;
    uint64_t seed = 0;
    int threads = 1;
    CLI::Option *o_len, *o_segs, *o_seed, *o_threads;
};

void cmd_featurize(FeaturizeArgs& a) {
    json cfg = a.config_path.empty() ? json::object() : load_json_file(a.config_path);
    resolve(a.o_len, cfg, "segment_length_s", a.segment_length);
    resolve(a.o_segs, cfg, "segments_per_clip", a.segments);
    resolve(a.o_seed, cfg, "seed", a.seed);
    resolve(a.o_threads, cfg, "threads", a.threads);
    if (a.o_seed->count() == 0 && !cfg.contains("seed")) {
        throw UsageError("featurize needs --seed (or a seed in --config)");
    }
    FeatureConfig fc;
    if (!a.features_path.empty()) fc = FeatureConfig::from_json(load_json_file(a.features_path));
    else if (cfg.contains("features")) fc = FeatureConfig::from_json(cfg.at("features"));
    fc.validate();

    const json resolved{{"in", a.in},
                        {"out", a.out},
                        {"features", fc.to_json()},
                        {"segment_length_s", a.segment_length},
                        {"segments_per_clip", a.segments},
                        {"seed", a.seed}};
    log_run("featurize", resolved, hash_of(resolved));

    const auto clips = load_labeled(a.in);
    std::vector<Segment> segs;
    for (size_t c = 0; c < clips.size(); ++c) {
        auto cut = segment(clips[c].clip, a.segment_length, a.segments,
                           Rng::derive(a.seed, c));
        segs.insert(segs.end(), std::make_move_iterator(cut.begin()),
                    std::make_move_iterator(cut.end()));
    }
    const auto rows = extract_batch(segs, fc, a.threads);
    if (fs::path(a.out).extension() == ".bin") {
        write_features_bin(a.out, rows, fc);
    } else {
        write_features_csv(a.out, rows, fc);
    }
    log_event(json{{"event", "artifact"}, {"path", a.out}});
    std::cout << "extracted " << rows.size() << " rows x "
              << (rows.empty() ? 0 : rows.front().values.size()) << " features to "
              << a.out << "\n";
}

struct TrainArgs {
    std::string in, out, chain_path, config_path;
    uint64_t seed = 0;
    int threads = 1;
    CLI::Option *o_seed, *o_threads;
};

void cmd_train(TrainArgs& a) {
    json cfg = a.config_path.empty() ? json::object() : load_json_file(a.config_path);
    resolve(a.o_seed, cfg, "seed", a.seed);
    resolve(a.o_threads, cfg, "threads", a.threads);
    if (a.o_seed->count() == 0 && !cfg.contains("seed")) {
        throw UsageError("train needs --seed (or a seed in --config)");
    }
    ChainSpec spec = ChainSpec::standard();
    if (!a.chain_path.empty()) spec = ChainSpec::from_json(load_json_file(a.chain_path));
    else if (cfg.contains("chain")) spec = ChainSpec::from_json(cfg.at("chain"));
    spec.validate();

    const json resolved{{"in", a.in},
                        {"out", a.out},
                        {"chain", spec.to_json()},
                        {"seed", a.seed},
                        {"threads", a.threads}};
    log_run("train", resolved, hash_of(resolved));

    const auto clips = load_labeled(a.in);
    const auto chain = train_chain(spec, clips, a.seed, a.threads);
    save_chain(a.out, chain);
    log_event(json{{"event", "artifact"}, {"path", a.out}});
    for (const auto& stage : chain.stages) {
        std::cout << "stage " << stage.label << ": " << stage.model.classes.size()
                  << " classes, input width "
                  << (stage.columns.empty() ? stage.model.n_features
                                            : stage.columns.size())
                  << (stage.columns.empty() ? "" : " (reduced)") << "\n";
    }
    std::cout << "chain written to " << a.out << "\n";
}

struct GridArgs {
    std::string in, out, csv_out, grid_path, label = "fuel";
    uint64_t seed = 0;
    int threads = 1;
    CLI::Option *o_label, *o_seed, *o_threads;
};

GridSpec grid_spec_from_json(const json& doc) {
    GridSpec spec;
    try {
        for (const auto& f : doc.at("features")) {
            spec.feature_configs.push_back(FeatureConfig::from_json(f));
        }
        for (const auto& m : doc.at("models")) {
            GridModel gm;
            gm.kind = ensemble_kind_from_string(m.at("kind").get<std::string>());
            if (m.contains("params")) gm.params = TrainParams::from_json(m.at("params"));
            spec.models.push_back(gm);
        }
        if (doc.contains("n_folds")) spec.n_folds = doc.at("n_folds").get<int>();
        if (doc.contains("segment_length_s")) {
            spec.segment_length_s = doc.at("segment_length_s").get<double>();
        }
        if (doc.contains("segments_per_clip")) {
            spec.segments_per_clip = doc.at("segments_per_clip").get<int>();
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed grid spec: ") + e.what());
    }
    return spec;
}

void cmd_grid(GridArgs& a) {
    const json doc = load_json_file(a.grid_path);
    resolve(a.o_label, doc, "label", a.label);
    resolve(a.o_seed, doc, "seed", a.seed);
    resolve(a.o_threads, doc, "threads", a.threads);
    if (a.o_seed->count() == 0 && !doc.contains("seed")) {
        throw UsageError("grid needs --seed (or a seed in the grid spec)");
    }
    const GridSpec spec = grid_spec_from_json(doc);

    json spec_json{{"features", json::array()}, {"models", json::array()}};
    for (const auto& f : spec.feature_configs) spec_json["features"].push_back(f.to_json());
    for (const auto& m : spec.models) {
        spec_json["models"].push_back(
            json{{"kind", to_string(m.kind)}, {"params", m.params.to_json()}});
    }
    spec_json["n_folds"] = spec.n_folds;
    spec_json["segment_length_s"] = spec.segment_length_s;
    spec_json["segments_per_clip"] = spec.segments_per_clip;
    const json resolved{{"in", a.in},
                        {"out", a.out},
                        {"grid", spec_json},
                        {"label", a.label},
                        {"seed", a.seed},
                        {"threads", a.threads}};
    log_run("grid", resolved, hash_of(resolved));

    const auto clips = load_labeled(a.in);
    const auto results = grid_search(spec, clips, a.label, a.seed, a.threads);
    write_artifact(a.out, json{{"config", resolved},
                               {"config_hash", hash_of(resolved)},
                               {"results", grid_to_json(results)}});
    if (!a.csv_out.empty()) {
        write_grid_csv(a.csv_out, results);
        log_event(json{{"event", "artifact"}, {"path", a.csv_out}});
    }
    std::printf("%-8s %-6s %-6s %8s %8s %8s\n", "cell", "feat", "model", "roc",
                "pr", "acc");
    for (const auto& r : results) {
        if (r.failed) {
            std::printf("%-8s %-6d %-6d failed: %s\n", r.cell_id.c_str(),
                        r.feature_index, r.model_index, r.error.c_str());
        } else {
            std::printf("%-8s %-6d %-6d %8.4f %8.4f %8.4f\n", r.cell_id.c_str(),
                        r.feature_index, r.model_index, r.roc_auc, r.pr_auc,
                        r.accuracy);
        }
    }
}

struct EvaluateArgs {
    std::string in, model, out;
    int segments = 9;
    uint64_t seed = 0;
    int threads = 1;
    CLI::Option *o_segs, *o_seed, *o_threads;
};

void cmd_evaluate(EvaluateArgs& a) {
    if (a.o_seed->count() == 0) throw UsageError("evaluate needs --seed");
    const json resolved{{"in", a.in},
                        {"model", a.model},
                        {"out", a.out},
                        {"segments_per_clip", a.segments},
                        {"seed", a.seed},
                        {"threads", a.threads}};
    log_run("evaluate", resolved, hash_of(resolved));

    const auto chain = load_chain(a.model);
    const auto clips = load_labeled(a.in);
    const auto reports = evaluate_chain(chain, clips, a.segments, a.seed, a.threads);
    json stages = json::object();
    for (const auto& [stage, report] : reports) {
        std::cout << "== stage " << stage << " ==\n" << report.format_table() << "\n";
        stages[stage] = report.to_json();
    }
    if (!a.out.empty()) {
        write_artifact(a.out, json{{"config", resolved},
                                   {"config_hash", hash_of(resolved)},
                                   {"stages", stages}});
    }
}

struct ClassifyArgs {
    std::string clip, model, out;
    int segments = 9;
    uint64_t seed = 0;
    CLI::Option *o_segs, *o_seed;
};

void cmd_classify(ClassifyArgs& a) {
    if (a.o_seed->count() == 0) throw UsageError("classify needs --seed");
    const json resolved{{"clip", a.clip},
                        {"model", a.model},
                        {"segments_per_clip", a.segments},
                        {"seed", a.seed}};
    log_run("classify", resolved, hash_of(resolved));

    const auto chain = load_chain(a.model);
    const auto clip = ingest(a.clip);
    const auto pred = predict_chain(chain, clip, a.segments, a.seed);
    std::cout << pred.to_json().dump(2) << "\n";
    if (!a.out.empty()) {
        write_artifact(a.out, json{{"config", resolved},
                                   {"config_hash", hash_of(resolved)},
                                   {"prediction", pred.to_json()}});
    }
}

struct SelectArgs {
    std::string registry_dir, kind, descriptor, out;
    std::string context_path, weights_path, db_path;
    int min_n = 3;
};

void cmd_select_model(SelectArgs& a) {
    const bool with_context = !a.context_path.empty();
    if (with_context && (a.weights_path.empty() || a.db_path.empty())) {
        throw UsageError("--context needs --weights and --db alongside it");
    }
    const json resolved{{"registry", a.registry_dir},
                        {"kind", a.kind},
                        {"descriptor", a.descriptor},
                        {"min_n", a.min_n},
                        {"context", a.context_path},
                        {"weights", a.weights_path},
                        {"db", a.db_path}};
    log_run("select-model", resolved, hash_of(resolved));

    const auto registry = open_registry(a.registry_dir);
    const auto query = VehicleDescriptor::from_string(a.descriptor);

    const ModelRecord* chosen = nullptr;
    std::string via;
    json ctx_report;

    if (with_context) {
        const auto qv = ContextVector::from_json(load_json_file(a.context_path));
        const auto weights = ContextWeights::from_json(load_json_file(a.weights_path));
        const auto db = ReferenceContextDB::from_json(load_json_file(a.db_path));
        const auto reduced = prune(qv, db, weights);

        std::vector<std::string> pruned_away;
        for (const auto& name : qv.names()) {
            const auto& kept = reduced.query.names();
            if (std::find(kept.begin(), kept.end(), name) == kept.end()) {
                pruned_away.push_back(name);
            }
        }
        std::cout << "context: kept";
        for (const auto& n : reduced.query.names()) std::cout << " " << n;
        if (!pruned_away.empty()) {
            std::cout << " (pruned";
            for (const auto& n : pruned_away) std::cout << " " << n;
            std::cout << ")";
        }
        std::cout << "\n";
        for (const auto& entry : reduced.db.entries) {
            double d = 0.0;
            for (size_t i = 0; i < entry.context.entries.size(); ++i) {
                if (entry.context.entries[i].value != reduced.query.entries[i].value) {
                    d += weights.of(entry.context.entries[i].name);
                }
            }
            std::printf("  candidate %s distance %g\n", entry.model_id.c_str(), d);
        }
        const auto res = match_nearest(reduced.query, reduced.db, weights);
        std::printf("context pick %s (distance %g, margin %g)\n",
                    res.model_id.c_str(), res.distance, res.margin);
        ctx_report = res.to_json();

        for (const auto& r : registry.records) {
            if (r.record_id != res.model_id) continue;
            if (r.diagnostic_kind == a.kind && r.n_train >= a.min_n &&
                generalizes(r.descriptor, query)) {
                chosen = &r;
                via = "context-match";
            } else {
                std::cout << "context pick " << res.model_id
                          << " is not applicable here; walking the lattice\n";
            }
            break;
        }
    }

    if (!chosen) {
        chosen = &select_model(registry, query, a.kind, a.min_n);
        via = chosen->descriptor.is_universal() && query.specificity() > 0
                  ? "universal-fallback"
                  : "lattice-walk";
    }
    std::printf("selected %s: specificity %d, n_train %d, via %s\n",
                chosen->record_id.c_str(), chosen->descriptor.specificity(),
                chosen->n_train, via.c_str());
    const json report{{"config", resolved},
                      {"config_hash", hash_of(resolved)},
                      {"record_id", chosen->record_id},
                      {"descriptor", chosen->descriptor.to_json()},
                      {"specificity", chosen->descriptor.specificity()},
                      {"n_train", chosen->n_train},
                      {"blob_sha", chosen->blob_sha},
                      {"via", via},
                      {"context", with_context ? ctx_report : json()}};
    if (!a.out.empty()) write_artifact(a.out, report);
}

struct RegistryAddArgs {
    std::string dir, id, kind, descriptor, blob_path, context_path;
    int n_train = 1;
};

void cmd_registry_add(RegistryAddArgs& a) {
    const json resolved{{"registry", a.dir}, {"id", a.id},     {"kind", a.kind},
                        {"descriptor", a.descriptor},          {"n_train", a.n_train},
                        {"blob", a.blob_path}};
    log_run("registry-add", resolved, hash_of(resolved));
    auto registry = open_registry(a.dir);
    ModelRecord record;
    record.record_id = a.id;
    record.descriptor = VehicleDescriptor::from_string(a.descriptor);
    record.diagnostic_kind = a.kind;
    record.n_train = a.n_train;
    if (!a.context_path.empty()) {
        record.required_context = ContextVector::from_json(load_json_file(a.context_path));
    }
    const auto sha = add_model(registry, a.dir, std::move(record), read_file(a.blob_path));
    save_registry(registry, a.dir);
    std::cout << "stored " << a.id << " blob " << sha << ", registry v"
              << registry.version << "\n";
}

void cmd_registry_list(const std::string& dir) {
    const json resolved{{"registry", dir}};
    log_run("registry-list", resolved, hash_of(resolved));
    const auto registry = open_registry(dir);
    std::cout << "registry v" << registry.version << ", " << registry.records.size()
              << " records\n";
    for (const auto& r : registry.records) {
        std::printf("%-16s kind=%s n_train=%d spec=%d %s\n", r.record_id.c_str(),
                    r.diagnostic_kind.c_str(), r.n_train,
                    r.descriptor.specificity(), r.descriptor.to_string().c_str());
    }
}

int code_for(const std::exception& e) {
    if (dynamic_cast<const UsageError*>(&e)) return 2;
    if (dynamic_cast<const IoError*>(&e)) return 3;
    if (dynamic_cast<const AudioFormatError*>(&e)) return 4;
    if (dynamic_cast<const DataError*>(&e)) return 5;
    if (dynamic_cast<const ConfigError*>(&e)) return 6;
    if (dynamic_cast<const TrainError*>(&e)) return 7;
    if (dynamic_cast<const ModelError*>(&e)) return 7;
    if (dynamic_cast<const MatchError*>(&e)) return 8;
    return 1;
}

const char* family_for(int code) {
    switch (code) {
        case 2: return "usage";
        case 3: return "io";
        case 4: return "audio-format";
        case 5: return "data";
        case 6: return "config";
        case 7: return "model";
        case 8: return "match";
        default: return "unexpected";
    }
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"idle-sound engine diagnostics"};
    app.set_version_flag("--version", std::string("autodiag ") + kToolVersion);
    app.require_subcommand(1);

    std::function<void()> action;

    auto synth_args = std::make_shared<SynthArgs>();
    auto* synth = app.add_subcommand("synth", "generate a labeled synthetic corpus");
    synth->add_option("--out", synth_args->out, "output clip directory")->required();
    synth_args->o_vehicles = synth->add_option("--vehicles", synth_args->vehicles);
    synth_args->o_clips = synth->add_option("--clips-per-vehicle", synth_args->clips);
    synth_args->o_duration = synth->add_option("--duration", synth_args->duration);
    synth_args->o_seed = synth->add_option("--seed", synth_args->seed);
    synth->add_option("--mix", synth_args->mix_path,
                      "json class mix; default is the full balanced cross");
    synth->add_option("--config", synth_args->config_path, "json config file");
    synth->callback([&action, synth_args] { action = [synth_args] { cmd_synth(*synth_args); }; });

    auto ingest_args = std::make_shared<IngestArgs>();
    auto* ing = app.add_subcommand("ingest", "canonicalize raw recordings");
    ing->add_option("--in", ingest_args->in)->required();
    ing->add_option("--out", ingest_args->out)->required();
    ing->callback([&action, ingest_args] { action = [ingest_args] { cmd_ingest(*ingest_args); }; });

    auto feat_args = std::make_shared<FeaturizeArgs>();
    auto* feat = app.add_subcommand("featurize", "extract feature rows from clips");
    feat->add_option("--in", feat_args->in)->required();
    feat->add_option("--out", feat_args->out, "csv, or .bin for the binary dump")->required();
    feat->add_option("--features", feat_args->features_path, "feature config json");
    feat_args->o_len = feat->add_option("--segment-length", feat_args->segment_length);
    feat_args->o_segs = feat->add_option("--segments-per-clip", feat_args->segments);
    feat_args->o_seed = feat->add_option("--seed", feat_args->seed);
    feat_args->o_threads = feat->add_option("--threads", feat_args->threads);
    feat->add_option("--config", feat_args->config_path, "json config file");
    feat->callback([&action, feat_args] { action = [feat_args] { cmd_featurize(*feat_args); }; });

    auto train_args = std::make_shared<TrainArgs>();
    auto* train = app.add_subcommand("train", "train the stage chain on labeled clips");
    train->add_option("--in", train_args->in)->required();
    train->add_option("--out", train_args->out)->required();
    train->add_option("--chain", train_args->chain_path, "chain spec json");
    train_args->o_seed = train->add_option("--seed", train_args->seed);
    train_args->o_threads = train->add_option("--threads", train_args->threads);
    train->add_option("--config", train_args->config_path, "json config file");
    train->callback([&action, train_args] { action = [train_args] { cmd_train(*train_args); }; });

    auto grid_args = std::make_shared<GridArgs>();
    auto* grid = app.add_subcommand("grid", "cross-validated feature x model sweep");
    grid->add_option("--in", grid_args->in)->required();
    grid->add_option("--out", grid_args->out, "json results artifact")->required();
    grid->add_option("--csv", grid_args->csv_out, "optional csv export");
    grid->add_option("--grid", grid_args->grid_path, "grid spec json")->required();
    grid_args->o_label = grid->add_option("--label", grid_args->label);
    grid_args->o_seed = grid->add_option("--seed", grid_args->seed);
    grid_args->o_threads = grid->add_option("--threads", grid_args->threads);
    grid->callback([&action, grid_args] { action = [grid_args] { cmd_grid(*grid_args); }; });

    auto eval_args = std::make_shared<EvaluateArgs>();
    auto* eval = app.add_subcommand("evaluate", "score a chain on held-out clips");
    eval->add_option("--in", eval_args->in)->required();
    eval->add_option("--model", eval_args->model)->required();
    eval->add_option("--out", eval_args->out, "json report artifact");
    eval_args->o_segs = eval->add_option("--segments-per-clip", eval_args->segments);
    eval_args->o_seed = eval->add_option("--seed", eval_args->seed);
    eval_args->o_threads = eval->add_option("--threads", eval_args->threads);
    eval->callback([&action, eval_args] { action = [eval_args] { cmd_evaluate(*eval_args); }; });

    auto cls_args = std::make_shared<ClassifyArgs>();
    auto* cls = app.add_subcommand("classify", "run the chain on one clip");
    cls->add_option("--clip", cls_args->clip)->required();
    cls->add_option("--model", cls_args->model)->required();
    cls->add_option("--out", cls_args->out, "json prediction artifact");
    cls_args->o_segs = cls->add_option("--segments-per-clip", cls_args->segments);
    cls_args->o_seed = cls->add_option("--seed", cls_args->seed);
    cls->callback([&action, cls_args] { action = [cls_args] { cmd_classify(*cls_args); }; });

    auto sel_args = std::make_shared<SelectArgs>();
    auto* sel = app.add_subcommand("select-model",
                                   "pick the diagnostic model for a vehicle and state");
    sel->add_option("--registry", sel_args->registry_dir)->required();
    sel->add_option("--kind", sel_args->kind)->required();
    sel->add_option("--descriptor", sel_args->descriptor, "name=value, comma separated");
    sel->add_option("--min-n", sel_args->min_n);
    sel->add_option("--context", sel_args->context_path, "query context vector json");
    sel->add_option("--weights", sel_args->weights_path, "context weights json");
    sel->add_option("--db", sel_args->db_path, "reference context db json");
    sel->add_option("--out", sel_args->out, "json decision artifact");
    sel->callback([&action, sel_args] { action = [sel_args] { cmd_select_model(*sel_args); }; });

    auto reg_add = std::make_shared<RegistryAddArgs>();
    auto reg_list_dir = std::make_shared<std::string>();
    auto* reg = app.add_subcommand("registry", "inspect or extend the model registry");
    reg->require_subcommand(1);
    auto* radd = reg->add_subcommand("add", "store a model blob and its record");
    radd->add_option("--registry", reg_add->dir)->required();
    radd->add_option("--id", reg_add->id)->required();
    radd->add_option("--kind", reg_add->kind)->required();
    radd->add_option("--descriptor", reg_add->descriptor);
    radd->add_option("--n-train", reg_add->n_train);
    radd->add_option("--blob", reg_add->blob_path)->required();
    radd->add_option("--required-context", reg_add->context_path);
    radd->callback([&action, reg_add] { action = [reg_add] { cmd_registry_add(*reg_add); }; });
    auto* rlist = reg->add_subcommand("list", "print every record");
    rlist->add_option("--registry", *reg_list_dir)->required();
    rlist->callback([&action, reg_list_dir] { action = [reg_list_dir] { cmd_registry_list(*reg_list_dir); }; });

    std::vector<std::string> argv_store = args;
    std::vector<char*> argv;
    std::string prog = "autodiag";
    argv.push_back(prog.data());
    for (auto& s : argv_store) argv.push_back(s.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (action) action();
        return 0;
    } catch (const std::exception& e) {
        const int code = code_for(e);
        log_event(json{{"event", "error"},
                       {"family", family_for(code)},
                       {"message", e.what()}});
        std::cerr << "error: " << e.what() << "\n";
        return code;
    }
}

}  // namespace autodiag
