#include "autodiag/chain.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "autodiag/binio.hpp"
#include "autodiag/errors.hpp"
#include "autodiag/hash.hpp"
#include "autodiag/parallel.hpp"
#include "autodiag/rng.hpp"

namespace autodiag {

std::string to_string(AugmentMode mode) {
    switch (mode) {
        case AugmentMode::argmax_onehot: return "argmax_onehot";
        case AugmentMode::probabilities: return "probabilities";
        case AugmentMode::both: return "both";
    }
    throw ConfigError("bad augment mode");
}

AugmentMode augment_mode_from_string(const std::string& s) {
    if (s == "argmax_onehot") return AugmentMode::argmax_onehot;
    if (s == "probabilities") return AugmentMode::probabilities;
    if (s == "both") return AugmentMode::both;
    throw ConfigError("unknown augment mode: " + s);
}

namespace {

size_t augment_width(AugmentMode mode, size_t n_classes) {
    return mode == AugmentMode::both ? 2 * n_classes : n_classes;
}

// Appends the upstream distribution in the consuming stage's encoding;
// the one-hot half marks the argmax (first index on exact ties).
void encode_upstream(AugmentMode mode, std::span<const double> dist,
                     std::vector<double>& out) {
    size_t arg = 0;
    for (size_t i = 1; i < dist.size(); ++i) {
        if (dist[i] > dist[arg]) arg = i;
    }
    if (mode != AugmentMode::probabilities) {
        for (size_t i = 0; i < dist.size(); ++i) out.push_back(i == arg ? 1.0 : 0.0);
    }
    if (mode != AugmentMode::argmax_onehot) {
        out.insert(out.end(), dist.begin(), dist.end());
    }
}

nlohmann::json keep_to_json(const KeepRule& keep) {
    return nlohmann::json{
        {"mode", keep.mode == KeepRule::Mode::top_k ? "top_k" : "cumulative"},
        {"k", keep.k},
        {"cumulative_importance", keep.cumulative_importance},
    };
}

KeepRule keep_from_json(const nlohmann::json& doc) {
    const auto mode = doc.at("mode").get<std::string>();
    if (mode == "top_k") return KeepRule::top(doc.at("k").get<int>());
    if (mode == "cumulative") {
        return KeepRule::cumulative(doc.at("cumulative_importance").get<double>());
    }
    throw ConfigError("unknown keep mode: " + mode);
}

}  // namespace

nlohmann::json StageSpec::to_json() const {
    return nlohmann::json{
        {"label", label},
        {"augment", to_string(augment)},
        {"kind", to_string(kind)},
        {"params", params.to_json()},
        {"reduce", reduce},
        {"reducer_kind", to_string(reducer_kind)},
        {"reducer_params", reducer_params.to_json()},
        {"keep", keep_to_json(keep)},
    };
}

StageSpec StageSpec::from_json(const nlohmann::json& doc) {
    StageSpec s;
    try {
        s.label = doc.at("label").get<std::string>();
        if (doc.contains("augment")) {
            s.augment = augment_mode_from_string(doc["augment"].get<std::string>());
        }
        if (doc.contains("kind")) {
            s.kind = ensemble_kind_from_string(doc["kind"].get<std::string>());
        }
        if (doc.contains("params")) s.params = TrainParams::from_json(doc["params"]);
        if (doc.contains("reduce")) s.reduce = doc["reduce"].get<bool>();
        if (doc.contains("reducer_kind")) {
            s.reducer_kind =
                ensemble_kind_from_string(doc["reducer_kind"].get<std::string>());
        }
        if (doc.contains("reducer_params")) {
            s.reducer_params = TrainParams::from_json(doc["reducer_params"]);
        }
        if (doc.contains("keep")) s.keep = keep_from_json(doc["keep"]);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad stage spec: ") + e.what());
    }
    return s;
}

void ChainSpec::validate() const {
    if (stages.empty()) throw ConfigError("chain has no stages");
    std::set<std::string> seen;
    for (const auto& s : stages) {
        if (s.label.empty()) throw ConfigError("chain stage with empty label");
        if (!seen.insert(s.label).second) {
            throw ConfigError("duplicate chain stage label: " + s.label);
        }
    }
    if (!(segment_length_s > 0.0)) throw ConfigError("segment length must be positive");
    if (train_segments_per_clip < 1) {
        throw ConfigError("train_segments_per_clip must be >= 1");
    }
    features.validate();
}

nlohmann::json ChainSpec::to_json() const {
    nlohmann::json stage_docs = nlohmann::json::array();
    for (const auto& s : stages) stage_docs.push_back(s.to_json());
    return nlohmann::json{
        {"stages", stage_docs},
        {"features", features.to_json()},
        {"segment_length_s", segment_length_s},
        {"train_segments_per_clip", train_segments_per_clip},
    };
}

ChainSpec ChainSpec::from_json(const nlohmann::json& doc) {
    ChainSpec spec;
    try {
        spec.stages.clear();
        for (const auto& s : doc.at("stages")) {
            spec.stages.push_back(StageSpec::from_json(s));
        }
        if (doc.contains("features")) {
            spec.features = FeatureConfig::from_json(doc["features"]);
        }
        if (doc.contains("segment_length_s")) {
            spec.segment_length_s = doc["segment_length_s"].get<double>();
        }
        if (doc.contains("train_segments_per_clip")) {
            spec.train_segments_per_clip = doc["train_segments_per_clip"].get<int>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad chain spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

ChainSpec ChainSpec::standard() {
    ChainSpec spec;
    StageSpec aspiration;
    aspiration.label = "aspiration";
    aspiration.kind = EnsembleKind::extra_random_forest;
    aspiration.params.n_trees = 300;
    aspiration.reduce = true;
    aspiration.reducer_kind = EnsembleKind::bagged_forest;
    aspiration.reducer_params.n_trees = 150;
    aspiration.keep = KeepRule::top(64);

    StageSpec fuel;
    fuel.label = "fuel";
    fuel.kind = EnsembleKind::gradient_boosted;

    StageSpec cylinders;
    cylinders.label = "cylinders";
    cylinders.kind = EnsembleKind::gradient_boosted;
    cylinders.params.class_weights = true;

    spec.stages = {aspiration, fuel, cylinders};
    return spec;
}

size_t TrainedChain::stage_input_width(size_t stage) const {
    size_t width = base_width;
    for (size_t j = 0; j < stage; ++j) {
        width += augment_width(stages[stage].augment, stages[j].model.classes.size());
    }
    return width;
}

const StagePrediction& ChainPrediction::stage(const std::string& name) const {
    for (const auto& s : stages) {
        if (s.stage == name) return s;
    }
    throw DataError("prediction has no stage named '" + name + "'");
}

nlohmann::json ChainPrediction::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : stages) {
        arr.push_back({
            {"stage", s.stage},
            {"classes", s.classes},
            {"distribution", s.distribution},
            {"label", s.label},
            {"confidence", s.confidence},
        });
    }
    return nlohmann::json{{"stages", arr}};
}

TrainedChain train_chain(const ChainSpec& spec,
                         const std::vector<LabeledClip>& clips, uint64_t seed,
                         int threads) {
    spec.validate();
    if (clips.empty()) throw DataError("chain training needs clips");
    for (const auto& lc : clips) {
        for (const auto& stage : spec.stages) {
            if (!lc.labels.count(stage.label)) {
                throw DataError("clip '" + lc.clip.source_id + "' has no label '" +
                                stage.label + "'");
            }
        }
    }

    std::vector<Segment> segs;
    std::vector<size_t> seg_clip;
    for (size_t c = 0; c < clips.size(); ++c) {
        auto cut = segment(clips[c].clip, spec.segment_length_s,
                           spec.train_segments_per_clip,
                           Rng::derive(seed, 0xC4A0000u + c));
        for (auto& s : cut) {
            segs.push_back(std::move(s));
            seg_clip.push_back(c);
        }
    }
    const Matrix base = matrix_from(extract_batch(segs, spec.features, threads));

    TrainedChain chain;
    chain.features = spec.features;
    chain.segment_length_s = spec.segment_length_s;
    chain.base_width = base.cols;

    for (size_t k = 0; k < spec.stages.size(); ++k) {
        const auto& stage_spec = spec.stages[k];

        size_t width = base.cols;
        for (size_t j = 0; j < k; ++j) {
            width +=
                augment_width(stage_spec.augment, chain.stages[j].model.classes.size());
        }
        Matrix rows(base.rows, width);
        std::vector<std::string> labels(base.rows);
        std::vector<double> row;
        for (size_t i = 0; i < base.rows; ++i) {
            row.assign(base.row(i).begin(), base.row(i).end());
            for (size_t j = 0; j < k; ++j) {
                // teacher forcing: the upstream "distribution" is the
                // ground-truth one-hot
                const auto& classes = chain.stages[j].model.classes;
                const auto& truth =
                    clips[seg_clip[i]].labels.at(spec.stages[j].label);
                std::vector<double> onehot(classes.size(), 0.0);
                const auto it = std::find(classes.begin(), classes.end(), truth);
                if (it == classes.end()) {
                    throw DataError("label '" + truth + "' missing from stage '" +
                                    spec.stages[j].label + "' classes");
                }
                onehot[static_cast<size_t>(it - classes.begin())] = 1.0;
                encode_upstream(stage_spec.augment, onehot, row);
            }
            std::copy(row.begin(), row.end(),
                      rows.data.begin() + static_cast<long>(i * width));
            labels[i] = clips[seg_clip[i]].labels.at(stage_spec.label);
        }

        TrainedStage trained;
        trained.label = stage_spec.label;
        trained.augment = stage_spec.augment;
        try {
            const Matrix* input = &rows;
            Matrix reduced;
            if (stage_spec.reduce) {
                TrainParams rp = stage_spec.reducer_params;
                rp.threads = threads;
                const auto reducer =
                    train(stage_spec.reducer_kind, rows, labels, rp,
                          Rng::derive(seed, 0x57AF0000u + k));
                auto red = reduce_features(reducer, rows, stage_spec.keep);
                trained.columns = std::move(red.columns);
                reduced = std::move(red.reduced);
                input = &reduced;
            }
            TrainParams cp = stage_spec.params;
            cp.threads = threads;
            trained.model = train(stage_spec.kind, *input, labels, cp,
                                  Rng::derive(seed, 0x57A60000u + k));
        } catch (const TrainError& e) {
            throw TrainError("stage '" + stage_spec.label + "': " + e.what());
        }
        chain.stages.push_back(std::move(trained));
    }
    return chain;
}

std::vector<double> vote_average(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw DataError("vote over zero segments");
    std::vector<double> avg(rows[0].size(), 0.0);
    for (const auto& r : rows) {
        if (r.size() != avg.size()) throw DataError("vote rows differ in width");
        for (size_t i = 0; i < r.size(); ++i) avg[i] += r[i];
    }
    for (double& v : avg) v /= static_cast<double>(rows.size());
    return avg;
}

ChainPrediction predict_chain(const TrainedChain& chain, const AudioClip& clip,
                              int segments_per_clip, uint64_t seed, int threads) {
    if (chain.stages.empty()) throw ModelError("chain has no stages");
    const auto segs = segment(clip, chain.segment_length_s, segments_per_clip, seed);
    const Matrix base = matrix_from(extract_batch(segs, chain.features, threads));
    if (base.cols != chain.base_width) {
        throw ModelError("feature width " + std::to_string(base.cols) +
                         " does not match the chain's " +
                         std::to_string(chain.base_width));
    }

    // per segment, per stage distribution
    std::vector<std::vector<std::vector<double>>> dists(
        segs.size(), std::vector<std::vector<double>>(chain.stages.size()));
    parallel_for(segs.size(), threads, [&](size_t i) {
        std::vector<double> row;
        for (size_t k = 0; k < chain.stages.size(); ++k) {
            const auto& stage = chain.stages[k];
            row.assign(base.row(i).begin(), base.row(i).end());
            for (size_t j = 0; j < k; ++j) {
                encode_upstream(stage.augment, dists[i][j], row);
            }
            if (stage.columns.empty()) {
                dists[i][k] = stage.model.predict_row(row);
            } else {
                std::vector<double> picked(stage.columns.size());
                for (size_t c = 0; c < stage.columns.size(); ++c) {
                    picked[c] = row[static_cast<size_t>(stage.columns[c])];
                }
                dists[i][k] = stage.model.predict_row(picked);
            }
        }
    });

    ChainPrediction pred;
    std::vector<std::vector<double>> stack(segs.size());
    for (size_t k = 0; k < chain.stages.size(); ++k) {
        for (size_t i = 0; i < segs.size(); ++i) stack[i] = dists[i][k];
        StagePrediction sp;
        sp.stage = chain.stages[k].label;
        sp.classes = chain.stages[k].model.classes;
        sp.distribution = vote_average(stack);
        const auto arg = std::max_element(sp.distribution.begin(),
                                          sp.distribution.end()) -
                         sp.distribution.begin();
        sp.label = sp.classes[static_cast<size_t>(arg)];
        sp.confidence = sp.distribution[static_cast<size_t>(arg)];
        pred.stages.push_back(std::move(sp));
    }
    return pred;
}

std::map<std::string, EvalReport> evaluate_chain(const TrainedChain& chain,
                                                 const std::vector<LabeledClip>& clips,
                                                 int segments_per_clip, uint64_t seed,
                                                 int threads) {
    if (clips.empty()) throw DataError("empty evaluation set");
    std::vector<ChainPrediction> preds(clips.size());
    // segment seeds follow the source id, so clip order cannot change
    // any clip's prediction
    parallel_for(clips.size(), threads, [&](size_t c) {
        preds[c] = predict_chain(chain, clips[c].clip, segments_per_clip,
                                 Rng::derive(seed, fnv1a64(clips[c].clip.source_id)), 1);
    });

    std::map<std::string, EvalReport> out;
    for (size_t k = 0; k < chain.stages.size(); ++k) {
        const auto& name = chain.stages[k].label;
        Matrix proba(clips.size(), chain.stages[k].model.classes.size());
        std::vector<std::string> truth(clips.size());
        for (size_t c = 0; c < clips.size(); ++c) {
            const auto& dist = preds[c].stages[k].distribution;
            std::copy(dist.begin(), dist.end(),
                      proba.data.begin() + static_cast<long>(c * proba.cols));
            const auto it = clips[c].labels.find(name);
            if (it == clips[c].labels.end()) {
                throw DataError("clip '" + clips[c].clip.source_id +
                                "' has no label '" + name + "'");
            }
            truth[c] = it->second;
        }
        out.emplace(name, evaluate_scores(proba, chain.stages[k].model.classes, truth));
    }
    return out;
}

namespace {
constexpr std::string_view kChainMagic = "ADCH";
constexpr uint32_t kChainVersion = 1;
}  // namespace

std::string serialize_chain(const TrainedChain& chain) {
    nlohmann::json stage_docs = nlohmann::json::array();
    for (const auto& s : chain.stages) {
        stage_docs.push_back({
            {"label", s.label},
            {"augment", to_string(s.augment)},
            {"columns", s.columns},
        });
    }
    const nlohmann::json header{
        {"features", chain.features.to_json()},
        {"config_hash", fnv1a64_hex(chain.features.to_json().dump())},
        {"segment_length_s", chain.segment_length_s},
        {"base_width", chain.base_width},
        {"stages", stage_docs},
    };

    ByteWriter w;
    w.raw(kChainMagic);
    w.u32(kChainVersion);
    w.str(header.dump());
    w.u32(static_cast<uint32_t>(chain.stages.size()));
    for (const auto& s : chain.stages) w.str(serialize_model(s.model));
    return w.take();
}

TrainedChain deserialize_chain(std::string_view data) {
    if (data.size() < kChainMagic.size() ||
        data.substr(0, kChainMagic.size()) != kChainMagic) {
        throw ModelError("not a chain container");
    }
    ByteReader r(data.substr(kChainMagic.size()));
    if (r.u32() != kChainVersion) throw ModelError("unsupported chain container version");

    TrainedChain chain;
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(r.str());
        chain.features = FeatureConfig::from_json(header.at("features"));
        chain.segment_length_s = header.at("segment_length_s").get<double>();
        chain.base_width = header.at("base_width").get<size_t>();
        if (header.at("config_hash").get<std::string>() !=
            fnv1a64_hex(chain.features.to_json().dump())) {
            throw ModelError("chain header config hash mismatch");
        }
        const uint32_t n_stages = r.u32();
        const auto& stage_docs = header.at("stages");
        if (stage_docs.size() != n_stages) {
            throw ModelError("chain stage count mismatch");
        }
        for (uint32_t k = 0; k < n_stages; ++k) {
            TrainedStage s;
            s.label = stage_docs[k].at("label").get<std::string>();
            s.augment =
                augment_mode_from_string(stage_docs[k].at("augment").get<std::string>());
            s.columns = stage_docs[k].at("columns").get<std::vector<int>>();
            s.model = deserialize_model(r.str());
            chain.stages.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ModelError(std::string("corrupt chain header: ") + e.what());
    }
    if (!r.done()) throw ModelError("trailing bytes after chain payload");
    return chain;
}

void save_chain(const std::string& path, const TrainedChain& chain) {
    write_file(path, serialize_chain(chain));
}

TrainedChain load_chain(const std::string& path) {
    return deserialize_chain(read_file(path));
}

}  // namespace autodiag
