#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <set>

#include "autodiag/audio.hpp"
#include "autodiag/chain.hpp"
#include "autodiag/errors.hpp"
#include "autodiag/rng.hpp"
#include "autodiag/synth.hpp"
#include "doctest.h"

using namespace autodiag;

namespace {

// small mix: 2 fuels x {4, 6} cylinders x 2 aspirations
std::vector<ClassCell> small_mix() {
    std::vector<ClassCell> mix;
    for (Fuel f : {Fuel::diesel, Fuel::gasoline}) {
        for (int cyl : {4, 6}) {
            for (Aspiration a : {Aspiration::natural, Aspiration::turbo}) {
                mix.push_back({f, cyl, a, 1.0});
            }
        }
    }
    return mix;
}

struct Split {
    std::vector<LabeledClip> train, test;
};

Split corpus_split(int n_vehicles, double duration_s, uint64_t seed) {
    CorpusSpec cs;
    cs.n_vehicles = n_vehicles;
    cs.clips_per_vehicle = 1;
    cs.clip_duration_s = duration_s;
    cs.seed = seed;
    cs.mix = small_mix();
    const auto clips = generate_corpus(cs);
    const auto sp = split_by_source(std::span<const LabeledClip>(clips), 0.3, seed + 1);
    Split out;
    for (size_t i : sp.train_indices) out.train.push_back(clips[i]);
    for (size_t i : sp.test_indices) out.test.push_back(clips[i]);
    return out;
}

StageSpec fast_stage(const std::string& label, int n_trees) {
    StageSpec s;
    s.label = label;
    s.kind = EnsembleKind::extra_random_forest;
    s.params.n_trees = n_trees;
    return s;
}

FeatureConfig fast_features() {
    FeatureConfig fc;
    fc.fft_window = 4096;
    fc.fft_kept_bins = 128;
    return fc;
}

}  // namespace

TEST_CASE("stage feature width grows by the upstream class counts") {
    auto split = corpus_split(16, 1.6, 2001);
    ChainSpec spec;
    spec.features = fast_features();
    spec.train_segments_per_clip = 2;
    spec.stages = {fast_stage("aspiration", 8), fast_stage("fuel", 8),
                   fast_stage("cylinders", 8)};
    spec.stages[1].augment = AugmentMode::argmax_onehot;
    spec.stages[2].augment = AugmentMode::both;

    const auto chain = train_chain(spec, split.train, 5);
    const size_t base = schema_for(spec.features)->size();
    CHECK(chain.base_width == base);
    CHECK(chain.stages[0].model.n_features == base);
    // one-hot of 2 aspiration classes
    CHECK(chain.stages[1].model.n_features == base + 2);
    // one-hot plus probabilities for both upstream stages
    CHECK(chain.stages[2].model.n_features == base + 4 + 4);
    CHECK(chain.stage_input_width(2) == base + 8);

    for (const auto& stage : chain.stages) {
        CHECK(stage.model.classes.size() == 2);
    }
}

TEST_CASE("single-stage chain trains the same model as a direct call") {
    auto split = corpus_split(16, 1.6, 2011);
    ChainSpec spec;
    spec.features = fast_features();
    spec.train_segments_per_clip = 2;
    spec.stages = {fast_stage("fuel", 12)};
    const uint64_t seed = 33;
    const auto chain = train_chain(spec, split.train, seed);

    std::vector<Segment> segs;
    std::vector<std::string> labels;
    for (size_t c = 0; c < split.train.size(); ++c) {
        auto cut = segment(split.train[c].clip, spec.segment_length_s,
                           spec.train_segments_per_clip,
                           Rng::derive(seed, 0xC4A0000u + c));
        for (auto& s : cut) {
            segs.push_back(std::move(s));
            labels.push_back(split.train[c].labels.at("fuel"));
        }
    }
    const auto rows = matrix_from(extract_batch(segs, spec.features));
    TrainParams params = spec.stages[0].params;
    const auto direct = train(EnsembleKind::extra_random_forest, rows, labels,
                              params, Rng::derive(seed, 0x57A60000u));
    CHECK(serialize_model(chain.stages[0].model) == serialize_model(direct));
}

TEST_CASE("vote averaging is elementwise and picks the larger mean") {
    const auto avg = vote_average({{0.6, 0.4}, {0.2, 0.8}});
    REQUIRE(avg.size() == 2);
    CHECK(avg[0] == doctest::Approx(0.4));
    CHECK(avg[1] == doctest::Approx(0.6));

    const auto same = vote_average({{0.3, 0.7}, {0.3, 0.7}, {0.3, 0.7}});
    CHECK(same[0] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(same[1] == doctest::Approx(0.7).epsilon(1e-12));

    CHECK_THROWS_AS(vote_average({}), DataError);
    CHECK_THROWS_AS(vote_average({{0.5, 0.5}, {1.0}}), DataError);
}

TEST_CASE("voting over identical segments equals the single-segment answer") {
    auto split = corpus_split(16, 1.6, 2021);
    ChainSpec spec;
    spec.features = fast_features();
    spec.train_segments_per_clip = 2;
    spec.stages = {fast_stage("aspiration", 10), fast_stage("fuel", 10)};
    const auto chain = train_chain(spec, split.train, 7);

    // a clip exactly one segment long forces every cut to offset zero
    EngineSpec es = vehicle_spec(small_mix()[0], 999, 0);
    const auto clip = synthesize(es, spec.segment_length_s, "exact");
    const auto one = predict_chain(chain, clip, 1, 42);
    const auto five = predict_chain(chain, clip, 5, 42);
    REQUIRE(one.stages.size() == five.stages.size());
    for (size_t k = 0; k < one.stages.size(); ++k) {
        REQUIRE(one.stages[k].distribution.size() ==
                five.stages[k].distribution.size());
        for (size_t i = 0; i < one.stages[k].distribution.size(); ++i) {
            CHECK(one.stages[k].distribution[i] ==
                  doctest::Approx(five.stages[k].distribution[i]).epsilon(1e-12));
        }
        CHECK(one.stages[k].label == five.stages[k].label);
    }
}

TEST_CASE("stage distributions are normalized and confidence is their max") {
    auto split = corpus_split(16, 1.6, 2031);
    ChainSpec spec;
    spec.features = fast_features();
    spec.train_segments_per_clip = 2;
    spec.stages = {fast_stage("aspiration", 10), fast_stage("cylinders", 10)};
    const auto chain = train_chain(spec, split.train, 3);

    for (const auto& lc : split.test) {
        const auto pred = predict_chain(chain, lc.clip, 3, 17);
        for (const auto& sp : pred.stages) {
            double sum = 0.0;
            double mx = 0.0;
            for (double v : sp.distribution) {
                CHECK(v >= 0.0);
                sum += v;
                mx = std::max(mx, v);
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
            CHECK(sp.confidence == doctest::Approx(mx));
            CHECK(std::find(sp.classes.begin(), sp.classes.end(), sp.label) !=
                  sp.classes.end());
        }
        CHECK(pred.stage("aspiration").stage == "aspiration");
        CHECK_THROWS_AS(pred.stage("nope"), DataError);
    }
}

TEST_CASE("inference depends on audio only, never on attached labels") {
    auto split = corpus_split(16, 1.6, 2041);
    ChainSpec spec;
    spec.features = fast_features();
    spec.train_segments_per_clip = 2;
    spec.stages = {fast_stage("fuel", 10)};
    const auto chain = train_chain(spec, split.train, 9);

    const auto& clip = split.test[0].clip;
    const auto a = predict_chain(chain, clip, 3, 5);
    AudioClip relabeled = clip;  // same audio, metadata untouched by predict
    const auto b = predict_chain(chain, relabeled, 3, 5);
    CHECK(a.to_json() == b.to_json());
}

TEST_CASE("clip order never changes per-clip chain predictions") {
    auto split = corpus_split(16, 1.6, 2051);
    ChainSpec spec;
    spec.features = fast_features();
    spec.train_segments_per_clip = 2;
    spec.stages = {fast_stage("aspiration", 10), fast_stage("fuel", 10)};
    const auto chain = train_chain(spec, split.train, 11);

    auto forward = split.test;
    auto reversed = split.test;
    std::reverse(reversed.begin(), reversed.end());
    const auto rep_f = evaluate_chain(chain, forward, 3, 77, 2);
    const auto rep_r = evaluate_chain(chain, reversed, 3, 77, 2);
    for (const auto& [name, rep] : rep_f) {
        const auto& other = rep_r.at(name);
        CHECK(rep.accuracy == other.accuracy);
        CHECK(rep.roc_auc == other.roc_auc);
        CHECK(rep.confusion_raw == other.confusion_raw);
    }
}

TEST_CASE("chained features never cost the last stage more than the tolerance") {
    auto split = corpus_split(40, 2.5, 2061);

    // boosted last stage: deterministic fit, so the two chains differ only
    // in the augmentation columns
    StageSpec cyl;
    cyl.label = "cylinders";
    cyl.kind = EnsembleKind::gradient_boosted;
    cyl.params.boosting_rounds = 40;

    ChainSpec with;
    with.features = fast_features();
    with.train_segments_per_clip = 3;
    with.stages = {fast_stage("aspiration", 60), fast_stage("fuel", 60), cyl};

    ChainSpec without;
    without.features = with.features;
    without.train_segments_per_clip = 3;
    without.stages = {cyl};

    const auto chain_with = train_chain(with, split.train, 21, 4);
    const auto chain_without = train_chain(without, split.train, 21, 4);
    const auto rep_with = evaluate_chain(chain_with, split.test, 3, 5, 4);
    const auto rep_without = evaluate_chain(chain_without, split.test, 3, 5, 4);
    CHECK(rep_with.at("cylinders").roc_auc >=
          rep_without.at("cylinders").roc_auc - 0.02);
}

TEST_CASE("averaging more segments does not hurt most stages") {
    const int seeds = 10;
    std::map<std::string, double> acc_one, acc_nine;
    for (int t = 0; t < seeds; ++t) {
        auto split = corpus_split(24, 3.0, 3000 + static_cast<uint64_t>(t));
        ChainSpec spec;
        spec.features = fast_features();
        spec.train_segments_per_clip = 3;
        spec.stages = {fast_stage("aspiration", 60), fast_stage("fuel", 60),
                       fast_stage("cylinders", 60)};
        const auto chain = train_chain(spec, split.train, 400 + static_cast<uint64_t>(t), 4);
        const auto one = evaluate_chain(chain, split.test, 1, 7, 4);
        const auto nine = evaluate_chain(chain, split.test, 9, 7, 4);
        for (const auto& [name, rep] : one) acc_one[name] += rep.accuracy;
        for (const auto& [name, rep] : nine) acc_nine[name] += rep.accuracy;
    }
    int stages_not_worse = 0;
    for (const auto& [name, total] : acc_nine) {
        if (total >= acc_one[name] - 1e-12) ++stages_not_worse;
    }
    CHECK(stages_not_worse >= 2);
}

TEST_CASE("chain containers round-trip through serialization") {
    auto split = corpus_split(16, 1.6, 2071);
    ChainSpec spec;
    spec.features = fast_features();
    spec.train_segments_per_clip = 2;
    spec.stages = {fast_stage("aspiration", 8), fast_stage("fuel", 8)};
    spec.stages[0].reduce = true;
    spec.stages[0].reducer_params.n_trees = 20;
    spec.stages[0].keep = KeepRule::top(40);
    const auto chain = train_chain(spec, split.train, 13);
    CHECK(chain.stages[0].columns.size() == 40);

    const std::string blob = serialize_chain(chain);
    const auto back = deserialize_chain(blob);
    CHECK(serialize_chain(back) == blob);
    CHECK(back.base_width == chain.base_width);
    CHECK(back.stages[0].columns == chain.stages[0].columns);

    const auto& clip = split.test[0].clip;
    CHECK(predict_chain(chain, clip, 3, 5).to_json() ==
          predict_chain(back, clip, 3, 5).to_json());

    CHECK_THROWS_AS(deserialize_chain("junk"), ModelError);
    CHECK_THROWS_AS(deserialize_chain(blob.substr(0, blob.size() - 7)), ModelError);
}

TEST_CASE("chain training rejects broken specs and data") {
    auto split = corpus_split(16, 1.6, 2081);

    ChainSpec empty;
    CHECK_THROWS_AS(train_chain(empty, split.train, 1), ConfigError);

    ChainSpec dup;
    dup.features = fast_features();
    dup.stages = {fast_stage("fuel", 4), fast_stage("fuel", 4)};
    CHECK_THROWS_AS(train_chain(dup, split.train, 1), ConfigError);

    ChainSpec missing;
    missing.features = fast_features();
    missing.stages = {fast_stage("paint_color", 4)};
    CHECK_THROWS_WITH_AS(train_chain(missing, split.train, 1),
                         doctest::Contains("paint_color"), DataError);

    // all clips share one fuel label: the stage cannot learn a boundary
    auto single = split.train;
    for (auto& lc : single) lc.labels["fuel"] = "diesel";
    ChainSpec spec;
    spec.features = fast_features();
    spec.train_segments_per_clip = 2;
    spec.stages = {fast_stage("fuel", 4)};
    CHECK_THROWS_WITH_AS(train_chain(spec, single, 1), doctest::Contains("fuel"),
                         TrainError);

    const auto chain = train_chain(spec, split.train, 1);
    AudioClip tiny;
    tiny.samples.assign(kCanonicalRate / 2, 0.1f);  // half a segment long
    tiny.source_id = "tiny";
    CHECK_THROWS_AS(predict_chain(chain, tiny, 1, 1), DataError);
}

TEST_CASE("chain spec json round-trips and the standard spec is three stages") {
    const auto std_spec = ChainSpec::standard();
    REQUIRE(std_spec.stages.size() == 3);
    CHECK(std_spec.stages[0].label == "aspiration");
    CHECK(std_spec.stages[1].label == "fuel");
    CHECK(std_spec.stages[2].label == "cylinders");
    CHECK(std_spec.stages[0].reduce);
    CHECK(std_spec.stages[2].params.class_weights);
    std_spec.validate();

    const auto doc = std_spec.to_json();
    const auto back = ChainSpec::from_json(doc);
    CHECK(back.to_json() == doc);

    auto bad = doc;
    bad["stages"] = nlohmann::json::array();
    CHECK_THROWS_AS(ChainSpec::from_json(bad), ConfigError);
}
