#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "autodiag/audio.hpp"
#include "autodiag/errors.hpp"
#include "autodiag/learn.hpp"
#include "autodiag/rng.hpp"

namespace autodiag {

namespace {

std::string cell_name(int fi, int mi) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "f%02d-m%02d", fi, mi);
    return buf;
}

}  // namespace

std::vector<GridResult> grid_search(const GridSpec& spec,
                                    const std::vector<LabeledClip>& clips,
                                    const std::string& label_name, uint64_t seed,
                                    int threads) {
    if (spec.feature_configs.empty()) throw ConfigError("grid has no feature configs");
    if (spec.models.empty()) throw ConfigError("grid has no models");
    if (spec.n_folds < 2) throw ConfigError("grid needs at least 2 folds");
    if (spec.segments_per_clip < 1) throw ConfigError("segments_per_clip must be >= 1");
    if (clips.empty()) throw DataError("grid search over an empty clip set");

    std::vector<std::string> clip_labels(clips.size());
    std::vector<std::string> sources;
    for (size_t c = 0; c < clips.size(); ++c) {
        const auto it = clips[c].labels.find(label_name);
        if (it == clips[c].labels.end()) {
            throw DataError("clip '" + clips[c].clip.source_id + "' has no label '" +
                            label_name + "'");
        }
        clip_labels[c] = it->second;
        if (std::find(sources.begin(), sources.end(), clips[c].clip.source_id) ==
            sources.end()) {
            sources.push_back(clips[c].clip.source_id);
        }
    }
    if (sources.size() < static_cast<size_t>(spec.n_folds)) {
        throw DataError("grid needs at least one source per fold: " +
                        std::to_string(sources.size()) + " sources, " +
                        std::to_string(spec.n_folds) + " folds");
    }

    // One fold assignment shared by every cell so comparisons are paired.
    std::vector<std::string> shuffled = sources;
    Rng fold_rng(Rng::derive(seed, 0xF01D5u));
    fold_rng.shuffle(shuffled);
    std::vector<int> fold_of_clip(clips.size());
    for (size_t c = 0; c < clips.size(); ++c) {
        const auto it =
            std::find(shuffled.begin(), shuffled.end(), clips[c].clip.source_id);
        fold_of_clip[c] =
            static_cast<int>((it - shuffled.begin()) % spec.n_folds);
    }

    std::vector<Segment> segs;
    std::vector<std::string> seg_labels;
    std::vector<int> seg_fold;
    for (size_t c = 0; c < clips.size(); ++c) {
        auto cut = segment(clips[c].clip, spec.segment_length_s,
                           spec.segments_per_clip, Rng::derive(seed, 0x5E60000u + c));
        for (auto& s : cut) {
            segs.push_back(std::move(s));
            seg_labels.push_back(clip_labels[c]);
            seg_fold.push_back(fold_of_clip[c]);
        }
    }

    std::vector<GridResult> results;
    for (size_t fi = 0; fi < spec.feature_configs.size(); ++fi) {
        Matrix all;
        std::string feature_error;
        try {
            all = matrix_from(extract_batch(segs, spec.feature_configs[fi], threads));
        } catch (const std::exception& e) {
            feature_error = e.what();
        }

        for (size_t mi = 0; mi < spec.models.size(); ++mi) {
            GridResult res;
            res.cell_id = cell_name(static_cast<int>(fi), static_cast<int>(mi));
            res.feature_index = static_cast<int>(fi);
            res.model_index = static_cast<int>(mi);
            if (!feature_error.empty()) {
                res.failed = true;
                res.error = feature_error;
                results.push_back(std::move(res));
                continue;
            }
            try {
                double roc = 0.0, pr = 0.0, acc = 0.0;
                for (int fold = 0; fold < spec.n_folds; ++fold) {
                    std::vector<size_t> tr, te;
                    for (size_t i = 0; i < segs.size(); ++i) {
                        (seg_fold[i] == fold ? te : tr).push_back(i);
                    }
                    if (tr.empty() || te.empty()) {
                        throw DataError("fold " + std::to_string(fold) + " is empty");
                    }
                    Matrix train_rows(tr.size(), all.cols);
                    Matrix test_rows(te.size(), all.cols);
                    std::vector<std::string> train_y(tr.size()), test_y(te.size());
                    for (size_t i = 0; i < tr.size(); ++i) {
                        std::copy_n(all.row(tr[i]).data(), all.cols,
                                    train_rows.data.begin() +
                                        static_cast<long>(i * all.cols));
                        train_y[i] = seg_labels[tr[i]];
                    }
                    for (size_t i = 0; i < te.size(); ++i) {
                        std::copy_n(all.row(te[i]).data(), all.cols,
                                    test_rows.data.begin() +
                                        static_cast<long>(i * all.cols));
                        test_y[i] = seg_labels[te[i]];
                    }
                    TrainParams params = spec.models[mi].params;
                    params.threads = threads;
                    const auto model = train(
                        spec.models[mi].kind, train_rows, train_y, params,
                        Rng::derive(seed, 0xCE110000u +
                                              (fi * spec.models.size() + mi) * 64 +
                                              static_cast<size_t>(fold)));
                    const auto rep = evaluate(model, test_rows, test_y, threads);
                    roc += rep.roc_auc;
                    pr += rep.pr_auc;
                    acc += rep.accuracy;
                }
                res.roc_auc = roc / spec.n_folds;
                res.pr_auc = pr / spec.n_folds;
                res.accuracy = acc / spec.n_folds;
            } catch (const std::exception& e) {
                res.failed = true;
                res.error = e.what();
            }
            results.push_back(std::move(res));
        }
    }

    std::sort(results.begin(), results.end(), [](const GridResult& a, const GridResult& b) {
        if (a.failed != b.failed) return !a.failed;
        if (a.roc_auc != b.roc_auc) return a.roc_auc > b.roc_auc;
        if (a.pr_auc != b.pr_auc) return a.pr_auc > b.pr_auc;
        return a.cell_id < b.cell_id;
    });
    return results;
}

void write_grid_csv(const std::string& path, const std::vector<GridResult>& results) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "cell_id,feature_index,model_index,roc_auc,pr_auc,accuracy,failed,error\n";
    char buf[128];
    for (const auto& r : results) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g", r.roc_auc, r.pr_auc,
                      r.accuracy);
        std::string err = r.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        out << r.cell_id << ',' << r.feature_index << ',' << r.model_index << ','
            << buf << ',' << (r.failed ? 1 : 0) << ',' << err << '\n';
    }
    if (!out) throw IoError("short write to " + path);
}

nlohmann::json grid_to_json(const std::vector<GridResult>& results) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : results) {
        arr.push_back({
            {"cell_id", r.cell_id},
            {"feature_index", r.feature_index},
            {"model_index", r.model_index},
            {"roc_auc", r.roc_auc},
            {"pr_auc", r.pr_auc},
            {"accuracy", r.accuracy},
            {"failed", r.failed},
            {"error", r.error},
        });
    }
    return arr;
}

}  // namespace autodiag
