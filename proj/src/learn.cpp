#include "autodiag/learn.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "autodiag/errors.hpp"
#include "autodiag/parallel.hpp"
#include "autodiag/rng.hpp"

namespace autodiag {

Matrix matrix_from(const std::vector<FeatureVector>& rows) {
    Matrix m;
    if (rows.empty()) return m;
    m = Matrix(rows.size(), rows[0].values.size());
    for (size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].values.size() != m.cols) {
            throw DataError("inconsistent feature vector widths");
        }
        std::copy(rows[r].values.begin(), rows[r].values.end(),
                  m.data.begin() + static_cast<long>(r * m.cols));
    }
    return m;
}

std::string to_string(EnsembleKind kind) {
    switch (kind) {
        case EnsembleKind::bagged_forest: return "bagged_forest";
        case EnsembleKind::extra_random_forest: return "extra_random_forest";
        case EnsembleKind::gradient_boosted: return "gradient_boosted";
    }
    throw ConfigError("bad ensemble kind");
}

EnsembleKind ensemble_kind_from_string(const std::string& s) {
    if (s == "bagged_forest") return EnsembleKind::bagged_forest;
    if (s == "extra_random_forest") return EnsembleKind::extra_random_forest;
    if (s == "gradient_boosted") return EnsembleKind::gradient_boosted;
    throw ConfigError("unknown ensemble kind: " + s);
}

nlohmann::json TrainParams::to_json() const {
    return nlohmann::json{
        {"n_trees", n_trees},
        {"max_depth", max_depth},
        {"min_leaf", min_leaf},
        {"mtry", mtry},
        {"boosting_rounds", boosting_rounds},
        {"learning_rate", learning_rate},
        {"class_weights", class_weights},
    };
}

TrainParams TrainParams::from_json(const nlohmann::json& doc) {
    TrainParams p;
    try {
        if (doc.contains("n_trees")) p.n_trees = doc["n_trees"].get<int>();
        if (doc.contains("max_depth")) p.max_depth = doc["max_depth"].get<int>();
        if (doc.contains("min_leaf")) p.min_leaf = doc["min_leaf"].get<int>();
        if (doc.contains("mtry")) p.mtry = doc["mtry"].get<int>();
        if (doc.contains("boosting_rounds")) p.boosting_rounds = doc["boosting_rounds"].get<int>();
        if (doc.contains("learning_rate")) p.learning_rate = doc["learning_rate"].get<double>();
        if (doc.contains("class_weights")) p.class_weights = doc["class_weights"].get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad train params: ") + e.what());
    }
    return p;
}

namespace {

struct LabelIndex {
    std::vector<std::string> classes;  // lexicographic
    std::vector<int> y;
    std::vector<double> counts;
};

LabelIndex encode_labels(const std::vector<std::string>& labels) {
    LabelIndex ix;
    std::map<std::string, int> order;
    for (const auto& l : labels) order.emplace(l, 0);
    int next = 0;
    for (auto& [name, id] : order) {
        id = next++;
        ix.classes.push_back(name);
    }
    ix.counts.assign(ix.classes.size(), 0.0);
    ix.y.reserve(labels.size());
    for (const auto& l : labels) {
        const int id = order[l];
        ix.y.push_back(id);
        ix.counts[id] += 1.0;
    }
    return ix;
}

double gini_impurity(std::span<const double> wcounts, double wtotal) {
    if (wtotal <= 0.0) return 0.0;
    double acc = 0.0;
    for (double c : wcounts) {
        const double p = c / wtotal;
        acc += p * p;
    }
    return 1.0 - acc;
}

// Recursive CART builder shared by the bagged and extra-random forests.
// Bagged trees sort candidate columns and take the best midpoint split;
// extra trees draw one uniform threshold per candidate column.
struct ClassTreeBuilder {
    const Matrix& X;
    const std::vector<int>& y;
    int n_classes;
    const std::vector<double>& class_w;
    int max_depth;
    int min_leaf;
    int mtry;
    bool extra;
    Rng rng;
    std::vector<TreeNode> nodes;
    std::vector<double>& importances;
    double root_weight = 0.0;
    std::vector<int> feat_pool;

    int build(std::vector<int>& idx, int depth) {
        const size_t K = static_cast<size_t>(n_classes);
        std::vector<double> wcounts(K, 0.0);
        std::vector<double> raw(K, 0.0);
        double wtotal = 0.0;
        for (int i : idx) {
            wcounts[static_cast<size_t>(y[static_cast<size_t>(i)])] +=
                class_w[static_cast<size_t>(y[static_cast<size_t>(i)])];
            raw[static_cast<size_t>(y[static_cast<size_t>(i)])] += 1.0;
            wtotal += class_w[static_cast<size_t>(y[static_cast<size_t>(i)])];
        }
        if (depth == 0) root_weight = wtotal;

        const double imp = gini_impurity(wcounts, wtotal);
        const bool depth_stop = max_depth >= 0 && depth >= max_depth;
        if (imp == 0.0 || depth_stop || idx.size() < 2 * static_cast<size_t>(min_leaf)) {
            return make_leaf(raw);
        }

        int best_f = -1;
        double best_thr = 0.0, best_gain = 0.0;
        const size_t d = X.cols;
        for (int j = 0; j < mtry; ++j) {
            const size_t pick =
                static_cast<size_t>(j) + rng.next_below(d - static_cast<size_t>(j));
            std::swap(feat_pool[static_cast<size_t>(j)], feat_pool[pick]);
            const int f = feat_pool[static_cast<size_t>(j)];
            double thr, gain;
            if (extra ? try_random_split(idx, f, wcounts, wtotal, imp, thr, gain)
                      : try_sorted_split(idx, f, wcounts, wtotal, imp, thr, gain)) {
                if (gain > best_gain) {
                    best_gain = gain;
                    best_f = f;
                    best_thr = thr;
                }
            }
        }
        if (best_f < 0) return make_leaf(raw);

        std::vector<int> left_idx, right_idx;
        left_idx.reserve(idx.size());
        right_idx.reserve(idx.size());
        for (int i : idx) {
            (X.at(static_cast<size_t>(i), static_cast<size_t>(best_f)) <= best_thr
                 ? left_idx
                 : right_idx)
                .push_back(i);
        }
        if (left_idx.empty() || right_idx.empty()) return make_leaf(raw);

        importances[static_cast<size_t>(best_f)] += (wtotal / root_weight) * best_gain;

        const int node = static_cast<int>(nodes.size());
        nodes.emplace_back();
        nodes[static_cast<size_t>(node)].feature = best_f;
        nodes[static_cast<size_t>(node)].threshold = best_thr;
        idx.clear();
        idx.shrink_to_fit();
        const int left = build(left_idx, depth + 1);
        const int right = build(right_idx, depth + 1);
        nodes[static_cast<size_t>(node)].left = left;
        nodes[static_cast<size_t>(node)].right = right;
        return node;
    }

    int make_leaf(const std::vector<double>& raw) {
        const int node = static_cast<int>(nodes.size());
        nodes.emplace_back();
        nodes[static_cast<size_t>(node)].histogram = raw;
        return node;
    }

    bool try_random_split(const std::vector<int>& idx, int f,
                          const std::vector<double>& wcounts, double wtotal,
                          double imp, double& thr, double& gain) {
        double lo = X.at(static_cast<size_t>(idx[0]), static_cast<size_t>(f));
        double hi = lo;
        for (int i : idx) {
            const double v = X.at(static_cast<size_t>(i), static_cast<size_t>(f));
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi <= lo) return false;
        thr = rng.uniform(lo, hi);

        std::vector<double> lw(wcounts.size(), 0.0);
        double lt = 0.0;
        size_t ln = 0;
        for (int i : idx) {
            if (X.at(static_cast<size_t>(i), static_cast<size_t>(f)) <= thr) {
                lw[static_cast<size_t>(y[static_cast<size_t>(i)])] +=
                    class_w[static_cast<size_t>(y[static_cast<size_t>(i)])];
                lt += class_w[static_cast<size_t>(y[static_cast<size_t>(i)])];
                ++ln;
            }
        }
        if (ln < static_cast<size_t>(min_leaf) ||
            idx.size() - ln < static_cast<size_t>(min_leaf)) {
            return false;
        }
        std::vector<double> rw(wcounts.size());
        for (size_t k = 0; k < wcounts.size(); ++k) rw[k] = wcounts[k] - lw[k];
        gain = imp - (lt / wtotal) * gini_impurity(lw, lt) -
               ((wtotal - lt) / wtotal) * gini_impurity(rw, wtotal - lt);
        return gain > 1e-12;
    }

    bool try_sorted_split(const std::vector<int>& idx, int f,
                          const std::vector<double>& wcounts, double wtotal,
                          double imp, double& thr, double& gain) {
        std::vector<std::pair<double, int>> vals;
        vals.reserve(idx.size());
        for (int i : idx) {
            vals.emplace_back(X.at(static_cast<size_t>(i), static_cast<size_t>(f)), i);
        }
        std::sort(vals.begin(), vals.end());
        if (vals.front().first >= vals.back().first) return false;

        std::vector<double> lw(wcounts.size(), 0.0);
        double lt = 0.0;
        bool found = false;
        gain = 0.0;
        for (size_t i = 0; i + 1 < vals.size(); ++i) {
            const int cls = y[static_cast<size_t>(vals[i].second)];
            lw[static_cast<size_t>(cls)] += class_w[static_cast<size_t>(cls)];
            lt += class_w[static_cast<size_t>(cls)];
            if (vals[i].first >= vals[i + 1].first) continue;
            const size_t ln = i + 1;
            if (ln < static_cast<size_t>(min_leaf) ||
                vals.size() - ln < static_cast<size_t>(min_leaf)) {
                continue;
            }
            std::vector<double> rw(wcounts.size());
            for (size_t k = 0; k < wcounts.size(); ++k) rw[k] = wcounts[k] - lw[k];
            const double g = imp - (lt / wtotal) * gini_impurity(lw, lt) -
                             ((wtotal - lt) / wtotal) *
                                 gini_impurity(rw, wtotal - lt);
            if (g > gain + 1e-15) {
                gain = g;
                thr = 0.5 * (vals[i].first + vals[i + 1].first);
                found = true;
            }
        }
        return found && gain > 1e-12;
    }
};

// Depth-bounded least-squares regression tree grown level by level over
// globally presorted columns; fills the final leaf index of every row.
struct RegTreeResult {
    DecisionTree tree;
    std::vector<int32_t> leaf_of_row;
};

RegTreeResult fit_regression_tree(const Matrix& X,
                                  const std::vector<std::vector<int32_t>>& sorted_cols,
                                  std::span<const double> residual,
                                  std::span<const double> row_w, int max_depth,
                                  int min_leaf, std::vector<double>& importances,
                                  double importance_scale) {
    const size_t n = X.rows, d = X.cols;
    RegTreeResult out;
    auto& nodes = out.tree.nodes;
    nodes.emplace_back();
    out.leaf_of_row.assign(n, 0);

    struct NodeStat {
        double S = 0.0, W = 0.0;
        size_t C = 0;
    };
    struct Best {
        int f = -1;
        double thr = 0.0, gain = 0.0;
    };

    std::vector<int32_t> level_nodes = {0};
    NodeStat root;
    for (size_t i = 0; i < n; ++i) {
        root.S += row_w[i] * residual[i];
        root.W += row_w[i];
        root.C += 1;
    }
    std::vector<NodeStat> stats = {root};

    for (int depth = 0; depth < max_depth && !level_nodes.empty(); ++depth) {
        const size_t m = level_nodes.size();
        std::vector<int32_t> slot_of(nodes.size(), -1);
        for (size_t s = 0; s < m; ++s) slot_of[static_cast<size_t>(level_nodes[s])] = static_cast<int32_t>(s);

        std::vector<Best> best(m);
        std::vector<double> SL(m), WL(m), prev(m);
        std::vector<size_t> CL(m);
        std::vector<uint8_t> has_prev(m);

        for (size_t f = 0; f < d; ++f) {
            std::fill(SL.begin(), SL.end(), 0.0);
            std::fill(WL.begin(), WL.end(), 0.0);
            std::fill(CL.begin(), CL.end(), 0);
            std::fill(has_prev.begin(), has_prev.end(), 0);
            for (int32_t i : sorted_cols[f]) {
                const int32_t nd = out.leaf_of_row[static_cast<size_t>(i)];
                const int32_t s = slot_of[static_cast<size_t>(nd)];
                if (s < 0) continue;
                const double v = X.at(static_cast<size_t>(i), f);
                const NodeStat& st = stats[static_cast<size_t>(s)];
                if (has_prev[static_cast<size_t>(s)] && v > prev[static_cast<size_t>(s)] &&
                    CL[static_cast<size_t>(s)] >= static_cast<size_t>(min_leaf) &&
                    st.C - CL[static_cast<size_t>(s)] >= static_cast<size_t>(min_leaf)) {
                    const double wl = WL[static_cast<size_t>(s)];
                    const double wr = st.W - wl;
                    if (wl > 0.0 && wr > 0.0) {
                        const double sl = SL[static_cast<size_t>(s)];
                        const double sr = st.S - sl;
                        const double gain = sl * sl / wl + sr * sr / wr - st.S * st.S / st.W;
                        if (gain > best[static_cast<size_t>(s)].gain + 1e-15) {
                            best[static_cast<size_t>(s)] = {
                                static_cast<int>(f),
                                0.5 * (prev[static_cast<size_t>(s)] + v), gain};
                        }
                    }
                }
                SL[static_cast<size_t>(s)] += row_w[static_cast<size_t>(i)] *
                                              residual[static_cast<size_t>(i)];
                WL[static_cast<size_t>(s)] += row_w[static_cast<size_t>(i)];
                CL[static_cast<size_t>(s)] += 1;
                prev[static_cast<size_t>(s)] = v;
                has_prev[static_cast<size_t>(s)] = 1;
            }
        }

        std::vector<int32_t> next_level;
        std::vector<NodeStat> next_stats;
        bool any_split = false;
        for (size_t s = 0; s < m; ++s) {
            if (best[s].f < 0 || best[s].gain <= 1e-12) continue;
            any_split = true;
            const auto left = static_cast<int32_t>(nodes.size());
            nodes.emplace_back();
            nodes.emplace_back();
            auto& nd = nodes[static_cast<size_t>(level_nodes[s])];
            nd.feature = best[s].f;
            nd.threshold = best[s].thr;
            nd.left = left;
            nd.right = left + 1;
            next_level.push_back(left);
            next_level.push_back(left + 1);
            next_stats.emplace_back();
            next_stats.emplace_back();
            importances[static_cast<size_t>(best[s].f)] += importance_scale * best[s].gain;
        }
        if (!any_split) break;

        for (size_t i = 0; i < n; ++i) {
            const int32_t nd = out.leaf_of_row[i];
            const auto& node = nodes[static_cast<size_t>(nd)];
            if (node.is_leaf()) continue;
            const int32_t child =
                X.at(i, static_cast<size_t>(node.feature)) <= node.threshold ? node.left
                                                                             : node.right;
            out.leaf_of_row[i] = child;
        }
        std::vector<int32_t> next_slot(nodes.size(), -1);
        for (size_t c = 0; c < next_level.size(); ++c) {
            next_slot[static_cast<size_t>(next_level[c])] = static_cast<int32_t>(c);
        }
        for (size_t i = 0; i < n; ++i) {
            const int32_t s = next_slot[static_cast<size_t>(out.leaf_of_row[i])];
            if (s < 0) continue;
            next_stats[static_cast<size_t>(s)].S += row_w[i] * residual[i];
            next_stats[static_cast<size_t>(s)].W += row_w[i];
            next_stats[static_cast<size_t>(s)].C += 1;
        }
        level_nodes = std::move(next_level);
        stats = std::move(next_stats);
    }
    return out;
}

}  // namespace

TreeEnsemble train(EnsembleKind kind, const Matrix& rows,
                   const std::vector<std::string>& labels,
                   const TrainParams& params, uint64_t seed) {
    if (rows.rows == 0 || rows.cols == 0) throw DataError("empty training matrix");
    if (labels.size() != rows.rows) throw DataError("label count does not match rows");
    for (double v : rows.data) {
        if (!std::isfinite(v)) throw DataError("non-finite feature value in training data");
    }
    const LabelIndex ix = encode_labels(labels);
    const size_t K = ix.classes.size();
    if (K < 2) throw TrainError("training needs at least 2 classes, got " +
                                std::to_string(K));

    TreeEnsemble model;
    model.kind = kind;
    model.classes = ix.classes;
    model.n_features = rows.cols;
    model.params = params;
    model.learning_rate = params.learning_rate;
    model.importances.assign(rows.cols, 0.0);

    std::vector<double> class_w(K, 1.0);
    if (params.class_weights) {
        for (size_t k = 0; k < K; ++k) {
            class_w[k] = static_cast<double>(rows.rows) /
                         (static_cast<double>(K) * ix.counts[k]);
        }
    }

    const int threads = std::max(1, params.threads);

    if (kind == EnsembleKind::gradient_boosted) {
        const int depth = params.max_depth < 0 ? 3 : params.max_depth;
        const int rounds = params.boosting_rounds;
        if (rounds < 1) throw ConfigError("boosting_rounds must be >= 1");

        std::vector<std::vector<int32_t>> sorted_cols(rows.cols);
        parallel_for(rows.cols, threads, [&](size_t f) {
            auto& col = sorted_cols[f];
            col.resize(rows.rows);
            std::iota(col.begin(), col.end(), 0);
            std::stable_sort(col.begin(), col.end(), [&](int32_t a, int32_t b) {
                return rows.at(static_cast<size_t>(a), f) < rows.at(static_cast<size_t>(b), f);
            });
        });

        std::vector<double> row_w(rows.rows);
        for (size_t i = 0; i < rows.rows; ++i) {
            row_w[i] = class_w[static_cast<size_t>(ix.y[i])];
        }

        model.base_score.resize(K);
        for (size_t k = 0; k < K; ++k) {
            model.base_score[k] = std::log(ix.counts[k] / static_cast<double>(rows.rows));
        }
        Matrix F(rows.rows, K);
        for (size_t i = 0; i < rows.rows; ++i) {
            for (size_t k = 0; k < K; ++k) F.at(i, k) = model.base_score[k];
        }

        Matrix P(rows.rows, K);
        auto softmax_rows = [&]() {
            for (size_t i = 0; i < rows.rows; ++i) {
                double mx = F.at(i, 0);
                for (size_t k = 1; k < K; ++k) mx = std::max(mx, F.at(i, k));
                double z = 0.0;
                for (size_t k = 0; k < K; ++k) z += std::exp(F.at(i, k) - mx);
                for (size_t k = 0; k < K; ++k) P.at(i, k) = std::exp(F.at(i, k) - mx) / z;
            }
        };
        auto deviance = [&]() {
            double acc = 0.0;
            for (size_t i = 0; i < rows.rows; ++i) {
                acc -= std::log(std::max(1e-15, P.at(i, static_cast<size_t>(ix.y[i]))));
            }
            return acc / static_cast<double>(rows.rows);
        };

        model.trees.resize(static_cast<size_t>(rounds) * K);
        std::vector<std::vector<double>> imp_slots(K,
                                                   std::vector<double>(rows.cols, 0.0));
        softmax_rows();
        model.training_deviance.push_back(deviance());
        const double kfac = (static_cast<double>(K) - 1.0) / static_cast<double>(K);

        std::vector<std::vector<double>> residual(K, std::vector<double>(rows.rows));
        for (int round = 0; round < rounds; ++round) {
            for (size_t k = 0; k < K; ++k) {
                for (size_t i = 0; i < rows.rows; ++i) {
                    residual[k][i] =
                        (ix.y[i] == static_cast<int>(k) ? 1.0 : 0.0) - P.at(i, k);
                }
            }
            parallel_for(K, threads, [&](size_t k) {
                RegTreeResult fit = fit_regression_tree(
                    rows, sorted_cols, residual[k], row_w, depth, params.min_leaf,
                    imp_slots[k], 1.0);

                auto& nodes = fit.tree.nodes;
                std::vector<double> num(nodes.size(), 0.0), den(nodes.size(), 0.0),
                    cnt(nodes.size(), 0.0);
                for (size_t i = 0; i < rows.rows; ++i) {
                    const auto leaf = static_cast<size_t>(fit.leaf_of_row[i]);
                    const double r = residual[k][i];
                    num[leaf] += row_w[i] * r;
                    den[leaf] += row_w[i] * std::abs(r) * (1.0 - std::abs(r));
                    cnt[leaf] += 1.0;
                }
                for (size_t nix = 0; nix < nodes.size(); ++nix) {
                    if (!nodes[nix].is_leaf()) continue;
                    nodes[nix].value =
                        den[nix] > 1e-12 ? kfac * num[nix] / den[nix] : 0.0;
                    nodes[nix].histogram = {cnt[nix]};
                }
                for (size_t i = 0; i < rows.rows; ++i) {
                    F.at(i, k) += params.learning_rate *
                                  nodes[static_cast<size_t>(fit.leaf_of_row[i])].value;
                }
                model.trees[static_cast<size_t>(round) * K + k] = std::move(fit.tree);
            });
            softmax_rows();
            model.training_deviance.push_back(deviance());
        }
        for (size_t k = 0; k < K; ++k) {
            for (size_t f = 0; f < rows.cols; ++f) model.importances[f] += imp_slots[k][f];
        }
    } else {
        const int n_trees = params.n_trees;
        if (n_trees < 1) throw ConfigError("n_trees must be >= 1");
        const int mtry =
            params.mtry > 0
                ? std::min<int>(params.mtry, static_cast<int>(rows.cols))
                : std::max(1, static_cast<int>(std::floor(
                                  std::sqrt(static_cast<double>(rows.cols)))));
        const bool extra = kind == EnsembleKind::extra_random_forest;

        model.trees.resize(static_cast<size_t>(n_trees));
        std::vector<std::vector<double>> imp_slots(
            static_cast<size_t>(n_trees), std::vector<double>(rows.cols, 0.0));
        parallel_for(static_cast<size_t>(n_trees), threads, [&](size_t t) {
            Rng rng(Rng::derive(seed, t));
            std::vector<int> idx(rows.rows);
            if (kind == EnsembleKind::bagged_forest) {
                for (auto& i : idx) {
                    i = static_cast<int>(rng.next_below(rows.rows));
                }
            } else {
                std::iota(idx.begin(), idx.end(), 0);
            }
            ClassTreeBuilder builder{rows,
                                     ix.y,
                                     static_cast<int>(K),
                                     class_w,
                                     params.max_depth,
                                     params.min_leaf,
                                     mtry,
                                     extra,
                                     std::move(rng),
                                     {},
                                     imp_slots[t],
                                     0.0,
                                     {}};
            builder.feat_pool.resize(rows.cols);
            std::iota(builder.feat_pool.begin(), builder.feat_pool.end(), 0);
            builder.nodes.reserve(2 * rows.rows);
            builder.build(idx, 0);
            model.trees[t].nodes = std::move(builder.nodes);
        });
        for (const auto& slot : imp_slots) {
            for (size_t f = 0; f < rows.cols; ++f) model.importances[f] += slot[f];
        }
    }

    const double total = std::accumulate(model.importances.begin(),
                                         model.importances.end(), 0.0);
    if (total > 0.0) {
        for (double& v : model.importances) v /= total;
    }
    return model;
}

namespace {

const TreeNode& route(const DecisionTree& tree, std::span<const double> row) {
    size_t at = 0;
    while (!tree.nodes[at].is_leaf()) {
        const auto& nd = tree.nodes[at];
        at = static_cast<size_t>(
            row[static_cast<size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right);
    }
    return tree.nodes[at];
}

}  // namespace

std::vector<double> TreeEnsemble::predict_row(std::span<const double> row) const {
    if (row.size() != n_features) {
        throw DataError("row width " + std::to_string(row.size()) +
                        " does not match model width " + std::to_string(n_features));
    }
    const size_t K = classes.size();
    std::vector<double> out(K, 0.0);
    if (kind == EnsembleKind::gradient_boosted) {
        std::vector<double> F(base_score);
        const size_t rounds = trees.size() / K;
        for (size_t r = 0; r < rounds; ++r) {
            for (size_t k = 0; k < K; ++k) {
                F[k] += learning_rate * route(trees[r * K + k], row).value;
            }
        }
        double mx = F[0];
        for (double v : F) mx = std::max(mx, v);
        double z = 0.0;
        for (size_t k = 0; k < K; ++k) {
            out[k] = std::exp(F[k] - mx);
            z += out[k];
        }
        for (double& v : out) v /= z;
    } else {
        for (const auto& tree : trees) {
            const auto& hist = route(tree, row).histogram;
            double total = 0.0;
            for (double c : hist) total += c;
            if (total <= 0.0) continue;
            for (size_t k = 0; k < K; ++k) out[k] += hist[k] / total;
        }
        const double z = std::accumulate(out.begin(), out.end(), 0.0);
        if (z > 0.0) {
            for (double& v : out) v /= z;
        } else {
            std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(K));
        }
    }
    return out;
}

Matrix TreeEnsemble::predict_proba(const Matrix& rows, int threads) const {
    if (rows.cols != n_features) {
        throw DataError("matrix width " + std::to_string(rows.cols) +
                        " does not match model width " + std::to_string(n_features));
    }
    Matrix out(rows.rows, classes.size());
    parallel_for(rows.rows, threads, [&](size_t i) {
        const auto p = predict_row(rows.row(i));
        std::copy(p.begin(), p.end(), out.data.begin() + static_cast<long>(i * out.cols));
    });
    return out;
}

KeepRule KeepRule::top(int k) {
    KeepRule r;
    r.mode = Mode::top_k;
    r.k = k;
    return r;
}

KeepRule KeepRule::cumulative(double threshold) {
    KeepRule r;
    r.mode = Mode::cumulative;
    r.cumulative_importance = threshold;
    return r;
}

Matrix select_columns(const Matrix& rows, std::span<const int> columns) {
    Matrix out(rows.rows, columns.size());
    for (size_t r = 0; r < rows.rows; ++r) {
        for (size_t c = 0; c < columns.size(); ++c) {
            out.at(r, c) = rows.at(r, static_cast<size_t>(columns[c]));
        }
    }
    return out;
}

Reduction reduce_features(const TreeEnsemble& reducer, const Matrix& rows,
                          const KeepRule& keep) {
    if (rows.cols != reducer.n_features) {
        throw DataError("reducer was trained on a different feature width");
    }
    const size_t d = reducer.importances.size();
    std::vector<int> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return reducer.importances[static_cast<size_t>(a)] >
               reducer.importances[static_cast<size_t>(b)];
    });

    size_t count = 0;
    if (keep.mode == KeepRule::Mode::top_k) {
        if (keep.k < 1 || static_cast<size_t>(keep.k) > d) {
            throw ConfigError("keep count " + std::to_string(keep.k) +
                              " outside [1, " + std::to_string(d) + "]");
        }
        count = static_cast<size_t>(keep.k);
    } else {
        if (keep.cumulative_importance <= 0.0 || keep.cumulative_importance > 1.0) {
            throw ConfigError("cumulative importance threshold must be in (0, 1]");
        }
        double acc = 0.0;
        while (count < d) {
            acc += reducer.importances[static_cast<size_t>(order[count])];
            ++count;
            if (acc >= keep.cumulative_importance - 1e-12) break;
        }
    }

    Reduction red;
    red.columns.assign(order.begin(), order.begin() + static_cast<long>(count));
    std::sort(red.columns.begin(), red.columns.end());
    red.reduced = select_columns(rows, red.columns);
    return red;
}

}  // namespace autodiag
