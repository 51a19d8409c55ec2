#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "autodiag/errors.hpp"
#include "autodiag/learn.hpp"

namespace autodiag {

namespace {

// Points on the curve are emitted once per distinct score, so ties
// contribute a sloped segment and the trapezoid rule scores them 0.5.
struct SweepPoint {
    double tp, fp;
};

std::vector<SweepPoint> sweep(std::span<const double> scores,
                              std::span<const uint8_t> positives) {
    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return scores[a] > scores[b];
    });
    std::vector<SweepPoint> pts;
    pts.push_back({0.0, 0.0});
    double tp = 0.0, fp = 0.0;
    size_t i = 0;
    while (i < order.size()) {
        const double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            if (positives[order[i]]) {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            ++i;
        }
        pts.push_back({tp, fp});
    }
    return pts;
}

}  // namespace

double roc_auc_binary(std::span<const double> scores,
                      std::span<const uint8_t> positives) {
    if (scores.size() != positives.size()) {
        throw DataError("score and label lengths differ");
    }
    double pos = 0.0;
    for (uint8_t p : positives) pos += p ? 1.0 : 0.0;
    const double neg = static_cast<double>(scores.size()) - pos;
    if (pos == 0.0 || neg == 0.0) return std::numeric_limits<double>::quiet_NaN();

    const auto pts = sweep(scores, positives);
    double area = 0.0;
    for (size_t i = 1; i < pts.size(); ++i) {
        const double dfpr = (pts[i].fp - pts[i - 1].fp) / neg;
        const double mean_tpr = 0.5 * (pts[i].tp + pts[i - 1].tp) / pos;
        area += dfpr * mean_tpr;
    }
    return area;
}

double pr_auc_binary(std::span<const double> scores,
                     std::span<const uint8_t> positives) {
    if (scores.size() != positives.size()) {
        throw DataError("score and label lengths differ");
    }
    double pos = 0.0;
    for (uint8_t p : positives) pos += p ? 1.0 : 0.0;
    if (pos == 0.0 || pos == static_cast<double>(scores.size())) {
        return std::numeric_limits<double>::quiet_NaN();
    }

    const auto pts = sweep(scores, positives);
    double area = 0.0;
    double prev_recall = 0.0;
    double prev_precision = 1.0;
    bool first = true;
    for (size_t i = 1; i < pts.size(); ++i) {
        const double denom = pts[i].tp + pts[i].fp;
        if (denom == 0.0) continue;
        const double recall = pts[i].tp / pos;
        const double precision = pts[i].tp / denom;
        if (first) {
            prev_precision = precision;  // flat extension back to recall 0
            first = false;
        }
        area += (recall - prev_recall) * 0.5 * (precision + prev_precision);
        prev_recall = recall;
        prev_precision = precision;
    }
    return area;
}

EvalReport evaluate_scores(const Matrix& proba,
                           const std::vector<std::string>& classes,
                           const std::vector<std::string>& labels) {
    if (proba.rows == 0) throw DataError("empty evaluation set");
    if (labels.size() != proba.rows) throw DataError("label count does not match rows");
    if (proba.cols != classes.size()) throw DataError("probability width does not match classes");

    const size_t K = classes.size();
    std::vector<int> y(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) {
        const auto it = std::find(classes.begin(), classes.end(), labels[i]);
        if (it == classes.end()) {
            throw DataError("evaluation label '" + labels[i] +
                            "' is not a model class");
        }
        y[i] = static_cast<int>(it - classes.begin());
    }

    EvalReport rep;
    rep.classes = classes;
    rep.n_rows = proba.rows;
    rep.confusion_raw.assign(K, std::vector<double>(K, 0.0));

    size_t correct = 0;
    for (size_t i = 0; i < proba.rows; ++i) {
        size_t pred = 0;
        for (size_t k = 1; k < K; ++k) {
            if (proba.at(i, k) > proba.at(i, pred)) pred = k;
        }
        rep.confusion_raw[pred][static_cast<size_t>(y[i])] += 1.0;
        if (pred == static_cast<size_t>(y[i])) ++correct;
    }
    rep.accuracy = static_cast<double>(correct) / static_cast<double>(proba.rows);

    rep.confusion_colnorm.assign(K, std::vector<double>(K, 0.0));
    for (size_t actual = 0; actual < K; ++actual) {
        double col = 0.0;
        for (size_t pred = 0; pred < K; ++pred) col += rep.confusion_raw[pred][actual];
        if (col <= 0.0) continue;
        for (size_t pred = 0; pred < K; ++pred) {
            rep.confusion_colnorm[pred][actual] = rep.confusion_raw[pred][actual] / col;
        }
    }

    double roc_sum = 0.0, pr_sum = 0.0;
    size_t scored = 0;
    std::vector<double> col(proba.rows);
    std::vector<uint8_t> pos(proba.rows);
    for (size_t k = 0; k < K; ++k) {
        size_t npos = 0;
        for (size_t i = 0; i < proba.rows; ++i) {
            col[i] = proba.at(i, k);
            pos[i] = y[i] == static_cast<int>(k) ? 1 : 0;
            npos += pos[i];
        }
        if (npos == 0 || npos == proba.rows) continue;  // class unsupported here
        roc_sum += roc_auc_binary(col, pos);
        pr_sum += pr_auc_binary(col, pos);
        ++scored;
    }
    if (scored == 0) {
        throw DataError("no class has both positive and negative examples");
    }
    rep.roc_auc = roc_sum / static_cast<double>(scored);
    rep.pr_auc = pr_sum / static_cast<double>(scored);
    return rep;
}

EvalReport evaluate(const TreeEnsemble& model, const Matrix& rows,
                    const std::vector<std::string>& labels, int threads) {
    return evaluate_scores(model.predict_proba(rows, threads), model.classes, labels);
}

nlohmann::json EvalReport::to_json() const {
    return nlohmann::json{
        {"classes", classes},
        {"confusion_raw", confusion_raw},
        {"confusion_colnorm", confusion_colnorm},
        {"roc_auc", roc_auc},
        {"pr_auc", pr_auc},
        {"accuracy", accuracy},
        {"n_rows", n_rows},
    };
}

std::string EvalReport::format_table() const {
    std::string out;
    char buf[128];
    size_t width = 9;
    for (const auto& c : classes) width = std::max(width, c.size() + 2);

    out += "predicted \\ actual";
    for (const auto& c : classes) {
        std::snprintf(buf, sizeof(buf), "%*s", static_cast<int>(width), c.c_str());
        out += buf;
    }
    out += '\n';
    for (size_t pred = 0; pred < classes.size(); ++pred) {
        std::snprintf(buf, sizeof(buf), "%-18s", classes[pred].c_str());
        out += buf;
        for (size_t actual = 0; actual < classes.size(); ++actual) {
            std::snprintf(buf, sizeof(buf), "%*.3f", static_cast<int>(width),
                          confusion_colnorm[pred][actual]);
            out += buf;
        }
        out += '\n';
    }
    std::snprintf(buf, sizeof(buf),
                  "rows %zu  accuracy %.4f  roc_auc %.4f  pr_auc %.4f\n", n_rows,
                  accuracy, roc_auc, pr_auc);
    out += buf;
    return out;
}

}  // namespace autodiag
