#include "autodiag/context.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <set>

#include "autodiag/errors.hpp"
#include "autodiag/fft.hpp"

namespace autodiag {

int to_int(Ternary t) { return static_cast<int>(t); }

Ternary ternary_from_int(int v) {
    if (v < -1 || v > 1) {
        throw ConfigError("ternary value must be -1, 0 or 1, got " + std::to_string(v));
    }
    return static_cast<Ternary>(v);
}

Ternary ternary_from_confidence(double p_yes) {
    if (!(p_yes >= 0.0 && p_yes <= 1.0)) {
        throw ConfigError("confidence must lie in [0, 1]");
    }
    if (p_yes >= 0.8) return Ternary::yes;
    if (p_yes <= 0.2) return Ternary::no;
    return Ternary::unknown;
}

void ContextVector::validate() const {
    std::set<std::string> seen;
    for (const auto& e : entries) {
        if (e.name.empty()) throw ConfigError("context entry with empty name");
        if (!seen.insert(e.name).second) {
            throw ConfigError("duplicate context name: " + e.name);
        }
    }
}

std::vector<std::string> ContextVector::names() const {
    std::vector<std::string> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.name);
    return out;
}

nlohmann::json ContextVector::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : entries) {
        arr.push_back({{"name", e.name}, {"value", to_int(e.value)}});
    }
    return arr;
}

ContextVector ContextVector::from_json(const nlohmann::json& doc) {
    ContextVector v;
    try {
        for (const auto& e : doc) {
            v.entries.push_back({e.at("name").get<std::string>(),
                                 ternary_from_int(e.at("value").get<int>())});
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad context vector: ") + e.what());
    }
    v.validate();
    return v;
}

void ContextWeights::validate() const {
    bool any_positive = false;
    std::set<std::string> seen;
    for (const auto& [name, w] : weights) {
        if (name.empty()) throw ConfigError("context weight with empty name");
        if (!seen.insert(name).second) {
            throw ConfigError("duplicate context weight: " + name);
        }
        if (!(w >= 0.0)) throw ConfigError("negative weight for " + name);
        if (w > 0.0) any_positive = true;
    }
    if (!any_positive) throw ConfigError("all context weights are zero");
}

double ContextWeights::of(const std::string& name) const {
    for (const auto& [n, w] : weights) {
        if (n == name) return w;
    }
    throw ConfigError("no weight registered for context name: " + name);
}

nlohmann::json ContextWeights::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [name, w] : weights) {
        arr.push_back({{"name", name}, {"weight", w}});
    }
    return arr;
}

ContextWeights ContextWeights::from_json(const nlohmann::json& doc) {
    ContextWeights cw;
    try {
        for (const auto& e : doc) {
            cw.weights.emplace_back(e.at("name").get<std::string>(),
                                    e.at("weight").get<double>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad context weights: ") + e.what());
    }
    cw.validate();
    return cw;
}

void ReferenceContextDB::validate() const {
    std::set<std::string> ids;
    for (const auto& r : entries) {
        if (r.model_id.empty()) throw ConfigError("reference with empty model id");
        if (!ids.insert(r.model_id).second) {
            throw ConfigError("duplicate reference model id: " + r.model_id);
        }
        if (r.n_train < 0) throw ConfigError("negative n_train on " + r.model_id);
        r.context.validate();
        for (const auto& e : r.context.entries) {
            if (e.value == Ternary::unknown) {
                throw ConfigError("reference '" + r.model_id +
                                  "' has an unknown value for " + e.name);
            }
        }
        if (r.context.names() != entries.front().context.names()) {
            throw ConfigError("reference '" + r.model_id +
                              "' disagrees with the db schema");
        }
    }
}

nlohmann::json ReferenceContextDB::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : entries) {
        arr.push_back({{"model_id", r.model_id},
                       {"n_train", r.n_train},
                       {"context", r.context.to_json()}});
    }
    return nlohmann::json{{"entries", arr}};
}

ReferenceContextDB ReferenceContextDB::from_json(const nlohmann::json& doc) {
    ReferenceContextDB db;
    try {
        for (const auto& e : doc.at("entries")) {
            db.entries.push_back({e.at("model_id").get<std::string>(),
                                  ContextVector::from_json(e.at("context")),
                                  e.at("n_train").get<int>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad reference db: ") + e.what());
    }
    db.validate();
    return db;
}

namespace {

void require_schema_match(const ContextVector& query, const ReferenceContextDB& db) {
    const auto qnames = query.names();
    for (const auto& r : db.entries) {
        if (r.context.names() != qnames) {
            throw MatchError("query and reference db schemas differ");
        }
    }
}

}  // namespace

Pruned prune(const ContextVector& query, const ReferenceContextDB& db,
             const ContextWeights& weights) {
    query.validate();
    db.validate();
    weights.validate();
    require_schema_match(query, db);

    std::vector<size_t> keep;
    for (size_t i = 0; i < query.entries.size(); ++i) {
        const auto& e = query.entries[i];
        if (e.value == Ternary::unknown) continue;
        if (weights.of(e.name) == 0.0) continue;
        keep.push_back(i);
    }
    if (keep.empty()) throw MatchError("no usable context");

    Pruned out;
    for (size_t i : keep) out.query.entries.push_back(query.entries[i]);
    for (const auto& r : db.entries) {
        ReferenceEntry reduced;
        reduced.model_id = r.model_id;
        reduced.n_train = r.n_train;
        for (size_t i : keep) reduced.context.entries.push_back(r.context.entries[i]);
        out.db.entries.push_back(std::move(reduced));
    }
    return out;
}

MatchResult match_nearest(const ContextVector& query, const ReferenceContextDB& db,
                          const ContextWeights& weights) {
    query.validate();
    weights.validate();
    if (db.entries.empty()) throw MatchError("empty reference db");
    db.validate();
    require_schema_match(query, db);
    for (const auto& e : query.entries) {
        if (e.value == Ternary::unknown) {
            throw MatchError("query still has unknown entries; prune first");
        }
    }

    const ReferenceEntry* best = nullptr;
    double best_d = 0.0;
    double second_d = std::numeric_limits<double>::infinity();
    for (const auto& r : db.entries) {
        double d = 0.0;
        for (size_t i = 0; i < query.entries.size(); ++i) {
            if (query.entries[i].value != r.context.entries[i].value) {
                d += weights.of(query.entries[i].name);
            }
        }
        if (!best) {
            best = &r;
            best_d = d;
            continue;
        }
        const bool wins =
            d < best_d ||
            (d == best_d && (r.n_train > best->n_train ||
                             (r.n_train == best->n_train &&
                              r.model_id < best->model_id)));
        if (wins) {
            second_d = best_d;
            best = &r;
            best_d = d;
        } else {
            second_d = std::min(second_d, d);
        }
    }
    return {best->model_id, best_d, second_d - best_d};
}

nlohmann::json MatchResult::to_json() const {
    return nlohmann::json{
        {"model_id", model_id}, {"distance", distance}, {"margin", margin}};
}

namespace {

// Welch power spectrum, Hann windowed, half-overlap. Scale is irrelevant
// downstream (only power ratios are used).
std::vector<double> welch_power(std::span<const float> x, size_t nfft) {
    const auto win = hann_window(nfft);
    std::vector<double> power(nfft / 2 + 1, 0.0);
    std::vector<double> frame(nfft);
    size_t frames = 0;
    for (size_t off = 0; off + nfft <= x.size(); off += nfft / 2) {
        for (size_t i = 0; i < nfft; ++i) frame[i] = x[off + i] * win[i];
        const auto spec = rfft(frame, nfft);
        for (size_t k = 0; k < power.size(); ++k) power[k] += std::norm(spec[k]);
        ++frames;
    }
    if (frames == 0) return {};
    for (double& p : power) p /= static_cast<double>(frames);
    return power;
}

}  // namespace

Ternary detect_engine_running(const AudioClip& clip) {
    const double rate = clip.sample_rate;
    if (clip.duration_s() < 1.0) return Ternary::unknown;

    constexpr size_t kNfft = 8192;
    const auto power = welch_power(clip.samples, kNfft);
    if (power.empty()) return Ternary::unknown;
    const double bin_hz = rate / static_cast<double>(kNfft);

    const size_t lo = 1;
    const size_t hi = std::min(power.size() - 1,
                               static_cast<size_t>(2000.0 / bin_hz));
    std::vector<double> band(power.begin() + static_cast<long>(lo),
                             power.begin() + static_cast<long>(hi) + 1);
    double total = 0.0;
    for (double p : band) total += p;
    if (total <= 1e-18) return Ternary::no;  // silence

    std::nth_element(band.begin(), band.begin() + static_cast<long>(band.size() / 2),
                     band.end());
    const double median = std::max(band[band.size() / 2], 1e-30);

    const auto peak_near = [&](double freq_hz) {
        const auto k = static_cast<long>(std::lround(freq_hz / bin_hz));
        double peak = 0.0;
        for (long j = k - 1; j <= k + 1; ++j) {
            if (j >= static_cast<long>(lo) && j <= static_cast<long>(hi)) {
                peak = std::max(peak, power[static_cast<size_t>(j)]);
            }
        }
        return peak;
    };

    bool comb_like = false;
    for (double f0 = 5.0; f0 <= 60.0; f0 += 0.25) {
        int hits = 0;
        double comb_sum = 0.0;
        const int n_harm = 10;
        for (int h = 1; h <= n_harm; ++h) {
            const double peak = peak_near(h * f0);
            if (peak >= 3.0 * median) ++hits;
            comb_sum += peak;
        }
        if (hits >= 3) {
            // decisive combs dominate the floor outright; weaker ones sit
            // in the margin band
            if (comb_sum >= 10.0 * median * n_harm) return Ternary::yes;
            comb_like = true;
        }
    }
    return comb_like ? Ternary::unknown : Ternary::no;
}

}  // namespace autodiag
