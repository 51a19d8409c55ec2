#include "autodiag/binio.hpp"
#include "autodiag/errors.hpp"
#include "autodiag/learn.hpp"

namespace autodiag {

namespace {
constexpr std::string_view kMagic = "ADML";
constexpr uint32_t kVersion = 1;
}  // namespace

std::string serialize_model(const TreeEnsemble& model, const nlohmann::json& extra) {
    nlohmann::json header{
        {"kind", to_string(model.kind)},
        {"classes", model.classes},
        {"n_features", model.n_features},
        {"learning_rate", model.learning_rate},
        {"base_score", model.base_score},
        {"importances", model.importances},
        {"training_deviance", model.training_deviance},
        {"params", model.params.to_json()},
        {"extra", extra},
    };

    ByteWriter w;
    w.raw(kMagic);
    w.u32(kVersion);
    w.str(header.dump());
    w.u32(static_cast<uint32_t>(model.trees.size()));
    for (const auto& tree : model.trees) {
        w.u32(static_cast<uint32_t>(tree.nodes.size()));
        for (const auto& nd : tree.nodes) {
            w.i32(nd.feature);
            w.f64(nd.threshold);
            w.i32(nd.left);
            w.i32(nd.right);
            w.u32(static_cast<uint32_t>(nd.histogram.size()));
            for (double h : nd.histogram) w.f64(h);
            w.f64(nd.value);
        }
    }
    return w.take();
}

TreeEnsemble deserialize_model(std::string_view data, nlohmann::json* extra) {
    if (data.size() < kMagic.size() || data.substr(0, kMagic.size()) != kMagic) {
        throw ModelError("not a model container");
    }
    ByteReader r(data.substr(kMagic.size()));
    if (r.u32() != kVersion) throw ModelError("unsupported model container version");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(r.str());
    } catch (const nlohmann::json::exception& e) {
        throw ModelError(std::string("corrupt model header: ") + e.what());
    }

    TreeEnsemble model;
    try {
        model.kind = ensemble_kind_from_string(header.at("kind").get<std::string>());
        model.classes = header.at("classes").get<std::vector<std::string>>();
        model.n_features = header.at("n_features").get<size_t>();
        model.learning_rate = header.at("learning_rate").get<double>();
        model.base_score = header.at("base_score").get<std::vector<double>>();
        model.importances = header.at("importances").get<std::vector<double>>();
        model.training_deviance =
            header.at("training_deviance").get<std::vector<double>>();
        model.params = TrainParams::from_json(header.at("params"));
        if (extra) *extra = header.value("extra", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw ModelError(std::string("corrupt model header: ") + e.what());
    }

    const uint32_t n_trees = r.u32();
    model.trees.resize(n_trees);
    for (auto& tree : model.trees) {
        const uint32_t n_nodes = r.u32();
        tree.nodes.resize(n_nodes);
        for (auto& nd : tree.nodes) {
            nd.feature = r.i32();
            nd.threshold = r.f64();
            nd.left = r.i32();
            nd.right = r.i32();
            const uint32_t hist = r.u32();
            nd.histogram.resize(hist);
            for (auto& h : nd.histogram) h = r.f64();
            nd.value = r.f64();
            if (!nd.is_leaf()) {
                if (static_cast<size_t>(nd.feature) >= model.n_features ||
                    nd.left < 0 || nd.right < 0 ||
                    static_cast<uint32_t>(nd.left) >= n_nodes ||
                    static_cast<uint32_t>(nd.right) >= n_nodes) {
                    throw ModelError("corrupt tree node");
                }
            }
        }
    }
    if (!r.done()) throw ModelError("trailing bytes after model payload");
    return model;
}

void save_model(const std::string& path, const TreeEnsemble& model,
                const nlohmann::json& extra) {
    write_file(path, serialize_model(model, extra));
}

LoadedModel load_model(const std::string& path) {
    const std::string data = read_file(path);
    LoadedModel out;
    out.model = deserialize_model(data, &out.extra);
    return out;
}

}  // namespace autodiag
