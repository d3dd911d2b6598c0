#include "tsrca/model_io.hpp"

#include <fstream>
#include <stdexcept>

namespace tsrca {

namespace {

constexpr const char* kMagic = "tsrca-model";
constexpr int kVersion = 1;

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& doc) {
    const Eigen::Index rows = static_cast<Eigen::Index>(doc.size());
    if (rows == 0) return {};
    const Eigen::Index cols = static_cast<Eigen::Index>(doc[0].size());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (static_cast<Eigen::Index>(doc[r].size()) != cols) {
            throw std::runtime_error("model: ragged matrix");
        }
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = doc[r][c].get<double>();
    }
    return m;
}

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
    nlohmann::json out = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& doc) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(doc.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = doc[i].get<double>();
    return v;
}

nlohmann::json header(const std::string& kind) {
    return {{"magic", kMagic}, {"version", kVersion}, {"kind", kind}};
}

void check_header(const nlohmann::json& doc, const std::string& kind) {
    if (doc.value("magic", "") != kMagic) throw std::runtime_error("model: bad magic header");
    if (doc.value("version", 0) != kVersion) {
        throw std::runtime_error("model: unsupported version");
    }
    if (doc.value("kind", "") != kind) {
        throw std::runtime_error("model: expected kind '" + kind + "', got '" +
                                 doc.value("kind", "") + "'");
    }
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("model: cannot open '" + path + "'");
    nlohmann::json doc;
    in >> doc;
    return doc;
}

void write_json_file(const nlohmann::json& doc, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("model: cannot write '" + path + "'");
    out << doc.dump(1) << "\n";
}

}  // namespace

nlohmann::json net_to_json(const DenseNet& net) {
    nlohmann::json layers = nlohmann::json::array();
    for (const DenseLayer& layer : net.layers) {
        layers.push_back({{"out", layer.weight.rows()},
                          {"in", layer.weight.cols()},
                          {"activation", to_string(layer.activation)},
                          {"weight", matrix_to_json(layer.weight)},
                          {"bias", vector_to_json(layer.bias)}});
    }
    return {{"layers", layers}};
}

DenseNet net_from_json(const nlohmann::json& doc) {
    DenseNet net;
    for (const auto& item : doc.at("layers")) {
        DenseLayer layer;
        layer.weight = matrix_from_json(item.at("weight"));
        layer.bias = vector_from_json(item.at("bias"));
        layer.activation = parse_activation(item.at("activation").get<std::string>());
        if (layer.weight.rows() != item.at("out").get<Eigen::Index>() ||
            layer.weight.cols() != item.at("in").get<Eigen::Index>() ||
            layer.bias.size() != layer.weight.rows()) {
            throw std::runtime_error("model: layer shape mismatch");
        }
        net.layers.push_back(std::move(layer));
    }
    if (net.layers.empty()) throw std::runtime_error("model: empty net");
    return net;
}

nlohmann::json detector_to_json(const Detector& detector) {
    nlohmann::json doc = header("detector");
    doc["w"] = detector.window_length;
    doc["d"] = detector.dim;
    doc["provenance"] = detector.provenance;
    if (const auto* pca = std::get_if<PcaReconModel>(&detector.model)) {
        doc["type"] = "pca";
        doc["mean"] = vector_to_json(pca->mean);
        doc["basis"] = matrix_to_json(pca->basis);
    } else if (const auto* ae = std::get_if<DenseAeModel>(&detector.model)) {
        doc["type"] = "ae";
        doc["net"] = net_to_json(ae->net);
    } else if (const auto* linear = std::get_if<LinearScoreModel>(&detector.model)) {
        doc["type"] = "linear";
        doc["coeffs"] = matrix_to_json(linear->coeffs);
        doc["offset"] = linear->offset;
    } else {
        throw std::runtime_error("model: external detectors are configured, not persisted");
    }
    return doc;
}

Detector detector_from_json(const nlohmann::json& doc) {
    check_header(doc, "detector");
    Detector detector;
    detector.window_length = doc.at("w").get<int>();
    detector.dim = doc.at("d").get<int>();
    detector.provenance = doc.value("provenance", "");
    const std::string type = doc.at("type").get<std::string>();
    if (type == "pca") {
        PcaReconModel model;
        model.mean = vector_from_json(doc.at("mean"));
        model.basis = matrix_from_json(doc.at("basis"));
        detector.model = std::move(model);
    } else if (type == "ae") {
        detector.model = DenseAeModel{net_from_json(doc.at("net"))};
    } else if (type == "linear") {
        detector.model = LinearScoreModel{matrix_from_json(doc.at("coeffs")),
                                          doc.at("offset").get<double>()};
    } else {
        throw std::runtime_error("model: unknown detector type '" + type + "'");
    }
    return detector;
}

void save_detector(const Detector& detector, const std::string& path) {
    write_json_file(detector_to_json(detector), path);
}

Detector load_detector(const std::string& path) {
    return detector_from_json(read_json_file(path));
}

nlohmann::json embedding_to_json(const Embedding& embedding) {
    nlohmann::json doc = header("embedding");
    doc["k"] = embedding.output_dim;
    if (const auto* pca = std::get_if<PcaEmbedding>(&embedding.model)) {
        doc["type"] = "pca";
        doc["mean"] = vector_to_json(pca->mean);
        doc["basis"] = matrix_to_json(pca->basis);
    } else if (const auto* vae = std::get_if<VaeEmbedding>(&embedding.model)) {
        doc["type"] = "vae";
        doc["encoder"] = net_to_json(vae->encoder);
        doc["decoder"] = net_to_json(vae->decoder);
        doc["latent"] = vae->latent_dim;
        doc["w"] = vae->window_length;
        doc["d"] = vae->dim;
        doc["lambda_rec"] = vae->lambda_rec;
        doc["lambda_kl"] = vae->lambda_kl;
        doc["lambda_time"] = vae->lambda_time;
    } else {
        throw std::runtime_error("model: imported embeddings live in their own CSV table");
    }
    return doc;
}

Embedding embedding_from_json(const nlohmann::json& doc) {
    check_header(doc, "embedding");
    Embedding embedding;
    embedding.output_dim = doc.at("k").get<int>();
    const std::string type = doc.at("type").get<std::string>();
    if (type == "pca") {
        PcaEmbedding model;
        model.mean = vector_from_json(doc.at("mean"));
        model.basis = matrix_from_json(doc.at("basis"));
        embedding.model = std::move(model);
    } else if (type == "vae") {
        VaeEmbedding model;
        model.encoder = net_from_json(doc.at("encoder"));
        model.decoder = net_from_json(doc.at("decoder"));
        model.latent_dim = doc.at("latent").get<int>();
        model.window_length = doc.at("w").get<int>();
        model.dim = doc.at("d").get<int>();
        model.lambda_rec = doc.at("lambda_rec").get<double>();
        model.lambda_kl = doc.at("lambda_kl").get<double>();
        model.lambda_time = doc.at("lambda_time").get<double>();
        embedding.model = std::move(model);
    } else {
        throw std::runtime_error("model: unknown embedding type '" + type + "'");
    }
    return embedding;
}

void save_embedding(const Embedding& embedding, const std::string& path) {
    write_json_file(embedding_to_json(embedding), path);
}

Embedding load_embedding(const std::string& path) {
    return embedding_from_json(read_json_file(path));
}

}  // namespace tsrca
