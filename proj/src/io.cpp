#include "overfit/io.hpp"

#include <fstream>
#include <stdexcept>

namespace overfit {

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

void write_json_file(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    // nlohmann serializes doubles with max_digits10 (17) digits.
    out << j.dump(1) << '\n';
    if (!out) throw std::runtime_error("write failed for " + path);
}

namespace {

json matrix_to_json(const Matrix& a) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < a.cols(); ++c) row.push_back(a(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

json vector_to_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Vector vector_from_json(const json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Matrix matrix_from_json(const json& j, Eigen::Index cols) {
    Matrix a(static_cast<Eigen::Index>(j.size()), cols);
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        const auto& row = j.at(static_cast<std::size_t>(r));
        if (static_cast<Eigen::Index>(row.size()) != cols) throw std::invalid_argument("ragged matrix row");
        for (Eigen::Index c = 0; c < cols; ++c) a(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
    return a;
}

void check_schema(const json& j) {
    const int version = j.at("schema_version").get<int>();
    if (version != kSchemaVersion)
        throw std::invalid_argument("unsupported schema_version " + std::to_string(version));
}

}  // namespace

json to_json(const Network& net) {
    json layers = json::array();
    json widths = json::array();
    for (const auto& layer : net.layers) {
        layers.push_back({{"weights", matrix_to_json(layer.weights)}, {"biases", vector_to_json(layer.biases)}});
        widths.push_back(layer.weights.rows());
    }
    return {{"schema_version", kSchemaVersion},
            {"d", net.input_dim},
            {"depth", net.depth()},
            {"widths", widths},
            {"layers", layers},
            {"output_weights", vector_to_json(net.output_weights)},
            {"output_weights_trainable", net.output_weights_trainable},
            {"bias_free", net.bias_free}};
}

Network network_from_json(const json& j) {
    check_schema(j);
    Network net;
    net.input_dim = j.at("d").get<int>();
    Eigen::Index fan_in = net.input_dim;
    for (const auto& lj : j.at("layers")) {
        Layer layer;
        layer.weights = matrix_from_json(lj.at("weights"), fan_in);
        layer.biases = vector_from_json(lj.at("biases"));
        fan_in = layer.weights.rows();
        net.layers.push_back(std::move(layer));
    }
    net.output_weights = vector_from_json(j.at("output_weights"));
    net.output_weights_trainable = j.value("output_weights_trainable", true);
    net.bias_free = j.value("bias_free", false);
    if (j.at("depth").get<int>() != net.depth())
        throw std::invalid_argument("depth field disagrees with layer count");
    net.validate();
    return net;
}

json to_json(const Dataset& ds) {
    return {{"schema_version", kSchemaVersion},
            {"d", ds.d()},
            {"m", ds.m()},
            {"p", ds.p},
            {"seed", ds.seed},
            {"distribution", to_string(ds.distribution)},
            {"inputs", matrix_to_json(ds.inputs)},
            {"labels", vector_to_json(ds.labels)}};
}

Dataset dataset_from_json(const json& j) {
    check_schema(j);
    Dataset ds;
    const int d = j.at("d").get<int>();
    ds.inputs = matrix_from_json(j.at("inputs"), d);
    ds.labels = vector_from_json(j.at("labels"));
    ds.p = j.at("p").get<double>();
    ds.seed = j.at("seed").get<std::uint64_t>();
    ds.distribution = distribution_from_string(j.at("distribution").get<std::string>());
    if (j.at("m").get<int>() != ds.m()) throw std::invalid_argument("m field disagrees with inputs");
    ds.validate();
    return ds;
}

}  // namespace overfit
