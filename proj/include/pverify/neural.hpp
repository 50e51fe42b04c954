#pragma once

// Feedforward ReLU policy network with a softmax head, loaded from JSON.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pverify/errors.hpp"
#include "pverify/geometry.hpp"

namespace pverify {

enum class Activation { Relu, Linear };

struct Layer {
    std::size_t inputs = 0;
    std::size_t outputs = 0;
    std::vector<double> weights;  // row-major, outputs x inputs
    Vector bias;
    Activation activation = Activation::Linear;

    double w(std::size_t row, std::size_t col) const { return weights[row * inputs + col]; }

    Vector affine(const Vector& x) const {
        Vector y(bias);
        for (std::size_t r = 0; r < outputs; ++r) {
            const double* row = &weights[r * inputs];
            double s = 0.0;
            for (std::size_t c = 0; c < inputs; ++c) s += row[c] * x[c];
            y[r] += s;
        }
        return y;
    }
};

/// Recorded (input, logits) pair written by the exporter for forward-pass checks.
struct Probe {
    Vector input;
    Vector logits;
};

struct Network {
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;
    std::vector<Layer> layers;
    std::vector<Probe> probes;

    std::size_t hidden_neurons() const {
        std::size_t n = 0;
        for (std::size_t i = 0; i + 1 < layers.size(); ++i) n += layers[i].outputs;
        return n;
    }
};

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& doc, const char* key) {
    if (!doc.is_object() || !doc.contains(key)) throw SchemaError(std::string("missing field '") + key + "'");
    return doc.at(key);
}

inline std::size_t positive_count(const nlohmann::json& doc, const char* key) {
    const auto& v = require(doc, key);
    if (!v.is_number_integer() || v.get<long long>() <= 0)
        throw SchemaError(std::string("'") + key + "' must be a positive integer");
    return v.get<std::size_t>();
}

inline double finite_number(const nlohmann::json& v, std::size_t layer) {
    if (v.is_null()) throw NonFiniteWeight("layer " + std::to_string(layer) + " holds a non-numeric weight");
    if (!v.is_number()) throw SchemaError("layer " + std::to_string(layer) + " holds a non-numeric weight");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw NonFiniteWeight("layer " + std::to_string(layer));
    return x;
}

}  // namespace detail

/// Validates and converts a network document. Layer indices in errors are 1-based.
/// NaN and infinities are not valid JSON numbers, so exporters write them as
/// null or as the strings "NaN"/"Infinity"/"-Infinity"; all are rejected as
/// NonFiniteWeight.
inline Network load_network(const nlohmann::json& doc) {
    Network net;
    net.input_dim = detail::positive_count(doc, "inputs");
    net.output_dim = detail::positive_count(doc, "actions");
    if (net.output_dim < 2) throw SchemaError("at least two actions are required");
    const auto& layers = detail::require(doc, "layers");
    if (!layers.is_array() || layers.empty()) throw SchemaError("'layers' must be a non-empty array");

    auto number = [](const nlohmann::json& v, std::size_t layer) {
        if (v.is_string()) {
            const auto s = v.get<std::string>();
            if (s == "NaN" || s == "nan" || s == "Infinity" || s == "-Infinity" || s == "inf" || s == "-inf")
                throw NonFiniteWeight("layer " + std::to_string(layer));
        }
        return detail::finite_number(v, layer);
    };

    std::size_t width = net.input_dim;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::size_t index = i + 1;
        const auto& L = layers[i];
        Layer layer;
        const auto& w = detail::require(L, "weights");
        if (!w.is_array() || w.empty()) throw SchemaError("layer " + std::to_string(index) + ": empty weight matrix");
        layer.outputs = w.size();
        layer.inputs = width;
        layer.weights.reserve(layer.outputs * width);
        for (const auto& row : w) {
            if (!row.is_array()) throw SchemaError("layer " + std::to_string(index) + ": weight rows must be arrays");
            if (row.size() != width)
                throw DimensionMismatch(index, "expected " + std::to_string(width) + " columns, found " +
                                                   std::to_string(row.size()));
            for (const auto& v : row) layer.weights.push_back(number(v, index));
        }
        layer.bias.assign(layer.outputs, 0.0);
        if (L.contains("bias") && !L.at("bias").is_null()) {
            const auto& b = L.at("bias");
            if (!b.is_array()) throw SchemaError("layer " + std::to_string(index) + ": bias must be an array");
            if (b.size() != layer.outputs)
                throw DimensionMismatch(index, "bias length " + std::to_string(b.size()) + " differs from " +
                                                   std::to_string(layer.outputs) + " rows");
            for (std::size_t r = 0; r < layer.outputs; ++r) layer.bias[r] = number(b[r], index);
        }
        const std::string act = L.value("activation", std::string(i + 1 == layers.size() ? "linear" : "relu"));
        if (act == "relu")
            layer.activation = Activation::Relu;
        else if (act == "linear")
            layer.activation = Activation::Linear;
        else
            throw SchemaError("layer " + std::to_string(index) + ": unsupported activation '" + act + "'");
        const bool last = i + 1 == layers.size();
        if (last && layer.activation != Activation::Linear) throw SchemaError("final layer must be linear");
        if (!last && layer.activation != Activation::Relu)
            throw SchemaError("hidden layer " + std::to_string(index) + " must use relu");
        width = layer.outputs;
        net.layers.push_back(std::move(layer));
    }
    if (width != net.output_dim)
        throw DimensionMismatch(layers.size(), "output width " + std::to_string(width) + " differs from actions");

    if (doc.contains("probes")) {
        for (const auto& p : doc.at("probes")) {
            Probe probe{detail::require(p, "input").get<Vector>(), detail::require(p, "logits").get<Vector>()};
            if (probe.input.size() != net.input_dim || probe.logits.size() != net.output_dim)
                throw SchemaError("probe dimensions differ from the network");
            net.probes.push_back(std::move(probe));
        }
    }
    return net;
}

inline Network load_network_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open network file '" + path + "'");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(std::string("malformed JSON: ") + e.what());
    }
    return load_network(doc);
}

inline nlohmann::json network_to_json(const Network& net) {
    nlohmann::json doc{{"inputs", net.input_dim}, {"actions", net.output_dim}, {"layers", nlohmann::json::array()}};
    for (const auto& layer : net.layers) {
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t r = 0; r < layer.outputs; ++r)
            rows.push_back(std::vector<double>(layer.weights.begin() + static_cast<std::ptrdiff_t>(r * layer.inputs),
                                               layer.weights.begin() + static_cast<std::ptrdiff_t>((r + 1) * layer.inputs)));
        doc["layers"].push_back({{"weights", rows},
                                 {"bias", layer.bias},
                                 {"activation", layer.activation == Activation::Relu ? "relu" : "linear"}});
    }
    return doc;
}

inline Vector forward_logits(const Network& net, const Point& s) {
    if (s.size() != net.input_dim) throw DimensionMismatch(0, "state dimension differs from network input");
    Vector z = s;
    for (const auto& layer : net.layers) {
        z = layer.affine(z);
        if (layer.activation == Activation::Relu)
            for (double& v : z) v = std::max(v, 0.0);
    }
    return z;
}

inline Vector softmax(const Vector& logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    Vector p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) sum += p[i] = std::exp(logits[i] - m);
    for (double& v : p) v /= sum;
    return p;
}

inline Vector action_distribution(const Network& net, const Point& s) { return softmax(forward_logits(net, s)); }

}  // namespace pverify
