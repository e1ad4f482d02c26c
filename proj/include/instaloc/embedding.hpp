// Trainable point-set embedding: shared per-point affine layers with ReLU,
// average pooling over points, then a fully connected head with dropout
// before the final layer. Variable point count in, length-D descriptor out;
// pooling makes the map permutation- and duplication-invariant.

#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "instaloc/descriptor.hpp"
#include "instaloc/instance.hpp"
#include "instaloc/random.hpp"
#include "instaloc/semantics.hpp"

namespace instaloc {

struct DenseLayer {
    int in = 0;
    int out = 0;
    std::vector<double> w;  // row-major, out x in
    std::vector<double> b;  // out
};

struct EmbeddingModel {
    int input_dim = 3 + kSemanticClassCount;
    int descriptor_dim = static_cast<int>(kDefaultDescriptorDim);
    double dropout_rate = 0.1;  // train-time only, before the final head layer
    std::vector<DenseLayer> point_layers;
    std::vector<DenseLayer> head_layers;

    void validate() const {
        if (point_layers.empty() || head_layers.empty())
            throw std::invalid_argument("EmbeddingModel: missing layers");
        int width = input_dim;
        for (const auto& l : point_layers) {
            if (l.in != width || static_cast<int>(l.w.size()) != l.in * l.out ||
                static_cast<int>(l.b.size()) != l.out)
                throw std::invalid_argument("EmbeddingModel: point layer shape mismatch");
            width = l.out;
        }
        for (const auto& l : head_layers) {
            if (l.in != width || static_cast<int>(l.w.size()) != l.in * l.out ||
                static_cast<int>(l.b.size()) != l.out)
                throw std::invalid_argument("EmbeddingModel: head layer shape mismatch");
            width = l.out;
        }
        if (width != descriptor_dim)
            throw std::invalid_argument("EmbeddingModel: output width != descriptor_dim");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0)
            throw std::invalid_argument("EmbeddingModel: dropout_rate out of [0, 1)");
    }

    size_t param_count() const {
        size_t n = 0;
        for (const auto& l : point_layers) n += l.w.size() + l.b.size();
        for (const auto& l : head_layers) n += l.w.size() + l.b.size();
        return n;
    }
};

/// Default architecture: per-point widths 16 -> 32 -> 64, head 64 -> 32 -> D.
inline EmbeddingModel make_embedding_model(int descriptor_dim = kDefaultDescriptorDim,
                                           uint64_t seed = 0,
                                           std::vector<int> point_widths = {16, 32, 64},
                                           std::vector<int> head_widths = {32},
                                           double dropout_rate = 0.1) {
    EmbeddingModel m;
    m.descriptor_dim = descriptor_dim;
    m.dropout_rate = dropout_rate;
    Rng rng(hash_combine(0xe3bedULL, seed));
    auto make_layer = [&](int in, int out) {
        DenseLayer l;
        l.in = in;
        l.out = out;
        l.w.resize(static_cast<size_t>(in) * static_cast<size_t>(out));
        l.b.assign(static_cast<size_t>(out), 0.0);
        const double scale = std::sqrt(2.0 / in);
        for (auto& v : l.w) v = rng.gaussian(0.0, scale);
        return l;
    };
    int width = m.input_dim;
    for (const int w : point_widths) {
        m.point_layers.push_back(make_layer(width, w));
        width = w;
    }
    for (const int w : head_widths) {
        m.head_layers.push_back(make_layer(width, w));
        width = w;
    }
    m.head_layers.push_back(make_layer(width, descriptor_dim));
    m.validate();
    return m;
}

// ---------------------------------------------------------------------------
// Flat parameter vector (training and finite-difference checks)
// ---------------------------------------------------------------------------

inline std::vector<double> get_params(const EmbeddingModel& m) {
    std::vector<double> p;
    p.reserve(m.param_count());
    auto push = [&](const std::vector<DenseLayer>& layers) {
        for (const auto& l : layers) {
            p.insert(p.end(), l.w.begin(), l.w.end());
            p.insert(p.end(), l.b.begin(), l.b.end());
        }
    };
    push(m.point_layers);
    push(m.head_layers);
    return p;
}

inline void set_params(EmbeddingModel& m, const std::vector<double>& p) {
    if (p.size() != m.param_count()) throw std::invalid_argument("set_params: size mismatch");
    size_t at = 0;
    auto pull = [&](std::vector<DenseLayer>& layers) {
        for (auto& l : layers) {
            std::copy(p.begin() + static_cast<ptrdiff_t>(at),
                      p.begin() + static_cast<ptrdiff_t>(at + l.w.size()), l.w.begin());
            at += l.w.size();
            std::copy(p.begin() + static_cast<ptrdiff_t>(at),
                      p.begin() + static_cast<ptrdiff_t>(at + l.b.size()), l.b.begin());
            at += l.b.size();
        }
    };
    pull(m.point_layers);
    pull(m.head_layers);
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

/// Per-point input features: centered coordinates plus a one-hot class block.
inline std::vector<double> instance_features(const std::vector<Point3>& centered_points,
                                             SemanticClass cls) {
    const size_t dim = 3 + kSemanticClassCount;
    std::vector<double> f(centered_points.size() * dim, 0.0);
    for (size_t k = 0; k < centered_points.size(); ++k) {
        double* row = f.data() + k * dim;
        row[0] = centered_points[k].x;
        row[1] = centered_points[k].y;
        row[2] = centered_points[k].z;
        row[3 + static_cast<size_t>(cls)] = 1.0;
    }
    return f;
}

struct ForwardCache {
    size_t n_points = 0;
    std::vector<double> input;                  // n x input_dim
    std::vector<std::vector<double>> point_pre;  // per layer, n x out
    std::vector<std::vector<double>> point_act;
    std::vector<double> pooled;
    std::vector<std::vector<double>> head_in;  // input of each head layer (post-dropout)
    std::vector<std::vector<double>> head_pre;
    std::vector<double> output;
};

/// Forward pass. `dropout_mask`, when non-null, is applied to the input of
/// the final head layer (entries already carry the inverted 1/(1-rate)
/// scaling); pass nullptr for deterministic inference.
inline std::vector<double> forward_embedding(const EmbeddingModel& m,
                                             std::vector<double> input, size_t n_points,
                                             ForwardCache* cache,
                                             const std::vector<double>* dropout_mask = nullptr) {
    if (n_points == 0) throw std::invalid_argument("forward_embedding: no points");
    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c.n_points = n_points;
    c.input = std::move(input);
    c.point_pre.assign(m.point_layers.size(), {});
    c.point_act.assign(m.point_layers.size(), {});

    const std::vector<double>* prev = &c.input;
    size_t prev_width = static_cast<size_t>(m.input_dim);
    for (size_t li = 0; li < m.point_layers.size(); ++li) {
        const DenseLayer& l = m.point_layers[li];
        auto& pre = c.point_pre[li];
        auto& act = c.point_act[li];
        pre.resize(n_points * static_cast<size_t>(l.out));
        act.resize(pre.size());
        for (size_t k = 0; k < n_points; ++k) {
            const double* x = prev->data() + k * prev_width;
            double* z = pre.data() + k * static_cast<size_t>(l.out);
            for (int j = 0; j < l.out; ++j) {
                const double* wr = l.w.data() + static_cast<size_t>(j) * static_cast<size_t>(l.in);
                double s = l.b[static_cast<size_t>(j)];
                for (int i = 0; i < l.in; ++i) s += wr[i] * x[i];
                z[j] = s;
            }
        }
        for (size_t i = 0; i < pre.size(); ++i) act[i] = pre[i] > 0.0 ? pre[i] : 0.0;
        prev = &act;
        prev_width = static_cast<size_t>(l.out);
    }

    c.pooled.assign(prev_width, 0.0);
    for (size_t k = 0; k < n_points; ++k) {
        const double* a = prev->data() + k * prev_width;
        for (size_t j = 0; j < prev_width; ++j) c.pooled[j] += a[j];
    }
    for (auto& v : c.pooled) v /= static_cast<double>(n_points);

    c.head_in.assign(m.head_layers.size(), {});
    c.head_pre.assign(m.head_layers.size(), {});
    std::vector<double> x = c.pooled;
    for (size_t f = 0; f < m.head_layers.size(); ++f) {
        const DenseLayer& l = m.head_layers[f];
        const bool final_layer = (f + 1 == m.head_layers.size());
        if (final_layer && dropout_mask) {
            if (dropout_mask->size() != x.size())
                throw std::invalid_argument("forward_embedding: dropout mask size mismatch");
            for (size_t i = 0; i < x.size(); ++i) x[i] *= (*dropout_mask)[i];
        }
        c.head_in[f] = x;
        std::vector<double> z(static_cast<size_t>(l.out));
        for (int j = 0; j < l.out; ++j) {
            const double* wr = l.w.data() + static_cast<size_t>(j) * static_cast<size_t>(l.in);
            double s = l.b[static_cast<size_t>(j)];
            for (int i = 0; i < l.in; ++i) s += wr[i] * x[static_cast<size_t>(i)];
            z[static_cast<size_t>(j)] = s;
        }
        c.head_pre[f] = z;
        if (!final_layer)
            for (auto& v : z) v = v > 0.0 ? v : 0.0;
        x = std::move(z);
    }
    c.output = x;
    return c.output;
}

/// Accumulates d(loss)/d(params) into `grad` (flat layout of get_params)
/// given d(loss)/d(output). The dropout mask must match the forward pass.
inline void backward_embedding(const EmbeddingModel& m, const ForwardCache& c,
                               const std::vector<double>& dout, std::vector<double>& grad,
                               const std::vector<double>* dropout_mask = nullptr) {
    if (grad.size() != m.param_count())
        throw std::invalid_argument("backward_embedding: grad size mismatch");

    // flat offsets per layer, matching get_params
    std::vector<size_t> point_off(m.point_layers.size()), head_off(m.head_layers.size());
    size_t at = 0;
    for (size_t i = 0; i < m.point_layers.size(); ++i) {
        point_off[i] = at;
        at += m.point_layers[i].w.size() + m.point_layers[i].b.size();
    }
    for (size_t i = 0; i < m.head_layers.size(); ++i) {
        head_off[i] = at;
        at += m.head_layers[i].w.size() + m.head_layers[i].b.size();
    }

    std::vector<double> d_pre = dout;
    for (size_t fi = m.head_layers.size(); fi-- > 0;) {
        const DenseLayer& l = m.head_layers[fi];
        const bool final_layer = (fi + 1 == m.head_layers.size());
        double* gw = grad.data() + head_off[fi];
        double* gb = gw + l.w.size();
        const std::vector<double>& x = c.head_in[fi];
        for (int j = 0; j < l.out; ++j) {
            const double g = d_pre[static_cast<size_t>(j)];
            gb[j] += g;
            double* gwr = gw + static_cast<size_t>(j) * static_cast<size_t>(l.in);
            for (int i = 0; i < l.in; ++i) gwr[i] += g * x[static_cast<size_t>(i)];
        }
        std::vector<double> dx(static_cast<size_t>(l.in), 0.0);
        for (int j = 0; j < l.out; ++j) {
            const double g = d_pre[static_cast<size_t>(j)];
            const double* wr = l.w.data() + static_cast<size_t>(j) * static_cast<size_t>(l.in);
            for (int i = 0; i < l.in; ++i) dx[static_cast<size_t>(i)] += wr[i] * g;
        }
        if (final_layer && dropout_mask)
            for (size_t i = 0; i < dx.size(); ++i) dx[i] *= (*dropout_mask)[i];
        if (fi > 0) {
            const std::vector<double>& pre = c.head_pre[fi - 1];
            d_pre.assign(pre.size(), 0.0);
            for (size_t i = 0; i < pre.size(); ++i) d_pre[i] = pre[i] > 0.0 ? dx[i] : 0.0;
        } else {
            d_pre = std::move(dx);  // = d(loss)/d(pooled)
        }
    }

    const double inv_n = 1.0 / static_cast<double>(c.n_points);
    const size_t last = m.point_layers.size() - 1;
    std::vector<double> d_act(c.point_act[last].size());
    for (size_t k = 0; k < c.n_points; ++k)
        for (size_t j = 0; j < d_pre.size(); ++j)
            d_act[k * d_pre.size() + j] = d_pre[j] * inv_n;

    for (size_t li = m.point_layers.size(); li-- > 0;) {
        const DenseLayer& l = m.point_layers[li];
        const std::vector<double>& pre = c.point_pre[li];
        const std::vector<double>* below =
            li > 0 ? &c.point_act[li - 1] : &c.input;
        const size_t below_width = static_cast<size_t>(l.in);
        double* gw = grad.data() + point_off[li];
        double* gb = gw + l.w.size();
        std::vector<double> d_below(c.n_points * below_width, 0.0);
        for (size_t k = 0; k < c.n_points; ++k) {
            const double* x = below->data() + k * below_width;
            const double* z = pre.data() + k * static_cast<size_t>(l.out);
            const double* da = d_act.data() + k * static_cast<size_t>(l.out);
            double* db = d_below.data() + k * below_width;
            for (int j = 0; j < l.out; ++j) {
                if (z[j] <= 0.0) continue;
                const double g = da[j];
                gb[j] += g;
                double* gwr = gw + static_cast<size_t>(j) * static_cast<size_t>(l.in);
                const double* wr = l.w.data() + static_cast<size_t>(j) * static_cast<size_t>(l.in);
                for (int i = 0; i < l.in; ++i) {
                    gwr[i] += g * x[i];
                    db[i] += wr[i] * g;
                }
            }
        }
        d_act = std::move(d_below);
    }
}

/// Deterministic inference: centered coordinates + one-hot class through the
/// point layers, mean over points, head with dropout off.
inline Descriptor embed(const EmbeddingModel& model, const ObjectInstance& inst) {
    model.validate();
    if (inst.size() == 0) throw std::invalid_argument("embed: empty instance");
    const std::vector<Point3> centered = normalize_instance(inst);
    Descriptor d;
    d.values = forward_embedding(model, instance_features(centered, inst.cls), centered.size(),
                                 nullptr, nullptr);
    return d;
}

// ---------------------------------------------------------------------------
// Model serialization
// ---------------------------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json model_to_json(const EmbeddingModel& m) {
    auto layers_json = [](const std::vector<DenseLayer>& layers) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& l : layers)
            arr.push_back({{"in", l.in}, {"out", l.out}, {"w", l.w}, {"b", l.b}});
        return arr;
    };
    return {{"format_version", kModelFormatVersion},
            {"input_dim", m.input_dim},
            {"descriptor_dim", m.descriptor_dim},
            {"nonlinearity", "relu"},
            {"dropout_rate", m.dropout_rate},
            {"point_layers", layers_json(m.point_layers)},
            {"head_layers", layers_json(m.head_layers)}};
}

inline EmbeddingModel model_from_json(const nlohmann::json& j) {
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion)
        throw std::runtime_error("model_from_json: unsupported format_version " +
                                 std::to_string(version));
    const std::string nonlinearity = j.at("nonlinearity").get<std::string>();
    if (nonlinearity != "relu")
        throw std::runtime_error("model_from_json: unknown nonlinearity '" + nonlinearity + "'");
    EmbeddingModel m;
    m.input_dim = j.at("input_dim").get<int>();
    m.descriptor_dim = j.at("descriptor_dim").get<int>();
    m.dropout_rate = j.at("dropout_rate").get<double>();
    auto read_layers = [](const nlohmann::json& arr) {
        std::vector<DenseLayer> layers;
        for (const auto& jl : arr) {
            DenseLayer l;
            l.in = jl.at("in").get<int>();
            l.out = jl.at("out").get<int>();
            l.w = jl.at("w").get<std::vector<double>>();
            l.b = jl.at("b").get<std::vector<double>>();
            layers.push_back(std::move(l));
        }
        return layers;
    };
    m.point_layers = read_layers(j.at("point_layers"));
    m.head_layers = read_layers(j.at("head_layers"));
    m.validate();
    return m;
}

inline void save_model(const EmbeddingModel& m, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_model: cannot open " + path);
    f << model_to_json(m).dump() << '\n';
}

inline EmbeddingModel load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_model: cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("load_model: " + path + ": " + e.what());
    }
    return model_from_json(j);
}

}  // namespace instaloc
