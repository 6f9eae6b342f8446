#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>

#include "pis/errors.hpp"
#include "pis/rng.hpp"

namespace pis {

// 9 weight layers: 768 -> ... -> 8 action values.
inline const std::vector<std::size_t> kDefaultWidths = {768, 512, 384, 256, 192, 128, 96, 64, 32, 8};
inline constexpr std::size_t kActionCount = 8;

struct DenseLayer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;    // out
};

// Fully connected ReLU network with a linear output layer.
class QNetwork {
public:
    QNetwork() = default;

    // Zero-initialized network with the given layer widths (input first).
    explicit QNetwork(std::vector<std::size_t> widths) : widths_(std::move(widths)) {
        if (widths_.size() < 2) throw ShapeMismatch("a network needs at least input and output widths");
        for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
            if (widths_[l] == 0 || widths_[l + 1] == 0) throw ShapeMismatch("layer widths must be positive");
            layers_.push_back({Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(widths_[l + 1]),
                                                     static_cast<Eigen::Index>(widths_[l])),
                               Eigen::VectorXd::Zero(static_cast<Eigen::Index>(widths_[l + 1]))});
        }
    }

    // He-uniform weights, zero biases.
    static QNetwork initialized(std::vector<std::size_t> widths, Rng& rng) {
        QNetwork net(std::move(widths));
        for (auto& layer : net.layers_) {
            const double bound = std::sqrt(6.0 / static_cast<double>(layer.weight.cols()));
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
                for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
                    layer.weight(r, c) = (2.0 * rng.uniform01() - 1.0) * bound;
                }
            }
        }
        return net;
    }

    const std::vector<std::size_t>& widths() const noexcept { return widths_; }
    std::size_t input_dim() const noexcept { return widths_.empty() ? 0 : widths_.front(); }
    std::size_t output_dim() const noexcept { return widths_.empty() ? 0 : widths_.back(); }
    std::vector<DenseLayer>& layers() noexcept { return layers_; }
    const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

    // Columns of `inputs` are samples.
    Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& inputs) const {
        check_input(inputs.rows());
        Eigen::MatrixXd a = inputs;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            Eigen::MatrixXd z = layers_[l].weight * a;
            z.colwise() += layers_[l].bias;
            a = l + 1 < layers_.size() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
        }
        return a;
    }

    Eigen::VectorXd forward(const Eigen::VectorXd& input) const {
        check_input(input.size());
        Eigen::VectorXd a = input;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            Eigen::VectorXd z = layers_[l].weight * a + layers_[l].bias;
            a = l + 1 < layers_.size() ? Eigen::VectorXd(z.cwiseMax(0.0)) : z;
        }
        return a;
    }

    std::size_t parameter_count() const noexcept {
        std::size_t n = 0;
        for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
        return n;
    }

    // Flat parameter view: per layer, weights (column-major) then biases.
    double& parameter(std::size_t i) {
        for (auto& l : layers_) {
            const auto nw = static_cast<std::size_t>(l.weight.size());
            if (i < nw) return l.weight.data()[i];
            i -= nw;
            const auto nb = static_cast<std::size_t>(l.bias.size());
            if (i < nb) return l.bias.data()[i];
            i -= nb;
        }
        throw RangeError("parameter index out of range");
    }

    bool operator==(const QNetwork& other) const {
        if (widths_ != other.widths_) return false;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            if (layers_[l].weight != other.layers_[l].weight || layers_[l].bias != other.layers_[l].bias) {
                return false;
            }
        }
        return true;
    }

private:
    void check_input(Eigen::Index rows) const {
        if (static_cast<std::size_t>(rows) != input_dim()) {
            throw DimensionError("network expects input dimension " + std::to_string(input_dim()) + ", got " +
                                 std::to_string(rows));
        }
    }

    std::vector<std::size_t> widths_;
    std::vector<DenseLayer> layers_;
};

struct NetworkGradient {
    std::vector<DenseLayer> layers;  // same shapes as the network
};

struct TdLossResult {
    double loss = 0.0;
    std::vector<double> td_errors;  // Q(s_i)[a_i] - y_i
    NetworkGradient gradient;
};

// Importance-weighted mean squared TD error, (1/B) sum_i w_i (Q(s_i)[a_i] - y_i)^2,
// with its gradient w.r.t. the network parameters. Targets are constants.
inline TdLossResult td_loss_and_gradient(const QNetwork& net, const Eigen::MatrixXd& states,
                                         std::span<const std::size_t> actions, std::span<const double> targets,
                                         std::span<const double> weights) {
    const auto batch = static_cast<std::size_t>(states.cols());
    if (actions.size() != batch || targets.size() != batch || weights.size() != batch || batch == 0) {
        throw DimensionError("td_loss batch components disagree in size");
    }
    const auto& layers = net.layers();
    const std::size_t depth = layers.size();

    std::vector<Eigen::MatrixXd> acts;  // acts[0] = input, acts[l+1] = output of layer l
    std::vector<Eigen::MatrixXd> pre;
    acts.reserve(depth + 1);
    pre.reserve(depth);
    acts.push_back(states);
    for (std::size_t l = 0; l < depth; ++l) {
        Eigen::MatrixXd z = layers[l].weight * acts.back();
        z.colwise() += layers[l].bias;
        pre.push_back(z);
        acts.push_back(l + 1 < depth ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z);
    }

    const Eigen::MatrixXd& q = acts.back();
    TdLossResult out;
    out.td_errors.resize(batch);
    Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(q.rows(), q.cols());
    const double inv_b = 1.0 / static_cast<double>(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        if (actions[i] >= static_cast<std::size_t>(q.rows())) throw RangeError("action index out of range");
        const auto col = static_cast<Eigen::Index>(i);
        const double td = q(static_cast<Eigen::Index>(actions[i]), col) - targets[i];
        out.td_errors[i] = td;
        out.loss += weights[i] * td * td * inv_b;
        delta(static_cast<Eigen::Index>(actions[i]), col) = 2.0 * weights[i] * td * inv_b;
    }

    out.gradient.layers.resize(depth);
    for (std::size_t l = depth; l-- > 0;) {
        out.gradient.layers[l].weight = delta * acts[l].transpose();
        out.gradient.layers[l].bias = delta.rowwise().sum();
        if (l > 0) {
            Eigen::MatrixXd back = layers[l].weight.transpose() * delta;
            delta = back.cwiseProduct((pre[l - 1].array() > 0.0).cast<double>().matrix());
        }
    }
    return out;
}

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// First/second moment estimates shaped like the network.
class Adam {
public:
    Adam() = default;
    Adam(const QNetwork& net, AdamConfig cfg) : cfg_(cfg) {
        for (const auto& l : net.layers()) {
            m_.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                          Eigen::VectorXd::Zero(l.bias.size())});
            v_.push_back(m_.back());
        }
    }

    void step(QNetwork& net, const NetworkGradient& grad) {
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        auto& layers = net.layers();
        for (std::size_t l = 0; l < layers.size(); ++l) {
            update(layers[l].weight, m_[l].weight, v_[l].weight, grad.layers[l].weight, c1, c2);
            update(layers[l].bias, m_[l].bias, v_[l].bias, grad.layers[l].bias, c1, c2);
        }
    }

    std::size_t steps() const noexcept { return t_; }

private:
    template <class Param, class Moment, class Grad>
    void update(Param& p, Moment& m, Moment& v, const Grad& g, double c1, double c2) const {
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
        v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
        p.array() -= cfg_.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.epsilon);
    }

    AdamConfig cfg_;
    std::vector<DenseLayer> m_, v_;
    std::size_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Model file: "PISQ", u32 version, u32 layer count, u32 widths[count + 1],
// then per layer row-major f64 weights and f64 biases. All little-endian.
// ---------------------------------------------------------------------------

inline constexpr char kModelMagic[4] = {'P', 'I', 'S', 'Q'};
inline constexpr std::uint32_t kModelVersion = 1;

namespace detail {

template <class T>
void write_le(std::ostream& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T read_le(std::istream& in) {
    unsigned char bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw ParseError(0, "model file is truncated");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

}  // namespace detail

inline void save_model(std::ostream& out, const QNetwork& net) {
    out.write(kModelMagic, 4);
    detail::write_le<std::uint32_t>(out, kModelVersion);
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.layers().size()));
    for (std::size_t w : net.widths()) detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(w));
    for (const auto& layer : net.layers()) {
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) detail::write_le<double>(out, layer.weight(r, c));
        }
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) detail::write_le<double>(out, layer.bias(r));
    }
}

inline void save_model(const std::string& path, const QNetwork& net) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    save_model(out, net);
    if (!out) throw Error("failed writing model to '" + path + "'");
}

// Expected dimensions of zero skip the corresponding check.
inline QNetwork load_model(std::istream& in, std::size_t expected_input = 768,
                           std::size_t expected_output = kActionCount) {
    char magic[4];
    if (!in.read(magic, 4)) throw ParseError(0, "model file is truncated");
    if (std::memcmp(magic, kModelMagic, 4) != 0) throw ParseError(0, "bad model magic");
    const auto version = detail::read_le<std::uint32_t>(in);
    if (version != kModelVersion) {
        throw VersionMismatch("model format version " + std::to_string(version) + ", expected " +
                              std::to_string(kModelVersion));
    }
    const auto layer_count = detail::read_le<std::uint32_t>(in);
    if (layer_count == 0 || layer_count > 1024) throw ParseError(0, "implausible layer count");
    std::vector<std::size_t> widths;
    for (std::uint32_t i = 0; i <= layer_count; ++i) widths.push_back(detail::read_le<std::uint32_t>(in));
    if ((expected_input != 0 && widths.front() != expected_input) ||
        (expected_output != 0 && widths.back() != expected_output)) {
        throw ShapeMismatch("model maps " + std::to_string(widths.front()) + " -> " +
                            std::to_string(widths.back()) + ", expected " + std::to_string(expected_input) +
                            " -> " + std::to_string(expected_output));
    }
    QNetwork net(widths);
    for (auto& layer : net.layers()) {
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = detail::read_le<double>(in);
        }
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = detail::read_le<double>(in);
    }
    if (in.peek() != std::char_traits<char>::eof()) throw ParseError(0, "trailing bytes after model parameters");
    return net;
}

inline QNetwork load_model(const std::string& path, std::size_t expected_input = 768,
                           std::size_t expected_output = kActionCount) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(0, "cannot open model file '" + path + "'");
    return load_model(in, expected_input, expected_output);
}

}  // namespace pis
