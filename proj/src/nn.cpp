#include "lamp/nn.hpp"

#include <cmath>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace lamp::nn {

namespace {

void activate_inplace(Activation a, Matrix& z) {
    switch (a) {
        case Activation::Identity: break;
        // Eigen vectorizes exp but not tanh for doubles; this form is within a
        // few ulp of std::tanh in absolute terms and saturates to +-1 cleanly.
        case Activation::Tanh: z = (1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0)).matrix(); break;
        case Activation::Relu: z = z.cwiseMax(0.0); break;
    }
}

// d(activation)/dz expressed through the activation output y.
Matrix activation_derivative(Activation a, const Matrix& y) {
    switch (a) {
        case Activation::Identity: return Matrix::Ones(y.rows(), y.cols());
        case Activation::Tanh: return (1.0 - y.array().square()).matrix();
        case Activation::Relu: return (y.array() > 0.0).cast<double>().matrix();
    }
    return Matrix::Ones(y.rows(), y.cols());
}

}  // namespace

std::string to_string(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Tanh: return "tanh";
        case Activation::Relu: return "relu";
    }
    return "identity";
}

Activation activation_from_string(const std::string& s) {
    if (s == "identity") return Activation::Identity;
    if (s == "tanh") return Activation::Tanh;
    if (s == "relu") return Activation::Relu;
    throw std::invalid_argument("unknown activation: " + s);
}

Vector apply_activation(Activation a, const Vector& z) {
    Matrix m = z;
    activate_inplace(a, m);
    return m.col(0);
}

void GradientSet::add(const GradientSet& other) {
    for (std::size_t l = 0; l < weight.size(); ++l) {
        weight[l] += other.weight[l];
        bias[l] += other.bias[l];
    }
}

void GradientSet::scale(double factor) {
    for (std::size_t l = 0; l < weight.size(); ++l) {
        weight[l] *= factor;
        bias[l] *= factor;
    }
}

std::vector<ConstParamRef> GradientSet::views() const {
    std::vector<ConstParamRef> out;
    for (std::size_t l = 0; l < weight.size(); ++l) {
        out.emplace_back(weight[l].data(), weight[l].size());
        out.emplace_back(bias[l].data(), bias[l].size());
    }
    return out;
}

Mlp::Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        if (layers_[l].bias.size() != layers_[l].weight.rows())
            throw std::invalid_argument("Mlp: bias size does not match weight rows");
        if (l > 0 && layers_[l].weight.cols() != layers_[l - 1].weight.rows())
            throw std::invalid_argument("Mlp: layer shapes do not chain");
    }
}

Mlp::Mlp(const std::vector<std::size_t>& sizes, Activation hidden, Activation output, std::mt19937_64& rng) {
    if (sizes.size() < 2) throw std::invalid_argument("Mlp: need at least input and output sizes");
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const auto fan_in = static_cast<Eigen::Index>(sizes[l]);
        const auto fan_out = static_cast<Eigen::Index>(sizes[l + 1]);
        const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(sizes[l], 1)));
        std::uniform_real_distribution<double> dist(-bound, bound);
        Layer layer;
        layer.weight.resize(fan_out, fan_in);
        layer.bias.resize(fan_out);
        for (Eigen::Index c = 0; c < fan_in; ++c)
            for (Eigen::Index r = 0; r < fan_out; ++r) layer.weight(r, c) = dist(rng);
        for (Eigen::Index r = 0; r < fan_out; ++r) layer.bias(r) = dist(rng);
        layer.activation = (l + 2 == sizes.size()) ? output : hidden;
        layers_.push_back(std::move(layer));
    }
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
}

Vector Mlp::forward(const Vector& x) const {
    if (static_cast<std::size_t>(x.size()) != input_dim()) throw std::invalid_argument("Mlp::forward: input dimension mismatch");
    Vector h = x;
    for (const auto& l : layers_) {
        Matrix z = l.weight * h + l.bias;
        activate_inplace(l.activation, z);
        h = z.col(0);
    }
    return h;
}

Matrix Mlp::forward_batch(const Matrix& x) const {
    if (static_cast<std::size_t>(x.rows()) != input_dim()) throw std::invalid_argument("Mlp::forward_batch: input dimension mismatch");
    Matrix h = x;
    for (const auto& l : layers_) {
        Matrix z = l.weight * h;
        z.colwise() += l.bias;
        activate_inplace(l.activation, z);
        h = std::move(z);
    }
    return h;
}

Matrix Mlp::forward_batch(const Matrix& x, Tape& tape) const {
    if (static_cast<std::size_t>(x.rows()) != input_dim()) throw std::invalid_argument("Mlp::forward_batch: input dimension mismatch");
    tape.inputs.clear();
    tape.activations.clear();
    Matrix h = x;
    for (const auto& l : layers_) {
        tape.inputs.push_back(h);
        Matrix z = l.weight * h;
        z.colwise() += l.bias;
        activate_inplace(l.activation, z);
        tape.activations.push_back(z);
        h = std::move(z);
    }
    return h;
}

GradientSet Mlp::backward(const Tape& tape, const Matrix& upstream, Matrix* input_grad) const {
    if (tape.inputs.size() != layers_.size()) throw std::invalid_argument("Mlp::backward: tape does not match network");
    GradientSet g;
    g.weight.resize(layers_.size());
    g.bias.resize(layers_.size());
    Matrix delta = upstream;
    for (std::size_t k = layers_.size(); k-- > 0;) {
        const Layer& l = layers_[k];
        delta = delta.cwiseProduct(activation_derivative(l.activation, tape.activations[k]));
        g.weight[k] = delta * tape.inputs[k].transpose();
        g.bias[k] = delta.rowwise().sum();
        if (k > 0 || input_grad != nullptr) delta = l.weight.transpose() * delta;
    }
    if (input_grad != nullptr) *input_grad = std::move(delta);
    return g;
}

Matrix Mlp::input_gradient(const Tape& tape, const Matrix& upstream) const {
    if (tape.inputs.size() != layers_.size()) throw std::invalid_argument("Mlp::input_gradient: tape does not match network");
    Matrix delta = upstream;
    for (std::size_t k = layers_.size(); k-- > 0;) {
        const Layer& l = layers_[k];
        delta = l.weight.transpose() * delta.cwiseProduct(activation_derivative(l.activation, tape.activations[k]));
    }
    return delta;
}

GradientSet Mlp::zero_gradients() const {
    GradientSet g;
    for (const auto& l : layers_) {
        g.weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
        g.bias.push_back(Vector::Zero(l.bias.size()));
    }
    return g;
}

std::vector<ParamRef> Mlp::parameters() {
    std::vector<ParamRef> out;
    for (auto& l : layers_) {
        out.emplace_back(l.weight.data(), l.weight.size());
        out.emplace_back(l.bias.data(), l.bias.size());
    }
    return out;
}

std::vector<ConstParamRef> Mlp::parameters() const {
    std::vector<ConstParamRef> out;
    for (const auto& l : layers_) {
        out.emplace_back(l.weight.data(), l.weight.size());
        out.emplace_back(l.bias.data(), l.bias.size());
    }
    return out;
}

bool Mlp::all_finite() const {
    for (const auto& l : layers_)
        if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
}

bool Mlp::same_shape(const Mlp& other) const {
    if (layers_.size() != other.layers_.size()) return false;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        const auto& a = layers_[k];
        const auto& b = other.layers_[k];
        if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() || a.activation != b.activation)
            return false;
    }
    return true;
}

void Mlp::save(std::ostream& out) const {
    out << "mlp " << layers_.size() << '\n';
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        out << "activation " << to_string(layers_[k].activation) << '\n';
        write_matrix(out, "weight", layers_[k].weight);
        write_matrix(out, "bias", layers_[k].bias);
    }
}

Mlp Mlp::load(std::istream& in) {
    std::string tag;
    std::size_t n = 0;
    if (!(in >> tag >> n) || tag != "mlp") throw std::runtime_error("checkpoint: expected mlp header");
    std::vector<Layer> layers(n);
    for (auto& l : layers) {
        std::string act;
        if (!(in >> tag >> act) || tag != "activation") throw std::runtime_error("checkpoint: expected activation");
        l.activation = activation_from_string(act);
        l.weight = read_matrix(in, "weight");
        Matrix b = read_matrix(in, "bias");
        if (b.cols() != 1) throw std::runtime_error("checkpoint: bias must be a column");
        l.bias = b.col(0);
    }
    return Mlp(std::move(layers));
}

void Adam::step(const std::vector<ParamRef>& params, const std::vector<ConstParamRef>& grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("Adam: parameter/gradient count mismatch");
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.push_back(Vector::Zero(p.size()));
            v_.push_back(Vector::Zero(p.size()));
        }
    }
    if (m_.size() != params.size()) throw std::invalid_argument("Adam: parameter list changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (grads[k].size() != params[k].size()) throw std::invalid_argument("Adam: gradient shape mismatch");
        m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * grads[k];
        v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * grads[k].cwiseAbs2();
        auto p = params[k];
        p.array() -= lr_ * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + eps_);
    }
}

void polyak_update(Mlp& target, const Mlp& online, double tau) {
    if (!target.same_shape(online)) throw std::invalid_argument("polyak_update: shape mismatch");
    auto t = target.parameters();
    auto o = online.parameters();
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = tau * o[k] + (1.0 - tau) * t[k];
}

void polyak_update(Matrix& target, const Matrix& online, double tau) {
    if (target.rows() != online.rows() || target.cols() != online.cols())
        throw std::invalid_argument("polyak_update: shape mismatch");
    target = tau * online + (1.0 - tau) * target;
}

void write_matrix(std::ostream& out, const std::string& name, const Matrix& m) {
    out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c) out << ' ';
            out << fmt::format("{:a}", m(r, c));
        }
        out << '\n';
    }
}

Matrix read_matrix(std::istream& in, const std::string& expected_name) {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    if (!(in >> name >> rows >> cols) || name != expected_name)
        throw std::runtime_error("checkpoint: expected matrix '" + expected_name + "'");
    if (rows < 0 || cols < 0) throw std::runtime_error("checkpoint: negative matrix shape");
    Matrix m(rows, cols);
    std::string tok;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) {
            if (!(in >> tok)) throw std::runtime_error("checkpoint: truncated matrix '" + expected_name + "'");
            char* end = nullptr;
            m(r, c) = std::strtod(tok.c_str(), &end);
            if (end == tok.c_str() || *end != '\0') throw std::runtime_error("checkpoint: bad number '" + tok + "'");
        }
    return m;
}

}  // namespace lamp::nn
