#pragma once

#include <cstddef>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lamp::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ParamRef = Eigen::Map<Vector>;
using ConstParamRef = Eigen::Map<const Vector>;

enum class Activation { Identity, Tanh, Relu };
std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct Layer {
    Matrix weight;  // out x in
    Vector bias;    // out
    Activation activation = Activation::Identity;
};

/// Per-parameter gradients, shape-congruent with the owning Mlp's layers.
struct GradientSet {
    std::vector<Matrix> weight;
    std::vector<Vector> bias;

    void add(const GradientSet& other);
    void scale(double factor);
    std::vector<ConstParamRef> views() const;
};

/// Intermediate activations kept by a batched forward pass for backprop.
struct Tape {
    std::vector<Matrix> inputs;       // input to each layer
    std::vector<Matrix> activations;  // post-activation output of each layer
};

/// Dense feed-forward network. Batched inputs are column-major: one sample per column.
class Mlp {
public:
    Mlp() = default;
    explicit Mlp(std::vector<Layer> layers);

    /// Uniform(+-1/sqrt(fan_in)) init for every weight and bias.
    Mlp(const std::vector<std::size_t>& sizes, Activation hidden, Activation output, std::mt19937_64& rng);

    std::size_t input_dim() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weight.cols()); }
    std::size_t output_dim() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weight.rows()); }
    std::size_t parameter_count() const;

    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& layers() { return layers_; }

    Vector forward(const Vector& x) const;
    Matrix forward_batch(const Matrix& x) const;
    Matrix forward_batch(const Matrix& x, Tape& tape) const;

    /// Reverse pass of sum_over_batch(upstream . f(x)). input_grad may be null.
    GradientSet backward(const Tape& tape, const Matrix& upstream, Matrix* input_grad) const;
    /// Gradient with respect to the input only; skips the parameter gradients.
    Matrix input_gradient(const Tape& tape, const Matrix& upstream) const;

    GradientSet zero_gradients() const;
    std::vector<ParamRef> parameters();
    std::vector<ConstParamRef> parameters() const;

    bool all_finite() const;
    bool same_shape(const Mlp& other) const;

    void save(std::ostream& out) const;
    static Mlp load(std::istream& in);

private:
    std::vector<Layer> layers_;
};

/// Adam with bias correction. Moments are created on the first step and bound
/// to the parameter list order.
class Adam {
public:
    explicit Adam(double lr = 3e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<ParamRef>& params, const std::vector<ConstParamRef>& grads);
    void step(Mlp& net, const GradientSet& grads) { step(net.parameters(), grads.views()); }

    long long steps() const { return t_; }
    double learning_rate() const { return lr_; }
    void set_learning_rate(double lr) { lr_ = lr; }

private:
    double lr_, beta1_, beta2_, eps_;
    long long t_ = 0;
    std::vector<Vector> m_;
    std::vector<Vector> v_;
};

/// target <- tau * online + (1 - tau) * target, elementwise.
void polyak_update(Mlp& target, const Mlp& online, double tau);
void polyak_update(Matrix& target, const Matrix& online, double tau);

Vector apply_activation(Activation a, const Vector& z);

/// Shape-tagged text dump; values are written as hex floats so reads are exact.
void write_matrix(std::ostream& out, const std::string& name, const Matrix& m);
Matrix read_matrix(std::istream& in, const std::string& expected_name);

}  // namespace lamp::nn
