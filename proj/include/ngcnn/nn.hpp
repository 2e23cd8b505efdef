#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ngcnn/rng.hpp"
#include "ngcnn/tensor.hpp"

namespace ngcnn {

enum class Activation { identity, relu, tanh, softsign };
enum class OutputActivation { sigmoid, softplus };
enum class Mode { train, infer };

std::string_view to_string(Activation a);
std::string_view to_string(OutputActivation a);
Activation parse_activation(std::string_view s);
OutputActivation parse_output_activation(std::string_view s);

// ---- layer specifications -------------------------------------------------

// Valid 1-D convolution over [length, channels]. pad_right zeros are
// appended before convolving (used by downsampling convolutions).
struct Conv1D {
    std::size_t kernel = 1;
    std::size_t filters = 1;
    std::size_t stride = 1;
    Activation activation = Activation::relu;
    std::size_t pad_right = 0;
};

// Per-channel max over consecutive regions of `region` rows; the last
// region may be shorter.
struct RegionalMaxPool {
    std::size_t region = 1;
};

struct Dense {
    std::size_t units = 1;
    Activation activation = Activation::identity;
    double l2 = 0.0;  // adds l2 * sum(w^2) to the loss, bias excluded
};

struct Dropout {
    double rate = 0.0;
};

struct Flatten { };

// features: concatenates flat vectors. channels: truncates [L_i, m_i]
// inputs to the shortest L and stacks them channel-wise.
struct ConcatBranches {
    enum class Axis { features, channels };
    Axis axis = Axis::features;
};

// Maps a single logit to a probability clamped into (0, 1).
struct SigmoidOutput {
    OutputActivation activation = OutputActivation::sigmoid;
};

using LayerSpec = std::variant<Conv1D, RegionalMaxPool, Dense, Dropout, Flatten, ConcatBranches, SigmoidOutput>;

std::string_view layer_kind(const LayerSpec& spec);

// ---- shape algebra --------------------------------------------------------

// floor((n + pad - k) / s) + 1; zero when the window does not fit.
std::size_t conv_output_length(std::size_t n, std::size_t kernel, std::size_t stride, std::size_t pad_right = 0);
// ceil(length / region)
std::size_t pool_output_length(std::size_t length, std::size_t region);

// ---- standalone kernels ---------------------------------------------------

template <typename T>
T activate(Activation a, T x);
// Derivative expressed through the activation's output value.
template <typename T>
T activation_slope(Activation a, T y);

// input [n, c], weights [k, c, m], bias [m] -> [L_out, m]
template <typename T>
Tensor<T> conv1d_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                         std::size_t stride, Activation activation, std::size_t pad_right = 0);

// Given the forward output and d(loss)/d(output), accumulates weight and
// bias gradients; input_grad may be null.
template <typename T>
void conv1d_backward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& output,
                     const Tensor<T>& output_grad, std::size_t stride, Activation activation,
                     Tensor<T>* input_grad, Tensor<T>& weight_grad, Tensor<T>& bias_grad);

template <typename T>
struct PoolResult {
    Tensor<T> output;
    std::vector<std::uint32_t> argmax;  // input row chosen for each output element
};

template <typename T>
PoolResult<T> maxpool_forward(const Tensor<T>& input, std::size_t region);

template <typename T>
void maxpool_backward(std::span<const std::uint32_t> argmax, const Tensor<T>& output_grad, Tensor<T>& input_grad);

// Inverted dropout; `mask` receives 1 for kept units in train mode.
template <typename T>
Tensor<T> dropout_forward(const Tensor<T>& input, double rate, Mode mode, Rng& rng,
                          std::vector<std::uint32_t>* mask = nullptr);

// ---- loss and optimizer ---------------------------------------------------

inline constexpr double kProbabilityClamp = 1e-12;

// Clamps into [1e-12, 1 - 1e-12], tightened to the nearest representable
// values of T so the result is never exactly 0 or 1.
template <typename T>
T clamp_probability(T p);

// -[t ln p + (1 - t) ln(1 - p)] on the clamped prediction.
double bce_loss(double prediction, int target);

struct AdamOptions {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <typename T>
void adam_step(Parameter<T>& param, const AdamOptions& options = {});

// ---- layer graph ----------------------------------------------------------

inline constexpr int kNetworkInput = -1;

struct Node {
    std::string name;
    LayerSpec spec;
    std::vector<int> inputs;  // node ids, or kNetworkInput
    Shape shape;              // output shape from the shape algebra
    int weight = -1;          // parameter indices, -1 when absent
    int bias = -1;
};

template <typename T>
using Gradients = std::vector<Tensor<T>>;

template <typename T>
class Network;

// Activations recorded by one forward pass.
template <typename T>
class Trace {
public:
    bool empty() const { return network_ == nullptr; }
    Mode mode() const { return mode_; }
    const Tensor<T>& output() const { return outputs_.back(); }
    const Tensor<T>& node_output(std::size_t node) const { return outputs_.at(node); }

private:
    friend class Network<T>;

    const Network<T>* network_ = nullptr;
    Mode mode_ = Mode::infer;
    Tensor<T> input_;
    std::vector<Tensor<T>> outputs_;
    std::vector<std::vector<std::uint32_t>> routes_;  // pooling argmax or dropout mask
};

template <typename T>
class Network {
public:
    explicit Network(Shape input_shape);

    // Converts every parameter (value and optimizer state) to T.
    template <typename U>
    explicit Network(const Network<U>& other);

    // Appends a node and returns its id. Throws ShapeError naming the node
    // when its output would be empty or the inputs do not fit.
    int add(std::string name, LayerSpec spec, std::vector<int> inputs);
    int add(std::string name, LayerSpec spec, int input) { return add(std::move(name), std::move(spec), std::vector<int>{input}); }

    // Glorot-uniform weights, zero biases. Each parameter draws from a
    // stream keyed by (seed, parameter name).
    void initialize(std::uint64_t seed);

    Trace<T> forward(const Tensor<T>& input, Mode mode, std::uint64_t dropout_seed = 0) const;

    // Accumulates d(loss)/d(parameters) into grads given d(loss)/d(output).
    void backward(const Trace<T>& trace, const Tensor<T>& output_grad, Gradients<T>& grads) const;
    // Same, accumulating into each Parameter's grad.
    void backward(const Trace<T>& trace, const Tensor<T>& output_grad);

    // Binary cross-entropy of the network output against target; adds the
    // loss gradient into grads and returns the loss. With a sigmoid output
    // the logit gradient is p - t.
    double loss_backward(const Trace<T>& trace, int target, Gradients<T>& grads) const;

    Gradients<T> zero_gradients() const;

    double l2_penalty() const;
    void add_l2_gradient(Gradients<T>& grads) const;

    const Shape& input_shape() const { return input_shape_; }
    const Shape& output_shape() const { return nodes_.back().shape; }
    const std::vector<Node>& nodes() const { return nodes_; }
    std::vector<Parameter<T>>& parameters() { return params_; }
    const std::vector<Parameter<T>>& parameters() const { return params_; }
    std::size_t parameter_count() const;
    bool has_dropout() const;

private:
    template <typename U>
    friend class Network;

    Shape infer_shape(const std::string& name, const LayerSpec& spec, const std::vector<int>& inputs) const;
    const Shape& shape_of(int id) const { return id == kNetworkInput ? input_shape_ : nodes_[id].shape; }
    void check_trace(const Trace<T>& trace) const;
    void backward_from(const Trace<T>& trace, std::size_t start, Tensor<T> seed, Gradients<T>& grads) const;

    Shape input_shape_;
    std::vector<Node> nodes_;
    std::vector<Parameter<T>> params_;
};

template <typename T>
template <typename U>
Network<T>::Network(const Network<U>& other)
  : input_shape_(other.input_shape_), nodes_(other.nodes_)
{
    params_.reserve(other.params_.size());
    for (const auto& p : other.params_) {
        Parameter<T> q;
        q.name = p.name;
        q.value = p.value.template cast<T>();
        q.grad = p.grad.template cast<T>();
        q.adam_m = p.adam_m.template cast<T>();
        q.adam_v = p.adam_v.template cast<T>();
        q.step_count = p.step_count;
        params_.push_back(std::move(q));
    }
}

// ---- gradient checking ----------------------------------------------------

struct GradcheckResult {
    double max_relative_error = 0.0;
    std::string worst_parameter;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
};

// Relative error used by gradcheck: |a - n| / max(|a| + |n|, floor).
inline constexpr double kGradcheckFloor = 1e-6;

// Compares loss_backward() against central differences of
// bce + l2 penalty for every scalar parameter. The network must end in
// SigmoidOutput. Throws ArgumentError when dropout is active in train
// mode and Error when the loss is not finite.
GradcheckResult gradcheck(Network<double>& net, const Tensor<double>& input, int target, double eps = 1e-5,
                          Mode mode = Mode::infer);

}  // namespace ngcnn
