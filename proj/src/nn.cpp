#include "ngcnn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ngcnn {

std::string shape_string(const Shape& shape)
{
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? ", " : "") << shape[i];
    }
    os << ')';
    return os.str();
}

std::string_view to_string(Activation a)
{
    switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::softsign: return "softsign";
    }
    return "?";
}

std::string_view to_string(OutputActivation a)
{
    return a == OutputActivation::sigmoid ? "sigmoid" : "softplus";
}

Activation parse_activation(std::string_view s)
{
    if (s == "identity" || s == "linear") return Activation::identity;
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    if (s == "softsign") return Activation::softsign;
    throw ArgumentError("unknown activation '" + std::string(s) + "'");
}

OutputActivation parse_output_activation(std::string_view s)
{
    if (s == "sigmoid") return OutputActivation::sigmoid;
    if (s == "softplus") return OutputActivation::softplus;
    throw ArgumentError("unknown output activation '" + std::string(s) + "'");
}

std::string_view layer_kind(const LayerSpec& spec)
{
    struct Visitor {
        std::string_view operator()(const Conv1D&) const { return "Conv1D"; }
        std::string_view operator()(const RegionalMaxPool&) const { return "RegionalMaxPool"; }
        std::string_view operator()(const Dense&) const { return "Dense"; }
        std::string_view operator()(const Dropout&) const { return "Dropout"; }
        std::string_view operator()(const Flatten&) const { return "Flatten"; }
        std::string_view operator()(const ConcatBranches&) const { return "ConcatBranches"; }
        std::string_view operator()(const SigmoidOutput&) const { return "SigmoidOutput"; }
    };
    return std::visit(Visitor{}, spec);
}

std::size_t conv_output_length(std::size_t n, std::size_t kernel, std::size_t stride, std::size_t pad_right)
{
    if (kernel == 0 || stride == 0 || n + pad_right < kernel) {
        return 0;
    }
    return (n + pad_right - kernel) / stride + 1;
}

std::size_t pool_output_length(std::size_t length, std::size_t region)
{
    if (region == 0) {
        return 0;
    }
    return (length + region - 1) / region;
}

// ---- kernels --------------------------------------------------------------

template <typename T>
T activate(Activation a, T x)
{
    switch (a) {
    case Activation::identity: return x;
    case Activation::relu: return x > T(0) ? x : T(0);
    case Activation::tanh: return std::tanh(x);
    case Activation::softsign: return x / (T(1) + std::abs(x));
    }
    return x;
}

template <typename T>
T activation_slope(Activation a, T y)
{
    switch (a) {
    case Activation::identity: return T(1);
    case Activation::relu: return y > T(0) ? T(1) : T(0);
    case Activation::tanh: return T(1) - y * y;
    case Activation::softsign: {
        const T r = T(1) - std::abs(y);
        return r * r;
    }
    }
    return T(1);
}

template <typename T>
Tensor<T> conv1d_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                         std::size_t stride, Activation activation, std::size_t pad_right)
{
    if (input.rank() != 2 || weights.rank() != 3 || bias.rank() != 1) {
        throw ShapeError("conv1d: expected input [n, c], weights [k, c, m] and bias [m]");
    }
    const std::size_t n = input.dim(0), c = input.dim(1);
    const std::size_t k = weights.dim(0), m = weights.dim(2);
    if (weights.dim(1) != c || bias.dim(0) != m) {
        throw ShapeError("conv1d: weights " + shape_string(weights.shape) + " do not match input " +
                         shape_string(input.shape));
    }
    if (stride == 0) {
        throw ShapeError("conv1d: stride must be at least 1");
    }
    if (n + pad_right < k) {
        throw ShapeError("conv1d: input length n=" + std::to_string(n) + " is shorter than kernel k=" +
                         std::to_string(k));
    }
    const std::size_t out_len = conv_output_length(n, k, stride, pad_right);
    Tensor<T> out({out_len, m});
    const T* x = input.values.data();
    const T* w = weights.values.data();
    for (std::size_t t = 0; t < out_len; ++t) {
        T* y = out.values.data() + t * m;
        std::copy(bias.values.begin(), bias.values.end(), y);
        for (std::size_t q = 0; q < k; ++q) {
            const std::size_t pos = t * stride + q;
            if (pos >= n) {
                break;
            }
            const T* xrow = x + pos * c;
            for (std::size_t ch = 0; ch < c; ++ch) {
                const T a = xrow[ch];
                if (a == T(0)) {
                    continue;
                }
                const T* wrow = w + (q * c + ch) * m;
                for (std::size_t j = 0; j < m; ++j) {
                    y[j] += a * wrow[j];
                }
            }
        }
        if (activation != Activation::identity) {
            for (std::size_t j = 0; j < m; ++j) {
                y[j] = activate(activation, y[j]);
            }
        }
    }
    return out;
}

template <typename T>
void conv1d_backward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& output,
                     const Tensor<T>& output_grad, std::size_t stride, Activation activation,
                     Tensor<T>* input_grad, Tensor<T>& weight_grad, Tensor<T>& bias_grad)
{
    const std::size_t n = input.dim(0), c = input.dim(1);
    const std::size_t k = weights.dim(0), m = weights.dim(2);
    const std::size_t out_len = output.dim(0);
    std::vector<T> dz(m);
    const T* x = input.values.data();
    const T* w = weights.values.data();
    T* dw = weight_grad.values.data();
    for (std::size_t t = 0; t < out_len; ++t) {
        const T* y = output.values.data() + t * m;
        const T* gy = output_grad.values.data() + t * m;
        bool any = false;
        for (std::size_t j = 0; j < m; ++j) {
            dz[j] = gy[j] * activation_slope(activation, y[j]);
            bias_grad[j] += dz[j];
            any = any || dz[j] != T(0);
        }
        if (!any) {
            continue;
        }
        for (std::size_t q = 0; q < k; ++q) {
            const std::size_t pos = t * stride + q;
            if (pos >= n) {
                break;
            }
            const T* xrow = x + pos * c;
            T* gxrow = input_grad ? input_grad->values.data() + pos * c : nullptr;
            for (std::size_t ch = 0; ch < c; ++ch) {
                const T a = xrow[ch];
                T* dwrow = dw + (q * c + ch) * m;
                if (a != T(0)) {
                    for (std::size_t j = 0; j < m; ++j) {
                        dwrow[j] += a * dz[j];
                    }
                }
                if (gxrow) {
                    const T* wrow = w + (q * c + ch) * m;
                    T acc = T(0);
                    for (std::size_t j = 0; j < m; ++j) {
                        acc += wrow[j] * dz[j];
                    }
                    gxrow[ch] += acc;
                }
            }
        }
    }
}

template <typename T>
PoolResult<T> maxpool_forward(const Tensor<T>& input, std::size_t region)
{
    if (input.rank() != 2) {
        throw ShapeError("maxpool: expected input [length, channels]");
    }
    const std::size_t len = input.dim(0), m = input.dim(1);
    if (len == 0 || region == 0) {
        throw ShapeError("maxpool: length and region must be at least 1");
    }
    const std::size_t p = pool_output_length(len, region);
    PoolResult<T> r{Tensor<T>({p, m}), std::vector<std::uint32_t>(p * m)};
    for (std::size_t j = 0; j < p; ++j) {
        const std::size_t lo = j * region;
        const std::size_t hi = std::min(lo + region, len);
        for (std::size_t ch = 0; ch < m; ++ch) {
            std::size_t best = lo;
            T value = input.values[lo * m + ch];
            for (std::size_t row = lo + 1; row < hi; ++row) {
                const T v = input.values[row * m + ch];
                if (v > value) {
                    value = v;
                    best = row;
                }
            }
            r.output.values[j * m + ch] = value;
            r.argmax[j * m + ch] = static_cast<std::uint32_t>(best);
        }
    }
    return r;
}

template <typename T>
void maxpool_backward(std::span<const std::uint32_t> argmax, const Tensor<T>& output_grad, Tensor<T>& input_grad)
{
    const std::size_t m = output_grad.dim(1);
    for (std::size_t i = 0; i < argmax.size(); ++i) {
        input_grad.values[argmax[i] * m + i % m] += output_grad.values[i];
    }
}

template <typename T>
Tensor<T> dropout_forward(const Tensor<T>& input, double rate, Mode mode, Rng& rng, std::vector<std::uint32_t>* mask)
{
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw ArgumentError("dropout rate must lie in [0, 1)");
    }
    Tensor<T> out = input;
    if (mode == Mode::infer || rate == 0.0) {
        if (mask) {
            mask->assign(input.size(), 1);
        }
        return out;
    }
    const T scale = static_cast<T>(1.0 / (1.0 - rate));
    if (mask) {
        mask->resize(input.size());
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        const bool keep = uniform01(rng) >= rate;
        out.values[i] = keep ? out.values[i] * scale : T(0);
        if (mask) {
            (*mask)[i] = keep ? 1 : 0;
        }
    }
    return out;
}

template <typename T>
T clamp_probability(T p)
{
    const T lo = std::max(static_cast<T>(kProbabilityClamp), std::numeric_limits<T>::min());
    const T hi = std::min(static_cast<T>(1.0 - kProbabilityClamp), std::nextafter(T(1), T(0)));
    if (std::isnan(p)) {
        return T(0.5);
    }
    return std::clamp(p, lo, hi);
}

double bce_loss(double prediction, int target)
{
    const double p = clamp_probability(prediction);
    return target ? -std::log(p) : -std::log1p(-p);
}

template <typename T>
void adam_step(Parameter<T>& param, const AdamOptions& o)
{
    ++param.step_count;
    const double t = static_cast<double>(param.step_count);
    const double c1 = 1.0 - std::pow(o.beta1, t);
    const double c2 = 1.0 - std::pow(o.beta2, t);
    for (std::size_t i = 0; i < param.value.size(); ++i) {
        const double g = param.grad.values[i];
        const double m = o.beta1 * static_cast<double>(param.adam_m.values[i]) + (1.0 - o.beta1) * g;
        const double v = o.beta2 * static_cast<double>(param.adam_v.values[i]) + (1.0 - o.beta2) * g * g;
        param.adam_m.values[i] = static_cast<T>(m);
        param.adam_v.values[i] = static_cast<T>(v);
        const double mhat = m / c1;
        const double vhat = v / c2;
        param.value.values[i] =
            static_cast<T>(static_cast<double>(param.value.values[i]) - o.learning_rate * mhat / (std::sqrt(vhat) + o.epsilon));
    }
}

// ---- network --------------------------------------------------------------

namespace {

double sigmoid(double z)
{
    if (z >= 0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double softplus(double z)
{
    return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

template <typename... Fs>
struct Overloaded : Fs... {
    using Fs::operator()...;
};
template <typename... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

}  // namespace

template <typename T>
Network<T>::Network(Shape input_shape)
  : input_shape_(std::move(input_shape))
{
    if (input_shape_.empty() || shape_size(input_shape_) == 0) {
        throw ShapeError("network input shape must be non-empty");
    }
}

template <typename T>
Shape Network<T>::infer_shape(const std::string& name, const LayerSpec& spec, const std::vector<int>& inputs) const
{
    auto fail = [&](const std::string& why) -> ShapeError {
        return ShapeError("layer '" + name + "' (" + std::string(layer_kind(spec)) + "): " + why);
    };
    if (inputs.empty()) {
        throw fail("no inputs");
    }
    for (int id : inputs) {
        if (id != kNetworkInput && (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())) {
            throw fail("unknown input node " + std::to_string(id));
        }
    }
    const bool concat = std::holds_alternative<ConcatBranches>(spec);
    if (!concat && inputs.size() != 1) {
        throw fail("expects exactly one input");
    }
    const Shape& in = shape_of(inputs.front());

    return std::visit(
        Overloaded{
            [&](const Conv1D& c) -> Shape {
                if (c.kernel == 0 || c.filters == 0 || c.stride == 0) {
                    throw fail("kernel, filters and stride must be at least 1");
                }
                if (in.size() != 2) {
                    throw fail("expects a sequence input [length, channels], got " + shape_string(in));
                }
                const std::size_t len = conv_output_length(in[0], c.kernel, c.stride, c.pad_right);
                if (len < 1) {
                    throw fail("input length " + std::to_string(in[0]) + " is shorter than kernel " +
                               std::to_string(c.kernel) + ", output length would be < 1");
                }
                return {len, c.filters};
            },
            [&](const RegionalMaxPool& p) -> Shape {
                if (p.region == 0) {
                    throw fail("region must be at least 1");
                }
                if (in.size() != 2 || in[0] == 0) {
                    throw fail("expects a non-empty sequence input, got " + shape_string(in));
                }
                return {pool_output_length(in[0], p.region), in[1]};
            },
            [&](const Dense& d) -> Shape {
                if (d.units == 0) {
                    throw fail("units must be at least 1");
                }
                if (in.size() != 1) {
                    throw fail("expects a flat input, got " + shape_string(in));
                }
                if (d.l2 < 0) {
                    throw fail("l2 must be non-negative");
                }
                return {d.units};
            },
            [&](const Dropout& d) -> Shape {
                if (!(d.rate >= 0.0 && d.rate < 1.0)) {
                    throw fail("rate must lie in [0, 1)");
                }
                return in;
            },
            [&](const Flatten&) -> Shape { return {shape_size(in)}; },
            [&](const ConcatBranches& cb) -> Shape {
                if (cb.axis == ConcatBranches::Axis::features) {
                    std::size_t total = 0;
                    for (int id : inputs) {
                        const Shape& s = shape_of(id);
                        if (s.size() != 1) {
                            throw fail("feature concatenation expects flat inputs");
                        }
                        total += s[0];
                    }
                    return {total};
                }
                std::size_t len = std::numeric_limits<std::size_t>::max();
                std::size_t channels = 0;
                for (int id : inputs) {
                    const Shape& s = shape_of(id);
                    if (s.size() != 2) {
                        throw fail("channel concatenation expects sequence inputs");
                    }
                    len = std::min(len, s[0]);
                    channels += s[1];
                }
                if (len < 1) {
                    throw fail("shortest branch is empty");
                }
                return {len, channels};
            },
            [&](const SigmoidOutput&) -> Shape {
                if (shape_size(in) != 1) {
                    throw fail("expects a single logit, got " + shape_string(in));
                }
                return {1};
            },
        },
        spec);
}

template <typename T>
int Network<T>::add(std::string name, LayerSpec spec, std::vector<int> inputs)
{
    Node node;
    node.shape = infer_shape(name, spec, inputs);
    node.name = std::move(name);
    node.inputs = std::move(inputs);
    const Shape& in = shape_of(node.inputs.front());
    if (const auto* c = std::get_if<Conv1D>(&spec)) {
        node.weight = static_cast<int>(params_.size());
        params_.emplace_back(node.name + ".weight", Shape{c->kernel, in[1], c->filters});
        node.bias = static_cast<int>(params_.size());
        params_.emplace_back(node.name + ".bias", Shape{c->filters});
    } else if (const auto* d = std::get_if<Dense>(&spec)) {
        node.weight = static_cast<int>(params_.size());
        params_.emplace_back(node.name + ".weight", Shape{in[0], d->units});
        node.bias = static_cast<int>(params_.size());
        params_.emplace_back(node.name + ".bias", Shape{d->units});
    }
    node.spec = std::move(spec);
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size() - 1);
}

template <typename T>
void Network<T>::initialize(std::uint64_t seed)
{
    for (const auto& node : nodes_) {
        if (node.weight < 0) {
            continue;
        }
        auto& w = params_[node.weight];
        std::size_t fan_in = 0, fan_out = 0;
        if (const auto* c = std::get_if<Conv1D>(&node.spec)) {
            fan_in = c->kernel * w.value.dim(1);
            fan_out = c->kernel * c->filters;
        } else {
            fan_in = w.value.dim(0);
            fan_out = w.value.dim(1);
        }
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Rng rng(derive_seed(seed, w.name));
        for (auto& v : w.value.values) {
            v = static_cast<T>(uniform(rng, -limit, limit));
        }
        params_[node.bias].value.fill(T(0));
    }
    for (auto& p : params_) {
        p.grad.fill(T(0));
        p.adam_m.fill(T(0));
        p.adam_v.fill(T(0));
        p.step_count = 0;
    }
}

template <typename T>
Trace<T> Network<T>::forward(const Tensor<T>& input, Mode mode, std::uint64_t dropout_seed) const
{
    if (nodes_.empty()) {
        throw ShapeError("network has no layers");
    }
    if (input.shape != input_shape_) {
        throw ShapeError("input shape " + shape_string(input.shape) + " does not match network input " +
                         shape_string(input_shape_));
    }
    Trace<T> tr;
    tr.network_ = this;
    tr.mode_ = mode;
    tr.input_ = input;
    tr.outputs_.resize(nodes_.size());
    tr.routes_.resize(nodes_.size());
    auto in_of = [&](int id) -> const Tensor<T>& { return id == kNetworkInput ? tr.input_ : tr.outputs_[id]; };

    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Node& node = nodes_[i];
        const Tensor<T>& x = in_of(node.inputs.front());
        Tensor<T>& y = tr.outputs_[i];
        std::visit(
            Overloaded{
                [&](const Conv1D& c) {
                    y = conv1d_forward(x, params_[node.weight].value, params_[node.bias].value, c.stride,
                                       c.activation, c.pad_right);
                },
                [&](const RegionalMaxPool& p) {
                    auto r = maxpool_forward(x, p.region);
                    y = std::move(r.output);
                    tr.routes_[i] = std::move(r.argmax);
                },
                [&](const Dense& d) {
                    const auto& w = params_[node.weight].value;
                    const auto& b = params_[node.bias].value;
                    const std::size_t f = x.size(), u = d.units;
                    y = Tensor<T>({u});
                    std::copy(b.values.begin(), b.values.end(), y.values.begin());
                    for (std::size_t a = 0; a < f; ++a) {
                        const T v = x.values[a];
                        if (v == T(0)) {
                            continue;
                        }
                        const T* wrow = w.values.data() + a * u;
                        for (std::size_t j = 0; j < u; ++j) {
                            y.values[j] += v * wrow[j];
                        }
                    }
                    if (d.activation != Activation::identity) {
                        for (auto& v : y.values) {
                            v = activate(d.activation, v);
                        }
                    }
                },
                [&](const Dropout& d) {
                    Rng rng(derive_seed(dropout_seed, static_cast<std::uint64_t>(i)));
                    y = dropout_forward(x, d.rate, mode, rng, &tr.routes_[i]);
                },
                [&](const Flatten&) {
                    y = Tensor<T>(node.shape, x.values);
                },
                [&](const ConcatBranches& cb) {
                    y = Tensor<T>(node.shape);
                    if (cb.axis == ConcatBranches::Axis::features) {
                        std::size_t offset = 0;
                        for (int id : node.inputs) {
                            const auto& part = in_of(id);
                            std::copy(part.values.begin(), part.values.end(), y.values.begin() + static_cast<std::ptrdiff_t>(offset));
                            offset += part.size();
                        }
                        return;
                    }
                    const std::size_t len = node.shape[0], width = node.shape[1];
                    std::size_t col = 0;
                    for (int id : node.inputs) {
                        const auto& part = in_of(id);
                        const std::size_t m = part.dim(1);
                        for (std::size_t t = 0; t < len; ++t) {
                            std::copy_n(part.values.data() + t * m, m, y.values.data() + t * width + col);
                        }
                        col += m;
                    }
                },
                [&](const SigmoidOutput& s) {
                    const double z = static_cast<double>(x.values[0]);
                    const double p = s.activation == OutputActivation::sigmoid ? sigmoid(z) : softplus(z);
                    y = Tensor<T>({1}, clamp_probability(static_cast<T>(p)));
                },
            },
            node.spec);
    }
    return tr;
}

template <typename T>
void Network<T>::check_trace(const Trace<T>& trace) const
{
    if (trace.empty()) {
        throw ArgumentError("backward called before forward: the trace holds no recorded pass");
    }
    if (trace.network_ != this) {
        throw ArgumentError("backward called with a trace recorded by a different network");
    }
}

template <typename T>
Gradients<T> Network<T>::zero_gradients() const
{
    Gradients<T> g;
    g.reserve(params_.size());
    for (const auto& p : params_) {
        g.emplace_back(p.value.shape);
    }
    return g;
}

template <typename T>
void Network<T>::backward_from(const Trace<T>& tr, std::size_t start, Tensor<T> seed, Gradients<T>& grads) const
{
    if (grads.size() != params_.size()) {
        throw ArgumentError("gradient buffer does not match the network's parameters");
    }
    std::vector<Tensor<T>> node_grads(nodes_.size());
    node_grads[start] = std::move(seed);

    auto input_of = [&](int id) -> const Tensor<T>& { return id == kNetworkInput ? tr.input_ : tr.outputs_[id]; };
    // Gradient slot for an input node; null for the network input, whose
    // gradient is never needed.
    auto grad_slot = [&](int id) -> Tensor<T>* {
        if (id == kNetworkInput) {
            return nullptr;
        }
        auto& g = node_grads[id];
        if (g.values.empty()) {
            g = Tensor<T>(nodes_[id].shape);
        }
        return &g;
    };

    for (std::size_t i = start + 1; i-- > 0;) {
        if (node_grads[i].values.empty()) {
            continue;
        }
        const Node& node = nodes_[i];
        const Tensor<T>& gy = node_grads[i];
        const Tensor<T>& y = tr.outputs_[i];
        const Tensor<T>& x = input_of(node.inputs.front());
        std::visit(
            Overloaded{
                [&](const Conv1D& c) {
                    Tensor<T>* gx = grad_slot(node.inputs.front());
                    conv1d_backward(x, params_[node.weight].value, y, gy, c.stride, c.activation, gx,
                                    grads[node.weight], grads[node.bias]);
                },
                [&](const RegionalMaxPool&) {
                    if (Tensor<T>* gx = grad_slot(node.inputs.front())) {
                        maxpool_backward<T>(tr.routes_[i], gy, *gx);
                    }
                },
                [&](const Dense& d) {
                    const auto& w = params_[node.weight].value;
                    const std::size_t f = x.size(), u = d.units;
                    std::vector<T> dz(u);
                    for (std::size_t j = 0; j < u; ++j) {
                        dz[j] = gy.values[j] * activation_slope(d.activation, y.values[j]);
                        grads[node.bias].values[j] += dz[j];
                    }
                    Tensor<T>* gx = grad_slot(node.inputs.front());
                    for (std::size_t a = 0; a < f; ++a) {
                        const T v = x.values[a];
                        T* dwrow = grads[node.weight].values.data() + a * u;
                        if (v != T(0)) {
                            for (std::size_t j = 0; j < u; ++j) {
                                dwrow[j] += v * dz[j];
                            }
                        }
                        if (gx) {
                            const T* wrow = w.values.data() + a * u;
                            T acc = T(0);
                            for (std::size_t j = 0; j < u; ++j) {
                                acc += wrow[j] * dz[j];
                            }
                            gx->values[a] += acc;
                        }
                    }
                },
                [&](const Dropout& d) {
                    Tensor<T>* gx = grad_slot(node.inputs.front());
                    if (!gx) {
                        return;
                    }
                    const bool active = tr.mode_ == Mode::train && d.rate > 0.0;
                    const T scale = static_cast<T>(1.0 / (1.0 - d.rate));
                    const auto& mask = tr.routes_[i];
                    for (std::size_t a = 0; a < gy.size(); ++a) {
                        if (!active) {
                            gx->values[a] += gy.values[a];
                        } else if (mask[a]) {
                            gx->values[a] += gy.values[a] * scale;
                        }
                    }
                },
                [&](const Flatten&) {
                    if (Tensor<T>* gx = grad_slot(node.inputs.front())) {
                        for (std::size_t a = 0; a < gy.size(); ++a) {
                            gx->values[a] += gy.values[a];
                        }
                    }
                },
                [&](const ConcatBranches& cb) {
                    if (cb.axis == ConcatBranches::Axis::features) {
                        std::size_t offset = 0;
                        for (int id : node.inputs) {
                            const std::size_t len = shape_size(shape_of(id));
                            if (Tensor<T>* gx = grad_slot(id)) {
                                for (std::size_t a = 0; a < len; ++a) {
                                    gx->values[a] += gy.values[offset + a];
                                }
                            }
                            offset += len;
                        }
                        return;
                    }
                    const std::size_t len = node.shape[0], width = node.shape[1];
                    std::size_t col = 0;
                    for (int id : node.inputs) {
                        const std::size_t m = shape_of(id)[1];
                        if (Tensor<T>* gx = grad_slot(id)) {
                            for (std::size_t t = 0; t < len; ++t) {
                                for (std::size_t j = 0; j < m; ++j) {
                                    gx->values[t * m + j] += gy.values[t * width + col + j];
                                }
                            }
                        }
                        col += m;
                    }
                },
                [&](const SigmoidOutput& s) {
                    Tensor<T>* gx = grad_slot(node.inputs.front());
                    if (!gx) {
                        return;
                    }
                    const double z = static_cast<double>(x.values[0]);
                    const double slope = s.activation == OutputActivation::sigmoid
                                             ? sigmoid(z) * (1.0 - sigmoid(z))
                                             : sigmoid(z);
                    gx->values[0] += static_cast<T>(static_cast<double>(gy.values[0]) * slope);
                },
            },
            node.spec);
    }
}

template <typename T>
void Network<T>::backward(const Trace<T>& trace, const Tensor<T>& output_grad, Gradients<T>& grads) const
{
    check_trace(trace);
    if (output_grad.shape != output_shape()) {
        throw ShapeError("output gradient shape " + shape_string(output_grad.shape) + " does not match output " +
                         shape_string(output_shape()));
    }
    backward_from(trace, nodes_.size() - 1, output_grad, grads);
}

template <typename T>
void Network<T>::backward(const Trace<T>& trace, const Tensor<T>& output_grad)
{
    Gradients<T> g = zero_gradients();
    backward(trace, output_grad, g);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        for (std::size_t a = 0; a < g[i].size(); ++a) {
            params_[i].grad.values[a] += g[i].values[a];
        }
    }
}

template <typename T>
double Network<T>::loss_backward(const Trace<T>& trace, int target, Gradients<T>& grads) const
{
    check_trace(trace);
    const Node& last = nodes_.back();
    const auto* out = std::get_if<SigmoidOutput>(&last.spec);
    if (!out) {
        throw ShapeError("loss_backward requires the network to end in SigmoidOutput");
    }
    const double p = static_cast<double>(trace.output().values[0]);
    const double loss = bce_loss(p, target);
    const int logit_id = last.inputs.front();
    if (logit_id == kNetworkInput) {
        return loss;
    }
    const double z = static_cast<double>(trace.outputs_[logit_id].values[0]);
    double dz = 0.0;
    if (out->activation == OutputActivation::sigmoid) {
        dz = sigmoid(z) - static_cast<double>(target);
    } else {
        // Softplus is unbounded above, so the clamp is active for large z and
        // the output is then flat in z.
        const T raw = static_cast<T>(softplus(z));
        if (clamp_probability(raw) == raw) {
            const double dp = target ? -1.0 / p : 1.0 / (1.0 - p);
            dz = dp * sigmoid(z);
        }
    }
    Tensor<T> seed(nodes_[logit_id].shape);
    seed.values[0] = static_cast<T>(dz);
    backward_from(trace, static_cast<std::size_t>(logit_id), std::move(seed), grads);
    return loss;
}

template <typename T>
double Network<T>::l2_penalty() const
{
    double total = 0.0;
    for (const auto& node : nodes_) {
        const auto* d = std::get_if<Dense>(&node.spec);
        if (!d || d->l2 == 0.0) {
            continue;
        }
        double sq = 0.0;
        for (T w : params_[node.weight].value.values) {
            sq += static_cast<double>(w) * static_cast<double>(w);
        }
        total += d->l2 * sq;
    }
    return total;
}

template <typename T>
void Network<T>::add_l2_gradient(Gradients<T>& grads) const
{
    for (const auto& node : nodes_) {
        const auto* d = std::get_if<Dense>(&node.spec);
        if (!d || d->l2 == 0.0) {
            continue;
        }
        const auto& w = params_[node.weight].value.values;
        auto& g = grads[node.weight].values;
        const T c = static_cast<T>(2.0 * d->l2);
        for (std::size_t a = 0; a < w.size(); ++a) {
            g[a] += c * w[a];
        }
    }
}

template <typename T>
std::size_t Network<T>::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& p : params_) {
        n += p.value.size();
    }
    return n;
}

template <typename T>
bool Network<T>::has_dropout() const
{
    return std::any_of(nodes_.begin(), nodes_.end(), [](const Node& n) {
        const auto* d = std::get_if<Dropout>(&n.spec);
        return d && d->rate > 0.0;
    });
}

// ---- gradcheck ------------------------------------------------------------

GradcheckResult gradcheck(Network<double>& net, const Tensor<double>& input, int target, double eps, Mode mode)
{
    if (mode == Mode::train && net.has_dropout()) {
        throw ArgumentError("gradcheck: dropout in train mode makes the graph non-deterministic");
    }
    if (!(eps > 0.0)) {
        throw ArgumentError("gradcheck: eps must be positive");
    }
    auto loss_at = [&]() {
        const auto tr = net.forward(input, mode, 0);
        return bce_loss(tr.output().values[0], target) + net.l2_penalty();
    };

    const auto tr = net.forward(input, mode, 0);
    auto analytic = net.zero_gradients();
    const double base = net.loss_backward(tr, target, analytic) + net.l2_penalty();
    if (!std::isfinite(base)) {
        throw Error("gradcheck: loss is not finite");
    }
    net.add_l2_gradient(analytic);

    GradcheckResult result;
    auto& params = net.parameters();
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& values = params[pi].value.values;
        for (std::size_t a = 0; a < values.size(); ++a) {
            const double saved = values[a];
            values[a] = saved + eps;
            const double up = loss_at();
            values[a] = saved - eps;
            const double down = loss_at();
            values[a] = saved;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                throw Error("gradcheck: loss is not finite at a perturbed point");
            }
            const double numeric = (up - down) / (2.0 * eps);
            const double exact = analytic[pi].values[a];
            const double rel = std::abs(exact - numeric) / std::max(std::abs(exact) + std::abs(numeric), kGradcheckFloor);
            ++result.checked;
            if (result.worst_parameter.empty() || rel > result.max_relative_error) {
                result.max_relative_error = rel;
                result.worst_parameter = params[pi].name;
                result.worst_index = a;
            }
        }
    }
    return result;
}

// ---- explicit instantiations -----------------------------------------------

#define NGCNN_INSTANTIATE(T)                                                                                     \
    template T activate<T>(Activation, T);                                                                     \
    template T activation_slope<T>(Activation, T);                                                             \
    template Tensor<T> conv1d_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,    \
                                         Activation, std::size_t);                                             \
    template void conv1d_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                     std::size_t, Activation, Tensor<T>*, Tensor<T>&, Tensor<T>&);             \
    template PoolResult<T> maxpool_forward<T>(const Tensor<T>&, std::size_t);                                  \
    template void maxpool_backward<T>(std::span<const std::uint32_t>, const Tensor<T>&, Tensor<T>&);           \
    template Tensor<T> dropout_forward<T>(const Tensor<T>&, double, Mode, Rng&, std::vector<std::uint32_t>*); \
    template T clamp_probability<T>(T);                                                                        \
    template void adam_step<T>(Parameter<T>&, const AdamOptions&);                                             \
    template class Network<T>;

NGCNN_INSTANTIATE(float)
NGCNN_INSTANTIATE(double)

#undef NGCNN_INSTANTIATE

}  // namespace ngcnn
