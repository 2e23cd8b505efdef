#include "ngcnn/ngramcnn.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ngcnn {

std::string_view to_string(Variant v)
{
    switch (v) {
    case Variant::basic: return "basic";
    case Variant::pyramid: return "pyramid";
    case Variant::fluctuating: return "fluctuating";
    }
    return "?";
}

Variant parse_variant(std::string_view s)
{
    if (s == "basic") return Variant::basic;
    if (s == "pyramid") return Variant::pyramid;
    if (s == "fluctuating") return Variant::fluctuating;
    throw ArgumentError("unknown NgramCNN variant '" + std::string(s) + "'");
}

void to_json(nlohmann::json& j, const ArchitectureConfig& c)
{
    j = nlohmann::json{
        {"variant", to_string(c.variant)},
        {"width", c.width},
        {"depth", c.depth},
        {"filters", c.filters},
        {"pool_region", c.pool_region},
        {"stride", c.stride},
        {"doc_length", c.doc_length},
        {"embed_dim", c.embed_dim},
        {"dense_units", c.dense_units},
        {"dropout_rate", c.dropout_rate},
        {"l2", c.l2},
        {"conv_activation", to_string(c.conv_activation)},
        {"output_activation", to_string(c.output_activation)},
    };
}

void from_json(const nlohmann::json& j, ArchitectureConfig& c)
{
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.width = j.at("width").get<std::size_t>();
    c.depth = j.at("depth").get<std::size_t>();
    c.filters = j.at("filters").get<std::size_t>();
    c.pool_region = j.at("pool_region").get<std::size_t>();
    c.stride = j.at("stride").get<std::size_t>();
    c.doc_length = j.at("doc_length").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.dense_units = j.at("dense_units").get<std::size_t>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.l2 = j.at("l2").get<double>();
    c.conv_activation = parse_activation(j.at("conv_activation").get<std::string>());
    c.output_activation = parse_output_activation(j.at("output_activation").get<std::string>());
}

void validate(const ArchitectureConfig& c)
{
    if (c.width < 1) throw ArgumentError("width W must be at least 1");
    if (c.depth < 2 || c.depth % 2 != 0) {
        throw ArgumentError("depth L must be even and at least 2, got " + std::to_string(c.depth));
    }
    if (c.filters < 1) throw ArgumentError("filters m must be at least 1");
    if (c.pool_region < 1) throw ArgumentError("pool region R must be at least 1");
    if (c.doc_length < 1) throw ArgumentError("document length n must be at least 1");
    if (c.embed_dim < 1) throw ArgumentError("embedding dimension d must be at least 1");
    if (c.dense_units < 1) throw ArgumentError("dense units must be at least 1");
    if (!(c.dropout_rate >= 0.0 && c.dropout_rate < 1.0)) throw ArgumentError("dropout rate must lie in [0, 1)");
    if (!(c.l2 >= 0.0)) throw ArgumentError("l2 must be non-negative");
    if (c.variant == Variant::pyramid && c.stride < 2) {
        throw ArgumentError("pyramid variant needs a downsampling stride s >= 2, got " + std::to_string(c.stride));
    }
}

std::vector<std::size_t> stack_lengths(const ArchitectureConfig& c, std::size_t kernel)
{
    validate(c);
    std::vector<std::size_t> lengths;
    std::size_t len = c.doc_length;
    auto underflow = [&](std::size_t entry) {
        return ShapeError("stack " + std::to_string(entry + 1) + " of the " + std::string(to_string(c.variant)) +
                          " network leaves no positions (n=" + std::to_string(c.doc_length) + ")");
    };
    for (std::size_t i = 0; i < c.depth; ++i) {
        const bool conv_entry = i % 2 == 0;
        const bool last = i + 1 == c.depth;
        if (conv_entry) {
            const std::size_t k = c.variant == Variant::fluctuating ? c.width : kernel;
            if (len < k) {
                throw underflow(i);
            }
            len = len - k + 1;
        } else if (c.variant == Variant::pyramid && !last) {
            // stride-s convolution with k - 1 trailing zeros
            len = (len - 1) / c.stride + 1;
        } else {
            len = pool_output_length(len, c.pool_region);
        }
        lengths.push_back(len);
    }
    return lengths;
}

std::size_t flattened_feature_count(const ArchitectureConfig& c)
{
    if (c.variant == Variant::fluctuating) {
        return stack_lengths(c, c.width).back() * c.width * c.filters;
    }
    std::size_t total = 0;
    for (std::size_t k = 1; k <= c.width; ++k) {
        total += stack_lengths(c, k).back() * c.filters;
    }
    return total;
}

template <typename T>
double Model<T>::predict(const Tensor<T>& doc) const
{
    return static_cast<double>(network.forward(doc, Mode::infer).output().values[0]);
}

namespace {

template <typename T>
void add_classifier(Network<T>& net, const ArchitectureConfig& c, int features)
{
    const int dropped = net.add("dropout", Dropout{c.dropout_rate}, features);
    const int hidden = net.add("dense", Dense{c.dense_units, Activation::relu, c.l2}, dropped);
    const int logit = net.add("logit", Dense{1, Activation::identity, c.l2}, hidden);
    net.add("output", SigmoidOutput{c.output_activation}, logit);
}

template <typename T>
void build_branches(Network<T>& net, const ArchitectureConfig& c)
{
    std::vector<int> flat;
    for (std::size_t k = 1; k <= c.width; ++k) {
        const std::string prefix = "k" + std::to_string(k) + ".";
        int prev = kNetworkInput;
        for (std::size_t i = 0; i < c.depth; ++i) {
            const std::string stack = std::to_string(i / 2 + 1);
            const bool last = i + 1 == c.depth;
            if (i % 2 == 0) {
                prev = net.add(prefix + "conv" + stack, Conv1D{k, c.filters, 1, c.conv_activation}, prev);
            } else if (c.variant == Variant::pyramid && !last) {
                prev = net.add(prefix + "down" + stack, Conv1D{k, c.filters, c.stride, c.conv_activation, k - 1}, prev);
            } else {
                prev = net.add(prefix + "pool" + stack, RegionalMaxPool{c.pool_region}, prev);
            }
        }
        flat.push_back(net.add(prefix + "flatten", Flatten{}, prev));
    }
    const int features = net.add("concat", ConcatBranches{ConcatBranches::Axis::features}, flat);
    add_classifier(net, c, features);
}

template <typename T>
void build_fluctuating(Network<T>& net, const ArchitectureConfig& c)
{
    int prev = kNetworkInput;
    for (std::size_t s = 1; s <= c.depth / 2; ++s) {
        const std::string prefix = "s" + std::to_string(s) + ".";
        std::vector<int> maps;
        for (std::size_t k = 1; k <= c.width; ++k) {
            maps.push_back(net.add(prefix + "conv_k" + std::to_string(k), Conv1D{k, c.filters, 1, c.conv_activation}, prev));
        }
        const int merged = net.add(prefix + "concat", ConcatBranches{ConcatBranches::Axis::channels}, maps);
        prev = net.add(prefix + "pool", RegionalMaxPool{c.pool_region}, merged);
    }
    const int flat = net.add("flatten", Flatten{}, prev);
    add_classifier(net, c, flat);
}

void put_u16(std::ostream& out, std::uint16_t v)
{
    const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
    out.write(b, 2);
}

void put_u32(std::ostream& out, std::uint32_t v)
{
    const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                       static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b, 4);
}

bool get_bytes(std::istream& in, char* dst, std::size_t n)
{
    in.read(dst, static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(in.gcount()) == n;
}

bool get_u16(std::istream& in, std::uint16_t& v)
{
    unsigned char b[2];
    if (!get_bytes(in, reinterpret_cast<char*>(b), 2)) return false;
    v = static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    return true;
}

bool get_u32(std::istream& in, std::uint32_t& v)
{
    unsigned char b[4];
    if (!get_bytes(in, reinterpret_cast<char*>(b), 4)) return false;
    v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
        (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    return true;
}

CheckpointError truncated(const std::string& what)
{
    return CheckpointError(CheckpointError::Kind::truncated, "checkpoint truncated: " + what);
}

CheckpointError malformed(const std::string& what)
{
    return CheckpointError(CheckpointError::Kind::malformed, "malformed checkpoint: " + what);
}

}  // namespace

template <typename T>
Model<T> build(const ArchitectureConfig& config, std::uint64_t seed)
{
    validate(config);
    Model<T> model{config, Network<T>(Shape{config.doc_length, config.embed_dim})};
    if (config.variant == Variant::fluctuating) {
        build_fluctuating(model.network, config);
    } else {
        build_branches(model.network, config);
    }
    model.network.initialize(seed);
    return model;
}

template <typename T>
std::vector<LayerSummary> summary(const Model<T>& model)
{
    std::vector<LayerSummary> out;
    const auto& params = model.network.parameters();
    for (const auto& node : model.network.nodes()) {
        LayerSummary s{node.name, std::string(layer_kind(node.spec)), node.shape, 0};
        if (node.weight >= 0) s.parameters += params[node.weight].value.size();
        if (node.bias >= 0) s.parameters += params[node.bias].value.size();
        out.push_back(std::move(s));
    }
    return out;
}

std::string summary_text(const std::vector<LayerSummary>& layers)
{
    std::ostringstream os;
    std::size_t total = 0;
    for (const auto& l : layers) {
        os << l.name << '\t' << shape_string(l.shape) << '\t' << l.parameters << '\n';
        total += l.parameters;
    }
    os << "total\t-\t" << total << '\n';
    return os.str();
}

template <typename T>
void save(const Model<T>& model, std::ostream& out)
{
    out.write(kCheckpointMagic, 4);
    put_u32(out, kCheckpointVersion);
    const std::string config = nlohmann::json(model.config).dump();
    put_u32(out, static_cast<std::uint32_t>(config.size()));
    out.write(config.data(), static_cast<std::streamsize>(config.size()));
    for (const auto& p : model.network.parameters()) {
        put_u16(out, static_cast<std::uint16_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        const char rank = static_cast<char>(p.value.rank());
        out.write(&rank, 1);
        for (std::size_t d : p.value.shape) {
            put_u32(out, static_cast<std::uint32_t>(d));
        }
        for (T v : p.value.values) {
            put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        }
    }
    if (!out) {
        throw Error("failed to write checkpoint");
    }
}

Model<float> load_checkpoint(std::istream& in)
{
    char magic[4];
    if (!get_bytes(in, magic, 4)) {
        throw truncated("missing magic bytes");
    }
    if (!std::equal(magic, magic + 4, kCheckpointMagic)) {
        throw CheckpointError(CheckpointError::Kind::bad_magic, "not an NgramCNN checkpoint (bad magic bytes)");
    }
    std::uint32_t version = 0;
    if (!get_u32(in, version)) {
        throw truncated("missing format version");
    }
    if (version != kCheckpointVersion) {
        throw CheckpointError(CheckpointError::Kind::version_mismatch,
                              "unsupported checkpoint version " + std::to_string(version) + " (expected " +
                                  std::to_string(kCheckpointVersion) + ")");
    }
    std::uint32_t config_len = 0;
    if (!get_u32(in, config_len)) {
        throw truncated("missing config length");
    }
    std::string config_text(config_len, '\0');
    if (!get_bytes(in, config_text.data(), config_len)) {
        throw truncated("config JSON");
    }
    ArchitectureConfig config;
    try {
        config = nlohmann::json::parse(config_text).get<ArchitectureConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw malformed(std::string("config JSON: ") + e.what());
    } catch (const ArgumentError& e) {
        throw malformed(std::string("config JSON: ") + e.what());
    }
    Model<float> model = build<float>(config, 0);
    for (auto& p : model.network.parameters()) {
        std::uint16_t name_len = 0;
        if (!get_u16(in, name_len)) {
            throw truncated("parameter '" + p.name + "' is missing");
        }
        std::string name(name_len, '\0');
        if (!get_bytes(in, name.data(), name_len)) {
            throw truncated("name of parameter '" + p.name + "'");
        }
        if (name != p.name) {
            throw malformed("expected parameter '" + p.name + "', found '" + name + "'");
        }
        char rank = 0;
        if (!get_bytes(in, &rank, 1)) {
            throw truncated("header of parameter '" + p.name + "'");
        }
        Shape shape(static_cast<unsigned char>(rank));
        for (auto& d : shape) {
            std::uint32_t v = 0;
            if (!get_u32(in, v)) {
                throw truncated("header of parameter '" + p.name + "'");
            }
            d = v;
        }
        if (shape != p.value.shape) {
            throw malformed("parameter '" + p.name + "' has shape " + shape_string(shape) + ", expected " +
                            shape_string(p.value.shape));
        }
        for (auto& v : p.value.values) {
            std::uint32_t bits = 0;
            if (!get_u32(in, bits)) {
                throw truncated("values of parameter '" + p.name + "'");
            }
            v = std::bit_cast<float>(bits);
        }
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw malformed("trailing bytes after the last parameter");
    }
    return model;
}

void save_file(const Model<float>& model, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write checkpoint '" + path + "'");
    }
    save(model, out);
}

Model<float> load_checkpoint_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError("cannot open checkpoint '" + path + "'");
    }
    return load_checkpoint(in);
}

std::size_t suggest_pool_region(std::size_t n, std::size_t k_max, std::size_t depth)
{
    if (depth < 2 || depth % 2 != 0) {
        throw ArgumentError("depth L must be even and at least 2");
    }
    if (n <= k_max || k_max == 0) {
        throw ArgumentError("document length n must exceed the largest kernel");
    }
    auto final_length = [&](std::size_t region) -> std::size_t {
        std::size_t len = n;
        for (std::size_t s = 0; s < depth / 2; ++s) {
            if (len < k_max) {
                return 0;
            }
            len = pool_output_length(len - k_max + 1, region);
        }
        return len;
    };
    std::size_t best = 2;
    double best_distance = std::abs(static_cast<double>(final_length(2)) - 11.0);
    for (std::size_t region = 2; region <= std::max<std::size_t>(n, 2); ++region) {
        const std::size_t len = final_length(region);
        if (len >= 7 && len <= 15) {
            return region;
        }
        if (len == 0) {
            continue;
        }
        const double distance = std::abs(static_cast<double>(len) - 11.0);
        if (distance < best_distance) {
            best_distance = distance;
            best = region;
        }
    }
    return best;
}

template struct Model<float>;
template struct Model<double>;
template Model<float> build<float>(const ArchitectureConfig&, std::uint64_t);
template Model<double> build<double>(const ArchitectureConfig&, std::uint64_t);
template std::vector<LayerSummary> summary<float>(const Model<float>&);
template std::vector<LayerSummary> summary<double>(const Model<double>&);
template void save<float>(const Model<float>&, std::ostream&);
template void save<double>(const Model<double>&, std::ostream&);

}  // namespace ngcnn
