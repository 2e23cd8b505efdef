#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ngcnn/nn.hpp"

namespace ngcnn {

enum class Variant { basic, pyramid, fluctuating };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);

struct ArchitectureConfig {
    Variant variant = Variant::basic;
    std::size_t width = 3;        // W, parallel kernels k = 1..W
    std::size_t depth = 4;        // L, total conv + downsampling stacks
    std::size_t filters = 70;     // m
    std::size_t pool_region = 2;  // R
    std::size_t stride = 2;       // s, pyramid downsampling convolutions
    std::size_t doc_length = 30;  // n
    std::size_t embed_dim = 300;  // d
    std::size_t dense_units = 80;
    double dropout_rate = 0.35;
    double l2 = 0.1;
    Activation conv_activation = Activation::relu;
    OutputActivation output_activation = OutputActivation::sigmoid;

    friend bool operator==(const ArchitectureConfig&, const ArchitectureConfig&) = default;
};

void to_json(nlohmann::json& j, const ArchitectureConfig& c);
void from_json(const nlohmann::json& j, ArchitectureConfig& c);

// Throws ArgumentError for invalid scalar settings. Length underflow is
// reported by build() as ShapeError.
void validate(const ArchitectureConfig& config);

// Per-branch (basic, pyramid) or per-stack (fluctuating) sequence length
// after every conv/downsampling entry, computed from the closed-form shape
// rules without building a graph. Throws ShapeError on underflow.
std::vector<std::size_t> stack_lengths(const ArchitectureConfig& config, std::size_t kernel);

// Number of features entering the dropout/dense classifier.
std::size_t flattened_feature_count(const ArchitectureConfig& config);

template <typename T>
struct Model {
    ArchitectureConfig config;
    Network<T> network;

    // Probability in (0, 1); dropout is inactive.
    double predict(const Tensor<T>& doc) const;

    template <typename U>
    Model<U> converted() const
    {
        return Model<U>{config, Network<U>(network)};
    }
};

template <typename T>
Model<T> build(const ArchitectureConfig& config, std::uint64_t seed = 0);

struct LayerSummary {
    std::string name;
    std::string kind;
    Shape shape;
    std::size_t parameters = 0;
};

template <typename T>
std::vector<LayerSummary> summary(const Model<T>& model);

// One tab-separated "name<TAB>shape<TAB>params" line per layer followed by
// a "total" line.
std::string summary_text(const std::vector<LayerSummary>& layers);

// Checkpoint: "NGC1", u32 version, u32-prefixed JSON config, then for each
// parameter in graph order a u16-prefixed name, u8 rank, u32 dims and
// float32 values, all little-endian.
inline constexpr char kCheckpointMagic[4] = {'N', 'G', 'C', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void save(const Model<T>& model, std::ostream& out);
Model<float> load_checkpoint(std::istream& in);

void save_file(const Model<float>& model, const std::string& path);
Model<float> load_checkpoint_file(const std::string& path);

// Smallest R >= 2 whose final basic-branch length for kernel k_max lies in
// [7, 15]; otherwise the R with final length closest to 11 (ties to the
// smaller R).
std::size_t suggest_pool_region(std::size_t n, std::size_t k_max, std::size_t depth);

}  // namespace ngcnn
