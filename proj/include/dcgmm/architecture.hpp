#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dcgmm/layers.hpp"
#include "dcgmm/tensor.hpp"

namespace dcgmm {

struct GmmSpec {
    int64_t K = 0;
};

struct ClassifierSpec {
    int64_t M = 0;
};

using LayerSpec = std::variant<FoldingParams, PoolingParams, GmmSpec, ClassifierSpec>;

enum class LayerKind { folding, pooling, gmm, classifier };

LayerKind kind_of(const LayerSpec& spec);

// Ordered layer stack. Layers are indexed 1-based in messages and in the
// sampling cutoff convention; the raw input counts as "layer 0".
struct ArchitectureConfig {
    Shape4 input;  // n is ignored; h,w,c describe one sample
    std::vector<LayerSpec> layers;

    int64_t num_layers() const { return static_cast<int64_t>(layers.size()); }
};

// Output dims of every layer for a batch of `n` samples; index 0 holds the
// input dims, index l the output of layer l. Throws ConfigError naming the
// first offending layer when the geometry does not validate.
std::vector<Shape4> propagate_shapes(const ArchitectureConfig& arch, int64_t n = 1);

// Full validation: shape propagation plus structural rules (at most one
// classifier and only as the last layer).
void validate_architecture(const ArchitectureConfig& arch);

// Parses the slash-separated layer notation used throughout, e.g.
//   input 28 28 1 / F(20,20,8,8) / G(25) / F(2,2,1,1) / G(36)
// Terms: F(f_y,f_x,d_y,d_x), P(k,d) or P(k_y,k_x,d_y,d_x), G(K), C(M).
// The input clause is optional when fallback_input is provided.
ArchitectureConfig parse_architecture(const std::string& text,
                                      std::optional<Shape4> fallback_input = std::nullopt);

std::string format_architecture(const ArchitectureConfig& arch);

}  // namespace dcgmm
