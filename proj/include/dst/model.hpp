#pragma once

#include "dst/data.hpp"
#include "dst/graph.hpp"
#include "dst/layers.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dst {

enum class Variant { V1, V2 };

[[nodiscard]] std::string variant_name(Variant v);
[[nodiscard]] Variant parse_variant(const std::string& name);

struct ModelConfig {
    Variant variant = Variant::V1;
    std::size_t stations = 0;
    std::size_t recent_len = 20;      // I
    std::size_t historical_len = 20;  // N_h
    std::size_t hidden = 64;
    std::size_t kernel = 5;
    std::size_t gru_layers = 1;
    /// Empty means the variant default: V1 {4H, 2H, 1}, V2 {H, H, 1}.
    std::vector<std::size_t> ffnn_layers;
    std::uint64_t seed = 1;

    [[nodiscard]] std::vector<std::size_t> resolved_ffnn() const;
    /// Throws ConfigError on non-positive sizes, even kernels or widths that do not chain.
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Series branches in the order the model consumes them: recent, historical, trend, residual.
inline constexpr std::array<const char*, 4> kBranchNames = {"o", "h", "t", "r"};

struct ModelParams {
    ModelConfig config;
    /// V1: one stack per branch (4). V2: a single stack after aggregation.
    std::vector<std::vector<layers::GruParams>> gru;
    layers::GatParams gat;
    std::array<layers::KgnnParams, 4> kgnn;
    layers::FfnnParams ffnn;
    ScalerParams scaler;

    /// Visits every trainable tensor in a fixed order with a stable dotted name.
    void visit(const layers::TensorVisitor& f);
    void visit(const layers::ConstTensorVisitor& f) const;
    [[nodiscard]] std::vector<Tensor*> tensors();
    [[nodiscard]] std::vector<std::string> tensor_names() const;
    [[nodiscard]] std::size_t parameter_count() const;
    [[nodiscard]] bool all_finite() const;
    void set_requires_grad(bool on);
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights with fan_in = rows, zero biases.
[[nodiscard]] ModelParams init_params(const ModelConfig& config);

/// Tape-bound model; built once per tape.
struct ModelVars {
    Variant variant = Variant::V1;
    std::size_t kernel = 5;
    std::vector<std::vector<layers::GruVars>> gru;
    layers::GatVars gat;
    std::array<layers::KgnnVars, 4> kgnn;
    layers::FfnnVars ffnn;
};

[[nodiscard]] ModelVars bind(ad::Tape& tape, ModelParams& params);

/**
 * Forward pass for B stacked samples: recent is (B*N_s) x I, historical
 * is (B*N_s) x N_h, rows grouped by sample. Returns a (B*N_s) x 1 column
 * of scaled predictions.
 */
[[nodiscard]] ad::Var forward(ad::Tape& tape, const ModelVars& vars, const Tensor& recent, const Tensor& historical,
                              const layers::EdgeIndex& edges);

/// Single-sample passes; the variant is taken from the function, the shapes from params.
[[nodiscard]] std::vector<double> forward_v1(const Tensor& recent, const Tensor& historical, const TransitGraph& graph,
                                             const ModelParams& params);
[[nodiscard]] std::vector<double> forward_v2(const Tensor& recent, const Tensor& historical, const TransitGraph& graph,
                                             const ModelParams& params);
/// Dispatches on params.config.variant.
[[nodiscard]] std::vector<double> predict(const Tensor& recent, const Tensor& historical, const TransitGraph& graph,
                                          const ModelParams& params);

/// Batched inference: returns B x N_s scaled predictions, evaluated in chunks.
[[nodiscard]] Tensor predict_batch(std::span<const Tensor> recent, std::span<const Tensor> historical,
                                   const TransitGraph& graph, const ModelParams& params, std::size_t chunk = 64);

/// Stacks equally shaped matrices vertically.
[[nodiscard]] Tensor stack_rows(std::span<const Tensor> parts);
[[nodiscard]] Tensor stack_rows(std::span<const Tensor* const> parts);

}  // namespace dst
