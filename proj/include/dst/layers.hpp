#pragma once

#include "dst/graph.hpp"
#include "dst/tape.hpp"
#include "dst/tensor.hpp"

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace dst::layers {

using ad::Tape;
using ad::Var;

inline constexpr double kLeakySlope = 0.01;

// ---------------------------------------------------------------------------
// Temporal decomposition
// ---------------------------------------------------------------------------

struct DecompositionConfig {
    std::size_t kernel = 5;
    void validate() const;  // ConfigError unless kernel is odd and >= 1
};

struct Decomposition {
    Tensor trend;
    Tensor residual;
};

/**
 * Splits each row of a stations x time window into a moving-average trend
 * (replicate padding, output length unchanged) and the residual
 * window - trend. Each trend value is rounded onto the binary grid of the
 * matching input value (never coarser than 2^-32) so that the subtraction
 * is exact and trend + residual == window bit for bit. Integer windows
 * always reconstruct exactly; for arbitrary doubles this fails only where
 * the trend exceeds roughly twice the value, where no pair of doubles can
 * represent the split exactly.
 */
[[nodiscard]] Decomposition decompose(const Tensor& window, const DecompositionConfig& config);

// ---------------------------------------------------------------------------
// Parameter bundles. Weights are stored input-major (x * W), so a map from
// n inputs to m outputs is an n x m tensor and biases are 1 x m rows.
// ---------------------------------------------------------------------------

using TensorVisitor = std::function<void(const std::string& name, Tensor& tensor)>;
using ConstTensorVisitor = std::function<void(const std::string& name, const Tensor& tensor)>;

struct GruParams {
    Tensor W_z, U_z, b_z;
    Tensor W_r, U_r, b_r;
    Tensor W_h, U_h, b_h;

    static GruParams zeros(std::size_t input, std::size_t hidden);
    [[nodiscard]] std::size_t input_size() const noexcept { return W_z.rows(); }
    [[nodiscard]] std::size_t hidden_size() const noexcept { return U_z.rows(); }
    void validate() const;
    void visit(const std::string& prefix, const TensorVisitor& f);
    void visit(const std::string& prefix, const ConstTensorVisitor& f) const;
};

struct GatParams {
    Tensor w;  // N_h x d
    Tensor a;  // 2d x 1: receiver half first, sender half second
    double alpha = kLeakySlope;

    static GatParams zeros(std::size_t input, std::size_t out);
    void validate() const;
    void visit(const std::string& prefix, const TensorVisitor& f);
    void visit(const std::string& prefix, const ConstTensorVisitor& f) const;
};

enum class Activation { Identity, Tanh };

struct KgnnParams {
    Tensor W1;  // self transform, d x d
    Tensor W2;  // neighbour transform, d x d
    Activation activation = Activation::Identity;

    static KgnnParams zeros(std::size_t dim, Activation act = Activation::Identity);
    void validate() const;
    void visit(const std::string& prefix, const TensorVisitor& f);
    void visit(const std::string& prefix, const ConstTensorVisitor& f) const;
};

struct FfnnParams {
    std::vector<Tensor> weights;  // widths[k] x widths[k+1]
    std::vector<Tensor> biases;   // 1 x widths[k+1]
    double alpha = kLeakySlope;

    /// widths includes the input width: {in, h1, ..., out}.
    static FfnnParams zeros(const std::vector<std::size_t>& widths);
    [[nodiscard]] std::vector<std::size_t> widths() const;
    void validate() const;
    void visit(const std::string& prefix, const TensorVisitor& f);
    void visit(const std::string& prefix, const ConstTensorVisitor& f) const;
};

// Tape-bound views of the bundles.

struct GruVars {
    Var W_z, U_z, b_z, W_r, U_r, b_r, W_h, U_h, b_h;
};
struct GatVars {
    Var w, a_receiver, a_sender;
    double alpha = kLeakySlope;
};
struct KgnnVars {
    Var W1, W2;
    Activation activation = Activation::Identity;
};
struct FfnnVars {
    std::vector<Var> weights, biases;
    double alpha = kLeakySlope;
};

[[nodiscard]] GruVars bind(Tape& tape, GruParams& p);
[[nodiscard]] GatVars bind(Tape& tape, GatParams& p);
[[nodiscard]] KgnnVars bind(Tape& tape, KgnnParams& p);
[[nodiscard]] FfnnVars bind(Tape& tape, FfnnParams& p);

// ---------------------------------------------------------------------------
// Graph layout for batched forward passes: B copies of the station graph
// stacked block-diagonally, one edge per (receiver i, sender j in N(i)).
// ---------------------------------------------------------------------------

struct EdgeIndex {
    ad::IndexList receivers;
    ad::IndexList senders;
    std::size_t num_nodes = 0;        // B * N_s
    std::size_t nodes_per_graph = 0;  // N_s
    [[nodiscard]] std::size_t num_edges() const noexcept { return receivers ? receivers->size() : 0; }
};

/// Throws DegenerateNeighborhoodError if some station has an empty neighbourhood.
[[nodiscard]] EdgeIndex make_edge_index(const TransitGraph& graph, std::size_t batch = 1);

// ---------------------------------------------------------------------------
// Layers on the tape. Node features are rows.
// ---------------------------------------------------------------------------

/// One GRU update for every row: x is R x in, h_prev is R x hidden.
[[nodiscard]] Var gru_step(Tape& tape, Var x, Var h_prev, const GruVars& p);

/// Runs stacked GRU layers over a sequence of R x in_t step inputs from a zero state;
/// returns the top layer's final hidden state (R x hidden).
[[nodiscard]] Var gru_sequence(Tape& tape, std::span<const Var> steps, std::span<const GruVars> layers);

/// Treats each column of an R x L matrix as one scalar time step.
[[nodiscard]] Var gru_sequence(Tape& tape, Var series, std::span<const GruVars> layers);

/// Attention weight per edge (E x 1), softmax-normalised over each receiver's neighbourhood.
[[nodiscard]] Var gat_edge_weights(Tape& tape, Var historical, const EdgeIndex& edges, const GatVars& p);

/// H'[i] = act(H[i] W1 + (sum_j W_E[j,i] H[j]) W2) with one weight per edge.
[[nodiscard]] Var kgnn_aggregate(Tape& tape, Var features, const EdgeIndex& edges, Var edge_weights,
                                 const KgnnVars& p);

/// Affine layers with LeakyReLU between them; the last layer is affine only.
[[nodiscard]] Var ffnn_forward(Tape& tape, Var x, const FfnnVars& p);

// ---------------------------------------------------------------------------
// Value-level conveniences (single graph, no gradients).
// ---------------------------------------------------------------------------

/// Attention weights keyed by (receiver i, sender j).
using EdgeWeights = std::map<std::pair<std::size_t, std::size_t>, double>;

[[nodiscard]] std::vector<double> gru_step(std::span<const double> x, std::span<const double> h_prev,
                                           const GruParams& p);
/// series is N_s x L; returns N_s x hidden.
[[nodiscard]] Tensor gru_sequence(const Tensor& series, std::span<const GruParams> layers);
[[nodiscard]] EdgeWeights gat_edge_weights(const Tensor& historical, const TransitGraph& graph, const GatParams& p);
/// Throws ContractError if a neighbourhood pair has no weight.
[[nodiscard]] Tensor kgnn_aggregate(const Tensor& features, const TransitGraph& graph, const EdgeWeights& weights,
                                    const KgnnParams& p);
[[nodiscard]] std::vector<double> ffnn_forward(std::span<const double> x, const FfnnParams& p);

}  // namespace dst::layers
