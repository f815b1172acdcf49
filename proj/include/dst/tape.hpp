#pragma once

#include "dst/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

namespace dst::ad {

/// Shared, immutable index list (row gathers, segment ids).
using IndexList = std::shared_ptr<const std::vector<std::size_t>>;

[[nodiscard]] IndexList make_index(std::vector<std::size_t> indices);

enum class Primitive : std::uint8_t {
    Leaf,
    Constant,
    MatMul,
    Add,
    Sub,
    Mul,
    Sigmoid,
    Tanh,
    LeakyRelu,
    ConcatCols,
    SegmentSoftmax,
    AvgPool1d,
    SliceCols,
    SliceRows,
    GatherRows,
    SegmentSum,
    Sum,
    Mean,
};

[[nodiscard]] std::string_view primitive_name(Primitive p) noexcept;
/// Throws UnsupportedOpError for names outside the primitive set.
[[nodiscard]] Primitive primitive_from_name(std::string_view name);

/// Handle to a value recorded on a Tape.
struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
};

/// Non-tensor arguments of a primitive.
struct OpAttributes {
    double alpha = 0.01;         // LeakyRelu slope
    std::size_t begin = 0;       // Slice*
    std::size_t end = 0;         // Slice*
    std::size_t kernel = 1;      // AvgPool1d
    std::size_t segments = 0;    // SegmentSoftmax, SegmentSum: number of segments
    IndexList index;             // GatherRows: row ids; Segment*: segment id per row
};

struct TapeNode {
    Primitive op = Primitive::Constant;
    std::vector<std::size_t> inputs;
    Tensor value;
    OpAttributes attrs;
    Tensor* leaf = nullptr;  // set for leaves that accumulate a gradient
    bool needs_grad = false;
};

/**
 * Define-by-run reverse-mode tape.
 *
 * Every primitive appends one node whose inputs are earlier nodes, so the
 * node order is a topological order. Elementwise Add/Sub/Mul broadcast
 * the right operand when it is a 1 x C row, an R x 1 column or a 1 x 1
 * scalar. A tape belongs to one thread.
 */
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    /// Registers an external tensor. If it requires grad, backward() writes into its grad buffer.
    Var leaf(Tensor& tensor);
    Var constant(Tensor value);

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var sigmoid(Var a);
    Var tanh(Var a);
    Var leaky_relu(Var a, double alpha = 0.01);
    Var concat_cols(std::span<const Var> parts);
    /// Softmax of an E x 1 column within groups of rows sharing a segment id.
    Var segment_softmax(Var scores, IndexList segment_ids, std::size_t num_segments);
    /// Moving average along each row, width `kernel` (odd), replicate padding.
    Var avg_pool1d(Var a, std::size_t kernel);
    Var slice_cols(Var a, std::size_t begin, std::size_t end);
    Var slice_rows(Var a, std::size_t begin, std::size_t end);
    Var gather_rows(Var a, IndexList rows);
    /// Sums rows of `a` into `num_segments` output rows by segment id.
    Var segment_sum(Var a, IndexList segment_ids, std::size_t num_segments);
    Var sum(Var a);
    Var mean(Var a);

    /// Generic entry point used by name-driven callers.
    Var apply(Primitive op, std::span<const Var> inputs, const OpAttributes& attrs = {});

    [[nodiscard]] const Tensor& value(Var v) const;
    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
    [[nodiscard]] bool empty() const noexcept { return nodes_.empty(); }
    [[nodiscard]] const TapeNode& node(std::size_t id) const { return nodes_.at(id); }

    /**
     * Reverse sweep from a scalar loss. All leaves registered with
     * requires_grad get their grad buffer overwritten, zero when they did
     * not take part in the loss.
     */
    void backward(Var loss);

    void clear() noexcept { nodes_.clear(); }

private:
    const TapeNode& checked(Var v, std::string_view op) const;
    Var push(Primitive op, std::vector<std::size_t> inputs, Tensor value, OpAttributes attrs = {});
    Var binary(Primitive op, Var a, Var b);

    std::vector<TapeNode> nodes_;
};

namespace kernels {
// C (m x n) += A (m x k) * B (k x n)
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
// C (m x k) += A (m x n) * B^T, B is (k x n)
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
// C (k x n) += A^T * B, A is (m x k), B is (m x n)
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
}  // namespace kernels

}  // namespace dst::ad
