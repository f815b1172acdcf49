#include "dst/tape.hpp"

#include "dst/error.hpp"

#include <cblas.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

namespace dst::ad {

namespace {

constexpr std::array<std::string_view, 18> kPrimitiveNames = {
    "leaf",    "constant",   "matmul",          "add",         "sub",        "mul",
    "sigmoid", "tanh",       "leaky_relu",      "concat_cols", "segment_softmax",
    "avg_pool1d", "slice_cols", "slice_rows",   "gather_rows", "segment_sum", "sum", "mean",
};

enum class Broadcast { Full, Row, Col, Scalar };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, std::string_view op) {
    const std::size_t ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
    if (ar == br && ac == bc) return Broadcast::Full;
    if (br == 1 && bc == 1) return Broadcast::Scalar;
    if (br == 1 && bc == ac) return Broadcast::Row;
    if (bc == 1 && br == ar) return Broadcast::Col;
    throw DimensionError(std::string(op) + ": cannot broadcast " + b.shape_string() + " onto " +
                         a.shape_string());
}

inline std::size_t bindex(Broadcast kind, std::size_t r, std::size_t c, std::size_t cols) {
    switch (kind) {
        case Broadcast::Full: return r * cols + c;
        case Broadcast::Row: return c;
        case Broadcast::Col: return r;
        case Broadcast::Scalar: return 0;
    }
    return 0;
}

inline double stable_sigmoid(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

blasint blas_int(std::size_t v) { return static_cast<blasint>(v); }

void check_segments(const IndexList& ids, std::size_t rows, std::size_t num_segments, std::string_view op) {
    if (!ids) throw ContractError(std::string(op) + ": missing segment ids");
    if (ids->size() != rows) {
        throw DimensionError(std::string(op) + ": " + std::to_string(ids->size()) + " segment ids for " +
                             std::to_string(rows) + " rows");
    }
    for (auto s : *ids) {
        if (s >= num_segments) throw DimensionError(std::string(op) + ": segment id out of range");
    }
}

}  // namespace

IndexList make_index(std::vector<std::size_t> indices) {
    return std::make_shared<const std::vector<std::size_t>>(std::move(indices));
}

std::string_view primitive_name(Primitive p) noexcept {
    return kPrimitiveNames[static_cast<std::size_t>(p)];
}

Primitive primitive_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kPrimitiveNames.size(); ++i) {
        if (kPrimitiveNames[i] == name) return static_cast<Primitive>(i);
    }
    throw UnsupportedOpError("unsupported primitive '" + std::string(name) + "'");
}

namespace kernels {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
    if (m == 0 || n == 0 || k == 0) return;
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, blas_int(m), blas_int(n), blas_int(k), 1.0, a,
                blas_int(k), b, blas_int(n), 1.0, c, blas_int(n));
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
    if (m == 0 || n == 0 || k == 0) return;
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, blas_int(m), blas_int(k), blas_int(n), 1.0, a,
                blas_int(n), b, blas_int(n), 1.0, c, blas_int(k));
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
    if (m == 0 || n == 0 || k == 0) return;
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, blas_int(k), blas_int(n), blas_int(m), 1.0, a,
                blas_int(k), b, blas_int(n), 1.0, c, blas_int(n));
}

}  // namespace kernels

const TapeNode& Tape::checked(Var v, std::string_view op) const {
    if (v.id >= nodes_.size()) {
        throw ContractError(std::string(op) + ": variable does not belong to this tape");
    }
    return nodes_[v.id];
}

const Tensor& Tape::value(Var v) const { return checked(v, "value").value; }

Var Tape::push(Primitive op, std::vector<std::size_t> inputs, Tensor value, OpAttributes attrs) {
    TapeNode node;
    node.op = op;
    node.needs_grad = std::any_of(inputs.begin(), inputs.end(),
                                  [this](std::size_t i) { return nodes_[i].needs_grad; });
    node.inputs = std::move(inputs);
    node.value = std::move(value);
    node.attrs = std::move(attrs);
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
}

Var Tape::leaf(Tensor& tensor) {
    TapeNode node;
    node.op = Primitive::Leaf;
    node.value = Tensor(tensor.shape(), std::vector<double>(tensor.values().begin(), tensor.values().end()));
    if (tensor.requires_grad()) {
        node.leaf = &tensor;
        node.needs_grad = true;
    }
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
    TapeNode node;
    node.op = Primitive::Constant;
    node.value = std::move(value);
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& x = checked(a, "matmul").value;
    const Tensor& y = checked(b, "matmul").value;
    const std::size_t m = x.rows(), k = x.cols(), n = y.cols();
    if (y.rows() != k) {
        throw DimensionError("matmul: " + x.shape_string() + " x " + y.shape_string());
    }
    Tensor out = Tensor::matrix(m, n);
    kernels::gemm_nn(m, n, k, x.values().data(), y.values().data(), out.values().data());
    return push(Primitive::MatMul, {a.id, b.id}, std::move(out));
}

Var Tape::binary(Primitive op, Var a, Var b) {
    const std::string_view name = primitive_name(op);
    const Tensor& x = checked(a, name).value;
    const Tensor& y = checked(b, name).value;
    const Broadcast kind = broadcast_kind(x, y, name);
    Tensor out = x;
    const std::size_t rows = x.rows(), cols = x.cols();
    double* ov = out.values().data();
    const double* yv = y.values().data();
    auto run = [&](auto f) {
        switch (kind) {
            case Broadcast::Full:
                for (std::size_t i = 0; i < rows * cols; ++i) f(ov[i], yv[i]);
                break;
            case Broadcast::Row:
                for (std::size_t r = 0; r < rows; ++r) {
                    double* orow = ov + r * cols;
                    for (std::size_t c = 0; c < cols; ++c) f(orow[c], yv[c]);
                }
                break;
            case Broadcast::Col:
                for (std::size_t r = 0; r < rows; ++r) {
                    double* orow = ov + r * cols;
                    const double rhs = yv[r];
                    for (std::size_t c = 0; c < cols; ++c) f(orow[c], rhs);
                }
                break;
            case Broadcast::Scalar: {
                const double rhs = yv[0];
                for (std::size_t i = 0; i < rows * cols; ++i) f(ov[i], rhs);
                break;
            }
        }
    };
    switch (op) {
        case Primitive::Add: run([](double& o, double v) { o += v; }); break;
        case Primitive::Sub: run([](double& o, double v) { o -= v; }); break;
        default: run([](double& o, double v) { o *= v; }); break;
    }
    return push(op, {a.id, b.id}, std::move(out));
}

Var Tape::add(Var a, Var b) { return binary(Primitive::Add, a, b); }
Var Tape::sub(Var a, Var b) { return binary(Primitive::Sub, a, b); }
Var Tape::mul(Var a, Var b) { return binary(Primitive::Mul, a, b); }

Var Tape::sigmoid(Var a) {
    Tensor out = checked(a, "sigmoid").value;
    for (double& v : out.values()) v = stable_sigmoid(v);
    return push(Primitive::Sigmoid, {a.id}, std::move(out));
}

Var Tape::tanh(Var a) {
    Tensor out = checked(a, "tanh").value;
    for (double& v : out.values()) v = std::tanh(v);
    return push(Primitive::Tanh, {a.id}, std::move(out));
}

Var Tape::leaky_relu(Var a, double alpha) {
    Tensor out = checked(a, "leaky_relu").value;
    for (double& v : out.values()) v = v > 0.0 ? v : alpha * v;
    OpAttributes attrs;
    attrs.alpha = alpha;
    return push(Primitive::LeakyRelu, {a.id}, std::move(out), attrs);
}

Var Tape::concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    const std::size_t rows = checked(parts[0], "concat_cols").value.rows();
    std::size_t total = 0;
    std::vector<std::size_t> ids;
    for (Var p : parts) {
        const Tensor& t = checked(p, "concat_cols").value;
        if (t.rows() != rows) {
            throw DimensionError("concat_cols: row mismatch " + t.shape_string());
        }
        total += t.cols();
        ids.push_back(p.id);
    }
    Tensor out = Tensor::matrix(rows, total);
    std::size_t offset = 0;
    for (Var p : parts) {
        const Tensor& t = nodes_[p.id].value;
        const std::size_t c = t.cols();
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(t.values().data() + r * c, c, out.values().data() + r * total + offset);
        }
        offset += c;
    }
    return push(Primitive::ConcatCols, std::move(ids), std::move(out));
}

Var Tape::segment_softmax(Var scores, IndexList segment_ids, std::size_t num_segments) {
    const Tensor& x = checked(scores, "segment_softmax").value;
    if (x.cols() != 1) throw DimensionError("segment_softmax: scores must be a column, got " + x.shape_string());
    check_segments(segment_ids, x.rows(), num_segments, "segment_softmax");
    const auto& seg = *segment_ids;
    std::vector<double> peak(num_segments, -std::numeric_limits<double>::infinity());
    for (std::size_t e = 0; e < seg.size(); ++e) peak[seg[e]] = std::max(peak[seg[e]], x[e]);
    Tensor out(x.shape());
    std::vector<double> denom(num_segments, 0.0);
    for (std::size_t e = 0; e < seg.size(); ++e) {
        out[e] = std::exp(x[e] - peak[seg[e]]);
        denom[seg[e]] += out[e];
    }
    for (std::size_t e = 0; e < seg.size(); ++e) out[e] /= denom[seg[e]];
    OpAttributes attrs;
    attrs.index = std::move(segment_ids);
    attrs.segments = num_segments;
    return push(Primitive::SegmentSoftmax, {scores.id}, std::move(out), std::move(attrs));
}

Var Tape::avg_pool1d(Var a, std::size_t kernel) {
    const Tensor& x = checked(a, "avg_pool1d").value;
    if (kernel == 0 || kernel % 2 == 0) {
        throw DimensionError("avg_pool1d: kernel must be odd and positive, got " + std::to_string(kernel));
    }
    const std::size_t rows = x.rows(), len = x.cols();
    if (len == 0) throw DimensionError("avg_pool1d: empty sequence");
    const auto half = static_cast<std::ptrdiff_t>(kernel / 2);
    const auto last = static_cast<std::ptrdiff_t>(len) - 1;
    Tensor out(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::ptrdiff_t t = 0; t <= last; ++t) {
            double acc = 0.0;
            for (std::ptrdiff_t d = -half; d <= half; ++d) {
                acc += x(r, static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(t + d, 0, last)));
            }
            out(r, static_cast<std::size_t>(t)) = acc / static_cast<double>(kernel);
        }
    }
    OpAttributes attrs;
    attrs.kernel = kernel;
    return push(Primitive::AvgPool1d, {a.id}, std::move(out), attrs);
}

Var Tape::slice_cols(Var a, std::size_t begin, std::size_t end) {
    const Tensor& x = checked(a, "slice_cols").value;
    if (begin >= end || end > x.cols()) {
        throw DimensionError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                             ") outside " + x.shape_string());
    }
    const std::size_t rows = x.rows(), w = end - begin;
    Tensor out = Tensor::matrix(rows, w);
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(x.values().data() + r * x.cols() + begin, w, out.values().data() + r * w);
    }
    OpAttributes attrs;
    attrs.begin = begin;
    attrs.end = end;
    return push(Primitive::SliceCols, {a.id}, std::move(out), attrs);
}

Var Tape::slice_rows(Var a, std::size_t begin, std::size_t end) {
    const Tensor& x = checked(a, "slice_rows").value;
    if (begin >= end || end > x.rows()) {
        throw DimensionError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                             ") outside " + x.shape_string());
    }
    const std::size_t c = x.cols();
    Tensor out = Tensor::matrix(end - begin, c);
    std::copy(x.values().begin() + static_cast<std::ptrdiff_t>(begin * c),
              x.values().begin() + static_cast<std::ptrdiff_t>(end * c), out.values().begin());
    OpAttributes attrs;
    attrs.begin = begin;
    attrs.end = end;
    return push(Primitive::SliceRows, {a.id}, std::move(out), attrs);
}

Var Tape::gather_rows(Var a, IndexList rows) {
    const Tensor& x = checked(a, "gather_rows").value;
    if (!rows) throw ContractError("gather_rows: missing index");
    const std::size_t c = x.cols();
    Tensor out = Tensor::matrix(rows->size(), c);
    for (std::size_t i = 0; i < rows->size(); ++i) {
        const std::size_t src = (*rows)[i];
        if (src >= x.rows()) throw DimensionError("gather_rows: row " + std::to_string(src) + " out of range");
        std::copy_n(x.values().data() + src * c, c, out.values().data() + i * c);
    }
    OpAttributes attrs;
    attrs.index = std::move(rows);
    return push(Primitive::GatherRows, {a.id}, std::move(out), std::move(attrs));
}

Var Tape::segment_sum(Var a, IndexList segment_ids, std::size_t num_segments) {
    const Tensor& x = checked(a, "segment_sum").value;
    check_segments(segment_ids, x.rows(), num_segments, "segment_sum");
    const std::size_t c = x.cols();
    Tensor out = Tensor::matrix(num_segments, c);
    const auto& seg = *segment_ids;
    for (std::size_t i = 0; i < seg.size(); ++i) {
        const double* src = x.values().data() + i * c;
        double* dst = out.values().data() + seg[i] * c;
        for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
    }
    OpAttributes attrs;
    attrs.index = std::move(segment_ids);
    attrs.segments = num_segments;
    return push(Primitive::SegmentSum, {a.id}, std::move(out), std::move(attrs));
}

Var Tape::sum(Var a) {
    const Tensor& x = checked(a, "sum").value;
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    return push(Primitive::Sum, {a.id}, Tensor::matrix(1, 1, acc));
}

Var Tape::mean(Var a) {
    const Tensor& x = checked(a, "mean").value;
    if (x.empty()) throw DimensionError("mean: empty tensor");
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    return push(Primitive::Mean, {a.id}, Tensor::matrix(1, 1, acc / static_cast<double>(x.size())));
}

Var Tape::apply(Primitive op, std::span<const Var> in, const OpAttributes& attrs) {
    auto need = [&](std::size_t n) {
        if (in.size() != n) {
            throw DimensionError(std::string(primitive_name(op)) + ": expected " + std::to_string(n) +
                                 " inputs, got " + std::to_string(in.size()));
        }
    };
    switch (op) {
        case Primitive::MatMul: need(2); return matmul(in[0], in[1]);
        case Primitive::Add: need(2); return add(in[0], in[1]);
        case Primitive::Sub: need(2); return sub(in[0], in[1]);
        case Primitive::Mul: need(2); return mul(in[0], in[1]);
        case Primitive::Sigmoid: need(1); return sigmoid(in[0]);
        case Primitive::Tanh: need(1); return tanh(in[0]);
        case Primitive::LeakyRelu: need(1); return leaky_relu(in[0], attrs.alpha);
        case Primitive::ConcatCols: return concat_cols(in);
        case Primitive::SegmentSoftmax: need(1); return segment_softmax(in[0], attrs.index, attrs.segments);
        case Primitive::AvgPool1d: need(1); return avg_pool1d(in[0], attrs.kernel);
        case Primitive::SliceCols: need(1); return slice_cols(in[0], attrs.begin, attrs.end);
        case Primitive::SliceRows: need(1); return slice_rows(in[0], attrs.begin, attrs.end);
        case Primitive::GatherRows: need(1); return gather_rows(in[0], attrs.index);
        case Primitive::SegmentSum: need(1); return segment_sum(in[0], attrs.index, attrs.segments);
        case Primitive::Sum: need(1); return sum(in[0]);
        case Primitive::Mean: need(1); return mean(in[0]);
        case Primitive::Leaf:
        case Primitive::Constant:
            break;
    }
    throw UnsupportedOpError("apply: '" + std::string(primitive_name(op)) + "' is not an operation");
}

void Tape::backward(Var loss) {
    if (nodes_.empty()) throw EmptyTapeError("backward: tape is empty, run a forward pass first");
    const TapeNode& root = checked(loss, "backward");
    if (root.value.size() != 1) {
        throw ContractError("backward: loss must be scalar, got " + root.value.shape_string());
    }

    for (auto& n : nodes_) {
        if (n.leaf) n.leaf->zero_grad();
    }
    if (!root.needs_grad) return;

    std::vector<std::vector<double>> grads(loss.id + 1);
    auto grad_of = [&](std::size_t id) -> std::vector<double>& {
        auto& g = grads[id];
        if (g.empty()) g.assign(nodes_[id].value.size(), 0.0);
        return g;
    };
    grad_of(loss.id)[0] = 1.0;

    for (std::size_t id = loss.id + 1; id-- > 0;) {
        TapeNode& node = nodes_[id];
        if (!node.needs_grad || grads[id].empty()) continue;
        const std::vector<double>& g = grads[id];
        const Tensor& out = node.value;

        switch (node.op) {
            case Primitive::Leaf: {
                auto& dst = node.leaf->grad();
                for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
                break;
            }
            case Primitive::Constant:
                break;
            case Primitive::MatMul: {
                const TapeNode& an = nodes_[node.inputs[0]];
                const TapeNode& bn = nodes_[node.inputs[1]];
                const std::size_t m = an.value.rows(), k = an.value.cols(), n = bn.value.cols();
                if (an.needs_grad) {
                    kernels::gemm_nt(m, n, k, g.data(), bn.value.values().data(), grad_of(node.inputs[0]).data());
                }
                if (bn.needs_grad) {
                    kernels::gemm_tn(m, n, k, an.value.values().data(), g.data(), grad_of(node.inputs[1]).data());
                }
                break;
            }
            case Primitive::Add:
            case Primitive::Sub:
            case Primitive::Mul: {
                const TapeNode& an = nodes_[node.inputs[0]];
                const TapeNode& bn = nodes_[node.inputs[1]];
                const Broadcast kind = broadcast_kind(an.value, bn.value, primitive_name(node.op));
                const std::size_t rows = an.value.rows(), cols = an.value.cols();
                const double* av = an.value.values().data();
                const double* bv = bn.value.values().data();
                const bool mul = node.op == Primitive::Mul;
                if (an.needs_grad) {
                    double* ga = grad_of(node.inputs[0]).data();
                    if (!mul) {
                        for (std::size_t i = 0; i < rows * cols; ++i) ga[i] += g[i];
                    } else if (kind == Broadcast::Full) {
                        for (std::size_t i = 0; i < rows * cols; ++i) ga[i] += g[i] * bv[i];
                    } else {
                        for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t c = 0; c < cols; ++c) {
                                ga[r * cols + c] += g[r * cols + c] * bv[bindex(kind, r, c, cols)];
                            }
                        }
                    }
                }
                if (bn.needs_grad) {
                    double* gb = grad_of(node.inputs[1]).data();
                    const double sign = node.op == Primitive::Sub ? -1.0 : 1.0;
                    if (kind == Broadcast::Full) {
                        if (mul) {
                            for (std::size_t i = 0; i < rows * cols; ++i) gb[i] += g[i] * av[i];
                        } else {
                            for (std::size_t i = 0; i < rows * cols; ++i) gb[i] += sign * g[i];
                        }
                    } else {
                        for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t c = 0; c < cols; ++c) {
                                const std::size_t i = r * cols + c;
                                gb[bindex(kind, r, c, cols)] += mul ? g[i] * av[i] : sign * g[i];
                            }
                        }
                    }
                }
                break;
            }
            case Primitive::Sigmoid: {
                auto& gx = grad_of(node.inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * out[i] * (1.0 - out[i]);
                break;
            }
            case Primitive::Tanh: {
                auto& gx = grad_of(node.inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - out[i] * out[i]);
                break;
            }
            case Primitive::LeakyRelu: {
                const Tensor& x = nodes_[node.inputs[0]].value;
                auto& gx = grad_of(node.inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += x[i] > 0.0 ? g[i] : node.attrs.alpha * g[i];
                break;
            }
            case Primitive::ConcatCols: {
                const std::size_t rows = out.rows(), total = out.cols();
                std::size_t offset = 0;
                for (std::size_t input : node.inputs) {
                    const TapeNode& in = nodes_[input];
                    const std::size_t c = in.value.cols();
                    if (in.needs_grad) {
                        auto& gx = grad_of(input);
                        for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += g[r * total + offset + j];
                        }
                    }
                    offset += c;
                }
                break;
            }
            case Primitive::SegmentSoftmax: {
                const auto& seg = *node.attrs.index;
                std::vector<double> dot(node.attrs.segments, 0.0);
                for (std::size_t e = 0; e < seg.size(); ++e) dot[seg[e]] += g[e] * out[e];
                auto& gx = grad_of(node.inputs[0]);
                for (std::size_t e = 0; e < seg.size(); ++e) gx[e] += out[e] * (g[e] - dot[seg[e]]);
                break;
            }
            case Primitive::AvgPool1d: {
                auto& gx = grad_of(node.inputs[0]);
                const std::size_t rows = out.rows(), len = out.cols();
                const auto half = static_cast<std::ptrdiff_t>(node.attrs.kernel / 2);
                const auto last = static_cast<std::ptrdiff_t>(len) - 1;
                const double w = 1.0 / static_cast<double>(node.attrs.kernel);
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::ptrdiff_t t = 0; t <= last; ++t) {
                        const double share = g[r * len + static_cast<std::size_t>(t)] * w;
                        for (std::ptrdiff_t d = -half; d <= half; ++d) {
                            gx[r * len + static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(t + d, 0, last))] += share;
                        }
                    }
                }
                break;
            }
            case Primitive::SliceCols: {
                auto& gx = grad_of(node.inputs[0]);
                const std::size_t in_cols = nodes_[node.inputs[0]].value.cols();
                const std::size_t w = node.attrs.end - node.attrs.begin;
                for (std::size_t r = 0; r < out.rows(); ++r) {
                    for (std::size_t j = 0; j < w; ++j) gx[r * in_cols + node.attrs.begin + j] += g[r * w + j];
                }
                break;
            }
            case Primitive::SliceRows: {
                auto& gx = grad_of(node.inputs[0]);
                const std::size_t offset = node.attrs.begin * out.cols();
                for (std::size_t i = 0; i < g.size(); ++i) gx[offset + i] += g[i];
                break;
            }
            case Primitive::GatherRows: {
                auto& gx = grad_of(node.inputs[0]);
                const auto& rows = *node.attrs.index;
                const std::size_t c = out.cols();
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    for (std::size_t j = 0; j < c; ++j) gx[rows[i] * c + j] += g[i * c + j];
                }
                break;
            }
            case Primitive::SegmentSum: {
                auto& gx = grad_of(node.inputs[0]);
                const auto& seg = *node.attrs.index;
                const std::size_t c = out.cols();
                for (std::size_t i = 0; i < seg.size(); ++i) {
                    for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[seg[i] * c + j];
                }
                break;
            }
            case Primitive::Sum: {
                auto& gx = grad_of(node.inputs[0]);
                for (double& v : gx) v += g[0];
                break;
            }
            case Primitive::Mean: {
                auto& gx = grad_of(node.inputs[0]);
                const double share = g[0] / static_cast<double>(gx.size());
                for (double& v : gx) v += share;
                break;
            }
        }
        if (node.op != Primitive::Leaf) std::vector<double>().swap(grads[id]);
    }
}

}  // namespace dst::ad
