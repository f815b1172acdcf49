#include "dst/layers.hpp"

#include "dst/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dst::layers {

namespace {

void require_shape(const Tensor& t, std::size_t rows, std::size_t cols, const std::string& what) {
    if (t.rows() != rows || t.cols() != cols) {
        throw DimensionError(what + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) + ", got " +
                             t.shape_string());
    }
}

// Finest power of two that both divides x and is no coarser than 2^-32.
double snap_quantum(double x) {
    constexpr int kCoarsest = -32;
    if (x == 0.0 || !std::isfinite(x)) return std::ldexp(1.0, kCoarsest);
    const int lsb = std::max(std::ilogb(x) - 52, -1074);
    return std::ldexp(1.0, std::min(lsb, kCoarsest));
}

Var bound(Tape& tape, Tensor& t) { return tape.leaf(t); }

}  // namespace

void DecompositionConfig::validate() const {
    if (kernel == 0 || kernel % 2 == 0) {
        throw ConfigError("decomposition kernel must be odd and positive, got " + std::to_string(kernel));
    }
}

Decomposition decompose(const Tensor& window, const DecompositionConfig& config) {
    config.validate();
    if (window.empty()) throw DimensionError("decompose: empty window");
    const std::size_t rows = window.rows(), len = window.cols();
    const auto half = static_cast<std::ptrdiff_t>(config.kernel / 2);
    Decomposition out{Tensor::matrix(rows, len), Tensor::matrix(rows, len)};
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t t = 0; t < len; ++t) {
            long double acc = 0.0L;
            for (std::ptrdiff_t k = -half; k <= half; ++k) {
                const auto idx = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(t) + k, 0,
                                                            static_cast<std::ptrdiff_t>(len) - 1);
                acc += window(r, static_cast<std::size_t>(idx));
            }
            const double x = window(r, t);
            const auto mean = static_cast<double>(acc / static_cast<long double>(config.kernel));
            const double q = snap_quantum(x);
            const double trend = std::nearbyint(mean / q) * q;
            out.trend(r, t) = trend;
            out.residual(r, t) = x - trend;
        }
    }
    return out;
}

// --- parameter bundles -------------------------------------------------------

GruParams GruParams::zeros(std::size_t input, std::size_t hidden) {
    GruParams p;
    for (Tensor* w : {&p.W_z, &p.W_r, &p.W_h}) *w = Tensor::matrix(input, hidden);
    for (Tensor* u : {&p.U_z, &p.U_r, &p.U_h}) *u = Tensor::matrix(hidden, hidden);
    for (Tensor* b : {&p.b_z, &p.b_r, &p.b_h}) *b = Tensor::matrix(1, hidden);
    return p;
}

void GruParams::validate() const {
    const std::size_t in = W_z.rows(), h = U_z.rows();
    if (in == 0 || h == 0) throw DimensionError("gru: empty parameters");
    for (const Tensor* w : {&W_z, &W_r, &W_h}) require_shape(*w, in, h, "gru input weights");
    for (const Tensor* u : {&U_z, &U_r, &U_h}) require_shape(*u, h, h, "gru recurrent weights");
    for (const Tensor* b : {&b_z, &b_r, &b_h}) require_shape(*b, 1, h, "gru bias");
}

void GruParams::visit(const std::string& prefix, const TensorVisitor& f) {
    f(prefix + "W_z", W_z); f(prefix + "U_z", U_z); f(prefix + "b_z", b_z);
    f(prefix + "W_r", W_r); f(prefix + "U_r", U_r); f(prefix + "b_r", b_r);
    f(prefix + "W_h", W_h); f(prefix + "U_h", U_h); f(prefix + "b_h", b_h);
}

void GruParams::visit(const std::string& prefix, const ConstTensorVisitor& f) const {
    const_cast<GruParams*>(this)->visit(prefix, [&](const std::string& n, Tensor& t) { f(n, t); });
}

GatParams GatParams::zeros(std::size_t input, std::size_t out) {
    GatParams p;
    p.w = Tensor::matrix(input, out);
    p.a = Tensor::matrix(2 * out, 1);
    return p;
}

void GatParams::validate() const {
    if (w.empty()) throw DimensionError("gat: empty projection");
    require_shape(a, 2 * w.cols(), 1, "gat attention vector");
}

void GatParams::visit(const std::string& prefix, const TensorVisitor& f) {
    f(prefix + "w", w);
    f(prefix + "a", a);
}

void GatParams::visit(const std::string& prefix, const ConstTensorVisitor& f) const {
    f(prefix + "w", w);
    f(prefix + "a", a);
}

KgnnParams KgnnParams::zeros(std::size_t dim, Activation act) {
    return {Tensor::matrix(dim, dim), Tensor::matrix(dim, dim), act};
}

void KgnnParams::validate() const {
    if (W1.empty()) throw DimensionError("kgnn: empty parameters");
    require_shape(W1, W1.rows(), W1.rows(), "kgnn W1");
    require_shape(W2, W1.rows(), W1.rows(), "kgnn W2");
}

void KgnnParams::visit(const std::string& prefix, const TensorVisitor& f) {
    f(prefix + "W1", W1);
    f(prefix + "W2", W2);
}

void KgnnParams::visit(const std::string& prefix, const ConstTensorVisitor& f) const {
    f(prefix + "W1", W1);
    f(prefix + "W2", W2);
}

FfnnParams FfnnParams::zeros(const std::vector<std::size_t>& widths) {
    if (widths.size() < 2) throw ConfigError("ffnn needs at least an input and an output width");
    FfnnParams p;
    for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
        if (widths[k] == 0 || widths[k + 1] == 0) throw ConfigError("ffnn widths must be positive");
        p.weights.push_back(Tensor::matrix(widths[k], widths[k + 1]));
        p.biases.push_back(Tensor::matrix(1, widths[k + 1]));
    }
    return p;
}

std::vector<std::size_t> FfnnParams::widths() const {
    std::vector<std::size_t> w;
    if (weights.empty()) return w;
    w.push_back(weights.front().rows());
    for (const auto& m : weights) w.push_back(m.cols());
    return w;
}

void FfnnParams::validate() const {
    if (weights.empty() || weights.size() != biases.size()) throw DimensionError("ffnn: weights and biases differ");
    for (std::size_t k = 0; k < weights.size(); ++k) {
        if (k > 0 && weights[k].rows() != weights[k - 1].cols()) {
            throw DimensionError("ffnn: layer " + std::to_string(k) + " does not chain");
        }
        require_shape(biases[k], 1, weights[k].cols(), "ffnn bias");
    }
}

void FfnnParams::visit(const std::string& prefix, const TensorVisitor& f) {
    for (std::size_t k = 0; k < weights.size(); ++k) {
        f(prefix + "W" + std::to_string(k), weights[k]);
        f(prefix + "b" + std::to_string(k), biases[k]);
    }
}

void FfnnParams::visit(const std::string& prefix, const ConstTensorVisitor& f) const {
    for (std::size_t k = 0; k < weights.size(); ++k) {
        f(prefix + "W" + std::to_string(k), weights[k]);
        f(prefix + "b" + std::to_string(k), biases[k]);
    }
}

GruVars bind(Tape& tape, GruParams& p) {
    p.validate();
    return {bound(tape, p.W_z), bound(tape, p.U_z), bound(tape, p.b_z), bound(tape, p.W_r), bound(tape, p.U_r),
            bound(tape, p.b_r), bound(tape, p.W_h), bound(tape, p.U_h), bound(tape, p.b_h)};
}

GatVars bind(Tape& tape, GatParams& p) {
    p.validate();
    const std::size_t d = p.w.cols();
    const Var a = tape.leaf(p.a);
    return {tape.leaf(p.w), tape.slice_rows(a, 0, d), tape.slice_rows(a, d, 2 * d), p.alpha};
}

KgnnVars bind(Tape& tape, KgnnParams& p) {
    p.validate();
    return {tape.leaf(p.W1), tape.leaf(p.W2), p.activation};
}

FfnnVars bind(Tape& tape, FfnnParams& p) {
    p.validate();
    FfnnVars v;
    v.alpha = p.alpha;
    for (std::size_t k = 0; k < p.weights.size(); ++k) {
        v.weights.push_back(tape.leaf(p.weights[k]));
        v.biases.push_back(tape.leaf(p.biases[k]));
    }
    return v;
}

// --- graph layout --------------------------------------------------------------

EdgeIndex make_edge_index(const TransitGraph& graph, std::size_t batch) {
    const std::size_t n = graph.size();
    std::vector<std::size_t> recv, send;
    for (std::size_t i = 0; i < n; ++i) {
        if (graph.neighbors(i).empty()) {
            throw DegenerateNeighborhoodError("station '" + graph.stations()[i].id +
                                              "' has no neighbours and self-loops are off");
        }
    }
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j : graph.neighbors(i)) {
                recv.push_back(b * n + i);
                send.push_back(b * n + j);
            }
        }
    }
    return {ad::make_index(std::move(recv)), ad::make_index(std::move(send)), batch * n, n};
}

// --- tape layers -------------------------------------------------------------------

Var gru_step(Tape& tape, Var x, Var h_prev, const GruVars& p) {
    const Var z = tape.sigmoid(tape.add(tape.add(tape.matmul(x, p.W_z), tape.matmul(h_prev, p.U_z)), p.b_z));
    const Var r = tape.sigmoid(tape.add(tape.add(tape.matmul(x, p.W_r), tape.matmul(h_prev, p.U_r)), p.b_r));
    const Var cand = tape.tanh(
        tape.add(tape.add(tape.matmul(x, p.W_h), tape.mul(r, tape.matmul(h_prev, p.U_h))), p.b_h));
    // (1 - z) h_prev + z cand, written as h_prev + z (cand - h_prev)
    return tape.add(h_prev, tape.mul(z, tape.sub(cand, h_prev)));
}

Var gru_sequence(Tape& tape, std::span<const Var> steps, std::span<const GruVars> layers) {
    if (steps.empty()) throw DimensionError("gru_sequence: empty sequence");
    if (layers.empty()) throw DimensionError("gru_sequence: no layers");
    const std::size_t rows = tape.value(steps.front()).rows();
    std::vector<Var> seq(steps.begin(), steps.end());
    for (const GruVars& layer : layers) {
        const std::size_t hidden = tape.value(layer.U_z).rows();
        Var h = tape.constant(Tensor::matrix(rows, hidden));
        for (Var& x : seq) {
            h = gru_step(tape, x, h, layer);
            x = h;
        }
    }
    return seq.back();
}

Var gru_sequence(Tape& tape, Var series, std::span<const GruVars> layers) {
    const std::size_t len = tape.value(series).cols();
    std::vector<Var> steps;
    steps.reserve(len);
    for (std::size_t t = 0; t < len; ++t) steps.push_back(tape.slice_cols(series, t, t + 1));
    return gru_sequence(tape, steps, layers);
}

Var gat_edge_weights(Tape& tape, Var historical, const EdgeIndex& edges, const GatVars& p) {
    if (tape.value(historical).rows() != edges.num_nodes) {
        throw DimensionError("gat: " + std::to_string(tape.value(historical).rows()) + " feature rows for " +
                             std::to_string(edges.num_nodes) + " nodes");
    }
    const Var z = tape.matmul(historical, p.w);
    const Var recv_score = tape.matmul(z, p.a_receiver);
    const Var send_score = tape.matmul(z, p.a_sender);
    const Var e = tape.leaky_relu(
        tape.add(tape.gather_rows(recv_score, edges.receivers), tape.gather_rows(send_score, edges.senders)), p.alpha);
    return tape.segment_softmax(e, edges.receivers, edges.num_nodes);
}

Var kgnn_aggregate(Tape& tape, Var features, const EdgeIndex& edges, Var edge_weights, const KgnnVars& p) {
    if (tape.value(features).rows() != edges.num_nodes) {
        throw DimensionError("kgnn: feature rows do not match the edge index");
    }
    if (tape.value(edge_weights).rows() != edges.num_edges()) {
        throw ContractError("kgnn: expected " + std::to_string(edges.num_edges()) + " edge weights, got " +
                            std::to_string(tape.value(edge_weights).rows()));
    }
    const Var messages = tape.mul(tape.gather_rows(features, edges.senders), edge_weights);
    const Var pooled = tape.segment_sum(messages, edges.receivers, edges.num_nodes);
    const Var out = tape.add(tape.matmul(features, p.W1), tape.matmul(pooled, p.W2));
    return p.activation == Activation::Tanh ? tape.tanh(out) : out;
}

Var ffnn_forward(Tape& tape, Var x, const FfnnVars& p) {
    Var h = x;
    for (std::size_t k = 0; k < p.weights.size(); ++k) {
        h = tape.add(tape.matmul(h, p.weights[k]), p.biases[k]);
        if (k + 1 < p.weights.size()) h = tape.leaky_relu(h, p.alpha);
    }
    return h;
}

// --- value-level wrappers -------------------------------------------------------------

namespace {

GruVars constants(Tape& tape, const GruParams& p) {
    p.validate();
    return {tape.constant(p.W_z), tape.constant(p.U_z), tape.constant(p.b_z), tape.constant(p.W_r),
            tape.constant(p.U_r), tape.constant(p.b_r), tape.constant(p.W_h), tape.constant(p.U_h),
            tape.constant(p.b_h)};
}

}  // namespace

std::vector<double> gru_step(std::span<const double> x, std::span<const double> h_prev, const GruParams& p) {
    if (x.size() != p.input_size() || h_prev.size() != p.hidden_size()) {
        throw DimensionError("gru_step: got input " + std::to_string(x.size()) + " and state " +
                             std::to_string(h_prev.size()) + " for a " + std::to_string(p.input_size()) + "->" +
                             std::to_string(p.hidden_size()) + " cell");
    }
    Tape tape;
    const GruVars v = constants(tape, p);
    const Var xs = tape.constant(Tensor({1, x.size()}, std::vector<double>(x.begin(), x.end())));
    const Var hs = tape.constant(Tensor({1, h_prev.size()}, std::vector<double>(h_prev.begin(), h_prev.end())));
    const auto out = tape.value(gru_step(tape, xs, hs, v)).values();
    return {out.begin(), out.end()};
}

Tensor gru_sequence(const Tensor& series, std::span<const GruParams> layers) {
    if (layers.empty()) throw DimensionError("gru_sequence: no layers");
    if (layers.front().input_size() != 1) throw DimensionError("gru_sequence: scalar steps need a 1-input cell");
    Tape tape;
    std::vector<GruVars> vars;
    for (const auto& l : layers) vars.push_back(constants(tape, l));
    return tape.value(gru_sequence(tape, tape.constant(series), vars));
}

EdgeWeights gat_edge_weights(const Tensor& historical, const TransitGraph& graph, const GatParams& p) {
    p.validate();
    const EdgeIndex edges = make_edge_index(graph);
    Tape tape;
    const std::size_t d = p.w.cols();
    const Var a = tape.constant(p.a);
    const GatVars v{tape.constant(p.w), tape.slice_rows(a, 0, d), tape.slice_rows(a, d, 2 * d), p.alpha};
    const Tensor& w = tape.value(gat_edge_weights(tape, tape.constant(historical), edges, v));
    EdgeWeights out;
    for (std::size_t e = 0; e < edges.num_edges(); ++e) {
        out[{(*edges.receivers)[e], (*edges.senders)[e]}] = w[e];
    }
    return out;
}

Tensor kgnn_aggregate(const Tensor& features, const TransitGraph& graph, const EdgeWeights& weights,
                      const KgnnParams& p) {
    p.validate();
    const EdgeIndex edges = make_edge_index(graph);
    std::vector<double> column(edges.num_edges());
    for (std::size_t e = 0; e < edges.num_edges(); ++e) {
        const auto key = std::make_pair((*edges.receivers)[e], (*edges.senders)[e]);
        const auto it = weights.find(key);
        if (it == weights.end()) {
            throw ContractError("kgnn: no edge weight for receiver " + graph.stations()[key.first].id +
                                " and sender " + graph.stations()[key.second].id);
        }
        column[e] = it->second;
    }
    Tape tape;
    const KgnnVars v{tape.constant(p.W1), tape.constant(p.W2), p.activation};
    return tape.value(
        kgnn_aggregate(tape, tape.constant(features), edges, tape.constant(Tensor::column(std::move(column))), v));
}

std::vector<double> ffnn_forward(std::span<const double> x, const FfnnParams& p) {
    p.validate();
    if (x.size() != p.weights.front().rows()) {
        throw DimensionError("ffnn: input width " + std::to_string(x.size()) + ", expected " +
                             std::to_string(p.weights.front().rows()));
    }
    Tape tape;
    FfnnVars v;
    v.alpha = p.alpha;
    for (std::size_t k = 0; k < p.weights.size(); ++k) {
        v.weights.push_back(tape.constant(p.weights[k]));
        v.biases.push_back(tape.constant(p.biases[k]));
    }
    const auto out =
        tape.value(ffnn_forward(tape, tape.constant(Tensor({1, x.size()}, std::vector<double>(x.begin(), x.end()))), v))
            .values();
    return {out.begin(), out.end()};
}

}  // namespace dst::layers
