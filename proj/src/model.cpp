#include "dst/model.hpp"

#include "dst/error.hpp"
#include "dst/rng.hpp"

#include <algorithm>
#include <cmath>

namespace dst {

using ad::Tape;
using ad::Var;
namespace L = layers;

std::string variant_name(Variant v) { return v == Variant::V1 ? "V1" : "V2"; }

Variant parse_variant(const std::string& name) {
    if (name == "V1" || name == "v1") return Variant::V1;
    if (name == "V2" || name == "v2") return Variant::V2;
    throw ConfigError("unknown model variant '" + name + "' (expected V1 or V2)");
}

std::vector<std::size_t> ModelConfig::resolved_ffnn() const {
    if (!ffnn_layers.empty()) return ffnn_layers;
    if (variant == Variant::V1) return {4 * hidden, 2 * hidden, 1};
    return {hidden, hidden, 1};
}

void ModelConfig::validate() const {
    if (stations == 0) throw ConfigError("model: station count must be positive");
    if (recent_len == 0 || historical_len == 0) throw ConfigError("model: window lengths must be positive");
    if (hidden == 0) throw ConfigError("model: hidden size must be positive");
    if (gru_layers == 0) throw ConfigError("model: at least one GRU layer is required");
    L::DecompositionConfig{kernel}.validate();
    if (variant == Variant::V2 && recent_len != historical_len) {
        throw ConfigError("model: V2 stacks the branch outputs as a sequence and needs I == N_h");
    }
    const auto widths = resolved_ffnn();
    if (widths.size() < 2) throw ConfigError("model: ffnn needs at least two widths");
    for (auto w : widths) {
        if (w == 0) throw ConfigError("model: ffnn widths must be positive");
    }
    const std::size_t expected = variant == Variant::V1 ? 4 * hidden : hidden;
    if (widths.front() != expected) {
        throw ConfigError("model: ffnn input width " + std::to_string(widths.front()) + " does not match the " +
                          std::to_string(expected) + " features produced by " + variant_name(variant));
    }
    if (widths.back() != 1) throw ConfigError("model: ffnn must end in a single output");
}

void ModelParams::visit(const L::TensorVisitor& f) {
    const bool v1 = config.variant == Variant::V1;
    for (std::size_t b = 0; b < gru.size(); ++b) {
        for (std::size_t l = 0; l < gru[b].size(); ++l) {
            const std::string branch = v1 ? std::string(kBranchNames[b]) + "." : std::string();
            gru[b][l].visit("gru." + branch + std::to_string(l) + ".", f);
        }
    }
    gat.visit("gat.", f);
    for (std::size_t b = 0; b < kgnn.size(); ++b) kgnn[b].visit(std::string("kgnn.") + kBranchNames[b] + ".", f);
    ffnn.visit("ffnn.", f);
}

void ModelParams::visit(const L::ConstTensorVisitor& f) const {
    const_cast<ModelParams*>(this)->visit([&](const std::string& n, Tensor& t) { f(n, t); });
}

std::vector<Tensor*> ModelParams::tensors() {
    std::vector<Tensor*> out;
    visit([&](const std::string&, Tensor& t) { out.push_back(&t); });
    return out;
}

std::vector<std::string> ModelParams::tensor_names() const {
    std::vector<std::string> out;
    visit([&](const std::string& n, const Tensor&) { out.push_back(n); });
    return out;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    visit([&](const std::string&, const Tensor& t) { n += t.size(); });
    return n;
}

bool ModelParams::all_finite() const {
    bool ok = true;
    visit([&](const std::string&, const Tensor& t) { ok = ok && t.all_finite(); });
    return ok;
}

void ModelParams::set_requires_grad(bool on) {
    visit([&](const std::string&, Tensor& t) { t.set_requires_grad(on); });
}

ModelParams init_params(const ModelConfig& config) {
    config.validate();
    ModelParams p;
    p.config = config;
    const std::size_t h = config.hidden;
    const bool v1 = config.variant == Variant::V1;
    if (v1) {
        p.gru.resize(4);
        for (auto& stack : p.gru) {
            for (std::size_t l = 0; l < config.gru_layers; ++l) stack.push_back(L::GruParams::zeros(l == 0 ? 1 : h, h));
        }
    } else {
        p.gru.resize(1);
        for (std::size_t l = 0; l < config.gru_layers; ++l) {
            p.gru[0].push_back(L::GruParams::zeros(l == 0 ? config.recent_len : h, h));
        }
    }
    p.gat = L::GatParams::zeros(config.historical_len, h);
    // V1 aggregates GRU states (H wide); V2 aggregates raw windows (L wide).
    const std::size_t kdim = v1 ? h : config.recent_len;
    for (auto& k : p.kgnn) k = L::KgnnParams::zeros(kdim, L::Activation::Identity);
    p.ffnn = L::FfnnParams::zeros(config.resolved_ffnn());

    Rng rng(config.seed);
    p.visit([&](const std::string& name, Tensor& t) {
        const auto leaf = name.substr(name.rfind('.') + 1);
        if (leaf.front() == 'b') return;
        const double bound = 1.0 / std::sqrt(static_cast<double>(t.rows()));
        for (double& v : t.values()) v = rng.uniform(-bound, bound);
    });
    return p;
}

namespace {

ModelVars bind_any(Tape& tape, ModelParams& params) {
    ModelVars v;
    v.variant = params.config.variant;
    v.kernel = params.config.kernel;
    for (auto& stack : params.gru) {
        auto& out = v.gru.emplace_back();
        for (auto& layer : stack) out.push_back(L::bind(tape, layer));
    }
    v.gat = L::bind(tape, params.gat);
    for (std::size_t b = 0; b < 4; ++b) v.kgnn[b] = L::bind(tape, params.kgnn[b]);
    v.ffnn = L::bind(tape, params.ffnn);
    return v;
}

void check_inputs(const Tensor& recent, const Tensor& historical, const ModelConfig& c, std::size_t rows) {
    if (recent.rows() != rows || recent.cols() != c.recent_len) {
        throw DimensionError("model: recent window is " + recent.shape_string() + ", expected " +
                             std::to_string(rows) + "x" + std::to_string(c.recent_len));
    }
    if (historical.rows() != rows || historical.cols() != c.historical_len) {
        throw DimensionError("model: historical window is " + historical.shape_string() + ", expected " +
                             std::to_string(rows) + "x" + std::to_string(c.historical_len));
    }
}

std::vector<double> single(const Tensor& recent, const Tensor& historical, const TransitGraph& graph,
                           const ModelParams& params, Variant variant) {
    if (params.config.variant != variant) {
        throw ContractError("model: parameters are for " + variant_name(params.config.variant) + ", not " +
                            variant_name(variant));
    }
    if (graph.size() != params.config.stations) {
        throw ContractError("model: graph has " + std::to_string(graph.size()) + " stations, parameters expect " +
                            std::to_string(params.config.stations));
    }
    Tape tape;
    // Leaves without requires_grad are copied onto the tape as plain values.
    const ModelVars vars = bind(tape, const_cast<ModelParams&>(params));
    const auto out = tape.value(forward(tape, vars, recent, historical, L::make_edge_index(graph))).values();
    return {out.begin(), out.end()};
}

}  // namespace

ModelVars bind(Tape& tape, ModelParams& params) { return bind_any(tape, params); }

Var forward(Tape& tape, const ModelVars& vars, const Tensor& recent, const Tensor& historical,
            const L::EdgeIndex& edges) {
    const std::size_t rows = edges.num_nodes;
    if (recent.rows() != rows || historical.rows() != rows) {
        throw DimensionError("model: inputs have " + std::to_string(recent.rows()) + " and " +
                             std::to_string(historical.rows()) + " rows for " + std::to_string(rows) + " nodes");
    }
    const L::Decomposition parts = L::decompose(recent, L::DecompositionConfig{vars.kernel});
    const std::array<Var, 4> series = {tape.constant(recent), tape.constant(historical),
                                       tape.constant(parts.trend), tape.constant(parts.residual)};
    const Var edge_weights = L::gat_edge_weights(tape, series[1], edges, vars.gat);

    std::array<Var, 4> branch;
    if (vars.variant == Variant::V1) {
        for (std::size_t b = 0; b < 4; ++b) {
            const Var h = L::gru_sequence(tape, series[b], vars.gru[b]);
            branch[b] = L::kgnn_aggregate(tape, h, edges, edge_weights, vars.kgnn[b]);
        }
        return L::ffnn_forward(tape, tape.concat_cols(branch), vars.ffnn);
    }
    for (std::size_t b = 0; b < 4; ++b) branch[b] = L::kgnn_aggregate(tape, series[b], edges, edge_weights, vars.kgnn[b]);
    const Var h = L::gru_sequence(tape, std::span<const Var>(branch), vars.gru[0]);
    return L::ffnn_forward(tape, h, vars.ffnn);
}

std::vector<double> forward_v1(const Tensor& recent, const Tensor& historical, const TransitGraph& graph,
                               const ModelParams& params) {
    check_inputs(recent, historical, params.config, graph.size());
    return single(recent, historical, graph, params, Variant::V1);
}

std::vector<double> forward_v2(const Tensor& recent, const Tensor& historical, const TransitGraph& graph,
                               const ModelParams& params) {
    check_inputs(recent, historical, params.config, graph.size());
    return single(recent, historical, graph, params, Variant::V2);
}

std::vector<double> predict(const Tensor& recent, const Tensor& historical, const TransitGraph& graph,
                            const ModelParams& params) {
    return params.config.variant == Variant::V1 ? forward_v1(recent, historical, graph, params)
                                                : forward_v2(recent, historical, graph, params);
}

Tensor stack_rows(std::span<const Tensor* const> parts) {
    if (parts.empty()) return {};
    const std::size_t rows = parts.front()->rows(), cols = parts.front()->cols();
    Tensor out = Tensor::matrix(rows * parts.size(), cols);
    auto dst = out.values().begin();
    for (const Tensor* p : parts) {
        if (p->rows() != rows || p->cols() != cols) throw DimensionError("stack_rows: mismatched shapes");
        dst = std::copy(p->values().begin(), p->values().end(), dst);
    }
    return out;
}

Tensor stack_rows(std::span<const Tensor> parts) {
    std::vector<const Tensor*> ptrs;
    ptrs.reserve(parts.size());
    for (const auto& p : parts) ptrs.push_back(&p);
    return stack_rows(std::span<const Tensor* const>(ptrs));
}

Tensor predict_batch(std::span<const Tensor> recent, std::span<const Tensor> historical, const TransitGraph& graph,
                     const ModelParams& params, std::size_t chunk) {
    if (recent.size() != historical.size()) throw DimensionError("predict_batch: input counts differ");
    const std::size_t n = graph.size();
    if (n != params.config.stations) throw ContractError("predict_batch: station count mismatch");
    chunk = std::max<std::size_t>(chunk, 1);
    Tensor out = Tensor::matrix(recent.size(), n);
    L::EdgeIndex edges;
    for (std::size_t begin = 0; begin < recent.size(); begin += chunk) {
        const std::size_t count = std::min(chunk, recent.size() - begin);
        if (edges.num_nodes != count * n) edges = L::make_edge_index(graph, count);
        for (std::size_t k = 0; k < count; ++k) check_inputs(recent[begin + k], historical[begin + k], params.config, n);
        Tape tape;
        const ModelVars vars = bind(tape, const_cast<ModelParams&>(params));
        const Tensor& y = tape.value(forward(tape, vars, stack_rows(recent.subspan(begin, count)),
                                             stack_rows(historical.subspan(begin, count)), edges));
        std::copy(y.values().begin(), y.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(begin * n));
    }
    return out;
}

}  // namespace dst
