#include "dst/training.hpp"

#include "dst/csv.hpp"
#include "dst/error.hpp"
#include "dst/rng.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace dst {

using ad::Tape;
using ad::Var;

void TrainConfig::validate() const {
    if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
        throw ConfigError("train: Adam betas must lie in (0, 1)");
    }
    if (!(epsilon > 0.0)) throw ConfigError("train: epsilon must be positive");
    if (!(clip_norm > 0.0)) throw ConfigError("train: clip_norm must be positive");
}

std::string TrainHistory::log_text() const {
    std::string s = "epoch,train_mse,val_mse,seconds\n";
    for (std::size_t e = 0; e < train_mse.size(); ++e) {
        s += std::to_string(e + 1) + "," + format_double(train_mse[e]) + "," + format_double(val_mse[e]) + "," +
             format_double(seconds[e]) + "\n";
    }
    return s;
}

double mse_loss(std::span<const double> predicted, std::span<const double> target) {
    if (predicted.size() != target.size() || predicted.empty()) {
        throw DimensionError("mse_loss: " + std::to_string(predicted.size()) + " predictions for " +
                             std::to_string(target.size()) + " targets");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const double d = predicted[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(predicted.size());
}

Var mse_loss(Tape& tape, Var predicted, Var target) {
    const Var diff = tape.sub(predicted, target);
    return tape.mean(tape.mul(diff, diff));
}

void adam_step(std::span<Tensor* const> params, std::span<const std::string> names, AdamState& state,
               const TrainConfig& config) {
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), {});
        state.v.assign(params.size(), {});
        for (std::size_t k = 0; k < params.size(); ++k) {
            state.m[k].assign(params[k]->size(), 0.0);
            state.v[k].assign(params[k]->size(), 0.0);
        }
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (!params[k]->has_grad()) continue;
        const auto& g = params[k]->grad();
        if (g.size() != params[k]->size() || state.m[k].size() != g.size()) {
            throw DimensionError("adam: state does not match parameter " + (k < names.size() ? names[k] : std::to_string(k)));
        }
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!std::isfinite(g[i])) {
                throw NumericError("non-finite gradient in parameter '" +
                                   (k < names.size() ? names[k] : std::to_string(k)) + "' at entry " +
                                   std::to_string(i));
            }
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (!params[k]->has_grad()) continue;
        const auto& g = params[k]->grad();
        auto w = params[k]->values();
        auto& m = state.m[k];
        auto& v = state.v[k];
        for (std::size_t i = 0; i < g.size(); ++i) {
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            w[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.epsilon);
        }
    }
}

double clip_grad_norm(std::span<Tensor* const> params, double max_norm) {
    double sq = 0.0;
    for (Tensor* p : params) {
        if (!p->has_grad()) continue;
        for (double g : p->grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && std::isfinite(norm)) {
        const double scale = max_norm / norm;
        for (Tensor* p : params) {
            if (!p->has_grad()) continue;
            for (double& g : p->grad()) g *= scale;
        }
    }
    return norm;
}

namespace {

struct Batch {
    Tensor recent, historical, target;
};

Batch make_batch(std::span<const SampleWindow> samples, std::span<const std::size_t> order) {
    std::vector<const Tensor*> rec, hist;
    std::vector<double> target;
    for (std::size_t idx : order) {
        rec.push_back(&samples[idx].recent);
        hist.push_back(&samples[idx].historical);
        target.insert(target.end(), samples[idx].target.begin(), samples[idx].target.end());
    }
    return {stack_rows(std::span<const Tensor* const>(rec)), stack_rows(std::span<const Tensor* const>(hist)),
            Tensor::column(std::move(target))};
}

void check_samples(std::span<const SampleWindow> samples, const ModelConfig& c, const char* what) {
    for (const auto& s : samples) {
        if (s.recent.rows() != c.stations || s.recent.cols() != c.recent_len || s.historical.rows() != c.stations ||
            s.historical.cols() != c.historical_len || s.target.size() != c.stations) {
            throw ContractError(std::string(what) + " sample shapes do not match the model (" + s.recent.shape_string() +
                                ", " + s.historical.shape_string() + ")");
        }
    }
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

TrainResult run(ModelParams params, CheckpointMeta meta, std::span<const SampleWindow> samples,
                const TransitGraph& graph, const TrainConfig& config, std::span<const SampleWindow> validation,
                const EpochCallback& on_epoch, const std::string& label) {
    config.validate();
    if (samples.empty()) throw ContractError(label + ": no training samples");
    if (graph.size() != params.config.stations) {
        throw ContractError(label + ": graph has " + std::to_string(graph.size()) + " stations, model expects " +
                            std::to_string(params.config.stations));
    }
    check_samples(samples, params.config, "training");
    check_samples(validation, params.config, "validation");

    TrainResult result;
    TrainHistory& h = result.history;
    h.initial_train_mse = evaluate_mse(params, graph, samples);
    h.initial_val_mse = validation.empty() ? h.initial_train_mse : evaluate_mse(params, graph, validation);

    ModelParams best = params;
    double best_score = h.initial_val_mse;
    if (!std::isfinite(best_score)) best_score = std::numeric_limits<double>::infinity();

    params.set_requires_grad(true);
    const std::vector<Tensor*> tensors = params.tensors();
    const std::vector<std::string> names = params.tensor_names();
    AdamState adam;
    Rng rng(config.shuffle_seed);
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t full = std::min(config.batch_size, samples.size());
    const layers::EdgeIndex full_edges = layers::make_edge_index(graph, full);

    std::size_t bad_epochs = 0;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        rng.shuffle(std::span<std::size_t>(order));
        double loss_sum = 0.0;
        bool diverged = false;
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
            const std::size_t count = std::min(config.batch_size, order.size() - begin);
            const Batch batch = make_batch(samples, std::span<const std::size_t>(order).subspan(begin, count));
            const layers::EdgeIndex edges = count == full ? full_edges : layers::make_edge_index(graph, count);
            Tape tape;
            const ModelVars vars = bind(tape, params);
            const Var pred = forward(tape, vars, batch.recent, batch.historical, edges);
            const Var loss = mse_loss(tape, pred, tape.constant(batch.target));
            const double value = tape.value(loss)[0];
            if (!std::isfinite(value)) {
                result.divergence = "non-finite training loss in epoch " + std::to_string(epoch);
                diverged = true;
                break;
            }
            loss_sum += value * static_cast<double>(count);
            tape.backward(loss);
            clip_grad_norm(tensors, config.clip_norm);
            try {
                adam_step(tensors, names, adam, config);
            } catch (const NumericError& e) {
                result.divergence = e.what();
                diverged = true;
                break;
            }
        }
        if (diverged || !params.all_finite()) {
            if (result.divergence.empty()) result.divergence = "non-finite parameters after epoch " + std::to_string(epoch);
            result.diverged = true;
            break;
        }
        const double train_mse = loss_sum / static_cast<double>(samples.size());
        const double val_mse = validation.empty() ? train_mse : evaluate_mse(params, graph, validation);
        const double secs = seconds_since(start);
        h.train_mse.push_back(train_mse);
        h.val_mse.push_back(val_mse);
        h.seconds.push_back(secs);
        if (on_epoch) on_epoch(epoch, train_mse, val_mse, secs);

        if (std::isfinite(val_mse) && val_mse < best_score) {
            best_score = val_mse;
            best = params;
            h.best_epoch = epoch;
            bad_epochs = 0;
        } else if (++bad_epochs > config.patience) {
            h.early_stopped = true;
            break;
        }
    }

    best.set_requires_grad(false);
    for (Tensor* t : best.tensors()) t->clear_grad();
    meta.epochs += h.epochs();
    meta.final_train_loss = h.train_mse.empty() ? h.initial_train_mse : h.train_mse.back();
    meta.best_val_loss = best_score;
    meta.seed = best.config.seed;
    meta.station_ids = graph.station_ids();
    meta.lineage.push_back(label + " epochs=" + std::to_string(h.epochs()) + " best_epoch=" +
                           std::to_string(h.best_epoch) + " samples=" + std::to_string(samples.size()) +
                           (result.diverged ? " diverged" : ""));
    result.checkpoint = {std::move(best), std::move(meta)};
    return result;
}

}  // namespace

double evaluate_mse(const ModelParams& params, const TransitGraph& graph, std::span<const SampleWindow> samples) {
    if (samples.empty()) return 0.0;
    std::vector<Tensor> rec, hist;
    rec.reserve(samples.size());
    hist.reserve(samples.size());
    for (const auto& s : samples) {
        rec.push_back(s.recent);
        hist.push_back(s.historical);
    }
    const Tensor pred = predict_batch(rec, hist, graph, params);
    double acc = 0.0;
    for (std::size_t b = 0; b < samples.size(); ++b) {
        for (std::size_t i = 0; i < graph.size(); ++i) {
            const double d = pred(b, i) - samples[b].target[i];
            acc += d * d;
        }
    }
    return acc / static_cast<double>(samples.size() * graph.size());
}

TrainResult train(ModelParams params, std::span<const SampleWindow> samples, const TransitGraph& graph,
                  const TrainConfig& config, std::span<const SampleWindow> validation, const EpochCallback& on_epoch) {
    return run(std::move(params), {}, samples, graph, config, validation, on_epoch, "train");
}

TrainResult fine_tune(const Checkpoint& checkpoint, std::span<const SampleWindow> samples, const TransitGraph& graph,
                      const TrainConfig& config, std::span<const SampleWindow> validation,
                      const EpochCallback& on_epoch) {
    const ModelParams& p = checkpoint.params;
    if (p.config.stations != graph.size()) {
        throw ContractError("fine_tune: checkpoint has " + std::to_string(p.config.stations) +
                            " stations, the network has " + std::to_string(graph.size()));
    }
    if (!checkpoint.meta.station_ids.empty() && checkpoint.meta.station_ids != graph.station_ids()) {
        throw ContractError("fine_tune: checkpoint station ids differ from the network");
    }
    return run(p, checkpoint.meta, samples, graph, config, validation, on_epoch, "fine_tune");
}

}  // namespace dst
