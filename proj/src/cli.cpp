#include "dst/cli.hpp"

#include "dst/checkpoint.hpp"
#include "dst/clustering.hpp"
#include "dst/config.hpp"
#include "dst/csv.hpp"
#include "dst/data.hpp"
#include "dst/error.hpp"
#include "dst/forecasting.hpp"
#include "dst/graph.hpp"
#include "dst/metrics.hpp"
#include "dst/model.hpp"
#include "dst/synth.hpp"
#include "dst/training.hpp"

#include <CLI11.hpp>
#include <cblas.h>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <vector>

namespace dst {

namespace {

namespace fs = std::filesystem;

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::optional<std::size_t> horizon;
    std::string start;
    std::string checkpoint;
    std::string output;
};

struct Context {
    RunConfig cfg;
    Options opts;
    std::ostream& out;
    std::ostream& err;

    [[nodiscard]] std::string provenance() const { return provenance_line({cfg.hash, cfg.seed}); }
    [[nodiscard]] fs::path output(const std::string& name) const { return cfg.paths.output_dir / name; }

    [[nodiscard]] fs::path input(const fs::path& configured, const std::string& fallback) const {
        return configured.empty() ? output(fallback) : configured;
    }

    [[nodiscard]] fs::path checkpoint_path() const {
        if (!opts.checkpoint.empty()) return opts.checkpoint;
        return input(cfg.paths.checkpoint, "checkpoint.dstc");
    }
};

RunConfig resolve_config(const Options& o) {
    RunConfig c = o.config.empty() ? run_config_from_text("", fs::current_path()) : load_run_config(o.config);
    if (o.seed) c.set_seed(*o.seed);
    if (o.threads) c.threads = *o.threads;
    if (!o.output.empty()) c.paths.output_dir = o.output;
    if (o.horizon) c.forecast.horizon = *o.horizon;
    if (!o.start.empty()) c.forecast.start = parse_timestamp(o.start);
    return c;
}

struct Network {
    TransitGraph graph;
    RidershipGrid grid;
    AggregateResult detail;
};

Network load_network(const Context& ctx) {
    Network n;
    n.graph = build_graph(read_stations(ctx.input(ctx.cfg.paths.stations, "stations.csv")),
                          read_edges(ctx.input(ctx.cfg.paths.edges, "edges.csv")));
    n.detail = aggregate_detailed(read_records(ctx.input(ctx.cfg.paths.ridership, "ridership.csv")), n.graph,
                                  ctx.cfg.synth.interval_minutes, ctx.cfg.synth.service);
    n.grid = n.detail.grid;
    return n;
}

// Without a [periods] section the last week is held out for evaluation.
std::vector<Period> periods_for(const RunConfig& cfg, const RidershipGrid& grid) {
    if (!cfg.periods.empty()) return cfg.periods;
    const auto days = static_cast<std::int64_t>(grid.num_days());
    if (days <= 7) throw CoverageError("need more than 7 days of data to hold out a test week");
    const std::int64_t split = grid.first_day + days - 7;
    return {{"train", grid.first_day, split - 1}, {"test", split, grid.first_day + days - 1}};
}

const Period& require_period(const std::vector<Period>& periods, const std::string& name) {
    for (const auto& p : periods) {
        if (p.name == name) return p;
    }
    throw ConfigError("periods." + name + " is not set");
}

std::vector<Period> evaluation_periods(const std::vector<Period>& periods) {
    std::vector<Period> out;
    for (const auto& p : periods) {
        if (p.name != "train" && p.name != "validation") out.push_back(p);
    }
    if (out.empty()) throw ConfigError("no evaluation period configured");
    return out;
}

std::vector<SampleWindow> period_windows(const RidershipGrid& scaled, const Period& p, const ModelConfig& m) {
    const auto [lo, hi] = scaled.day_rows(p.first_day, p.last_day);
    return make_windows(scaled, m.recent_len, m.historical_len, lo, hi).samples;
}

Checkpoint load_matching_checkpoint(const Context& ctx, const TransitGraph& graph) {
    Checkpoint ck = load_checkpoint(ctx.checkpoint_path());
    if (!ck.meta.station_ids.empty() && ck.meta.station_ids != graph.station_ids()) {
        throw ContractError("checkpoint stations do not match the network in " +
                            ctx.input(ctx.cfg.paths.stations, "stations.csv").string());
    }
    return ck;
}

Tensor invert_rows(const Tensor& scaled, const ScalerParams& scaler) {
    Tensor out = scaled;
    for (std::size_t b = 0; b < out.rows(); ++b) {
        for (std::size_t s = 0; s < out.cols(); ++s) out(b, s) = scaler.invert(s, scaled(b, s));
    }
    return out;
}

std::string fmt(double v) {
    std::ostringstream ss;
    ss.precision(4);
    ss << v;
    return ss.str();
}

int run_synth(Context& ctx) {
    const SynthDataset data = synth_generate(ctx.cfg.synth);
    const std::string prov = ctx.provenance();
    write_text_file(ctx.output("ridership.csv"), records_csv(data.records, prov));
    write_text_file(ctx.output("stations.csv"), stations_csv(data.graph.stations(), prov));
    write_text_file(ctx.output("edges.csv"), edges_csv(data.graph, prov));
    write_text_file(ctx.output("manifest.json"), manifest_json(data, ctx.cfg.synth, ctx.cfg.hash));
    ctx.out << "synth: " << data.graph.size() << " stations, " << ctx.cfg.synth.days << " days, " << data.records.size()
            << " records, " << data.total << " boardings -> " << ctx.cfg.paths.output_dir.string() << "\n";
    return kExitOk;
}

int run_ingest(Context& ctx) {
    const Network net = load_network(ctx);
    write_text_file(ctx.output("grid.csv"), grid_csv(net.grid, ctx.provenance()));
    ctx.out << "ingest: " << net.grid.num_rows() << " rows x " << net.grid.num_stations() << " stations, "
            << net.detail.duplicates_removed << " duplicates removed, " << net.detail.out_of_service
            << " out-of-service records dropped -> " << ctx.output("grid.csv").string() << "\n";
    return kExitOk;
}

int run_train(Context& ctx) {
    const Network net = load_network(ctx);
    const auto periods = periods_for(ctx.cfg, net.grid);
    validate_periods(periods, false);
    const Period& train_p = require_period(periods, "train");
    const auto [lo, hi] = net.grid.day_rows(train_p.first_day, train_p.last_day);
    if (lo == hi) throw CoverageError("training period has no rows in the data");
    const ScalerParams scaler = fit_scaler(net.grid.slice_days(lo / net.grid.slots_per_day(), hi / net.grid.slots_per_day()));
    const RidershipGrid scaled = apply_scaler(net.grid, scaler);

    ModelConfig mc = ctx.cfg.model;
    mc.stations = net.graph.size();
    const auto samples = period_windows(scaled, train_p, mc);
    if (samples.empty()) throw CoverageError("training period has no complete sample windows");
    std::vector<SampleWindow> validation;
    for (const auto& p : periods) {
        if (p.name == "validation") validation = period_windows(scaled, p, mc);
    }

    ModelParams params = init_params(mc);
    params.scaler = scaler;
    TrainResult result = train(std::move(params), samples, net.graph, ctx.cfg.train, validation);
    result.checkpoint.meta.config_hash = ctx.cfg.hash;
    result.checkpoint.meta.seed = ctx.cfg.seed;
    const fs::path ck = ctx.output("checkpoint.dstc");
    fs::create_directories(ctx.cfg.paths.output_dir);
    save_checkpoint(result.checkpoint, ck);
    write_text_file(ctx.output("train_log.csv"), ctx.provenance() + "\n" + result.history.log_text());

    const auto& h = result.history;
    ctx.out << "train: " << variant_name(mc.variant) << " epochs=" << h.epochs() << " best_epoch=" << h.best_epoch
            << " samples=" << samples.size() << " val_samples=" << validation.size()
            << " best_loss=" << fmt(result.checkpoint.meta.best_val_loss) << " -> " << ck.string() << "\n";
    if (result.diverged) {
        ctx.err << "training diverged: " << result.divergence << "; saved the best parameters before divergence\n";
        return kExitNumeric;
    }
    return kExitOk;
}

int run_evaluate(Context& ctx) {
    const Network net = load_network(ctx);
    const Checkpoint ck = load_matching_checkpoint(ctx, net.graph);
    const ScalerParams& scaler = ck.params.scaler;
    const RidershipGrid scaled = apply_scaler(net.grid, scaler);
    const auto ids = net.graph.station_ids();

    std::vector<ScoreReport> reports;
    std::string challenge = ctx.provenance() + "\ndataset,station_id,r2\n";
    for (const Period& p : evaluation_periods(periods_for(ctx.cfg, net.grid))) {
        const auto samples = period_windows(scaled, p, ck.params.config);
        if (samples.empty()) {
            ctx.err << "warning: period '" << p.name << "' has no complete sample windows\n";
            continue;
        }
        std::vector<Tensor> recent, hist;
        std::vector<Timestamp> times;
        Tensor observed = Tensor::matrix(samples.size(), ids.size());
        for (std::size_t b = 0; b < samples.size(); ++b) {
            recent.push_back(samples[b].recent);
            hist.push_back(samples[b].historical);
            times.push_back(samples[b].target_time);
            for (std::size_t s = 0; s < ids.size(); ++s) observed(b, s) = net.grid.values(samples[b].target_row, s);
        }
        const Tensor predicted = invert_rows(predict_batch(recent, hist, net.graph, ck.params), scaler);
        reports.push_back(score(p.name, observed, predicted, times, ids));
        if (ids.size() >= 5) {
            const auto& r = reports.back();
            for (const auto& id : challenge_stations(ids, r.station_r2)) {
                const auto i = static_cast<std::size_t>(*net.graph.index_of(id));
                challenge += p.name + "," + id + "," + format_double(r.station_r2[i]) + "\n";
            }
        }
        const auto persist = [&](PersistenceVariant v) { return invert_rows(persistence_baseline(samples, v), scaler); };
        reports.push_back(score(p.name + ":persistence", observed, persist(PersistenceVariant::Recent), times, ids));
        reports.push_back(
            score(p.name + ":persistence-historical", observed, persist(PersistenceVariant::Historical), times, ids));
    }
    if (reports.empty()) throw CoverageError("no evaluation period produced samples");
    const std::string prov = ctx.provenance();
    write_text_file(ctx.output("report.csv"), report_csv(reports, prov));
    write_text_file(ctx.output("quartiles.csv"), quartiles_csv(reports, prov));
    write_text_file(ctx.output("challenge.csv"), challenge);

    ctx.out << "evaluate:";
    for (std::size_t i = 0; i < reports.size(); i += 3) {
        ctx.out << (i ? "; " : " ") << reports[i].dataset << " r2=" << fmt(reports[i].r2) << " maape=" << fmt(reports[i].maape)
                << " (persistence " << fmt(reports[i + 1].maape) << ") n=" << reports[i].n;
    }
    ctx.out << " -> " << ctx.output("report.csv").string() << "\n";
    return kExitOk;
}

std::size_t forecast_start_row(const RidershipGrid& grid, const std::optional<Timestamp>& start) {
    if (!start) return grid.num_rows();
    if (auto row = grid.row_of(*start)) return *row;
    if (*start == grid.time_of_row(grid.num_rows())) return grid.num_rows();
    throw CoverageError("forecast start " + format_timestamp(*start) +
                        " is not an in-service interval within the data or right after it");
}

int run_forecast(Context& ctx) {
    const Network net = load_network(ctx);
    const Checkpoint ck = load_matching_checkpoint(ctx, net.graph);
    auto scaled = std::make_shared<const RidershipGrid>(apply_scaler(net.grid, ck.params.scaler));
    const std::size_t row = forecast_start_row(net.grid, ctx.cfg.forecast.start);
    const ModelPredictor model(ck.params, net.graph);
    ForecastBuffer buffer = make_buffer(scaled, row, model.recent_len());
    const auto steps = iterative_forecast(model, buffer, ctx.cfg.forecast.horizon);
    const auto ids = net.graph.station_ids();
    write_text_file(ctx.output("forecast.csv"), forecast_csv(steps, ids, ck.params.scaler, ctx.provenance()));
    ctx.out << "forecast: " << steps.size() << " steps x " << ids.size() << " stations from "
            << format_timestamp(steps.front().time) << " -> " << ctx.output("forecast.csv").string() << "\n";
    return kExitOk;
}

int run_lag_curve(Context& ctx) {
    const Network net = load_network(ctx);
    const Checkpoint ck = load_matching_checkpoint(ctx, net.graph);
    auto scaled = std::make_shared<const RidershipGrid>(apply_scaler(net.grid, ck.params.scaler));
    const ModelPredictor model(ck.params, net.graph);
    const auto periods = evaluation_periods(periods_for(ctx.cfg, net.grid));
    ctx.out << "lag-curve:";
    const char* sep = " ";
    for (const Period& p : periods) {
        const auto [lo, hi] = net.grid.day_rows(p.first_day, p.last_day);
        const auto lags = lagged_forecast_errors(model, scaled, ck.params.scaler, ctx.cfg.forecast.max_lag, lo, hi);
        const fs::path file = ctx.output(periods.size() == 1 ? "lag_curve.csv" : "lag_curve_" + p.name + ".csv");
        write_text_file(file, lag_csv(lags, ctx.provenance()));
        ctx.out << sep << p.name << " lag1=" << fmt(lags.front().maape) << " lag" << lags.back().lag << "="
                << fmt(lags.back().maape);
        if (lags.size() >= 12) {
            try {
                ctx.out << " ratio=" << fmt(maape_ratio(lags));
            } catch (const UndefinedRatioError&) {
                ctx.out << " ratio=undefined";
            }
        }
        ctx.out << " -> " << file.string();
        sep = "; ";
    }
    ctx.out << "\n";
    return kExitOk;
}

int run_cluster(Context& ctx) {
    const Network net = load_network(ctx);
    const auto profiles = weekly_profile(net.grid);
    const KMeansResult result = kmeans(profiles, ctx.cfg.cluster);
    const std::string prov = ctx.provenance();
    write_text_file(ctx.output("clusters.csv"), assignments_csv(profiles, result, prov));
    write_text_file(ctx.output("centroids.csv"), centroids_csv(result, prov));
    ctx.out << "cluster: k=" << ctx.cfg.cluster.k << " stations=" << profiles.size()
            << " iterations=" << result.iterations << " inertia=" << fmt(result.inertia);

    const fs::path manifest = ctx.input(ctx.cfg.paths.manifest, "manifest.json");
    if (!ctx.cfg.paths.manifest.empty() || fs::exists(manifest)) {
        std::map<std::string, std::size_t> truth;
        for (const auto& m : read_manifest(manifest)) truth[m.id] = static_cast<std::size_t>(m.archetype);
        std::vector<std::size_t> expected;
        for (const auto& p : profiles) {
            const auto it = truth.find(p.station_id);
            if (it == truth.end()) throw ReferenceError("station '" + p.station_id + "' missing from the manifest");
            expected.push_back(it->second);
        }
        ctx.out << " ari=" << fmt(adjusted_rand_index(result.assignments, expected));
    }
    ctx.out << " -> " << ctx.output("clusters.csv").string() << "\n";
    return kExitOk;
}

int run_inspect(Context& ctx) {
    const Checkpoint ck = load_checkpoint(ctx.checkpoint_path());
    ctx.out << model_config_text(ck.params.config);
    ctx.out << "epochs=" << ck.meta.epochs << "\n";
    ctx.out << "final_train_loss=" << format_double(ck.meta.final_train_loss) << "\n";
    ctx.out << "best_val_loss=" << format_double(ck.meta.best_val_loss) << "\n";
    ctx.out << "config_hash=" << ck.meta.config_hash << "\n";
    for (const auto& l : ck.meta.lineage) ctx.out << "lineage=" << l << "\n";
    ctx.out << "inspect-checkpoint: " << variant_name(ck.params.config.variant) << " stations=" << ck.params.config.stations
            << " parameters=" << ck.params.parameter_count() << " epochs=" << ck.meta.epochs << " seed=" << ck.meta.seed
            << " <- " << ctx.checkpoint_path().string() << "\n";
    return kExitOk;
}

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Usage:
            return kExitUsage;
        case ErrorKind::Data:
            return kExitData;
        case ErrorKind::Numeric:
            return kExitNumeric;
    }
    return kExitData;
}

}  // namespace

int dispatch(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Station-level ridership forecasting with a decomposed spatio-temporal graph network", "ridecast"};
    app.require_subcommand(1);
    Options o;
    using Runner = int (*)(Context&);
    const std::vector<std::tuple<std::string, std::string, Runner>> commands = {
        {"synth", "generate a synthetic network, ridership records and archetype manifest", run_synth},
        {"ingest", "aggregate raw records onto the interval grid", run_ingest},
        {"train", "fit a model on the train period", run_train},
        {"evaluate", "score a checkpoint and the persistence baselines on each evaluation period", run_evaluate},
        {"forecast", "iterative multi-step forecast from a start interval", run_forecast},
        {"lag-curve", "per-lag forecast error for lags 1..max_lag", run_lag_curve},
        {"cluster", "k-means over weekly station profiles", run_cluster},
        {"inspect-checkpoint", "print checkpoint metadata", run_inspect},
    };
    std::map<CLI::App*, Runner> runners;
    for (const auto& [name, help, fn] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", o.config, "run configuration file");
        sub->add_option("--seed", o.seed, "override the configured seed");
        sub->add_option("--threads", o.threads, "cap on worker threads");
        sub->add_option("--output", o.output, "override paths.output_dir");
        if (name != "synth" && name != "ingest" && name != "train" && name != "cluster") {
            sub->add_option("--checkpoint", o.checkpoint, "checkpoint file");
        }
        if (name == "forecast") {
            sub->add_option("--horizon", o.horizon, "number of iterations");
            sub->add_option("--start", o.start, "first target interval, YYYY-MM-DDTHH:MM");
        }
        runners[sub] = fn;
    }

    std::vector<std::string> argv_store{"ridecast"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_store) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        if (app.exit(e, out, err) == 0) return kExitOk;
        err << app.help();
        return kExitUsage;
    }

    try {
        Context ctx{resolve_config(o), o, out, err};
        if (ctx.cfg.threads == 0) throw ConfigError("--threads must be at least 1");
        openblas_set_num_threads(static_cast<int>(ctx.cfg.threads));
        for (const auto& [sub, fn] : runners) {
            if (sub->parsed()) return fn(ctx);
        }
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    }
}

int dispatch(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return dispatch(args, std::cout, std::cerr);
}

}  // namespace dst
