#include "dst/config.hpp"

#include "dst/csv.hpp"
#include "dst/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>

namespace dst {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::string where(std::string_view source, std::size_t line) {
    return std::string(source) + ":" + std::to_string(line);
}

// Strips a trailing comment that is not inside a quoted string.
std::string_view strip_comment(std::string_view s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') quoted = !quoted;
        if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
}

bool is_key(std::string_view k) {
    if (k.empty()) return false;
    return std::all_of(k.begin(), k.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
    });
}

std::optional<std::string> parse_string(std::string_view v) {
    if (v.size() < 2 || v.front() != '"' || v.back() != '"') return std::nullopt;
    std::string out;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
        if (v[i] == '\\' && i + 2 < v.size()) {
            ++i;
            out += v[i] == 'n' ? '\n' : v[i] == 't' ? '\t' : v[i];
        } else if (v[i] == '"') {
            return std::nullopt;
        } else {
            out += v[i];
        }
    }
    return out;
}

std::optional<double> parse_number(std::string_view v) {
    double x = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(x)) return std::nullopt;
    return x;
}

std::vector<std::string_view> split_items(std::string_view body) {
    std::vector<std::string_view> items;
    bool quoted = false;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= body.size(); ++i) {
        if (i < body.size() && body[i] == '"') quoted = !quoted;
        if (i == body.size() || (body[i] == ',' && !quoted)) {
            const auto item = trim(body.substr(start, i - start));
            if (!item.empty() || i < body.size()) items.push_back(item);
            start = i + 1;
        }
    }
    return items;
}

ConfigValue parse_value(std::string_view v, std::string_view source, std::size_t line) {
    ConfigValue out;
    out.line = line;
    if (v == "true" || v == "false") {
        out.data = v == "true";
    } else if (auto s = parse_string(v)) {
        out.data = *s;
    } else if (auto x = parse_number(v)) {
        out.data = *x;
    } else if (v.size() >= 2 && v.front() == '[' && v.back() == ']') {
        const auto items = split_items(trim(v.substr(1, v.size() - 2)));
        std::vector<std::string> strings;
        std::vector<double> numbers;
        for (const auto item : items) {
            if (auto s = parse_string(item)) {
                strings.push_back(*s);
            } else if (auto x = parse_number(item)) {
                numbers.push_back(*x);
            } else {
                throw ParseError(where(source, line) + ": bad array item '" + std::string(item) + "'");
            }
        }
        if (!strings.empty() && !numbers.empty()) {
            throw ParseError(where(source, line) + ": arrays must not mix strings and numbers");
        }
        if (strings.empty() && !numbers.empty()) {
            out.data = std::move(numbers);
        } else {
            out.data = std::move(strings);
        }
    } else {
        throw ParseError(where(source, line) + ": cannot parse value '" + std::string(v) + "'");
    }
    return out;
}

class Reader {
public:
    Reader(const ConfigTable& table, std::string_view source) : table_(table), source_(source) {}

    const ConfigValue* find(const std::string& key) {
        used_.insert(key);
        const auto it = table_.find(key);
        return it == table_.end() ? nullptr : &it->second;
    }

    [[noreturn]] void fail(const std::string& key, const ConfigValue& v, const std::string& expected) const {
        throw ConfigError(where(source_, v.line) + ": '" + key + "' must be " + expected);
    }

    void string(const std::string& key, std::string& out) {
        if (const auto* v = find(key)) {
            const auto* s = std::get_if<std::string>(&v->data);
            if (!s) fail(key, *v, "a quoted string");
            out = *s;
        }
    }

    void real(const std::string& key, double& out) {
        if (const auto* v = find(key)) {
            const auto* x = std::get_if<double>(&v->data);
            if (!x) fail(key, *v, "a number");
            out = *x;
        }
    }

    template <typename Int>
    void integer(const std::string& key, Int& out) {
        if (const auto* v = find(key)) {
            const auto* x = std::get_if<double>(&v->data);
            if (!x || *x < 0 || *x != std::floor(*x) || *x > 9.0e15) fail(key, *v, "a non-negative integer");
            out = static_cast<Int>(*x);
        }
    }

    void path(const std::string& key, std::filesystem::path& out, const std::filesystem::path& base) {
        std::string s;
        string(key, s);
        if (s.empty()) return;
        const std::filesystem::path p(s);
        out = p.is_absolute() ? p : base / p;
    }

    void check_unused() const {
        for (const auto& [key, v] : table_) {
            if (!used_.count(key)) throw ConfigError(where(source_, v.line) + ": unknown key '" + key + "'");
        }
    }

private:
    const ConfigTable& table_;
    std::string_view source_;
    std::set<std::string> used_;
};

}  // namespace

ConfigTable parse_config_text(std::string_view text, std::string_view source) {
    ConfigTable table;
    std::string section;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        line = trim(strip_comment(line));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ParseError(where(source, line_no) + ": unterminated section header");
            const auto name = trim(line.substr(1, line.size() - 2));
            if (!is_key(name)) throw ParseError(where(source, line_no) + ": bad section name");
            section = std::string(name);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ParseError(where(source, line_no) + ": expected key = value");
        const auto key = trim(line.substr(0, eq));
        if (!is_key(key)) throw ParseError(where(source, line_no) + ": bad key '" + std::string(key) + "'");
        const std::string full = section.empty() ? std::string(key) : section + "." + std::string(key);
        if (table.count(full)) throw ParseError(where(source, line_no) + ": duplicate key '" + full + "'");
        table.emplace(full, parse_value(trim(line.substr(eq + 1)), source, line_no));
    }
    return table;
}

const Period* RunConfig::period(std::string_view name) const {
    for (const auto& p : periods) {
        if (p.name == name) return &p;
    }
    return nullptr;
}

std::vector<Period> RunConfig::evaluation_periods() const {
    std::vector<Period> out;
    for (const auto& p : periods) {
        if (p.name != "train" && p.name != "validation") out.push_back(p);
    }
    return out;
}

void RunConfig::set_seed(std::uint64_t s) {
    seed = s;
    synth.seed = s;
    model.seed = s;
    train.shuffle_seed = s;
    cluster.seed = s;
}

RunConfig run_config_from_text(std::string_view text, const std::filesystem::path& base_dir, std::string_view source) {
    const ConfigTable table = parse_config_text(text, source);
    Reader r(table, source);
    RunConfig c;
    c.hash = fnv1a_hex(text);

    std::uint64_t seed = 1;
    r.integer("seed", seed);
    r.integer("threads", c.threads);

    r.path("paths.ridership", c.paths.ridership, base_dir);
    r.path("paths.stations", c.paths.stations, base_dir);
    r.path("paths.edges", c.paths.edges, base_dir);
    r.path("paths.manifest", c.paths.manifest, base_dir);
    r.path("paths.checkpoint", c.paths.checkpoint, base_dir);
    c.paths.output_dir = base_dir / c.paths.output_dir;
    r.path("paths.output_dir", c.paths.output_dir, base_dir);

    ServiceWindow service;
    int interval = 15;
    std::string clock;
    r.integer("data.interval_minutes", interval);
    r.string("data.service_start", clock);
    if (!clock.empty()) service.start_minute = parse_clock(clock);
    clock.clear();
    r.string("data.service_end", clock);
    if (!clock.empty()) service.end_minute = parse_clock(clock);
    if (interval <= 0 || 60 % interval != 0) throw ConfigError("data.interval_minutes must divide 60");
    if (service.start_minute > service.end_minute) throw ConfigError("data.service_start is after data.service_end");
    c.synth.interval_minutes = interval;
    c.synth.service = service;

    r.integer("synth.stations", c.synth.stations);
    r.integer("synth.days", c.synth.days);
    std::string start;
    r.string("synth.start", start);
    if (!start.empty()) c.synth.start_day = parse_date(start);
    r.real("synth.noise_sigma", c.synth.noise_sigma);
    r.real("synth.min_scale", c.synth.min_scale);
    r.real("synth.max_scale", c.synth.max_scale);
    if (const auto* v = r.find("synth.archetypes")) {
        const auto* names = std::get_if<std::vector<std::string>>(&v->data);
        if (!names || names->empty()) r.fail("synth.archetypes", *v, "a non-empty array of archetype names");
        c.synth.archetypes.clear();
        for (const auto& n : *names) c.synth.archetypes.push_back(parse_archetype(n));
    }

    std::string variant;
    r.string("model.variant", variant);
    if (!variant.empty()) c.model.variant = parse_variant(variant);
    r.integer("model.recent_len", c.model.recent_len);
    r.integer("model.historical_len", c.model.historical_len);
    r.integer("model.hidden", c.model.hidden);
    r.integer("model.kernel", c.model.kernel);
    r.integer("model.gru_layers", c.model.gru_layers);
    if (const auto* v = r.find("model.ffnn_layers")) {
        const auto* widths = std::get_if<std::vector<double>>(&v->data);
        if (!widths) r.fail("model.ffnn_layers", *v, "an array of layer widths");
        c.model.ffnn_layers.clear();
        for (double w : *widths) {
            if (w < 1 || w != std::floor(w)) r.fail("model.ffnn_layers", *v, "an array of positive integers");
            c.model.ffnn_layers.push_back(static_cast<std::size_t>(w));
        }
    }

    r.integer("train.epochs", c.train.epochs);
    r.integer("train.batch_size", c.train.batch_size);
    r.real("train.learning_rate", c.train.learning_rate);
    r.real("train.beta1", c.train.beta1);
    r.real("train.beta2", c.train.beta2);
    r.real("train.epsilon", c.train.epsilon);
    r.integer("train.patience", c.train.patience);
    r.real("train.clip_norm", c.train.clip_norm);
    c.train.validate();

    std::vector<std::pair<std::size_t, Period>> periods;
    for (const auto& [key, v] : table) {
        if (key.rfind("periods.", 0) != 0) continue;
        std::string range;
        r.string(key, range);
        periods.emplace_back(v.line, parse_period(key.substr(8), range));
    }
    std::sort(periods.begin(), periods.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [line, p] : periods) c.periods.push_back(std::move(p));
    validate_periods(c.periods, false);

    r.integer("forecast.horizon", c.forecast.horizon);
    r.integer("forecast.max_lag", c.forecast.max_lag);
    std::string fstart;
    r.string("forecast.start", fstart);
    if (!fstart.empty()) c.forecast.start = parse_timestamp(fstart);

    r.integer("cluster.k", c.cluster.k);
    r.integer("cluster.max_iter", c.cluster.max_iter);
    r.integer("cluster.restarts", c.cluster.restarts);

    r.check_unused();
    c.set_seed(seed);
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    return run_config_from_text(text, path.parent_path(), path.string());
}

std::string fnv1a_hex(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace dst
