#include "dst/checkpoint.hpp"

#include "dst/csv.hpp"
#include "dst/error.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <map>
#include <sstream>

namespace dst {

namespace {

constexpr char kMagic[8] = {'D', 'S', 'T', 'T', 'N', 'C', 'K', 'P'};

class Writer {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void raw(std::string_view s) { bytes.insert(bytes.end(), s.begin(), s.end()); }
    void text(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s);
    }

    std::vector<std::uint8_t> bytes;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string text() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    [[nodiscard]] bool done() const noexcept { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw IntegrityError("checkpoint payload is truncated");
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
    return static_cast<std::uint32_t>(crc);
}

std::multimap<std::string, std::string> parse_lines(const std::string& text, const char* what) {
    std::multimap<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw IntegrityError(std::string("checkpoint ") + what + ": bad line '" + line + "'");
        out.emplace(line.substr(0, eq), line.substr(eq + 1));
    }
    return out;
}

const std::string& single(const std::multimap<std::string, std::string>& kv, const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw IntegrityError("checkpoint is missing '" + key + "'");
    return it->second;
}

std::string join(const std::vector<std::string>& parts, char sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    if (s.empty()) return out;
    std::size_t start = 0;
    while (true) {
        const auto p = s.find(sep, start);
        out.push_back(s.substr(start, p - start));
        if (p == std::string::npos) break;
        start = p + 1;
    }
    return out;
}

std::size_t to_size(const std::string& s, const char* what) {
    const long long v = parse_int(s, what);
    if (v < 0) throw IntegrityError(std::string("checkpoint: negative ") + what);
    return static_cast<std::size_t>(v);
}

std::string meta_text(const CheckpointMeta& m) {
    std::string s;
    s += "epochs=" + std::to_string(m.epochs) + "\n";
    s += "final_train_loss=" + format_double(m.final_train_loss) + "\n";
    s += "best_val_loss=" + format_double(m.best_val_loss) + "\n";
    s += "seed=" + std::to_string(m.seed) + "\n";
    s += "config_hash=" + m.config_hash + "\n";
    s += "stations=" + join(m.station_ids, ',') + "\n";
    for (const auto& l : m.lineage) s += "lineage=" + l + "\n";
    return s;
}

CheckpointMeta parse_meta(const std::string& text) {
    const auto kv = parse_lines(text, "metadata");
    CheckpointMeta m;
    m.epochs = to_size(single(kv, "epochs"), "epochs");
    m.final_train_loss = parse_double(single(kv, "final_train_loss"), "final_train_loss");
    m.best_val_loss = parse_double(single(kv, "best_val_loss"), "best_val_loss");
    m.seed = std::stoull(single(kv, "seed"));
    m.config_hash = single(kv, "config_hash");
    m.station_ids = split(single(kv, "stations"), ',');
    const auto [lo, hi] = kv.equal_range("lineage");
    for (auto it = lo; it != hi; ++it) m.lineage.push_back(it->second);
    return m;
}

void write_tensor(Writer& w, const std::string& name, const Tensor& t) {
    w.text(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u64(d);
    for (double v : t.values()) w.f64(v);
}

}  // namespace

std::string model_config_text(const ModelConfig& c) {
    std::vector<std::string> widths;
    for (auto w : c.resolved_ffnn()) widths.push_back(std::to_string(w));
    std::string s;
    s += "variant=" + variant_name(c.variant) + "\n";
    s += "stations=" + std::to_string(c.stations) + "\n";
    s += "recent_len=" + std::to_string(c.recent_len) + "\n";
    s += "historical_len=" + std::to_string(c.historical_len) + "\n";
    s += "hidden=" + std::to_string(c.hidden) + "\n";
    s += "kernel=" + std::to_string(c.kernel) + "\n";
    s += "gru_layers=" + std::to_string(c.gru_layers) + "\n";
    s += "ffnn_layers=" + join(widths, ',') + "\n";
    s += "seed=" + std::to_string(c.seed) + "\n";
    return s;
}

ModelConfig parse_model_config_text(const std::string& text) {
    const auto kv = parse_lines(text, "config");
    ModelConfig c;
    c.variant = parse_variant(single(kv, "variant"));
    c.stations = to_size(single(kv, "stations"), "stations");
    c.recent_len = to_size(single(kv, "recent_len"), "recent_len");
    c.historical_len = to_size(single(kv, "historical_len"), "historical_len");
    c.hidden = to_size(single(kv, "hidden"), "hidden");
    c.kernel = to_size(single(kv, "kernel"), "kernel");
    c.gru_layers = to_size(single(kv, "gru_layers"), "gru_layers");
    for (const auto& w : split(single(kv, "ffnn_layers"), ',')) c.ffnn_layers.push_back(to_size(w, "ffnn width"));
    c.seed = std::stoull(single(kv, "seed"));
    return c;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint) {
    const ModelParams& p = checkpoint.params;
    Writer payload;
    payload.text(model_config_text(p.config));
    payload.text(meta_text(checkpoint.meta));
    std::uint32_t count = 0;
    p.visit([&](const std::string&, const Tensor&) { ++count; });
    const bool has_scaler = p.scaler.size() > 0;
    payload.u32(count + (has_scaler ? 2 : 0));
    p.visit([&](const std::string& name, const Tensor& t) { write_tensor(payload, name, t); });
    if (has_scaler) {
        write_tensor(payload, "scaler.min", Tensor({p.scaler.min.size()}, p.scaler.min));
        write_tensor(payload, "scaler.max", Tensor({p.scaler.max.size()}, p.scaler.max));
    }

    Writer out;
    out.raw(std::string_view(kMagic, sizeof kMagic));
    out.u32(kCheckpointVersion);
    out.u64(payload.bytes.size());
    out.bytes.insert(out.bytes.end(), payload.bytes.begin(), payload.bytes.end());
    out.u32(crc_of(out.bytes));
    return std::move(out.bytes);
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
    constexpr std::size_t kHeader = sizeof kMagic + 4 + 8;
    if (bytes.size() < kHeader + 4 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        throw IntegrityError("not a checkpoint file");
    }
    const auto body = bytes.first(bytes.size() - 4);
    Reader tail(bytes.last(4));
    if (tail.u32() != crc_of(body)) throw IntegrityError("checkpoint checksum mismatch");

    Reader head(body.subspan(sizeof kMagic));
    const std::uint32_t version = head.u32();
    if (version != kCheckpointVersion) {
        throw VersionError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                           std::to_string(kCheckpointVersion) + ")");
    }
    const std::uint64_t size = head.u64();
    if (size != body.size() - kHeader) throw IntegrityError("checkpoint payload size mismatch");

    Reader r(body.subspan(kHeader));
    Checkpoint c;
    const ModelConfig config = parse_model_config_text(r.text());
    c.meta = parse_meta(r.text());
    try {
        c.params = init_params(config);
    } catch (const ConfigError& e) {
        throw IntegrityError(std::string("checkpoint holds an invalid config: ") + e.what());
    }

    std::map<std::string, Tensor> stored;
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.text();
        const std::uint32_t rank = r.u32();
        if (rank > 8) throw IntegrityError("checkpoint tensor '" + name + "' has rank " + std::to_string(rank));
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = r.u64();
        const std::size_t n = shape_product(shape);
        if (n > body.size()) throw IntegrityError("checkpoint tensor '" + name + "' is larger than the file");
        std::vector<double> values(n);
        for (auto& v : values) v = r.f64();
        stored.emplace(std::move(name), Tensor(std::move(shape), std::move(values)));
    }
    if (!r.done()) throw IntegrityError("checkpoint has trailing payload bytes");

    c.params.visit([&](const std::string& name, Tensor& t) {
        const auto it = stored.find(name);
        if (it == stored.end()) throw IntegrityError("checkpoint is missing tensor '" + name + "'");
        if (it->second.shape() != t.shape()) {
            throw IntegrityError("checkpoint tensor '" + name + "' has shape " + it->second.shape_string() +
                                 ", expected " + t.shape_string());
        }
        t = std::move(it->second);
    });
    const auto mn = stored.find("scaler.min"), mx = stored.find("scaler.max");
    if (mn != stored.end() && mx != stored.end()) {
        c.params.scaler.min.assign(mn->second.values().begin(), mn->second.values().end());
        c.params.scaler.max.assign(mx->second.values().begin(), mx->second.values().end());
    }
    return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(checkpoint);
    write_text_file(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string data = read_text_file(path);
    return deserialize_checkpoint(
        std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

}  // namespace dst
