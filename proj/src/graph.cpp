#include "dst/graph.hpp"

#include "dst/csv.hpp"
#include "dst/error.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace dst {

std::optional<std::size_t> TransitGraph::index_of(const std::string& id) const {
    if (auto it = index_.find(id); it != index_.end()) return it->second;
    return std::nullopt;
}

std::vector<std::string> TransitGraph::station_ids() const {
    std::vector<std::string> ids;
    ids.reserve(stations_.size());
    for (const auto& s : stations_) ids.push_back(s.id);
    return ids;
}

TransitGraph TransitGraph::with_self_loops(bool on) const {
    TransitGraph g = *this;
    g.self_loops_ = on;
    g.rebuild_neighbors();
    return g;
}

void TransitGraph::rebuild_neighbors() {
    neighbors_.assign(stations_.size(), {});
    for (auto [a, b] : edges_) {
        neighbors_[a].push_back(b);
        neighbors_[b].push_back(a);
    }
    for (std::size_t i = 0; i < neighbors_.size(); ++i) {
        if (self_loops_) neighbors_[i].push_back(i);
        std::sort(neighbors_[i].begin(), neighbors_[i].end());
    }
}

TransitGraph build_graph(std::vector<Station> stations, const std::vector<EdgeSpec>& edge_list, bool self_loops) {
    TransitGraph g;
    g.self_loops_ = self_loops;
    for (std::size_t i = 0; i < stations.size(); ++i) {
        const Station& s = stations[i];
        if (s.id.empty()) throw ParseError("station " + std::to_string(i) + " has an empty id");
        if (!(s.latitude >= -90.0 && s.latitude <= 90.0) || !(s.longitude >= -180.0 && s.longitude <= 180.0)) {
            throw ParseError("station '" + s.id + "' has coordinates out of range");
        }
        if (!g.index_.emplace(s.id, i).second) throw ParseError("duplicate station id '" + s.id + "'");
    }
    g.stations_ = std::move(stations);

    std::set<std::pair<std::size_t, std::size_t>> unique;
    std::vector<std::string> unknown;
    for (const auto& [from, to] : edge_list) {
        const auto a = g.index_of(from);
        const auto b = g.index_of(to);
        if (!a) unknown.push_back(from);
        if (!b) unknown.push_back(to);
        if (!a || !b) continue;
        if (*a == *b) {
            throw SpecError("edge '" + from + "'-'" + to + "' is a self-loop; use the self_loops flag instead");
        }
        unique.emplace(std::min(*a, *b), std::max(*a, *b));
    }
    if (!unknown.empty()) {
        std::string list;
        for (const auto& u : unknown) list += (list.empty() ? "" : ", ") + u;
        throw ReferenceError("edges reference unknown stations: " + list);
    }
    g.edges_.assign(unique.begin(), unique.end());
    g.rebuild_neighbors();
    return g;
}

Tensor normalize_adjacency(const TransitGraph& graph) {
    const std::size_t n = graph.size();
    if (n == 0) throw ContractError("normalize_adjacency: empty graph");
    Tensor a = Tensor::matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) a(i, i) = 1.0;
    for (auto [i, j] : graph.edges()) {
        a(i, j) = 1.0;
        a(j, i) = 1.0;
    }
    std::vector<double> inv_sqrt(n);
    for (std::size_t i = 0; i < n; ++i) {
        double degree = 0.0;
        for (std::size_t j = 0; j < n; ++j) degree += a(i, j);
        inv_sqrt[i] = 1.0 / std::sqrt(degree);
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) a(i, j) *= inv_sqrt[i] * inv_sqrt[j];
    }
    return a;
}

std::vector<Station> read_stations(const std::filesystem::path& path) {
    const CsvTable table = read_csv(path);
    require_header(table, {"station_id", "latitude", "longitude"}, path.string());
    std::vector<Station> out;
    out.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        out.push_back({row[0], parse_double(row[1], "latitude"), parse_double(row[2], "longitude")});
    }
    return out;
}

std::vector<EdgeSpec> read_edges(const std::filesystem::path& path) {
    const CsvTable table = read_csv(path);
    require_header(table, {"from_id", "to_id"}, path.string());
    std::vector<EdgeSpec> out;
    out.reserve(table.rows.size());
    for (const auto& row : table.rows) out.emplace_back(row[0], row[1]);
    return out;
}

std::string stations_csv(const std::vector<Station>& stations, const std::string& provenance) {
    std::ostringstream os;
    os << provenance << "\nstation_id,latitude,longitude\n";
    for (const auto& s : stations) {
        os << s.id << ',' << format_double(s.latitude) << ',' << format_double(s.longitude) << '\n';
    }
    return os.str();
}

std::string edges_csv(const TransitGraph& graph, const std::string& provenance) {
    std::ostringstream os;
    os << provenance << "\nfrom_id,to_id\n";
    for (auto [a, b] : graph.edges()) os << graph.stations()[a].id << ',' << graph.stations()[b].id << '\n';
    return os.str();
}

}  // namespace dst
