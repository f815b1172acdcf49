#pragma once

#include "dst/tensor.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dst {

struct Station {
    std::string id;
    double latitude = 0.0;
    double longitude = 0.0;
};

using EdgeSpec = std::pair<std::string, std::string>;

/**
 * Undirected station network. Node ids are positions in the station list.
 * Self-loops are never stored as edges; the flag adds i to its own
 * neighbourhood instead.
 */
class TransitGraph {
public:
    TransitGraph() = default;

    [[nodiscard]] std::size_t size() const noexcept { return stations_.size(); }
    [[nodiscard]] const std::vector<Station>& stations() const noexcept { return stations_; }
    /// Unique undirected edges as (low, high) index pairs, sorted.
    [[nodiscard]] const std::vector<std::pair<std::size_t, std::size_t>>& edges() const noexcept { return edges_; }
    [[nodiscard]] std::size_t edge_count() const noexcept { return edges_.size(); }
    /// Sorted neighbourhood N(i), including i itself when self-loops are on.
    [[nodiscard]] const std::vector<std::size_t>& neighbors(std::size_t i) const { return neighbors_.at(i); }
    [[nodiscard]] bool self_loops() const noexcept { return self_loops_; }
    [[nodiscard]] std::optional<std::size_t> index_of(const std::string& id) const;
    [[nodiscard]] std::vector<std::string> station_ids() const;

    /// Same topology with the self-loop flag replaced.
    [[nodiscard]] TransitGraph with_self_loops(bool on) const;

    friend TransitGraph build_graph(std::vector<Station> stations, const std::vector<EdgeSpec>& edge_list,
                                    bool self_loops);

private:
    void rebuild_neighbors();

    std::vector<Station> stations_;
    std::vector<std::pair<std::size_t, std::size_t>> edges_;
    std::vector<std::vector<std::size_t>> neighbors_;
    std::unordered_map<std::string, std::size_t> index_;
    bool self_loops_ = true;
};

/**
 * Validates stations (unique ids, coordinate ranges) and edges (known
 * endpoints, no i-i pairs) and deduplicates undirected edges.
 */
[[nodiscard]] TransitGraph build_graph(std::vector<Station> stations, const std::vector<EdgeSpec>& edge_list,
                                       bool self_loops = true);

/// D^-1/2 (A + I) D^-1/2 as a dense N x N matrix.
[[nodiscard]] Tensor normalize_adjacency(const TransitGraph& graph);

[[nodiscard]] std::vector<Station> read_stations(const std::filesystem::path& path);
[[nodiscard]] std::vector<EdgeSpec> read_edges(const std::filesystem::path& path);
[[nodiscard]] std::string stations_csv(const std::vector<Station>& stations, const std::string& provenance);
[[nodiscard]] std::string edges_csv(const TransitGraph& graph, const std::string& provenance);

}  // namespace dst
