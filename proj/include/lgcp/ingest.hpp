#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace lgcp {

enum class CovariateRole { Linear, BinnedRw1, CategoricalIid };

const char* to_string(CovariateRole role);

struct CovariateSpec {
  std::string name;
  CovariateRole role = CovariateRole::Linear;
  int bins = 20;  // only meaningful for BinnedRw1
};

struct TableSchema {
  std::vector<CovariateSpec> covariates;
  std::vector<std::string> partitions;
};

// One row per pixel. Columns are keyed by name; every column has size() rows.
struct PixelTable {
  std::vector<std::int64_t> pixel_id;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<std::int64_t> count;
  std::map<std::string, std::vector<double>> continuous;
  std::map<std::string, std::vector<std::string>> categorical;
  std::map<std::string, std::vector<std::int64_t>> partitions;

  std::size_t size() const { return pixel_id.size(); }
  std::int64_t total_count() const;

  const std::vector<double>& covariate(const std::string& name) const;
  const std::vector<std::string>& labels(const std::string& name) const;
  const std::vector<std::int64_t>& membership(const std::string& name) const;

  PixelTable subset(std::span<const std::size_t> rows) const;
};

PixelTable load_pixel_table(const std::filesystem::path& path, const TableSchema& schema);
PixelTable parse_pixel_table(std::string_view text, const TableSchema& schema);
// Serializes every column; doubles are written in shortest round-trip form.
std::string format_pixel_table(const PixelTable& table);
void write_pixel_table(const std::filesystem::path& path, const PixelTable& table,
                       const std::string& provenance = {});

struct Standardization {
  std::string name;
  double mean = 0.0;
  double sd = 1.0;
};

struct StandardizedTable {
  PixelTable table;
  std::vector<Standardization> params;
};

// Centers and scales every Linear covariate by its sample mean and sd.
StandardizedTable standardize_covariates(const PixelTable& table,
                                         const std::vector<CovariateSpec>& spec);
// Applies previously recorded parameters (held-out data uses training values).
PixelTable apply_standardization(const PixelTable& table,
                                 const std::vector<Standardization>& params);
PixelTable destandardize(const PixelTable& table, const std::vector<Standardization>& params);

struct Binning {
  std::vector<int> classes;   // 1..k
  std::vector<double> edges;  // k + 1 edges, first = min, last = max
  int k() const { return static_cast<int>(edges.size()) - 1; }
};

// Equal-width classes over [min, max]; intervals are [l, r) except the last,
// which is closed.
Binning bin_equidistant(std::span<const double> column, int k);
// Assigns classes with fixed edges; values outside the range clamp to 1 or k.
std::vector<int> apply_bins(std::span<const double> column, std::span<const double> edges);

struct MappingPartition {
  std::string name;
  std::vector<std::int64_t> unit_ids;  // sorted ascending
  std::vector<int> unit_of_row;        // index into unit_ids, one per table row

  std::size_t n_units() const { return unit_ids.size(); }
  int index_of(std::int64_t unit_id) const;  // -1 when absent
  std::vector<std::size_t> unit_sizes() const;
};

MappingPartition make_partition(const PixelTable& table, const std::string& name);
// Every pixel in its own unit, keyed by pixel_id.
MappingPartition pixel_partition(const PixelTable& table);

struct AdjacencyGraph {
  std::vector<std::int64_t> unit_ids;
  std::vector<std::vector<int>> neighbors;  // sorted, symmetric, no self-loops
  std::vector<int> component;               // component label per node
  int n_components = 0;

  std::size_t n_units() const { return neighbors.size(); }
  int degree(int j) const { return static_cast<int>(neighbors[j].size()); }
  std::vector<std::pair<int, int>> edges() const;  // j < k
  std::vector<std::vector<int>> component_members() const;
  bool connected() const { return n_components <= 1; }

  static AdjacencyGraph from_edges(std::vector<std::int64_t> unit_ids,
                                   const std::vector<std::pair<int, int>>& edges);
};

struct GridGeometry {
  double spacing = 1.0;
};

// Units are neighbors iff some of their pixels share a grid edge.
AdjacencyGraph build_adjacency(const PixelTable& table, const MappingPartition& partition,
                               const GridGeometry& geometry);

std::string format_edge_list(const AdjacencyGraph& graph);
AdjacencyGraph read_edge_list(const std::filesystem::path& path,
                              const std::vector<std::int64_t>& unit_ids);

}  // namespace lgcp
