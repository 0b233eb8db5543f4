#include "lgcp/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "lgcp/csv.hpp"
#include "lgcp/error.hpp"

namespace lgcp {

const char* to_string(CovariateRole role) {
  switch (role) {
    case CovariateRole::Linear: return "linear";
    case CovariateRole::BinnedRw1: return "rw1";
    case CovariateRole::CategoricalIid: return "iid";
  }
  return "?";
}

std::int64_t PixelTable::total_count() const {
  return std::accumulate(count.begin(), count.end(), std::int64_t{0});
}

namespace {

template <class Map>
const typename Map::mapped_type& lookup(const Map& m, const std::string& name, const char* what) {
  auto it = m.find(name);
  if (it == m.end()) throw DataError(std::string("unknown ") + what + " column '" + name + "'");
  return it->second;
}

template <class T>
std::vector<T> pick(const std::vector<T>& v, std::span<const std::size_t> rows) {
  std::vector<T> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(v.at(r));
  return out;
}

std::string at_line(std::size_t line) { return "line " + std::to_string(line) + ": "; }

}  // namespace

const std::vector<double>& PixelTable::covariate(const std::string& name) const {
  return lookup(continuous, name, "continuous");
}
const std::vector<std::string>& PixelTable::labels(const std::string& name) const {
  return lookup(categorical, name, "categorical");
}
const std::vector<std::int64_t>& PixelTable::membership(const std::string& name) const {
  return lookup(partitions, name, "partition");
}

PixelTable PixelTable::subset(std::span<const std::size_t> rows) const {
  PixelTable out;
  out.pixel_id = pick(pixel_id, rows);
  out.x = pick(x, rows);
  out.y = pick(y, rows);
  out.count = pick(count, rows);
  for (const auto& [k, v] : continuous) out.continuous[k] = pick(v, rows);
  for (const auto& [k, v] : categorical) out.categorical[k] = pick(v, rows);
  for (const auto& [k, v] : partitions) out.partitions[k] = pick(v, rows);
  return out;
}

PixelTable parse_pixel_table(std::string_view text, const TableSchema& schema) {
  const csv::Table raw = csv::parse(text);
  auto require = [&](const std::string& name) {
    const int c = raw.column(name);
    if (c < 0) throw DataError("schema error: missing column '" + name + "'");
    return static_cast<std::size_t>(c);
  };
  const auto c_id = require("pixel_id");
  const auto c_x = require("x");
  const auto c_y = require("y");
  const auto c_count = require("count");

  PixelTable t;
  const std::size_t n = raw.rows.size();
  t.pixel_id.reserve(n);
  t.x.reserve(n);
  t.y.reserve(n);
  t.count.reserve(n);

  auto number = [&](std::size_t r, std::size_t c) {
    try {
      const double v = csv::parse_double(raw.rows[r][c]);
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite");
      return v;
    } catch (const std::invalid_argument&) {
      throw DataError(at_line(raw.line_numbers[r]) + "non-numeric value '" + raw.rows[r][c] +
                      "' in column '" + raw.header[c] + "'");
    }
  };
  auto integer = [&](std::size_t r, std::size_t c) {
    try {
      return csv::parse_int(raw.rows[r][c]);
    } catch (const std::invalid_argument&) {
      throw DataError(at_line(raw.line_numbers[r]) + "non-integer value '" + raw.rows[r][c] +
                      "' in column '" + raw.header[c] + "'");
    }
  };

  std::unordered_set<std::int64_t> seen;
  for (std::size_t r = 0; r < n; ++r) {
    const auto id = integer(r, c_id);
    if (!seen.insert(id).second)
      throw DataError(at_line(raw.line_numbers[r]) + "duplicate pixel_id " + std::to_string(id));
    const auto cnt = integer(r, c_count);
    if (cnt < 0)
      throw DataError(at_line(raw.line_numbers[r]) + "negative count " + std::to_string(cnt));
    t.pixel_id.push_back(id);
    t.x.push_back(number(r, c_x));
    t.y.push_back(number(r, c_y));
    t.count.push_back(cnt);
  }

  for (const auto& cov : schema.covariates) {
    const auto c = require(cov.name);
    if (cov.role == CovariateRole::CategoricalIid) {
      auto& col = t.categorical[cov.name];
      col.reserve(n);
      for (std::size_t r = 0; r < n; ++r) {
        if (raw.rows[r][c].empty())
          throw DataError(at_line(raw.line_numbers[r]) + "empty label in column '" + cov.name + "'");
        col.push_back(raw.rows[r][c]);
      }
    } else {
      auto& col = t.continuous[cov.name];
      col.reserve(n);
      for (std::size_t r = 0; r < n; ++r) col.push_back(number(r, c));
    }
  }
  for (const auto& part : schema.partitions) {
    const auto c = require(part);
    auto& col = t.partitions[part];
    col.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
      if (raw.rows[r][c].empty())
        throw DataError(at_line(raw.line_numbers[r]) + "missing membership in '" + part + "'");
      col.push_back(integer(r, c));
    }
  }
  return t;
}

PixelTable load_pixel_table(const std::filesystem::path& path, const TableSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_pixel_table(ss.str(), schema);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string format_pixel_table(const PixelTable& t) {
  std::ostringstream out;
  out << "pixel_id,x,y,count";
  for (const auto& [k, _] : t.continuous) out << ',' << k;
  for (const auto& [k, _] : t.categorical) out << ',' << k;
  for (const auto& [k, _] : t.partitions) out << ',' << k;
  out << '\n';
  for (std::size_t i = 0; i < t.size(); ++i) {
    out << t.pixel_id[i] << ',' << csv::format_double(t.x[i]) << ','
        << csv::format_double(t.y[i]) << ',' << t.count[i];
    for (const auto& [_, v] : t.continuous) out << ',' << csv::format_double(v[i]);
    for (const auto& [_, v] : t.categorical) out << ',' << v[i];
    for (const auto& [_, v] : t.partitions) out << ',' << v[i];
    out << '\n';
  }
  return out.str();
}

void write_pixel_table(const std::filesystem::path& path, const PixelTable& table,
                       const std::string& provenance) {
  std::string body = provenance.empty() ? std::string{} : "# " + provenance + "\n";
  body += format_pixel_table(table);
  csv::write_atomic(path, body);
}

StandardizedTable standardize_covariates(const PixelTable& table,
                                         const std::vector<CovariateSpec>& spec) {
  StandardizedTable out{table, {}};
  for (const auto& cov : spec) {
    if (cov.role != CovariateRole::Linear) continue;
    const auto& col = table.covariate(cov.name);
    const double n = static_cast<double>(col.size());
    if (col.size() < 2) throw DataError("covariate '" + cov.name + "' needs at least 2 rows");
    const double mean = std::accumulate(col.begin(), col.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : col) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    if (!(sd > 0.0) || sd <= 1e-14 * std::max(1.0, std::abs(mean)))
      throw DataError("zero-variance covariate '" + cov.name + "'");
    out.params.push_back({cov.name, mean, sd});
  }
  out.table = apply_standardization(table, out.params);
  return out;
}

PixelTable apply_standardization(const PixelTable& table,
                                 const std::vector<Standardization>& params) {
  PixelTable out = table;
  for (const auto& p : params) {
    auto& col = out.continuous.at(p.name);
    for (double& v : col) v = (v - p.mean) / p.sd;
  }
  return out;
}

PixelTable destandardize(const PixelTable& table, const std::vector<Standardization>& params) {
  PixelTable out = table;
  for (const auto& p : params) {
    auto& col = out.continuous.at(p.name);
    for (double& v : col) v = v * p.sd + p.mean;
  }
  return out;
}

std::vector<int> apply_bins(std::span<const double> column, std::span<const double> edges) {
  const int k = static_cast<int>(edges.size()) - 1;
  std::vector<int> classes;
  classes.reserve(column.size());
  // Search the left edges only, so the maximum lands in class k.
  const auto first = edges.begin();
  const auto last = edges.begin() + k;
  for (double v : column) {
    int c = static_cast<int>(std::upper_bound(first, last, v) - first);
    classes.push_back(std::clamp(c, 1, k));
  }
  return classes;
}

Binning bin_equidistant(std::span<const double> column, int k) {
  if (k < 2) throw DataError("bin count must be >= 2");
  if (column.empty()) throw DataError("cannot bin an empty column");
  const auto [lo_it, hi_it] = std::minmax_element(column.begin(), column.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(lo < hi)) throw DataError("cannot bin a constant column");
  Binning b;
  b.edges.resize(k + 1);
  const double width = (hi - lo) / k;
  for (int i = 0; i < k; ++i) b.edges[i] = lo + i * width;
  b.edges[k] = hi;
  b.classes = apply_bins(column, b.edges);
  return b;
}

int MappingPartition::index_of(std::int64_t unit_id) const {
  auto it = std::lower_bound(unit_ids.begin(), unit_ids.end(), unit_id);
  if (it == unit_ids.end() || *it != unit_id) return -1;
  return static_cast<int>(it - unit_ids.begin());
}

std::vector<std::size_t> MappingPartition::unit_sizes() const {
  std::vector<std::size_t> sizes(unit_ids.size(), 0);
  for (int u : unit_of_row) ++sizes[u];
  return sizes;
}

MappingPartition make_partition(const PixelTable& table, const std::string& name) {
  const auto& col = table.membership(name);
  MappingPartition p;
  p.name = name;
  p.unit_ids = col;
  std::sort(p.unit_ids.begin(), p.unit_ids.end());
  p.unit_ids.erase(std::unique(p.unit_ids.begin(), p.unit_ids.end()), p.unit_ids.end());
  p.unit_of_row.reserve(col.size());
  for (auto id : col) p.unit_of_row.push_back(p.index_of(id));
  return p;
}

MappingPartition pixel_partition(const PixelTable& table) {
  MappingPartition p;
  p.name = "pixel";
  p.unit_ids = table.pixel_id;
  std::sort(p.unit_ids.begin(), p.unit_ids.end());
  p.unit_of_row.reserve(table.size());
  for (auto id : table.pixel_id) p.unit_of_row.push_back(p.index_of(id));
  return p;
}

std::vector<std::pair<int, int>> AdjacencyGraph::edges() const {
  std::vector<std::pair<int, int>> out;
  for (int j = 0; j < static_cast<int>(neighbors.size()); ++j)
    for (int k : neighbors[j])
      if (j < k) out.emplace_back(j, k);
  return out;
}

std::vector<std::vector<int>> AdjacencyGraph::component_members() const {
  std::vector<std::vector<int>> out(n_components);
  for (int j = 0; j < static_cast<int>(component.size()); ++j) out[component[j]].push_back(j);
  return out;
}

AdjacencyGraph AdjacencyGraph::from_edges(std::vector<std::int64_t> unit_ids,
                                          const std::vector<std::pair<int, int>>& edges) {
  AdjacencyGraph g;
  const int n = static_cast<int>(unit_ids.size());
  g.unit_ids = std::move(unit_ids);
  g.neighbors.assign(n, {});
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n || b >= n) throw DataError("edge references unknown unit");
    if (a == b) continue;
    g.neighbors[a].push_back(b);
    g.neighbors[b].push_back(a);
  }
  for (auto& nb : g.neighbors) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  // Label components in node order so labels are deterministic.
  g.component.assign(n, -1);
  int label = 0;
  for (int s = 0; s < n; ++s) {
    if (g.component[s] >= 0) continue;
    std::queue<int> q;
    q.push(s);
    g.component[s] = label;
    while (!q.empty()) {
      const int j = q.front();
      q.pop();
      for (int k : g.neighbors[j])
        if (g.component[k] < 0) {
          g.component[k] = label;
          q.push(k);
        }
    }
    ++label;
  }
  g.n_components = label;
  return g;
}

AdjacencyGraph build_adjacency(const PixelTable& table, const MappingPartition& partition,
                               const GridGeometry& geometry) {
  if (!(geometry.spacing > 0)) throw DataError("grid spacing must be positive");
  if (partition.unit_of_row.size() != table.size())
    throw DataError("partition '" + partition.name + "' does not match the table");
  const std::size_t n = table.size();
  std::unordered_map<std::int64_t, int> cell_unit;  // packed (ix, iy) -> unit index
  cell_unit.reserve(n * 2);
  auto to_grid = [&](double v, std::size_t row) {
    const double g = v / geometry.spacing;
    const double r = std::round(g);
    if (std::abs(g - r) > 1e-6)
      throw DataError("pixel row " + std::to_string(row + 1) + " is off the grid");
    return static_cast<std::int64_t>(r);
  };
  constexpr std::int64_t kShift = 1LL << 31;
  auto key = [&](std::int64_t ix, std::int64_t iy) { return (ix + kShift) * (2 * kShift) + (iy + kShift); };
  std::vector<std::pair<std::int64_t, std::int64_t>> cells(n);
  for (std::size_t i = 0; i < n; ++i) {
    cells[i] = {to_grid(table.x[i], i), to_grid(table.y[i], i)};
    if (!cell_unit.emplace(key(cells[i].first, cells[i].second), partition.unit_of_row[i]).second)
      throw DataError("two pixels share grid cell at row " + std::to_string(i + 1));
  }
  std::set<std::pair<int, int>> edge_set;
  for (std::size_t i = 0; i < n; ++i) {
    const int u = partition.unit_of_row[i];
    // Right and up neighbours cover every shared edge exactly once.
    for (auto [dx, dy] : {std::pair{1, 0}, std::pair{0, 1}}) {
      auto it = cell_unit.find(key(cells[i].first + dx, cells[i].second + dy));
      if (it == cell_unit.end() || it->second == u) continue;
      edge_set.emplace(std::min(u, it->second), std::max(u, it->second));
    }
  }
  return AdjacencyGraph::from_edges(partition.unit_ids, {edge_set.begin(), edge_set.end()});
}

std::string format_edge_list(const AdjacencyGraph& graph) {
  std::ostringstream out;
  out << "unit_a,unit_b\n";
  for (auto [a, b] : graph.edges()) out << graph.unit_ids[a] << ',' << graph.unit_ids[b] << '\n';
  return out.str();
}

AdjacencyGraph read_edge_list(const std::filesystem::path& path,
                              const std::vector<std::int64_t>& unit_ids) {
  const csv::Table t = csv::read(path);
  if (t.header.size() != 2) throw DataError(path.string() + ": edge list needs two columns");
  std::vector<std::int64_t> sorted = unit_ids;
  std::sort(sorted.begin(), sorted.end());
  auto index = [&](const std::string& s, std::size_t line) {
    std::int64_t id = 0;
    try {
      id = csv::parse_int(s);
    } catch (const std::invalid_argument&) {
      throw DataError(path.string() + ": " + at_line(line) + "bad unit id '" + s + "'");
    }
    auto it = std::lower_bound(sorted.begin(), sorted.end(), id);
    if (it == sorted.end() || *it != id)
      throw DataError(path.string() + ": " + at_line(line) + "unknown unit " + s);
    return static_cast<int>(it - sorted.begin());
  };
  std::vector<std::pair<int, int>> edges;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const int a = index(t.rows[r][0], t.line_numbers[r]);
    const int b = index(t.rows[r][1], t.line_numbers[r]);
    if (a == b) throw DataError(path.string() + ": " + at_line(t.line_numbers[r]) + "self-loop");
    edges.emplace_back(a, b);
  }
  return AdjacencyGraph::from_edges(sorted, edges);
}

}  // namespace lgcp
