#include "lgcp/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include "lgcp/error.hpp"

namespace lgcp {

std::vector<CovariateSpec> ModelSpec::covariate_specs() const {
  std::vector<CovariateSpec> out;
  for (const auto& c : linear) out.push_back({c, CovariateRole::Linear, 0});
  for (const auto& t : rw1) out.push_back({t.covariate, CovariateRole::BinnedRw1, t.bins});
  for (const auto& c : iid) out.push_back({c, CovariateRole::CategoricalIid, 0});
  return out;
}

TableSchema ModelSpec::schema(const std::vector<std::string>& extra_partitions) const {
  TableSchema s;
  s.covariates = covariate_specs();
  if (besag) s.partitions.push_back(*besag);
  for (const auto& p : extra_partitions)
    if (std::find(s.partitions.begin(), s.partitions.end(), p) == s.partitions.end())
      s.partitions.push_back(p);
  return s;
}

std::vector<std::string> ModelSpec::effect_names() const {
  std::vector<std::string> out;
  if (intercept) out.emplace_back("(Intercept)");
  for (const auto& c : linear) out.push_back(c);
  if (besag) out.push_back(*besag);
  for (const auto& t : rw1) out.push_back(t.covariate);
  for (const auto& c : iid) out.push_back(c);
  return out;
}

void ModelSpec::validate() const {
  const auto names = effect_names();
  std::set<std::string> seen;
  for (const auto& n : names)
    if (!seen.insert(n).second) throw ConfigError("effect '" + n + "' declared twice");
  if (names.empty()) throw ConfigError("model has no effects");
  for (const auto& t : rw1)
    if (t.bins < 2) throw ConfigError("rw1 effect '" + t.covariate + "' needs >= 2 bins");
  if (!(pc_median > 0)) throw ConfigError("pc_median must be positive");
  for (const auto& [k, v] : pc_median_override) {
    if (!seen.count(k)) throw ConfigError("pc_median override for unknown effect '" + k + "'");
    if (!(v > 0)) throw ConfigError("pc_median for '" + k + "' must be positive");
  }
  if (!(fixed_effect_precision > 0)) throw ConfigError("fixed effect precision must be positive");
  if (!(grid_spacing > 0)) throw ConfigError("grid spacing must be positive");
}

double PCPrior::rate() const { return std::numbers::ln2 / median; }

const LatentBlock* LatentLayout::find_block(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return &b;
  return nullptr;
}

const LatentBlock& LatentLayout::block(const std::string& name) const {
  const auto* b = find_block(name);
  if (!b) throw ConfigError("no latent block named '" + name + "'");
  return *b;
}

const LatentBlock* LatentLayout::besag_block() const {
  for (const auto& b : blocks)
    if (b.kind == BlockKind::Besag) return &b;
  return nullptr;
}

std::vector<PCPrior> LatentLayout::priors() const {
  std::vector<PCPrior> out;
  for (const auto& h : hypers) out.push_back(h.prior);
  return out;
}

Eigen::MatrixXd LatentLayout::constraint_matrix() const {
  Eigen::MatrixXd c(constraints.size(), dim);
  for (std::size_t i = 0; i < constraints.size(); ++i) c.row(i) = constraints[i].coefficients;
  return c;
}

namespace {

LatentBlock make_block(std::string name, BlockKind kind) {
  LatentBlock b;
  b.name = std::move(name);
  b.kind = kind;
  return b;
}

}  // namespace

SpMat select_rows(const SpMat& design, std::span<const std::size_t> rows) {
  Eigen::SparseMatrix<double, Eigen::RowMajor> r(design);
  std::vector<Triplet> trips;
  for (std::size_t a = 0; a < rows.size(); ++a)
    for (decltype(r)::InnerIterator it(r, static_cast<int>(rows[a])); it; ++it)
      trips.emplace_back(static_cast<int>(a), it.col(), it.value());
  SpMat out(static_cast<int>(rows.size()), design.cols());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

LatentLayout assemble_layout(const ModelSpec& spec, const PixelTable& table,
                             std::optional<std::span<const std::size_t>> training_rows) {
  spec.validate();
  const std::size_t n = table.size();
  if (n == 0) throw DataError("empty pixel table");
  std::vector<std::size_t> train;
  if (training_rows) {
    train.assign(training_rows->begin(), training_rows->end());
  } else {
    train.resize(n);
    std::iota(train.begin(), train.end(), std::size_t{0});
  }
  const PixelTable train_table = table.subset(train);

  LatentLayout layout;
  layout.fixed_effect_precision = spec.fixed_effect_precision;

  PixelTable work = table;
  if (spec.standardize && !spec.linear.empty()) {
    std::vector<CovariateSpec> lin;
    for (const auto& c : spec.linear) lin.push_back({c, CovariateRole::Linear, 0});
    layout.standardization = standardize_covariates(train_table, lin).params;
    work = apply_standardization(table, layout.standardization);
  }

  std::vector<Triplet> trips;
  int offset = 0;
  auto add_block = [&](LatentBlock b) {
    b.offset = offset;
    offset += b.length;
    layout.blocks.push_back(std::move(b));
    return static_cast<int>(layout.blocks.size()) - 1;
  };
  auto median_for = [&](const std::string& name) {
    auto it = spec.pc_median_override.find(name);
    return it == spec.pc_median_override.end() ? spec.pc_median : it->second;
  };
  auto add_random = [&](LatentBlock b, StructureMatrix s) {
    b.structure = s.intrinsic() ? scale_structure(s) : std::move(s);
    b.log_pdet = log_pseudo_determinant(b.structure);
    b.hyper = static_cast<int>(layout.hypers.size());
    const std::string name = b.name;
    const int idx = add_block(std::move(b));
    layout.hypers.push_back({name, idx, PCPrior{median_for(name)}});
    return idx;
  };

  if (spec.intercept) {
    LatentBlock b = make_block("(Intercept)", BlockKind::Intercept);
    b.length = 1;
    b.labels = {"(Intercept)"};
    const int idx = add_block(std::move(b));
    const int col = layout.blocks[idx].offset;
    for (std::size_t i = 0; i < n; ++i) trips.emplace_back(static_cast<int>(i), col, 1.0);
  }
  for (const auto& name : spec.linear) {
    const auto& values = work.covariate(name);
    LatentBlock b = make_block(name, BlockKind::Linear);
    b.length = 1;
    b.labels = {name};
    const int col = layout.blocks[add_block(std::move(b))].offset;
    for (std::size_t i = 0; i < n; ++i)
      if (values[i] != 0.0) trips.emplace_back(static_cast<int>(i), col, values[i]);
  }
  if (spec.besag) {
    const MappingPartition part = make_partition(table, *spec.besag);
    AdjacencyGraph graph = spec.besag_edge_list.empty()
                               ? build_adjacency(table, part, GridGeometry{spec.grid_spacing})
                               : read_edge_list(spec.besag_edge_list, part.unit_ids);
    LatentBlock b = make_block(*spec.besag, BlockKind::Besag);
    b.length = static_cast<int>(part.n_units());
    b.unit_ids = part.unit_ids;
    for (auto id : part.unit_ids) b.labels.push_back(std::to_string(id));
    const int idx = add_random(std::move(b), besag_structure(graph));
    layout.graph = std::move(graph);
    const int off = layout.blocks[idx].offset;
    for (std::size_t i = 0; i < n; ++i) trips.emplace_back(static_cast<int>(i), off + part.unit_of_row[i], 1.0);
  }
  for (const auto& term : spec.rw1) {
    const Binning bins = bin_equidistant(train_table.covariate(term.covariate), term.bins);
    const auto classes = apply_bins(table.covariate(term.covariate), bins.edges);
    LatentBlock b = make_block(term.covariate, BlockKind::Rw1);
    b.length = term.bins;
    b.bin_edges = bins.edges;
    for (int c = 1; c <= term.bins; ++c) b.labels.push_back(std::to_string(c));
    const int idx = add_random(std::move(b), rw1_structure(term.bins));
    const int off = layout.blocks[idx].offset;
    for (std::size_t i = 0; i < n; ++i) trips.emplace_back(static_cast<int>(i), off + classes[i] - 1, 1.0);
  }
  for (const auto& name : spec.iid) {
    const auto& labels = table.labels(name);
    std::vector<std::string> levels(labels.begin(), labels.end());
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    LatentBlock b = make_block(name, BlockKind::Iid);
    b.length = static_cast<int>(levels.size());
    b.labels = levels;
    const int idx = add_random(std::move(b), iid_structure(static_cast<int>(levels.size())));
    const int off = layout.blocks[idx].offset;
    for (std::size_t i = 0; i < n; ++i) {
      const auto pos = std::lower_bound(levels.begin(), levels.end(), labels[i]) - levels.begin();
      trips.emplace_back(static_cast<int>(i), off + static_cast<int>(pos), 1.0);
    }
  }

  layout.dim = offset;
  layout.design.resize(static_cast<int>(n), layout.dim);
  layout.design.setFromTriplets(trips.begin(), trips.end());
  layout.design.makeCompressed();

  for (const auto& b : layout.blocks) {
    if (!b.random()) continue;
    for (const auto& c : b.structure.constraints) {
      LinearConstraint full;
      full.coefficients = Eigen::VectorXd::Zero(layout.dim);
      full.coefficients.segment(b.offset, b.length) = c.coefficients;
      full.target = c.target;
      layout.constraints.push_back(std::move(full));
    }
  }
  return layout;
}

PriorPrecision prior_precision(const LatentLayout& layout, const Eigen::VectorXd& theta) {
  if (theta.size() != layout.n_hyper())
    throw NumericalError("theta has " + std::to_string(theta.size()) + " entries, model needs " +
                         std::to_string(layout.n_hyper()));
  PriorPrecision p;
  std::vector<Triplet> trips;
  const double fixed = layout.fixed_effect_precision;
  for (const auto& b : layout.blocks) {
    if (!b.random()) {
      for (int i = 0; i < b.length; ++i) trips.emplace_back(b.offset + i, b.offset + i, fixed);
      p.log_det += b.length * std::log(fixed);
      p.rank += b.length;
      continue;
    }
    const double log_tau = theta[b.hyper];
    const double tau = std::exp(log_tau);
    const SpMat& r = b.structure.r;
    for (int k = 0; k < r.outerSize(); ++k)
      for (SpMat::InnerIterator it(r, k); it; ++it)
        trips.emplace_back(b.offset + it.row(), b.offset + it.col(), tau * it.value());
    const int rank = b.length - b.structure.rank_deficiency;
    p.log_det += rank * log_tau + b.log_pdet;
    p.rank += rank;
  }
  p.q.resize(layout.dim, layout.dim);
  p.q.setFromTriplets(trips.begin(), trips.end());
  p.q.makeCompressed();
  return p;
}

double pc_prior_logdensity(const Eigen::VectorXd& theta, std::span<const PCPrior> priors) {
  if (static_cast<std::size_t>(theta.size()) != priors.size())
    throw NumericalError("theta and prior list differ in length");
  double total = 0.0;
  for (std::size_t k = 0; k < priors.size(); ++k) {
    const double lambda = priors[k].rate();
    const double sigma = std::exp(-0.5 * theta[k]);
    // |d sigma / d theta| = sigma / 2
    total += std::log(lambda) - lambda * sigma - std::numbers::ln2 - 0.5 * theta[k];
  }
  return total;
}

}  // namespace lgcp
