#include "lgcp/gmrf.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "lgcp/csv.hpp"
#include "lgcp/error.hpp"
#include "lgcp/log.hpp"

namespace lgcp {

namespace {

constexpr int kDenseScalingLimit = 2000;

// Structure built from a neighbour graph: R_jj = d_j, R_jk = -1 for k ~ j.
StructureMatrix laplacian_structure(const AdjacencyGraph& graph, StructureKind kind) {
  const int n = static_cast<int>(graph.n_units());
  StructureMatrix s;
  s.kind = kind;
  s.isolated.assign(n, false);
  std::vector<Triplet> trips;
  for (int j = 0; j < n; ++j) {
    const int d = graph.degree(j);
    if (d == 0) {
      s.isolated[j] = true;
      trips.emplace_back(j, j, 1.0);
      continue;
    }
    trips.emplace_back(j, j, static_cast<double>(d));
    for (int k : graph.neighbors[j]) trips.emplace_back(j, k, -1.0);
  }
  s.r.resize(n, n);
  s.r.setFromTriplets(trips.begin(), trips.end());
  s.r.makeCompressed();

  // Isolated nodes become their own singleton components.
  s.component.assign(n, -1);
  std::vector<int> relabel(graph.n_components, -1);
  int next = 0;
  for (int j = 0; j < n; ++j) {
    if (s.isolated[j]) {
      s.component[j] = next++;
      continue;
    }
    int& lab = relabel[graph.component[j]];
    if (lab < 0) lab = next++;
    s.component[j] = lab;
  }
  s.scaling_factor.assign(next, 1.0);
  std::vector<bool> constrained(next, false);
  for (int j = 0; j < n; ++j)
    if (!s.isolated[j]) constrained[s.component[j]] = true;
  for (int c = 0; c < next; ++c) {
    if (!constrained[c]) continue;
    LinearConstraint lc;
    lc.coefficients = Eigen::VectorXd::Zero(n);
    for (int j = 0; j < n; ++j)
      if (s.component[j] == c) lc.coefficients[j] = 1.0;
    s.constraints.push_back(std::move(lc));
  }
  s.rank_deficiency = static_cast<int>(s.constraints.size());
  return s;
}

std::vector<std::vector<int>> members_by_component(const StructureMatrix& s) {
  std::vector<std::vector<int>> out(s.n_components());
  for (int j = 0; j < s.n(); ++j) out[s.component[j]].push_back(j);
  return out;
}

SpMat extract(const SpMat& m, const std::vector<int>& idx) {
  std::vector<int> local(m.rows(), -1);
  for (int a = 0; a < static_cast<int>(idx.size()); ++a) local[idx[a]] = a;
  std::vector<Triplet> trips;
  for (int a = 0; a < static_cast<int>(idx.size()); ++a)
    for (SpMat::InnerIterator it(m, idx[a]); it; ++it)
      if (local[it.row()] >= 0) trips.emplace_back(local[it.row()], a, it.value());
  SpMat out(idx.size(), idx.size());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

// Same block with node 0 pinned: row/column 0 replaced by the unit vector.
SpMat grounded(const SpMat& block) {
  std::vector<Triplet> trips;
  for (int k = 0; k < block.outerSize(); ++k)
    for (SpMat::InnerIterator it(block, k); it; ++it)
      if (it.row() != 0 && it.col() != 0) trips.emplace_back(it.row(), it.col(), it.value());
  trips.emplace_back(0, 0, 1.0);
  SpMat out(block.rows(), block.cols());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

// Constrained variances of one intrinsic component with null space 1.
Eigen::VectorXd component_variances(const SpMat& block) {
  const int m = static_cast<int>(block.rows());
  if (m <= kDenseScalingLimit) {
    // R+ = (R + J/m)^{-1} - J/m when the null space is spanned by 1.
    Eigen::MatrixXd dense = Eigen::MatrixXd(block);
    dense.array() += 1.0 / m;
    Eigen::LLT<Eigen::MatrixXd> llt(dense);
    if (llt.info() != Eigen::Success)
      throw NumericalError("structure component is not a connected intrinsic block");
    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(m, m));
    return inv.diagonal().array() - 1.0 / m;
  }
  // Pin node 0 (G = grounded inverse, zero in row/col 0), then centre:
  // var_i = G_ii - 2 (G1)_i / m + 1'G1 / m^2.
  const SparseCholesky chol(grounded(block));
  const Eigen::VectorXd gd = chol.selected_inverse().diagonal();
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(m);
  ones[0] = 0.0;
  Eigen::VectorXd g1 = chol.solve(ones);
  g1[0] = 0.0;
  Eigen::VectorXd diag = gd;
  diag[0] = 0.0;
  const double total = g1.sum();
  return diag.array() - 2.0 * g1.array() / m + total / (static_cast<double>(m) * m);
}

}  // namespace

const char* to_string(StructureKind kind) {
  switch (kind) {
    case StructureKind::Besag: return "besag";
    case StructureKind::Rw1: return "rw1";
    case StructureKind::Iid: return "iid";
  }
  return "?";
}

double StructureMatrix::quadratic_form(const Eigen::VectorXd& x) const { return x.dot(r * x); }

Eigen::MatrixXd StructureMatrix::constraint_matrix() const {
  Eigen::MatrixXd c(constraints.size(), n());
  for (std::size_t i = 0; i < constraints.size(); ++i) c.row(i) = constraints[i].coefficients;
  return c;
}

StructureMatrix besag_structure(const AdjacencyGraph& graph) {
  if (graph.n_units() < 2) throw DataError("Besag structure needs at least 2 units");
  StructureMatrix s = laplacian_structure(graph, StructureKind::Besag);
  int n_isolated = 0;
  for (bool b : s.isolated) n_isolated += b ? 1 : 0;
  if (n_isolated > 0)
    log::warning(std::to_string(n_isolated) +
                 " isolated unit(s) have no neighbours; modelled as independent effects");
  return s;
}

StructureMatrix rw1_structure(int k) {
  if (k < 2) throw DataError("RW1 structure needs at least 2 classes");
  std::vector<std::int64_t> ids(k);
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < k; ++i) ids[i] = i + 1;
  for (int i = 0; i + 1 < k; ++i) edges.emplace_back(i, i + 1);
  return laplacian_structure(AdjacencyGraph::from_edges(ids, edges), StructureKind::Rw1);
}

StructureMatrix iid_structure(int k) {
  if (k < 1) throw DataError("iid structure needs at least 1 level");
  StructureMatrix s;
  s.kind = StructureKind::Iid;
  s.r.resize(k, k);
  s.r.setIdentity();
  s.component.resize(k);
  for (int j = 0; j < k; ++j) s.component[j] = j;
  s.isolated.assign(k, true);
  s.scaling_factor.assign(k, 1.0);
  return s;
}

Conditional full_conditional(const StructureMatrix& s, int j, const Eigen::VectorXd& x, double tau) {
  double diag = 0.0, off = 0.0;
  for (SpMat::InnerIterator it(s.r, j); it; ++it) {
    if (it.row() == j)
      diag = it.value();
    else
      off += it.value() * x[it.row()];
  }
  if (!(diag > 0)) throw NumericalError("node has zero precision");
  return {-off / diag, 1.0 / (tau * diag)};
}

Eigen::VectorXd constrained_marginal_variances(const StructureMatrix& s) {
  Eigen::VectorXd var(s.n());
  for (const auto& members : members_by_component(s)) {
    if (members.size() == 1 && s.isolated[members[0]]) {
      var[members[0]] = 1.0 / s.r.coeff(members[0], members[0]);
      continue;
    }
    const Eigen::VectorXd v = component_variances(extract(s.r, members));
    for (std::size_t a = 0; a < members.size(); ++a) var[members[a]] = v[a];
  }
  return var;
}

StructureMatrix scale_structure(const StructureMatrix& s) {
  StructureMatrix out = s;
  out.scaled = true;
  std::fill(out.scaling_factor.begin(), out.scaling_factor.end(), 1.0);
  if (!s.intrinsic()) return out;

  std::vector<double> node_factor(s.n(), 1.0);
  const auto comps = members_by_component(s);
  for (std::size_t c = 0; c < comps.size(); ++c) {
    const auto& members = comps[c];
    if (s.isolated[members[0]]) continue;
    if (members.size() == 1) {
      log::warning("component of size 1 skipped during scaling");
      continue;
    }
    const Eigen::VectorXd v = component_variances(extract(s.r, members));
    const double log_gm = v.array().log().mean();
    const double factor = std::exp(log_gm);
    if (!std::isfinite(factor) || !(factor > 0))
      throw NumericalError("scaling produced a non-finite factor");
    out.scaling_factor[c] = factor;
    for (int j : members) node_factor[j] = factor;
  }
  // R <- sigma_ref^2 * R per component; components never share entries.
  for (int k = 0; k < out.r.outerSize(); ++k)
    for (SpMat::InnerIterator it(out.r, k); it; ++it) it.valueRef() *= node_factor[it.col()];
  return out;
}

double log_pseudo_determinant(const StructureMatrix& s) {
  double total = 0.0;
  for (const auto& members : members_by_component(s)) {
    if (members.size() == 1) {
      total += std::log(s.r.coeff(members[0], members[0]));
      continue;
    }
    // Product of nonzero eigenvalues = m * (any diagonal cofactor).
    const SpMat block = extract(s.r, members);
    const SparseCholesky chol(grounded(block));
    total += std::log(static_cast<double>(members.size())) + chol.log_determinant();
  }
  return total;
}

void correct_to_constraints(const std::vector<LinearConstraint>& constraints, Eigen::VectorXd& x) {
  if (constraints.empty()) return;
  const int m = static_cast<int>(constraints.size());
  Eigen::MatrixXd c(m, x.size());
  Eigen::VectorXd e(m);
  for (int i = 0; i < m; ++i) {
    c.row(i) = constraints[i].coefficients;
    e[i] = constraints[i].target;
  }
  const Eigen::MatrixXd cct = c * c.transpose();
  x -= c.transpose() * cct.ldlt().solve(c * x - e);
}

Eigen::VectorXd sample_constrained(const StructureMatrix& s, double tau, std::uint64_t seed) {
  if (!(tau > 0)) throw DataError("precision must be positive");
  const int n = s.n();
  // Pin the first node of every intrinsic component.
  std::vector<bool> pinned(n, false);
  std::vector<bool> seen(s.n_components(), false);
  for (int j = 0; j < n; ++j) {
    if (s.isolated[j] || seen[s.component[j]]) continue;
    seen[s.component[j]] = true;
    pinned[j] = true;
  }
  std::vector<Triplet> trips;
  for (int k = 0; k < s.r.outerSize(); ++k)
    for (SpMat::InnerIterator it(s.r, k); it; ++it)
      if (!pinned[it.row()] && !pinned[it.col()]) trips.emplace_back(it.row(), it.col(), tau * it.value());
  for (int j = 0; j < n; ++j)
    if (pinned[j]) trips.emplace_back(j, j, 1.0);
  SpMat q(n, n);
  q.setFromTriplets(trips.begin(), trips.end());

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(n);
  for (int j = 0; j < n; ++j) z[j] = normal(rng);

  Eigen::VectorXd x;
  try {
    x = SparseCholesky(q).sample_transform(z);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("sampling failed (") + std::to_string(s.n_components()) +
                         " components, " + std::to_string(n) + " nodes): " + e.what());
  }
  for (int j = 0; j < n; ++j)
    if (pinned[j]) x[j] = 0.0;
  correct_to_constraints(s.constraints, x);
  return x;
}

std::string format_coo(const SpMat& m) {
  std::ostringstream out;
  out << "row,col,value\n";
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it)
      out << it.row() << ',' << it.col() << ',' << csv::format_double(it.value()) << '\n';
  return out.str();
}

}  // namespace lgcp
