#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lgcp/ingest.hpp"
#include "lgcp/sparse_cholesky.hpp"

namespace lgcp {

enum class StructureKind { Besag, Rw1, Iid };

const char* to_string(StructureKind kind);

struct LinearConstraint {
  Eigen::VectorXd coefficients;
  double target = 0.0;
};

// Unit-precision structure R of a Gaussian Markov random field; the prior
// precision is tau * R. For intrinsic kinds the null space is spanned by the
// per-component indicator vectors, and each gets a sum-to-zero constraint.
struct StructureMatrix {
  StructureKind kind = StructureKind::Iid;
  SpMat r;
  int rank_deficiency = 0;
  std::vector<LinearConstraint> constraints;
  // Component label per node. Nodes flagged isolated carry an independent
  // effect (R_jj = 1) and belong to no constraint.
  std::vector<int> component;
  std::vector<bool> isolated;
  // Factor applied by the most recent scale_structure call, per component.
  std::vector<double> scaling_factor;
  bool scaled = false;

  int n() const { return static_cast<int>(r.rows()); }
  int n_components() const { return static_cast<int>(scaling_factor.size()); }
  bool intrinsic() const { return rank_deficiency > 0; }
  double quadratic_form(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd constraint_matrix() const;  // one row per constraint
};

StructureMatrix besag_structure(const AdjacencyGraph& graph);
StructureMatrix rw1_structure(int k);
StructureMatrix iid_structure(int k);

// Full conditional of node j under N(0, (tau R)^-): mean and variance.
struct Conditional {
  double mean;
  double variance;
};
Conditional full_conditional(const StructureMatrix& s, int j, const Eigen::VectorXd& x, double tau);

// Diagonal of the generalized inverse of R under its constraints.
Eigen::VectorXd constrained_marginal_variances(const StructureMatrix& s);

// Rescales each connected component so the geometric mean of its constrained
// marginal variances is 1. Components of one node are skipped.
StructureMatrix scale_structure(const StructureMatrix& s);

// Log of the product of the nonzero eigenvalues of R.
double log_pseudo_determinant(const StructureMatrix& s);

// Exact draw from N(0, (tau R)^-) restricted to the constraint set: each
// intrinsic component is sampled with one node pinned, then the sample is
// corrected onto the constraints.
Eigen::VectorXd sample_constrained(const StructureMatrix& s, double tau, std::uint64_t seed);

// x <- x - C'(CC')^{-1}(Cx - e)
void correct_to_constraints(const std::vector<LinearConstraint>& constraints, Eigen::VectorXd& x);

std::string format_coo(const SpMat& m);

}  // namespace lgcp
