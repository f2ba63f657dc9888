#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>
#include <weakpde/pde_library.hpp>
#include <weakpde/rational_network.hpp>
#include <weakpde/weight_engine.hpp>

namespace weakpde {

// Linear system of one weak-form equation per weight function:
//   b_k = sign(a0) * sum_q quadw * D^{a0}w_k * F0(U)
//   A_{k,m} = sign(a_m) * sum_q quadw * D^{a_m}w_k * F_m(U)
// where the sign is the parity factor picked up by moving every derivative
// onto the weight.
struct WeakSystem {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  std::vector<int> row_ids;  // PreparedWeight::id per row

  Eigen::Index rows() const { return A.rows(); }
  Eigen::Index cols() const { return A.cols(); }
};

// Evaluates the surrogate at a set of (t, X) rows.
using BatchEval = std::function<Eigen::ArrayXd(const Eigen::ArrayXXd&)>;

// Per-term integration vector against a weight's quadrature nodes:
// fused[m] = sign(alpha_m) * quadw * deriv table of alpha_m, so that
// the weak integral of term m is fused[m] dot F_m(U at nodes). Index 0
// is the left-hand side, 1..M follow library.rhs order.
std::vector<Eigen::ArrayXd> fused_vectors(const LibrarySpec& lib,
                                          const PreparedWeight& w);

WeakSystem assemble_weak_system(const LibrarySpec& lib,
                                const std::vector<PreparedWeight>& weights,
                                const BatchEval& eval);

WeakSystem assemble_weak_system(const LibrarySpec& lib,
                                const std::vector<PreparedWeight>& weights,
                                const NetworkConfig& config,
                                const ParamLayout& layout,
                                const Eigen::VectorXd& params,
                                const std::string& prefix = "net.");

// residual_k = |A[k,:] xi - b_k| with masked entries of xi treated as zero;
// row k keeps the provenance of sys.row_ids[k]
Eigen::VectorXd weak_residuals(const WeakSystem& sys,
                               const CoefficientVector& xi);

// sum of squared residuals
double weak_loss(const WeakSystem& sys, const CoefficientVector& xi);

// Least-squares solve for the active coefficients; masked entries stay 0.
// With normalize_columns, columns are scaled to unit norm before solving
// and the solution is scaled back.
CoefficientVector solve_least_squares(const WeakSystem& sys,
                                      const std::vector<bool>& active,
                                      bool normalize_columns = false);

// Binary dump of (A, b, residuals, row ids) for offline inspection.
void dump_weak_system(const std::string& path, const WeakSystem& sys,
                      const Eigen::VectorXd& residuals);

}  // namespace weakpde
