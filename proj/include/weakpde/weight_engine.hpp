#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>
#include <weakpde/domain.hpp>
#include <weakpde/pde_library.hpp>

namespace weakpde {

// n-th derivative of the compactly supported bump
//   w(s) = exp(beta r^2 / ((s-s0)^2 - r^2) + beta)   for |s-s0| < r,
//   w(s) = 0                                          otherwise,
// computed by truncated power-series (Taylor-mode) arithmetic, so every order
// is exact up to roundoff. Returns exactly 0 for |s-s0| >= r at every order.
double bump_1d(double s, double s0, double r, double beta, int order);

enum class WeightKind { random, targeted };

// Separable bump over (t, x): one radius shared by all axes.
struct WeightFunction {
  Eigen::VectorXd center;  // (t0, x0, ...)
  double radius = 1.0;
  double beta = 5.0;
  WeightKind kind = WeightKind::random;

  // Ball must fit inside the domain (open-ball semantics: touching is fine).
  void validate(const DomainBox& domain) const;
};

// D^alpha w at a point: product of per-axis bump derivatives.
double weight_value(const WeightFunction& wf, const MultiIndex& alpha,
                    const Eigen::VectorXd& point);

// Uniform tensor grid with trapezoid product weights (h/2 at the ends).
struct QuadGrid {
  std::vector<Eigen::VectorXd> axis_nodes;
  Eigen::ArrayXd weights;  // flattened, first axis slowest

  Eigen::Index size() const { return weights.size(); }
};
QuadGrid make_quad_grid(const DomainBox& box, int nodes_per_axis);

// Reference weight whose derivative tables every sampled weight reuses via an
// affine change of variables. Tables cover exactly the library's multi-indices.
struct MasterWeight {
  WeightFunction wf;
  int nodes_per_axis = 0;
  std::vector<MultiIndex> alphas;
  std::vector<Eigen::VectorXd> axis_nodes;  // full grid, per axis
  Eigen::ArrayXd quadw;                     // full grid trapezoid weights
  std::vector<Eigen::ArrayXd> tables;       // full grid, one per alpha
  // The boundary ring carries exact zeros at every order, so assembly uses
  // interior nodes only; offsets are node - center, ready for affine mapping.
  Eigen::ArrayXXd interior_offsets;
  Eigen::ArrayXd interior_quadw;
  std::vector<Eigen::ArrayXd> interior_tables;
};

MasterWeight make_master(const DomainBox& domain, const LibrarySpec& lib,
                         int nodes_per_axis, std::uint64_t seed,
                         double beta = 5.0);

// One weight ready for assembly: mapped interior nodes, scaled tables.
struct PreparedWeight {
  WeightFunction wf;
  int id = -1;
  std::shared_ptr<const MasterWeight> master;
  Eigen::ArrayXXd nodes;              // interior mapped coordinates
  Eigen::ArrayXd quadw;               // x (r/r_M)^{1+d}
  std::vector<Eigen::ArrayXd> deriv;  // x (r_M/r)^{|alpha|}, per alpha
};

PreparedWeight map_from_master(std::shared_ptr<const MasterWeight> master,
                               const WeightFunction& wf, int id);

// Centers uniform over the domain interior; radius = min(r_max, distance to
// the nearest face), redrawn while below r_min. Throws if the rejection rate
// exceeds 99% over 100000 draws.
std::vector<WeightFunction> sample_random_weights(const DomainBox& domain,
                                                  int n, double r_min,
                                                  double r_max,
                                                  std::uint64_t seed);

// Human-readable dump of a weight's tables for debugging.
void dump_weight_tables(const std::string& path, const MasterWeight& master);

}  // namespace weakpde
