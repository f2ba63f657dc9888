#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace weakpde {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Derivative multi-index: one time order plus one order per spatial axis.
struct MultiIndex {
  int t = 0;
  std::vector<int> x;

  int total() const;
  double sign() const;  // (-1)^{|alpha|}, the parity factor from integration by parts
  bool operator==(const MultiIndex& o) const { return t == o.t && x == o.x; }
};

// One library entry D^alpha (u^k); power 0 means the constant function 1.
struct LibraryTerm {
  MultiIndex alpha;
  int power = 1;

  bool operator==(const LibraryTerm& o) const {
    return alpha == o.alpha && power == o.power;
  }
};

struct LibrarySpec {
  LibraryTerm lhs;
  std::vector<LibraryTerm> rhs;

  int spatial_dim() const { return static_cast<int>(lhs.alpha.x.size()); }
  void validate() const;  // throws on duplicate rhs terms or mixed dimensions
  // Unique multi-indices over lhs + rhs, lhs's first, then in rhs order.
  std::vector<MultiIndex> multi_indices() const;
  // Position of a term's alpha within multi_indices().
  static int index_of(const std::vector<MultiIndex>& list, const MultiIndex& a);

  static LibrarySpec default_1d();
};

// Candidate coefficients xi with an active mask; masked entries must be 0.
struct CoefficientVector {
  Eigen::VectorXd values;
  std::vector<std::uint8_t> active;

  static CoefficientVector zeros(int n);
  int n_active() const;
};

LibraryTerm parse_term(const std::string& text, int spatial_dim = 1);
std::string format_term(const LibraryTerm& term);
std::string format_pde(const LibrarySpec& lib, const CoefficientVector& xi,
                       int digits = 4);

// Elementwise u^power with the 0^0 = 1 convention.
Eigen::ArrayXd monomial_eval(const Eigen::ArrayXd& u, int power);

}  // namespace weakpde
