#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace weakpde {

struct AdError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Named contiguous slice of the flat parameter vector. Matrices are stored
// column-major; vectors have cols == 1.
struct ParamGroup {
  std::string name;
  int offset = 0;
  int rows = 0;
  int cols = 1;
  int size() const { return rows * cols; }
};

class ParamLayout {
 public:
  int add(const std::string& name, int rows, int cols = 1);
  const ParamGroup& group(int id) const { return groups_.at(id); }
  int group_id(const std::string& name) const;  // throws if absent
  bool has_group(const std::string& name) const;
  int n_groups() const { return static_cast<int>(groups_.size()); }
  int size() const { return total_; }
  // Checks exact size and finiteness of a candidate parameter vector.
  void validate(const Eigen::VectorXd& params) const;

 private:
  std::vector<ParamGroup> groups_;
  int total_ = 0;
};

// Records every evaluated primitive so one reverse sweep yields the gradient
// with respect to every parameter leaf. Values are computed eagerly while the
// expression is built; node ids are indices into evaluation order.
class Tape {
 public:
  Tape(const ParamLayout& layout, const Eigen::VectorXd& params);

  // leaves
  int leaf(int group);                    // whole group, shaped rows x cols
  int leaf_scalar(int group, int index);  // one entry, shaped 1 x 1
  int constant(Eigen::ArrayXXd v);
  int constant_scalar(double v);

  // elementwise primitives; operands must have equal shape or be 1 x 1
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int div(int a, int b);  // raises AdError if any |denominator| < 1e-30
  int neg(int a);
  int exp_(int a);
  int pow_int(int a, int n);  // integer power, 0^0 = 1

  // out = x * W^T + bias (row-broadcast); W is (out_dim x in_dim)
  int affine(int x, int weight_group, int bias_group);

  int sum(int a);                                    // total reduction to 1 x 1
  int weighted_sum(int a, const Eigen::ArrayXd& w);  // w dotted with column a

  const Eigen::ArrayXXd& value(int id) const { return nodes_[id].value; }
  double scalar_value(int id) const;
  int n_nodes() const { return static_cast<int>(nodes_.size()); }

  // Re-executes every recorded primitive from the same parameters and returns
  // the root's recomputed value; bit-identical to the original by construction.
  double replay(int root);

  // Accumulates seed * d(root)/d(params) into grad (layout-sized).
  void backward(int root, double seed, Eigen::VectorXd& grad);

  // Counts elementwise divisions whose |denominator| falls below the given
  // threshold (0 disables); used to monitor rational activations in training.
  void set_denominator_monitor(double threshold) { den_monitor_ = threshold; }
  long denominator_flags() const { return den_flags_; }

 private:
  enum class Op { Leaf, Const, Add, Sub, Mul, Div, Neg, Exp, PowInt, Affine, Sum };

  struct Node {
    Op op;
    int a = -1, b = -1;
    int group = -1;   // Leaf group / Affine weight group
    int group2 = -1;  // Affine bias group
    int index = -1;   // Leaf scalar index, -1 for whole group
    int ipow = 0;
    Eigen::ArrayXXd value;
    Eigen::ArrayXd wsum;  // weighted_sum weights (empty for plain sum)
  };

  int push(Node n);
  void compute(Node& n);
  void check_finite(const Node& n, const char* prim) const;

  const ParamLayout& layout_;
  const Eigen::VectorXd& params_;
  std::vector<Node> nodes_;
  double den_monitor_ = 0.0;
  long den_flags_ = 0;
  std::vector<Eigen::ArrayXXd> adj_;  // scratch for backward
};

}  // namespace weakpde
