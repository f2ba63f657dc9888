#include <weakpde/autodiff.hpp>

namespace weakpde {

int ParamLayout::add(const std::string& name, int rows, int cols) {
  if (rows <= 0 || cols <= 0)
    throw std::runtime_error("layout: group '" + name + "' must be non-empty");
  for (const auto& g : groups_)
    if (g.name == name)
      throw std::runtime_error("layout: duplicate group '" + name + "'");
  groups_.push_back({name, total_, rows, cols});
  total_ += rows * cols;
  return static_cast<int>(groups_.size()) - 1;
}

int ParamLayout::group_id(const std::string& name) const {
  for (size_t i = 0; i < groups_.size(); ++i)
    if (groups_[i].name == name) return static_cast<int>(i);
  throw std::runtime_error("layout: no group named '" + name + "'");
}

bool ParamLayout::has_group(const std::string& name) const {
  for (const auto& g : groups_)
    if (g.name == name) return true;
  return false;
}

void ParamLayout::validate(const Eigen::VectorXd& params) const {
  if (params.size() != total_)
    throw std::runtime_error("layout: parameter vector has size " +
                             std::to_string(params.size()) + ", expected " +
                             std::to_string(total_));
  if (!params.allFinite())
    throw std::runtime_error("layout: parameter vector has non-finite entries");
}

Tape::Tape(const ParamLayout& layout, const Eigen::VectorXd& params)
    : layout_(layout), params_(params) {
  layout_.validate(params_);
  nodes_.reserve(96);
}

namespace {

bool is_scalar(const Eigen::ArrayXXd& v) { return v.rows() == 1 && v.cols() == 1; }

// Elementwise combine with 1x1 broadcast on either side.
template <class F>
Eigen::ArrayXXd broadcast(const Eigen::ArrayXXd& a, const Eigen::ArrayXXd& b,
                          F&& f, const char* prim) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return f(a, b);
  if (is_scalar(a))
    return f(Eigen::ArrayXXd::Constant(b.rows(), b.cols(), a(0, 0)), b);
  if (is_scalar(b))
    return f(a, Eigen::ArrayXXd::Constant(a.rows(), a.cols(), b(0, 0)));
  throw AdError(std::string(prim) + ": shape mismatch");
}

}  // namespace

void Tape::check_finite(const Node& n, const char* prim) const {
  if (!n.value.allFinite())
    throw AdError(std::string(prim) + ": non-finite result");
}

void Tape::compute(Node& n) {
  switch (n.op) {
    case Op::Leaf: {
      const auto& g = layout_.group(n.group);
      if (n.index >= 0) {
        n.value.resize(1, 1);
        n.value(0, 0) = params_[g.offset + n.index];
      } else {
        n.value = Eigen::Map<const Eigen::MatrixXd>(params_.data() + g.offset,
                                                    g.rows, g.cols)
                      .array();
      }
      break;
    }
    case Op::Const:
      break;  // value was stored at creation
    case Op::Add:
      n.value = broadcast(nodes_[n.a].value, nodes_[n.b].value,
                          [](const auto& a, const auto& b) { return a + b; }, "add");
      break;
    case Op::Sub:
      n.value = broadcast(nodes_[n.a].value, nodes_[n.b].value,
                          [](const auto& a, const auto& b) { return a - b; }, "sub");
      break;
    case Op::Mul:
      n.value = broadcast(nodes_[n.a].value, nodes_[n.b].value,
                          [](const auto& a, const auto& b) { return a * b; }, "mul");
      break;
    case Op::Div: {
      const auto& den = nodes_[n.b].value;
      if ((den.abs() < 1e-30).any())
        throw AdError("div: |denominator| below 1e-30");
      if (den_monitor_ > 0.0)
        den_flags_ += (den.abs() < den_monitor_).count();
      n.value = broadcast(nodes_[n.a].value, den,
                          [](const auto& a, const auto& b) { return a / b; }, "div");
      break;
    }
    case Op::Neg:
      n.value = -nodes_[n.a].value;
      break;
    case Op::Exp:
      n.value = nodes_[n.a].value.exp();
      check_finite(n, "exp");
      break;
    case Op::PowInt: {
      const auto& a = nodes_[n.a].value;
      if (n.ipow == 0) {
        n.value = Eigen::ArrayXXd::Ones(a.rows(), a.cols());
      } else {
        n.value = a;
        for (int i = 1; i < n.ipow; ++i) n.value *= a;
      }
      check_finite(n, "power");
      break;
    }
    case Op::Affine: {
      const auto& x = nodes_[n.a].value;
      const auto& gw = layout_.group(n.group);
      const auto& gb = layout_.group(n.group2);
      if (x.cols() != gw.cols || gb.rows != gw.rows || gb.cols != 1)
        throw AdError("affine: shape mismatch");
      Eigen::Map<const Eigen::MatrixXd> W(params_.data() + gw.offset, gw.rows,
                                          gw.cols);
      Eigen::Map<const Eigen::VectorXd> b(params_.data() + gb.offset, gb.rows);
      n.value = ((x.matrix() * W.transpose()).rowwise() + b.transpose()).array();
      break;
    }
    case Op::Sum: {
      const auto& a = nodes_[n.a].value;
      n.value.resize(1, 1);
      if (n.wsum.size() == 0) {
        n.value(0, 0) = a.sum();
      } else {
        if (a.cols() != 1 || a.rows() != n.wsum.size())
          throw AdError("sum: weight length mismatch");
        n.value(0, 0) = (a.col(0) * n.wsum).sum();
      }
      break;
    }
  }
}

int Tape::push(Node n) {
  compute(n);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::leaf(int group) {
  Node n;
  n.op = Op::Leaf;
  n.group = group;
  return push(std::move(n));
}

int Tape::leaf_scalar(int group, int index) {
  const auto& g = layout_.group(group);
  if (index < 0 || index >= g.size())
    throw AdError("leaf: index outside group '" + g.name + "'");
  Node n;
  n.op = Op::Leaf;
  n.group = group;
  n.index = index;
  return push(std::move(n));
}

int Tape::constant(Eigen::ArrayXXd v) {
  Node n;
  n.op = Op::Const;
  n.value = std::move(v);
  return push(std::move(n));
}

int Tape::constant_scalar(double v) {
  return constant(Eigen::ArrayXXd::Constant(1, 1, v));
}

int Tape::add(int a, int b) {
  Node n;
  n.op = Op::Add;
  n.a = a;
  n.b = b;
  return push(std::move(n));
}

int Tape::sub(int a, int b) {
  Node n;
  n.op = Op::Sub;
  n.a = a;
  n.b = b;
  return push(std::move(n));
}

int Tape::mul(int a, int b) {
  Node n;
  n.op = Op::Mul;
  n.a = a;
  n.b = b;
  return push(std::move(n));
}

int Tape::div(int a, int b) {
  Node n;
  n.op = Op::Div;
  n.a = a;
  n.b = b;
  return push(std::move(n));
}

int Tape::neg(int a) {
  Node n;
  n.op = Op::Neg;
  n.a = a;
  return push(std::move(n));
}

int Tape::exp_(int a) {
  Node n;
  n.op = Op::Exp;
  n.a = a;
  return push(std::move(n));
}

int Tape::pow_int(int a, int p) {
  if (p < 0) throw AdError("power: negative exponent");
  Node n;
  n.op = Op::PowInt;
  n.a = a;
  n.ipow = p;
  return push(std::move(n));
}

int Tape::affine(int x, int weight_group, int bias_group) {
  Node n;
  n.op = Op::Affine;
  n.a = x;
  n.group = weight_group;
  n.group2 = bias_group;
  return push(std::move(n));
}

int Tape::sum(int a) {
  Node n;
  n.op = Op::Sum;
  n.a = a;
  return push(std::move(n));
}

int Tape::weighted_sum(int a, const Eigen::ArrayXd& w) {
  Node n;
  n.op = Op::Sum;
  n.a = a;
  n.wsum = w;
  return push(std::move(n));
}

double Tape::scalar_value(int id) const {
  const auto& v = nodes_.at(id).value;
  if (!is_scalar(v)) throw AdError("scalar_value: node is not 1x1");
  return v(0, 0);
}

double Tape::replay(int root) {
  const long saved_flags = den_flags_;
  for (int i = 0; i <= root; ++i) compute(nodes_[i]);
  den_flags_ = saved_flags;
  return scalar_value(root);
}

void Tape::backward(int root, double seed, Eigen::VectorXd& grad) {
  if (!is_scalar(nodes_.at(root).value))
    throw AdError("backward: root must be scalar");
  if (grad.size() != layout_.size())
    throw AdError("backward: gradient vector has wrong size");

  adj_.assign(nodes_.size(), Eigen::ArrayXXd());
  auto add_adj = [&](int id, const Eigen::ArrayXXd& contrib) {
    const auto& target = nodes_[id].value;
    auto& a = adj_[id];
    if (a.size() == 0) a = Eigen::ArrayXXd::Zero(target.rows(), target.cols());
    if (target.rows() == contrib.rows() && target.cols() == contrib.cols())
      a += contrib;
    else if (is_scalar(target))
      a(0, 0) += contrib.sum();
    else
      throw AdError("backward: adjoint shape mismatch");
  };
  // d(out)/d(operand) factors with 1x1 broadcast on the operand's value
  auto times = [](const Eigen::ArrayXXd& adj, const Eigen::ArrayXXd& v) {
    return is_scalar(v) ? Eigen::ArrayXXd(adj * v(0, 0)) : Eigen::ArrayXXd(adj * v);
  };
  auto over = [](const Eigen::ArrayXXd& adj, const Eigen::ArrayXXd& v) {
    return is_scalar(v) ? Eigen::ArrayXXd(adj / v(0, 0)) : Eigen::ArrayXXd(adj / v);
  };

  adj_[root] = Eigen::ArrayXXd::Constant(1, 1, seed);
  for (int id = root; id >= 0; --id) {
    if (adj_[id].size() == 0) continue;
    const Node& n = nodes_[id];
    const Eigen::ArrayXXd& a = adj_[id];
    switch (n.op) {
      case Op::Leaf: {
        const auto& g = layout_.group(n.group);
        if (n.index >= 0)
          grad[g.offset + n.index] += a(0, 0);
        else
          grad.segment(g.offset, g.size()) +=
              Eigen::Map<const Eigen::VectorXd>(a.data(), a.size());
        break;
      }
      case Op::Const:
        break;
      case Op::Add:
        add_adj(n.a, a);
        add_adj(n.b, a);
        break;
      case Op::Sub:
        add_adj(n.a, a);
        add_adj(n.b, -a);
        break;
      case Op::Mul:
        add_adj(n.a, times(a, nodes_[n.b].value));
        add_adj(n.b, times(a, nodes_[n.a].value));
        break;
      case Op::Div: {
        const auto& den = nodes_[n.b].value;
        add_adj(n.a, over(a, den));
        add_adj(n.b, -over(times(a, n.value), den));
        break;
      }
      case Op::Neg:
        add_adj(n.a, -a);
        break;
      case Op::Exp:
        add_adj(n.a, times(a, n.value));
        break;
      case Op::PowInt: {
        if (n.ipow == 0) break;
        if (n.ipow == 1) {
          add_adj(n.a, a);
          break;
        }
        const auto& base = nodes_[n.a].value;
        Eigen::ArrayXXd pw = base;
        for (int i = 2; i < n.ipow; ++i) pw *= base;
        add_adj(n.a, a * static_cast<double>(n.ipow) * pw);
        break;
      }
      case Op::Affine: {
        const auto& gw = layout_.group(n.group);
        const auto& gb = layout_.group(n.group2);
        Eigen::Map<const Eigen::MatrixXd> W(params_.data() + gw.offset, gw.rows,
                                            gw.cols);
        const Eigen::MatrixXd G = a.matrix();
        const Eigen::MatrixXd X = nodes_[n.a].value.matrix();
        const Eigen::MatrixXd GW = G.transpose() * X;  // (out x in)
        grad.segment(gw.offset, gw.size()) +=
            Eigen::Map<const Eigen::VectorXd>(GW.data(), GW.size());
        grad.segment(gb.offset, gb.size()) += G.colwise().sum().transpose();
        add_adj(n.a, (G * W).array());
        break;
      }
      case Op::Sum: {
        const auto& in = nodes_[n.a].value;
        const double s = a(0, 0);
        if (n.wsum.size() == 0)
          add_adj(n.a, Eigen::ArrayXXd::Constant(in.rows(), in.cols(), s));
        else
          add_adj(n.a, Eigen::ArrayXXd((n.wsum * s).matrix()));
        break;
      }
    }
  }
}

}  // namespace weakpde
