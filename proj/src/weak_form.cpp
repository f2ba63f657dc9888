#include <Eigen/SVD>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <weakpde/weak_form.hpp>

namespace weakpde {

namespace {

// Singular values below this fraction of the largest are treated as exact
// rank deficiency; the solve then returns the minimal-norm representative
// instead of fitting along near-null directions. Directions supported only
// by quadrature noise sit below ~1e-7 of the top singular value, while
// genuinely independent columns stay orders of magnitude above it.
constexpr double kRankThreshold = 1e-6;

std::string node_string(const Eigen::ArrayXXd& nodes, Eigen::Index q) {
  std::string s = "(t=";
  char buf[32];
  for (Eigen::Index a = 0; a < nodes.cols(); ++a) {
    std::snprintf(buf, sizeof buf, "%.6g", nodes(q, a));
    if (a == 1) s += ", x=";
    if (a > 1) s += ", ";
    s += buf;
  }
  return s + ")";
}

Eigen::VectorXd masked_values(const WeakSystem& sys,
                              const CoefficientVector& xi) {
  if (xi.values.size() != sys.cols() ||
      static_cast<Eigen::Index>(xi.active.size()) != sys.cols())
    throw std::runtime_error("weak system: coefficient size mismatch");
  Eigen::VectorXd v = xi.values;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!xi.active[i]) v[i] = 0.0;
  return v;
}

}  // namespace

std::vector<Eigen::ArrayXd> fused_vectors(const LibrarySpec& lib,
                                          const PreparedWeight& w) {
  if (!w.master) throw std::runtime_error("weak assembly: weight has no tables");
  const auto& alphas = w.master->alphas;
  auto fuse = [&](const MultiIndex& a) {
    const int ai = LibrarySpec::index_of(alphas, a);
    return (a.sign() * (w.quadw * w.deriv[ai])).eval();
  };
  std::vector<Eigen::ArrayXd> out;
  out.reserve(1 + lib.rhs.size());
  out.push_back(fuse(lib.lhs.alpha));
  for (const auto& term : lib.rhs) out.push_back(fuse(term.alpha));
  return out;
}

WeakSystem assemble_weak_system(const LibrarySpec& lib,
                                const std::vector<PreparedWeight>& weights,
                                const BatchEval& eval) {
  lib.validate();
  const int K = static_cast<int>(weights.size());
  const int M = static_cast<int>(lib.rhs.size());
  WeakSystem sys;
  sys.A.resize(K, M);
  sys.b.resize(K);
  sys.row_ids.reserve(K);

  int max_power = lib.lhs.power;
  for (const auto& term : lib.rhs) max_power = std::max(max_power, term.power);

  for (int k = 0; k < K; ++k) {
    const auto& w = weights[k];
    Eigen::ArrayXd u;
    try {
      u = eval(w.nodes);
    } catch (const EvalError& e) {
      throw std::runtime_error(std::string(e.what()) + " (weight " +
                               std::to_string(w.id) + ")");
    }
    if (u.size() != w.nodes.rows())
      throw std::runtime_error("weak assembly: surrogate returned " +
                               std::to_string(u.size()) + " values for " +
                               std::to_string(w.nodes.rows()) +
                               " nodes of weight " + std::to_string(w.id));
    if (!u.isFinite().all()) {
      Eigen::Index bad = 0;
      while (bad < u.size() && std::isfinite(u[bad])) ++bad;
      throw std::runtime_error(
          "weak assembly: non-finite surrogate value at node " +
          node_string(w.nodes, bad) + " for weight " + std::to_string(w.id));
    }

    const auto fused = fused_vectors(lib, w);
    // one surrogate evaluation feeds every term; monomials are shared too
    std::vector<Eigen::ArrayXd> powers(max_power + 1);
    auto monom = [&](int p) -> const Eigen::ArrayXd& {
      if (powers[p].size() == 0) powers[p] = monomial_eval(u, p);
      return powers[p];
    };
    auto entry = [&](const Eigen::ArrayXd& f, int power) {
      return power == 0 ? f.sum() : (f * monom(power)).sum();
    };
    sys.b[k] = entry(fused[0], lib.lhs.power);
    for (int m = 0; m < M; ++m)
      sys.A(k, m) = entry(fused[m + 1], lib.rhs[m].power);
    sys.row_ids.push_back(w.id);
  }
  return sys;
}

WeakSystem assemble_weak_system(const LibrarySpec& lib,
                                const std::vector<PreparedWeight>& weights,
                                const NetworkConfig& config,
                                const ParamLayout& layout,
                                const Eigen::VectorXd& params,
                                const std::string& prefix) {
  layout.validate(params);
  const int begin = layout.group(layout.group_id(prefix + "layer0.weight")).offset;
  const int total = net_offsets(config).total;
  if (begin + total > layout.size())
    throw std::runtime_error("weak assembly: network slice exceeds layout");
  const Eigen::VectorXd net = params.segment(begin, total);
  return assemble_weak_system(lib, weights, [&](const Eigen::ArrayXXd& pts) {
    return evaluate(config, net, pts);
  });
}

Eigen::VectorXd weak_residuals(const WeakSystem& sys,
                               const CoefficientVector& xi) {
  return ((sys.A * masked_values(sys, xi)) - sys.b).cwiseAbs();
}

double weak_loss(const WeakSystem& sys, const CoefficientVector& xi) {
  return (sys.b - sys.A * masked_values(sys, xi)).squaredNorm();
}

CoefficientVector solve_least_squares(const WeakSystem& sys,
                                      const std::vector<bool>& active,
                                      bool normalize_columns) {
  const int M = static_cast<int>(sys.cols());
  if (static_cast<int>(active.size()) != M)
    throw std::runtime_error("weak system: active mask size mismatch");
  std::vector<int> idx;
  for (int m = 0; m < M; ++m)
    if (active[m]) idx.push_back(m);

  CoefficientVector out = CoefficientVector::zeros(M);
  for (int m = 0; m < M; ++m) out.active[m] = active[m] ? 1 : 0;
  if (idx.empty() || sys.rows() == 0) return out;

  const int n = static_cast<int>(idx.size());
  Eigen::MatrixXd As(sys.rows(), n);
  Eigen::VectorXd scale = Eigen::VectorXd::Ones(n);
  for (int j = 0; j < n; ++j) {
    As.col(j) = sys.A.col(idx[j]);
    if (normalize_columns) {
      const double nrm = As.col(j).norm();
      if (nrm > 0.0) {
        scale[j] = nrm;
        As.col(j) /= nrm;
      }
    }
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(As,
                                     Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(kRankThreshold);
  const Eigen::VectorXd sol = svd.solve(sys.b);
  for (int j = 0; j < n; ++j) out.values[idx[j]] = sol[j] / scale[j];
  return out;
}

void dump_weak_system(const std::string& path, const WeakSystem& sys,
                      const Eigen::VectorXd& residuals) {
  if (residuals.size() != sys.rows())
    throw std::runtime_error("weak system dump: residual size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("weak system dump: cannot open " + path);
  out.write("WPWS", 4);
  const std::int32_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), 4);
  const std::int64_t rows = sys.rows(), cols = sys.cols();
  out.write(reinterpret_cast<const char*>(&rows), 8);
  out.write(reinterpret_cast<const char*>(&cols), 8);
  for (std::int64_t k = 0; k < rows; ++k)
    for (std::int64_t m = 0; m < cols; ++m) {
      const double v = sys.A(k, m);
      out.write(reinterpret_cast<const char*>(&v), 8);
    }
  out.write(reinterpret_cast<const char*>(sys.b.data()), 8 * rows);
  out.write(reinterpret_cast<const char*>(residuals.data()), 8 * rows);
  for (std::int64_t k = 0; k < rows; ++k) {
    const std::int32_t id = sys.row_ids[k];
    out.write(reinterpret_cast<const char*>(&id), 4);
  }
  if (!out) throw std::runtime_error("weak system dump: write failed " + path);
}

}  // namespace weakpde
