#include <weakpde/weight_engine.hpp>

#include <cmath>
#include <fstream>
#include <weakpde/rng.hpp>

namespace weakpde {

double bump_1d(double s, double s0, double r, double beta, int order) {
  if (!(r > 0.0)) throw std::runtime_error("bump: radius must be positive");
  if (order < 0) throw std::runtime_error("bump: negative derivative order");
  const double u0 = s - s0;
  const double r2 = r * r;
  const double den0 = u0 * u0 - r2;
  // Outside or on the boundary the function and all derivatives vanish
  // identically; the margin also catches points so close to the boundary that
  // the series coefficients would overflow while the value underflows to 0.
  if (den0 >= -1e-30 * r2) return 0.0;

  const int n = order + 1;
  // den = (s-s0)^2 - r^2 as Taylor coefficients about s
  std::vector<double> den(n, 0.0);
  den[0] = den0;
  if (n > 1) den[1] = 2.0 * u0;
  if (n > 2) den[2] = 1.0;
  // g = beta r^2 / den + beta  (series division of a constant)
  std::vector<double> g(n, 0.0);
  g[0] = beta * r2 / den[0];
  for (int k = 1; k < n; ++k) {
    double acc = 0.0;
    for (int j = 1; j <= std::min(k, 2); ++j) acc += den[j] * g[k - j];
    g[k] = -acc / den[0];
  }
  g[0] += beta;
  // w = exp(g) via e_k = (1/k) sum_{j=1..k} j g_j e_{k-j}
  std::vector<double> e(n, 0.0);
  e[0] = std::exp(g[0]);
  for (int k = 1; k < n; ++k) {
    double acc = 0.0;
    for (int j = 1; j <= k; ++j) acc += j * g[j] * e[k - j];
    e[k] = acc / k;
  }
  double fact = 1.0;
  for (int k = 2; k <= order; ++k) fact *= k;
  return e[order] * fact;
}

void WeightFunction::validate(const DomainBox& domain) const {
  domain.validate();
  if (center.size() != domain.dim())
    throw std::runtime_error("weight: center dimension mismatch");
  if (!(radius > 0.0) || !(beta > 0.0))
    throw std::runtime_error("weight: radius and beta must be positive");
  for (int j = 0; j < center.size(); ++j)
    if (center[j] - radius < domain.lo[j] || center[j] + radius > domain.hi[j])
      throw std::runtime_error("weight: support ball leaves the domain");
}

double weight_value(const WeightFunction& wf, const MultiIndex& alpha,
                    const Eigen::VectorXd& point) {
  if (point.size() != wf.center.size())
    throw std::runtime_error("weight: point dimension mismatch");
  if (static_cast<int>(alpha.x.size()) + 1 != point.size())
    throw std::runtime_error("weight: multi-index dimension mismatch");
  double v = bump_1d(point[0], wf.center[0], wf.radius, wf.beta, alpha.t);
  for (size_t a = 0; a < alpha.x.size(); ++a)
    v *= bump_1d(point[static_cast<int>(a) + 1], wf.center[static_cast<int>(a) + 1],
                 wf.radius, wf.beta, alpha.x[a]);
  return v;
}

namespace {

// Support-box node layout for weight quadrature: the trapezoid rule applied
// in a smoothly stretched coordinate, y(w) = w - sum_k c_k sin(pi k w)/(pi k)
// with w uniform on [-1, 1]. The stretching concentrates nodes where the
// bump's high-order derivatives oscillate (a band inside each edge) instead
// of spacing them evenly; the harmonic coefficients minimize the aliasing
// error of the derivative-table integrals at the reference node counts
// (40 and 64) for the default decay constant. A uniform layout needs ~3x
// more nodes per axis for the same fourth-derivative accuracy. Endpoints
// map to the support boundary exactly and the layout is symmetric, so odd
// derivative integrals cancel identically.
constexpr double kStretch[6] = {-0.89989565933168014, -0.42203723436261076,
                                -0.16663747849453003, 0.024944159517552772,
                                0.094287235649773538, 0.039302563364749965};
constexpr double kPi = 3.14159265358979323846;

// Normalized nodes y in [-1, 1] and trapezoid-in-w weights (Jacobian folded
// in); scale by the support half-width per axis to get physical values.
void support_axis_layout(int n, Eigen::VectorXd& y, Eigen::VectorXd& qw) {
  y.resize(n);
  qw.resize(n);
  const double h = 2.0 / (n - 1);
  for (int i = 0; i <= (n - 1) / 2; ++i) {
    const double a = 1.0 - i * h;
    double Y = a, J = 1.0;
    for (int k = 1; k <= 6; ++k) {
      Y -= kStretch[k - 1] * std::sin(kPi * k * a) / (kPi * k);
      J -= kStretch[k - 1] * std::cos(kPi * k * a);
    }
    if (i == 0) Y = 1.0;
    y[i] = -Y;
    y[n - 1 - i] = Y;
    qw[i] = qw[n - 1 - i] = h * ((i == 0) ? 0.5 : 1.0) * J;
  }
  if (n % 2 == 1) y[(n - 1) / 2] = 0.0;
}

}  // namespace

QuadGrid make_quad_grid(const DomainBox& box, int nodes_per_axis) {
  box.validate();
  if (nodes_per_axis < 2)
    throw std::runtime_error("quad grid: need at least 2 nodes per axis");
  const int dim = box.dim();
  QuadGrid grid;
  std::vector<Eigen::VectorXd> axis_w(dim);
  for (int a = 0; a < dim; ++a) {
    grid.axis_nodes.push_back(
        Eigen::VectorXd::LinSpaced(nodes_per_axis, box.lo[a], box.hi[a]));
    const double h = box.extent(a) / (nodes_per_axis - 1);
    axis_w[a] = Eigen::VectorXd::Constant(nodes_per_axis, h);
    axis_w[a][0] = axis_w[a][nodes_per_axis - 1] = h / 2.0;
  }
  Eigen::Index total = 1;
  for (int a = 0; a < dim; ++a) total *= nodes_per_axis;
  grid.weights.resize(total);
  for (Eigen::Index q = 0; q < total; ++q) {
    Eigen::Index rem = q;
    double w = 1.0;
    for (int a = dim - 1; a >= 0; --a) {
      const Eigen::Index i = rem % nodes_per_axis;
      rem /= nodes_per_axis;
      w *= axis_w[a][i];
    }
    grid.weights[q] = w;
  }
  return grid;
}

MasterWeight make_master(const DomainBox& domain, const LibrarySpec& lib,
                         int nodes_per_axis, std::uint64_t seed, double beta) {
  domain.validate();
  if (nodes_per_axis < 3)
    throw std::runtime_error("master weight: need at least 3 nodes per axis");
  const int dim = domain.dim();

  MasterWeight m;
  m.nodes_per_axis = nodes_per_axis;
  m.alphas = lib.multi_indices();
  m.wf.kind = WeightKind::random;
  m.wf.beta = beta;
  m.wf.center.resize(dim);
  // Center sampled inside the middle fifth of the box; radius fills the
  // distance to the nearest face. Placement is immaterial to reuse because
  // every mapped weight rescales the same local tables.
  Rng rng(mix_seed(seed, 0xA57E));
  double radius = std::numeric_limits<double>::infinity();
  for (int a = 0; a < dim; ++a) {
    const double mid = 0.5 * (domain.lo[a] + domain.hi[a]);
    m.wf.center[a] = mid + 0.1 * domain.extent(a) * (rng.uniform() - 0.5);
    radius = std::min({radius, m.wf.center[a] - domain.lo[a],
                       domain.hi[a] - m.wf.center[a]});
  }
  m.wf.radius = radius;
  m.wf.validate(domain);

  Eigen::VectorXd y, axis_qw;
  support_axis_layout(nodes_per_axis, y, axis_qw);
  std::vector<Eigen::VectorXd> axis_w(dim);
  for (int a = 0; a < dim; ++a) {
    m.axis_nodes.push_back(m.wf.center[a] + radius * y.array());
    axis_w[a] = radius * axis_qw;
  }
  Eigen::Index total = 1;
  for (int a = 0; a < dim; ++a) total *= nodes_per_axis;
  m.quadw.resize(total);
  for (Eigen::Index q = 0; q < total; ++q) {
    Eigen::Index rem = q;
    double wq = 1.0;
    for (int a = dim - 1; a >= 0; --a) {
      const Eigen::Index i = rem % nodes_per_axis;
      rem /= nodes_per_axis;
      wq *= axis_w[a][i];
    }
    m.quadw[q] = wq;
  }

  // Needed per-axis derivative orders across all multi-indices.
  std::vector<int> max_order(dim, 0);
  for (const auto& a : m.alphas) {
    max_order[0] = std::max(max_order[0], a.t);
    for (size_t j = 0; j < a.x.size(); ++j)
      max_order[static_cast<int>(j) + 1] =
          std::max(max_order[static_cast<int>(j) + 1], a.x[j]);
  }
  // 1-D factors evaluated in the normalized coordinate (exact symmetry and
  // exact zeros at the endpoints), rescaled per derivative order.
  std::vector<std::vector<Eigen::ArrayXd>> factor(dim);
  for (int a = 0; a < dim; ++a) {
    factor[a].resize(max_order[a] + 1);
    double scale = 1.0;
    for (int o = 0; o <= max_order[a]; ++o) {
      factor[a][o].resize(nodes_per_axis);
      for (int i = 0; i < nodes_per_axis; ++i)
        factor[a][o][i] = scale * bump_1d(y[i], 0.0, 1.0, m.wf.beta, o);
      scale /= radius;
    }
  }
  auto axis_order_of = [&](const MultiIndex& alpha, int a) {
    return a == 0 ? alpha.t : alpha.x[a - 1];
  };
  for (const auto& alpha : m.alphas) {
    Eigen::ArrayXd tbl(total);
    for (Eigen::Index q = 0; q < total; ++q) {
      Eigen::Index rem = q;
      double v = 1.0;
      for (int a = dim - 1; a >= 0; --a) {
        const Eigen::Index i = rem % nodes_per_axis;
        rem /= nodes_per_axis;
        v *= factor[a][axis_order_of(alpha, a)][i];
      }
      tbl[q] = v;
    }
    m.tables.push_back(std::move(tbl));
  }

  // Interior slice: drop nodes with any axis index at 0 or n-1.
  std::vector<Eigen::Index> interior;
  for (Eigen::Index q = 0; q < total; ++q) {
    Eigen::Index rem = q;
    bool edge = false;
    for (int a = dim - 1; a >= 0; --a) {
      const Eigen::Index i = rem % nodes_per_axis;
      rem /= nodes_per_axis;
      if (i == 0 || i == nodes_per_axis - 1) edge = true;
    }
    if (!edge) interior.push_back(q);
  }
  const Eigen::Index ni = static_cast<Eigen::Index>(interior.size());
  m.interior_offsets.resize(ni, dim);
  m.interior_quadw.resize(ni);
  for (Eigen::Index k = 0; k < ni; ++k) {
    Eigen::Index rem = interior[k];
    for (int a = dim - 1; a >= 0; --a) {
      const Eigen::Index i = rem % nodes_per_axis;
      rem /= nodes_per_axis;
      m.interior_offsets(k, a) = m.axis_nodes[a][i] - m.wf.center[a];
    }
    m.interior_quadw[k] = m.quadw[interior[k]];
  }
  for (const auto& tbl : m.tables) {
    Eigen::ArrayXd t(ni);
    for (Eigen::Index k = 0; k < ni; ++k) t[k] = tbl[interior[k]];
    m.interior_tables.push_back(std::move(t));
  }
  return m;
}

PreparedWeight map_from_master(std::shared_ptr<const MasterWeight> master,
                               const WeightFunction& wf, int id) {
  if (!master) throw std::runtime_error("map: null master");
  if (wf.beta != master->wf.beta)
    throw std::runtime_error("map: beta mismatch between weight and master");
  if (wf.center.size() != master->wf.center.size())
    throw std::runtime_error("map: dimension mismatch");
  if (!(wf.radius > 0.0)) throw std::runtime_error("map: radius must be positive");

  PreparedWeight p;
  p.wf = wf;
  p.id = id;
  p.master = master;
  const double ratio = wf.radius / master->wf.radius;
  const int dim = static_cast<int>(wf.center.size());

  p.nodes = master->interior_offsets * ratio;
  for (int a = 0; a < dim; ++a) p.nodes.col(a) += wf.center[a];
  p.quadw = master->interior_quadw * std::pow(ratio, dim);
  p.deriv.reserve(master->alphas.size());
  for (size_t i = 0; i < master->alphas.size(); ++i) {
    const double scale = std::pow(1.0 / ratio, master->alphas[i].total());
    p.deriv.push_back(master->interior_tables[i] * scale);
  }
  return p;
}

std::vector<WeightFunction> sample_random_weights(const DomainBox& domain,
                                                  int n, double r_min,
                                                  double r_max,
                                                  std::uint64_t seed) {
  domain.validate();
  if (n < 0) throw std::runtime_error("weights: negative count");
  if (!(r_min > 0.0) || !(r_min <= r_max))
    throw std::runtime_error("weights: need 0 < r_min <= r_max");
  const int dim = domain.dim();
  std::vector<WeightFunction> out;
  out.reserve(n);
  Rng rng(seed);
  long draws = 0, accepted = 0;
  while (static_cast<int>(out.size()) < n) {
    ++draws;
    if (draws >= 100000 && accepted < draws / 100)
      throw std::runtime_error(
          "weights: rejection rate above 99%; r_min is infeasible for this "
          "domain");
    WeightFunction w;
    w.center.resize(dim);
    double face = std::numeric_limits<double>::infinity();
    for (int a = 0; a < dim; ++a) {
      w.center[a] = rng.uniform(domain.lo[a], domain.hi[a]);
      face = std::min({face, w.center[a] - domain.lo[a],
                       domain.hi[a] - w.center[a]});
    }
    w.radius = std::min(r_max, face);
    if (w.radius < r_min) continue;
    ++accepted;
    w.kind = WeightKind::random;
    out.push_back(std::move(w));
  }
  return out;
}

void dump_weight_tables(const std::string& path, const MasterWeight& m) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("dump: cannot open " + path);
  f << "# weight tables\n";
  f << "center";
  for (int a = 0; a < m.wf.center.size(); ++a) f << ' ' << m.wf.center[a];
  f << "\nradius " << m.wf.radius << "\nbeta " << m.wf.beta
    << "\nnodes_per_axis " << m.nodes_per_axis << "\nalphas "
    << m.alphas.size() << '\n';
  f.precision(17);
  for (size_t i = 0; i < m.alphas.size(); ++i) {
    f << "# table";
    LibraryTerm t{m.alphas[i], 1};
    f << " " << format_term(t) << '\n';
    for (Eigen::Index q = 0; q < m.tables[i].size(); ++q)
      f << m.tables[i][q] << '\n';
  }
  if (!f) throw std::runtime_error("dump: write failed for " + path);
}

}  // namespace weakpde
