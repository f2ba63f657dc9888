// Acceptance gate. Each criterion prints exactly one PASS/FAIL line; the
// process exits nonzero if any requested criterion fails.
//
//   --fast            criteria 1-7 (deterministic, minutes)
//   --identification  criterion 8 (Burgers recovery, ~1.5 h)
//   --full            criteria 8-10 (adds KdV and KS at paper epoch counts;
//                     release gate, several hours per system)

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>
#include <weakpde/rng.hpp>
#include <weakpde/synthetic_data.hpp>
#include <weakpde/trainer.hpp>
#include <weakpde/weak_form.hpp>

using namespace weakpde;

namespace {

// pinned tolerances, one per criterion
constexpr double kTolGradient = 1e-5;        // 1: analytic vs central FD
constexpr double kTolWeakStrong = 1e-3;      // 2: parts-integrated pairs
constexpr double kMinQuadOrder = 2.0;        // 2: refinement order
constexpr double kTolAffine = 1e-12;         // 3: master-table reuse
constexpr double kTolRecovery = 0.02;        // 4: manufactured coefficients
constexpr double kTolPenalty = 1e-12;        // 5: reweighted-penalty identity
constexpr double kTolPenaltyGrad = 1e-10;    // 5: frozen-eta gradient
constexpr double kTolSolverDrift = 1e-6;     // 7: halved-dt self-consistency
constexpr double kTolMass = 1e-6;            // 7: KdV mass conservation
constexpr double kTolCoeffBurgers = 0.25;    // 8
constexpr double kTolCoeffKdv = 0.25;        // 9
constexpr double kTolCoeffKs = 0.30;         // 10

int g_failures = 0;

void verdict(int criterion, bool pass, const std::string& what) {
  std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion,
              what.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

DomainBox box2(double t0, double t1, double x0, double x1) {
  DomainBox b;
  b.lo.resize(2);
  b.hi.resize(2);
  b.lo << t0, x0;
  b.hi << t1, x1;
  return b;
}

int term_index(const LibrarySpec& lib, const std::string& spelling) {
  for (size_t m = 0; m < lib.rhs.size(); ++m)
    if (format_term(lib.rhs[m]) == spelling) return static_cast<int>(m);
  throw std::runtime_error("no library term spelled " + spelling);
}

// ---------------------------------------------------------------- criterion 1
void criterion_gradients() {
  LibrarySpec lib;
  lib.lhs = parse_term("D_t U");
  lib.rhs = {parse_term("U"), parse_term("D_x^2 U"), parse_term("D_x U^2")};
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(mix_seed(1000, seed));
    const DomainBox dom = box2(0, 1 + rng.uniform(), -1 - rng.uniform(),
                               1 + rng.uniform());
    Dataset ds;
    ds.domain = dom;
    const int n = 12;
    ds.t.resize(n);
    ds.x.resize(n);
    ds.value.resize(n);
    for (int i = 0; i < n; ++i) {
      ds.t[i] = rng.uniform(dom.lo[0], dom.hi[0]);
      ds.x[i] = rng.uniform(dom.lo[1], dom.hi[1]);
      ds.value[i] = std::sin(ds.t[i] + ds.x[i]);
    }
    const int layers = 1 + static_cast<int>(rng.below(2));
    const int width = 2 + static_cast<int>(rng.below(3));
    DatasetBatch batch(ds, lib, layers, width, 8, 5.0, mix_seed(7, seed));
    batch.set_pool(sample_random_weights(dom, 2, 0.15, 0.4, mix_seed(8, seed)),
                   {0, 1});

    Eigen::VectorXd theta = init_network(batch.net_config(), mix_seed(9, seed));
    for (Eigen::Index i = 0; i < theta.size(); ++i)
      theta[i] += 0.05 * rng.normal();
    CoefficientVector xi = CoefficientVector::zeros(3);
    xi.values << rng.normal(), rng.normal(), rng.normal();
    xi.active[2] = rng.uniform() < 0.5 ? 0 : 1;
    if (!xi.active[2]) xi.values[2] = 0.0;

    const double lam_d = 0.7, lam_w = 1.3;
    Eigen::VectorXd g_theta = Eigen::VectorXd::Zero(theta.size());
    Eigen::VectorXd g_xi = Eigen::VectorXd::Zero(3);
    batch.evaluate(theta, xi, lam_d, lam_w, &g_theta, &g_xi);

    auto loss_at = [&](const Eigen::VectorXd& tv, const CoefficientVector& xv) {
      const auto L = batch.evaluate(tv, xv, lam_d, lam_w);
      return lam_d * L.data + lam_w * L.weak;
    };
    const int probes = std::min<int>(15, static_cast<int>(theta.size()));
    for (int k = 0; k < probes; ++k) {
      const Eigen::Index i =
          static_cast<Eigen::Index>(rng.below(theta.size()));
      const double h = 1e-5 * std::max(1.0, std::abs(theta[i]));
      Eigen::VectorXd up = theta, dn = theta;
      up[i] += h;
      dn[i] -= h;
      const double fd = (loss_at(up, xi) - loss_at(dn, xi)) / (2 * h);
      worst = std::max(
          worst, std::abs(fd - g_theta[i]) / std::max(1.0, std::abs(g_theta[i])));
    }
    for (int m = 0; m < 3; ++m) {
      const double h = 1e-6;
      CoefficientVector up = xi, dn = xi;
      up.values[m] += h;
      dn.values[m] -= h;
      const double fd = (loss_at(theta, up) - loss_at(theta, dn)) / (2 * h);
      worst = std::max(
          worst, std::abs(fd - g_xi[m]) / std::max(1.0, std::abs(g_xi[m])));
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "loss gradients vs central differences, 100 seeds, worst "
                "relative error %.2e (tolerance %.0e)",
                worst, kTolGradient);
  verdict(1, worst <= kTolGradient, buf);
}

// ---------------------------------------------------------------- criterion 2
void criterion_parts_integration() {
  const DomainBox dom = box2(0, 4, -4, 4);
  // radii start at the training default radius_min: a 4th derivative of a
  // narrower bump is not yet resolved by 64 nodes across its support
  const auto weights = sample_random_weights(dom, 50, 0.5, 2.0, 321);
  const double beta = 5.0;

  // max-norm relative mismatch over all |alpha| <= 4 pairs, one per weight
  auto mismatch = [&](const WeightFunction& w, int nodes) {
    const double r = w.radius;
    std::vector<double> weak, strong;
    for (int at = 0; at <= 4; ++at)
      for (int ax = 0; ax + at <= 4; ++ax) {
        double wi = 0, si = 0;
        const double ht = 2 * r / (nodes - 1), hx = 2 * r / (nodes - 1);
        for (int i = 0; i < nodes; ++i) {
          const double t = w.center[0] - r + ht * i;
          const double qt = (i == 0 || i == nodes - 1) ? ht / 2 : ht;
          for (int j = 0; j < nodes; ++j) {
            const double x = w.center[1] - r + hx * j;
            const double q = qt * ((j == 0 || j == nodes - 1) ? hx / 2 : hx);
            const double f = std::sin(t) * std::cos(x);
            const double df = std::sin(t + at * M_PI / 2) *
                              std::cos(x + ax * M_PI / 2);
            wi += q * bump_1d(t, w.center[0], r, beta, at) *
                  bump_1d(x, w.center[1], r, beta, ax) * f;
            si += q * bump_1d(t, w.center[0], r, beta, 0) *
                  bump_1d(x, w.center[1], r, beta, 0) * df;
          }
        }
        const double sign = (at + ax) % 2 ? -1.0 : 1.0;
        weak.push_back(sign * wi);
        strong.push_back(si);
      }
    double num = 0, den = 0;
    for (size_t k = 0; k < weak.size(); ++k) {
      num = std::max(num, std::abs(weak[k] - strong[k]));
      den = std::max(den, std::abs(strong[k]));
    }
    return num / den;
  };

  double worst64 = 0, worst_order = 1e9;
  for (const auto& w : weights) {
    const double e16 = mismatch(w, 16);
    const double e32 = mismatch(w, 32);
    const double e64 = mismatch(w, 64);
    worst64 = std::max(worst64, e64);
    if (e32 > 1e-12)  // above the roundoff floor the rate is measurable
      worst_order = std::min(worst_order, std::log2(e16 / e32));
  }
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "derivative transfer onto the weight, 50 weights x 15 "
                "multi-indices: worst relative mismatch %.2e at 64 nodes "
                "(tolerance %.0e), refinement order >= %.1f (need >= %.0f)",
                worst64, kTolWeakStrong, worst_order, kMinQuadOrder);
  verdict(2, worst64 <= kTolWeakStrong && worst_order >= kMinQuadOrder, buf);
}

// ---------------------------------------------------------------- criterion 3
void criterion_affine_reuse() {
  const DomainBox dom = box2(0, 5, -5, 5);
  const LibrarySpec lib = LibrarySpec::default_1d();
  auto master = std::make_shared<const MasterWeight>(
      make_master(dom, lib, 40, 606, 5.0));
  const auto weights = sample_random_weights(dom, 100, 0.5, 3.0, 607);
  const auto alphas = lib.multi_indices();

  double worst = 0;
  for (size_t k = 0; k < weights.size(); ++k) {
    const PreparedWeight pw =
        map_from_master(master, weights[k], static_cast<int>(k));
    for (size_t a = 0; a < alphas.size(); ++a) {
      const double scale = pw.deriv[a].abs().maxCoeff();
      for (Eigen::Index j = 0; j < pw.nodes.rows(); ++j) {
        const Eigen::VectorXd pt = pw.nodes.row(j).transpose().matrix();
        const double direct = weight_value(pw.wf, alphas[a], pt);
        worst = std::max(worst, std::abs(pw.deriv[a][j] - direct) / scale);
      }
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "mapped derivative tables vs direct evaluation, 100 weights, "
                "all library multi-indices: worst relative error %.2e "
                "(tolerance %.0e)",
                worst, kTolAffine);
  verdict(3, worst <= kTolAffine, buf);
}

// ---------------------------------------------------------------- criterion 4
void criterion_manufactured_recovery() {
  const DomainBox dom = box2(0, 2, -M_PI, M_PI);
  const LibrarySpec lib = LibrarySpec::default_1d();
  auto master = std::make_shared<const MasterWeight>(
      make_master(dom, lib, 64, 1001, 5.0));
  const auto weights = sample_random_weights(dom, 200, 0.3, 1.0, 1002);
  std::vector<PreparedWeight> pool;
  for (size_t k = 0; k < weights.size(); ++k)
    pool.push_back(map_from_master(master, weights[k], static_cast<int>(k)));
  const std::vector<bool> all_active(lib.rhs.size(), true);

  const int i_u = term_index(lib, "U");
  const int i_ux = term_index(lib, "D_x U");
  const int i_uxx = term_index(lib, "D_x^2 U");
  const int i_uxxx = term_index(lib, "D_x^3 U");
  const int i_uxxxx = term_index(lib, "D_x^4 U");

  // u = e^{-t/10} sin x alone satisfies D_x^2 u = -u and D_x^4 u = u, so the
  // least-squares system is rank-deficient and only the quotient combinations
  // of the linear coefficients are determined. Those are checked here; the
  // literal coefficient check runs on a three-mode field with full rank.
  bool pass = true;
  std::string note;
  {
    const WeakSystem sys = assemble_weak_system(
        lib, pool, [](const Eigen::ArrayXXd& pts) {
          return Eigen::ArrayXd((-0.1 * pts.col(0)).exp() *
                                pts.col(1).sin());
        });
    const CoefficientVector xi = solve_least_squares(sys, all_active);
    const double quotient =
        xi.values[i_uxx] - xi.values[i_u] - xi.values[i_uxxxx];
    const double odd = xi.values[i_ux] - xi.values[i_uxxx];
    double spill = 0;
    for (size_t m = 0; m < lib.rhs.size(); ++m)
      if (static_cast<int>(m) != i_u && static_cast<int>(m) != i_ux &&
          static_cast<int>(m) != i_uxx && static_cast<int>(m) != i_uxxx &&
          static_cast<int>(m) != i_uxxxx)
        spill = std::max(spill, std::abs(xi.values[m]));
    pass = pass && std::abs(quotient - 0.1) <= kTolRecovery &&
           std::abs(odd) <= kTolRecovery && spill <= kTolRecovery;
    char buf[120];
    std::snprintf(buf, sizeof buf,
                  "single mode: determined combination %.4f (want 0.1), odd "
                  "pair %.1e, off-library spill %.1e",
                  quotient, odd, spill);
    note = buf;
  }
  {
    const WeakSystem sys = assemble_weak_system(
        lib, pool, [](const Eigen::ArrayXXd& pts) {
          return Eigen::ArrayXd(
              (-0.1 * pts.col(0)).exp() * pts.col(1).sin() +
              (-0.4 * pts.col(0)).exp() * (2.0 * pts.col(1)).sin() +
              (-0.9 * pts.col(0)).exp() * (3.0 * pts.col(1)).sin());
        });
    const CoefficientVector xi = solve_least_squares(sys, all_active);
    double off = 0;
    for (size_t m = 0; m < lib.rhs.size(); ++m)
      if (static_cast<int>(m) != i_uxx)
        off = std::max(off, std::abs(xi.values[m]));
    pass = pass && std::abs(xi.values[i_uxx] - 0.1) <= kTolRecovery &&
           off <= kTolRecovery;
    char buf[120];
    std::snprintf(buf, sizeof buf,
                  "; three modes: coefficient(D_x^2 U) = %.4f (want 0.1 +/- "
                  "%.2g), largest other %.1e",
                  xi.values[i_uxx], kTolRecovery, off);
    note += buf;
  }
  verdict(4, pass, "manufactured diffusion recovery, K = 200: " + note);
}

// ---------------------------------------------------------------- criterion 5
void criterion_penalty_machinery() {
  bool pass = true;
  double worst_eq = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(mix_seed(500, seed));
    const int m = 1 + static_cast<int>(rng.below(13));
    CoefficientVector xi = CoefficientVector::zeros(m);
    double direct = 0;
    for (int i = 0; i < m; ++i) {
      const double mag = 0.01 + 1.99 * rng.uniform();
      xi.values[i] = rng.uniform() < 0.5 ? -mag : mag;
      direct += std::pow(mag, 0.1);
    }
    const double got = lp_loss(xi, refresh_eta(xi, 0.1, 1e-7));
    worst_eq = std::max(worst_eq, std::abs(got - direct) / direct);
  }
  pass = pass && worst_eq <= kTolPenalty;

  double worst_grad = 0;
  {
    CoefficientVector xi = CoefficientVector::zeros(4);
    xi.values << 0.8, -1.3, 0.05, 2.0;
    const Eigen::VectorXd eta = refresh_eta(xi, 0.1, 1e-7);
    for (int m = 0; m < 4; ++m) {
      const double h = 1e-3;
      CoefficientVector up = xi, dn = xi;
      up.values[m] += h;
      dn.values[m] -= h;
      const double fd = (lp_loss(up, eta) - lp_loss(dn, eta)) / (2 * h);
      worst_grad = std::max(worst_grad,
                            std::abs(fd - 2.0 * eta[m] * xi.values[m]));
    }
  }
  pass = pass && worst_grad <= kTolPenaltyGrad;

  bool thresholds = true;
  {
    const double root = std::sqrt(1e-7);
    CoefficientVector xi = CoefficientVector::zeros(4);
    xi.values << 1e-5, 0.2, root, -1e-5;
    const CoefficientVector cut = threshold_xi(xi, 1e-7);
    thresholds = cut.active == std::vector<std::uint8_t>{0, 1, 1, 0} &&
                 cut.values[0] == 0.0 && cut.values[2] == root;
    CoefficientVector again = cut;
    again.values[0] = 9.0;
    const CoefficientVector cut2 = threshold_xi(again, 1e-7);
    thresholds = thresholds && cut2.active[0] == 0 && cut2.values[0] == 0.0;
  }
  pass = pass && thresholds;

  char buf[200];
  std::snprintf(buf, sizeof buf,
                "reweighted penalty: epoch-boundary identity worst %.2e "
                "(tolerance %.0e), frozen-eta gradient worst %.2e (tolerance "
                "%.0e), threshold boundaries %s",
                worst_eq, kTolPenalty, worst_grad, kTolPenaltyGrad,
                thresholds ? "exact" : "WRONG");
  verdict(5, pass, buf);
}

// ---------------------------------------------------------------- criterion 6
void criterion_targeted_selection() {
  bool pass = true;
  {
    Eigen::VectorXd r = Eigen::VectorXd::Constant(5, 3.0);
    pass = pass && update_targeted_weights(r, {0, 1, 2, 3, 4}).empty();
  }
  {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(11);
    r[7] = 1.0;
    std::vector<int> ids;
    for (int i = 0; i < 11; ++i) ids.push_back(100 + i);
    const auto picked = update_targeted_weights(r, ids);
    pass = pass && picked.size() == 1 && picked[0] == 107;
  }
  {
    Eigen::VectorXd r(5);
    r << 1, 1, 1, 1, 100;
    pass = pass && update_targeted_weights(r, {0, 1, 2, 3, 4}).empty();
  }
  verdict(6, pass,
          "high-residual selection: equal rows none, lone spike selected, "
          "inside-two-deviations spike none");
}

// ---------------------------------------------------------------- criterion 7
void criterion_solver() {
  bool pass = true;
  std::string detail = "halved-step drift per preset:";
  for (const auto& name : preset_names()) {
    const PdePreset preset = preset_by_name(name);
    PdePreset half = preset;
    half.dt /= 2;
    half.save_every *= 2;
    const GridSolution a = solve_etdrk4(preset);
    const GridSolution b = solve_etdrk4(half);
    const Eigen::Index last = a.u.rows() - 1;
    const double drift =
        (a.u.row(last) - b.u.row(last)).cwiseAbs().maxCoeff() /
        a.u.row(last).cwiseAbs().maxCoeff();
    char buf[64];
    std::snprintf(buf, sizeof buf, " %s %.2e", name.c_str(), drift);
    detail += buf;
    pass = pass && drift <= kTolSolverDrift;

    if (name == "kdv") {
      const double m0 = a.u.row(0).sum();
      double worst = 0;
      for (Eigen::Index k = 0; k < a.u.rows(); ++k)
        worst = std::max(worst, std::abs(a.u.row(k).sum() - m0));
      worst /= std::abs(m0) + 1.0;
      std::snprintf(buf, sizeof buf, " (mass drift %.2e)", worst);
      detail += buf;
      pass = pass && worst <= kTolMass;
    }
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, " (tolerance %.0e)", kTolSolverDrift);
  verdict(7, pass, detail + buf);
}

// --------------------------------------------------------- criteria 8, 9, 10
struct IdentTarget {
  std::string term;
  double value;
};

// one identification run; support must match exactly, and when tol > 0 every
// coefficient must be within tol relative of its target
bool ident_run(const GridSolution& grid, int n_data, std::uint64_t seed,
               const TrainConfig& base, const std::vector<IdentTarget>& want,
               double tol, std::string& detail) {
  const Dataset ds = corrupt(grid, n_data, 0.25, seed);
  TrainConfig cfg = base;
  cfg.seed = seed;
  const LibrarySpec lib = LibrarySpec::default_1d();
  const TrainResult res = run_training(cfg, {ds}, lib);

  std::set<std::string> support;
  for (size_t m = 0; m < lib.rhs.size(); ++m)
    if (res.xi.active[m]) support.insert(format_term(lib.rhs[m]));
  std::set<std::string> expected;
  for (const auto& w : want) expected.insert(w.term);

  bool ok = support == expected;
  detail = "seed " + std::to_string(seed) + ": " + res.pde;
  if (!ok) {
    detail += " [wrong support]";
    return false;
  }
  if (tol <= 0) return true;
  for (const auto& w : want) {
    const double got = res.xi.values[term_index(lib, w.term)];
    if (std::abs(got - w.value) > tol * std::abs(w.value)) {
      char buf[96];
      std::snprintf(buf, sizeof buf, " [%s = %.4f outside %.0f%% of %.2f]",
                    w.term.c_str(), got, tol * 100, w.value);
      detail += buf;
      ok = false;
    }
  }
  return ok;
}

void criterion_identification(int criterion, const std::string& preset,
                              int n_data, const TrainConfig& base,
                              const std::vector<IdentTarget>& want, double tol,
                              const TrainConfig* reduced) {
  const GridSolution grid = solve_etdrk4(preset_by_name(preset));
  int passed = 0;
  std::string lines;
  for (const std::uint64_t seed : {1, 2, 3}) {
    std::string detail;
    const bool ok = ident_run(grid, n_data, seed, base, want, tol, detail);
    if (ok) ++passed;
    lines += "\n    " + detail + (ok ? "  [ok]" : "");
  }
  bool reduced_ok = true;
  if (reduced) {
    std::string detail;
    reduced_ok = ident_run(grid, n_data, 1, *reduced, want, 0.0, detail);
    lines += "\n    reduced schedule, support only, " + detail +
             (reduced_ok ? "  [ok]" : "");
  }
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "%s %d points, 25%% noise: %d of 3 seeds recovered the "
                "equation (majority needed, coefficients within %.0f%%)%s",
                preset.c_str(), n_data, passed, tol * 100,
                reduced ? (reduced_ok ? ", reduced schedule kept the support"
                                      : ", reduced schedule lost the support")
                        : "");
  verdict(criterion, passed >= 2 && reduced_ok, buf + lines);
}

}  // namespace

int main(int argc, char** argv) {
  bool fast = false, identification = false, full = false;
  for (int i = 1; i < argc; ++i) {
    if (!std::strcmp(argv[i], "--fast")) fast = true;
    else if (!std::strcmp(argv[i], "--identification")) identification = true;
    else if (!std::strcmp(argv[i], "--full")) full = true;
    else {
      std::fprintf(stderr, "usage: acceptance [--fast] [--identification] [--full]\n");
      return 2;
    }
  }
  if (!fast && !identification && !full) fast = true;

  if (fast) {
    criterion_gradients();
    criterion_parts_integration();
    criterion_affine_reuse();
    criterion_manufactured_recovery();
    criterion_penalty_machinery();
    criterion_targeted_selection();
    criterion_solver();
  }
  if (identification || full) {
    TrainConfig burgers;
    burgers.n_burn = 2000;
    burgers.n_sparse = 2000;
    burgers.n_tune = 0;
    burgers.lambda_lp = 2e-5;
    burgers.checkpoint_every = 0;
    TrainConfig reduced = burgers;  // must still find the right support
    reduced.n_burn = 500;
    reduced.n_sparse = 500;
    reduced.lambda_lp = 5e-4;
    criterion_identification(8, "burgers", 4000, burgers,
                             {{"D_x^2 U", 0.1}, {"D_x U^2", -0.5}},
                             kTolCoeffBurgers, &reduced);
  }
  if (full) {
    TrainConfig kdv;
    kdv.n_burn = 2000;
    kdv.n_sparse = 1000;
    kdv.n_tune = 100;
    kdv.lambda_lp = 0.005;
    kdv.checkpoint_every = 0;
    criterion_identification(9, "kdv", 4000, kdv,
                             {{"D_x^3 U", -1.0}, {"D_x U^2", -0.5}},
                             kTolCoeffKdv, nullptr);

    TrainConfig ks;
    ks.n_burn = 2000;
    ks.n_sparse = 2000;
    ks.n_tune = 100;
    ks.lambda_lp = 0.005;
    ks.checkpoint_every = 0;
    criterion_identification(
        10, "ks", 10000, ks,
        {{"D_x^2 U", -1.0}, {"D_x^4 U", -1.0}, {"D_x U^2", -0.5}},
        kTolCoeffKs, nullptr);
  }
  if (g_failures) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all requested criteria passed\n");
  return 0;
}
