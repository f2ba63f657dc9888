#include <cmath>
#include <stdexcept>
#include <weakpde/optimizers.hpp>

namespace weakpde {

AdamState AdamState::init(Eigen::Index n) {
  AdamState st;
  st.m = Eigen::VectorXd::Zero(n);
  st.v = Eigen::VectorXd::Zero(n);
  return st;
}

void adam_step(AdamState& state, Eigen::VectorXd& params,
               const Eigen::VectorXd& grad, const AdamConfig& cfg) {
  if (state.m.size() != params.size() || grad.size() != params.size())
    throw std::runtime_error("adam: state/parameter size mismatch");
  ++state.t;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
  state.v = cfg.beta2 * state.v +
            (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  params.array() -=
      cfg.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + cfg.eps);
}

void LbfgsState::clear() {
  s.clear();
  y.clear();
  rho.clear();
  have_prev = false;
}

LbfgsReport lbfgs_step(LbfgsState& state, Eigen::VectorXd& x,
                       const LossGrad& fg, const LbfgsConfig& cfg) {
  LbfgsReport rep;
  Eigen::VectorXd g(x.size());
  const double f0 = fg(x, g);
  rep.loss = f0;
  rep.evaluations = 1;

  if (g.norm() == 0.0) {
    rep.accepted = true;  // already stationary
    return rep;
  }

  if (state.have_prev) {
    const Eigen::VectorXd s = x - state.prev_x;
    const Eigen::VectorXd yv = g - state.prev_g;
    const double sy = s.dot(yv);
    if (sy > cfg.curvature_eps) {
      state.s.push_back(s);
      state.y.push_back(yv);
      state.rho.push_back(1.0 / sy);
      while (static_cast<int>(state.s.size()) > cfg.history) {
        state.s.erase(state.s.begin());
        state.y.erase(state.y.begin());
        state.rho.erase(state.rho.begin());
      }
    }
  }

  // two-loop recursion
  Eigen::VectorXd d = -g;
  const int h = static_cast<int>(state.s.size());
  if (h > 0) {
    std::vector<double> a(h);
    for (int i = h - 1; i >= 0; --i) {
      a[i] = state.rho[i] * state.s[i].dot(d);
      d -= a[i] * state.y[i];
    }
    const double gamma =
        state.s[h - 1].dot(state.y[h - 1]) / state.y[h - 1].squaredNorm();
    d *= gamma;
    for (int i = 0; i < h; ++i) {
      const double b = state.rho[i] * state.y[i].dot(d);
      d += (a[i] - b) * state.s[i];
    }
  }
  double slope = g.dot(d);
  if (!(slope < 0.0)) {  // not a descent direction: fall back
    d = -g;
    slope = g.dot(d);
  }

  double alpha = (h == 0) ? std::min(1.0, 1.0 / g.norm()) : 1.0;
  Eigen::VectorXd gtrial(x.size());
  for (int ls = 0; ls < cfg.max_line_steps; ++ls) {
    const Eigen::VectorXd xt = x + alpha * d;
    const double ft = fg(xt, gtrial);
    ++rep.evaluations;
    if (std::isfinite(ft) && ft <= f0 + cfg.armijo_c * alpha * slope) {
      state.prev_x = x;
      state.prev_g = g;
      state.have_prev = true;
      x = xt;
      rep.accepted = true;
      rep.step = alpha;
      return rep;
    }
    alpha *= cfg.backtrack;
  }
  state.clear();  // stale curvature is what usually wedges the search
  return rep;
}

}  // namespace weakpde
