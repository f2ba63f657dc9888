#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace weakpde {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Eigen::VectorXd m, v;  // first/second moment accumulators
  long long t = 0;       // completed steps

  static AdamState init(Eigen::Index n);
};

// One full-batch Adam step in place, with bias-corrected moments.
void adam_step(AdamState& state, Eigen::VectorXd& params,
               const Eigen::VectorXd& grad, const AdamConfig& cfg = {});

struct LbfgsConfig {
  int history = 10;
  int max_line_steps = 20;
  double armijo_c = 1e-4;
  double backtrack = 0.5;
  double curvature_eps = 1e-10;  // pairs with s.y at or below this are skipped
};

// Evaluates the objective at x and fills grad; returns the loss.
using LossGrad = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct LbfgsState {
  std::vector<Eigen::VectorXd> s, y;  // newest last
  std::vector<double> rho;
  Eigen::VectorXd prev_x, prev_g;
  bool have_prev = false;

  void clear();
};

struct LbfgsReport {
  bool accepted = false;
  double loss = 0.0;       // objective at the point where the step started
  double step = 0.0;       // accepted line-search step length (0 if rejected)
  int evaluations = 0;     // oracle calls consumed by this iteration
};

// One two-loop L-BFGS iteration with Armijo backtracking. On line-search
// failure the parameters stay put and the curvature history is dropped.
LbfgsReport lbfgs_step(LbfgsState& state, Eigen::VectorXd& x,
                       const LossGrad& fg, const LbfgsConfig& cfg = {});

}  // namespace weakpde
