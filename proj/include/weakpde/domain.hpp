#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace weakpde {

// Axis-aligned box over (t, x_1, ..., x_d); axis 0 is always time.
struct DomainBox {
  Eigen::VectorXd lo, hi;

  int dim() const { return static_cast<int>(lo.size()); }

  void validate() const {
    if (lo.size() != hi.size() || lo.size() < 2)
      throw std::runtime_error("domain: need matching lo/hi with time + space");
    for (int i = 0; i < lo.size(); ++i)
      if (!(lo[i] < hi[i]))
        throw std::runtime_error("domain: empty extent on axis " +
                                 std::to_string(i));
  }

  bool contains(const Eigen::VectorXd& p) const {
    for (int i = 0; i < lo.size(); ++i)
      if (p[i] < lo[i] || p[i] > hi[i]) return false;
    return true;
  }

  double extent(int axis) const { return hi[axis] - lo[axis]; }

  double min_extent() const {
    double m = extent(0);
    for (int i = 1; i < lo.size(); ++i) m = std::min(m, extent(i));
    return m;
  }

  static DomainBox rect(double t0, double t1, double x0, double x1) {
    DomainBox b;
    b.lo = Eigen::Vector2d(t0, x0);
    b.hi = Eigen::Vector2d(t1, x1);
    return b;
  }
};

}  // namespace weakpde
