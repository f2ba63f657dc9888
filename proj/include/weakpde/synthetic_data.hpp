#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>
#include <weakpde/domain.hpp>

namespace weakpde {

// Scattered noisy samples plus the provenance needed to reproduce them.
struct Dataset {
  Eigen::VectorXd t, x, value;
  DomainBox domain;  // [0, T] x [x_min, x_max]
  std::string preset;
  double noise_level = 0.0;  // q: noise SD as a fraction of sigma_nf
  double sigma_nf = 0.0;     // SD of the full noise-free grid
  std::uint64_t seed = 0;

  int n_data() const { return static_cast<int>(value.size()); }
};

// Periodic pseudo-spectral problem: u_t = L u - (u^2/2)_x with L given by its
// Fourier symbol. The quadratic term is the only nonlinearity in scope.
struct PdePreset {
  std::string name;
  DomainBox domain;
  int grid = 512;      // spatial nodes, power of two
  double dt = 0.0;     // integrator step (an integer count per T)
  int save_every = 0;  // steps between saved slices
  std::function<std::complex<double>(double)> symbol;  // L at wavenumber k
  std::function<double(double)> u0;
};

// burgers, kdv, ks, kdv-sine (case-insensitive; '_' and '-' interchangeable)
PdePreset preset_by_name(const std::string& name);
std::vector<std::string> preset_names();

struct GridSolution {
  Eigen::VectorXd tgrid;  // saved times, starting at t = 0
  Eigen::VectorXd xgrid;  // periodic nodes, right endpoint excluded
  Eigen::MatrixXd u;      // tgrid.size() x xgrid.size()
  DomainBox domain;
  std::string preset;
};

// Fourth-order exponential time differencing (ETDRK4) with 2/3-rule
// dealiasing of the quadratic term. Throws on blow-up (max|u| > 1e6),
// naming the preset and the time reached.
GridSolution solve_etdrk4(const PdePreset& preset);

// sigma_nf from the full grid, then n_data points drawn uniformly without
// replacement, each value perturbed by N(0, (q sigma_nf)^2).
Dataset corrupt(const GridSolution& grid, int n_data, double noise_level,
                std::uint64_t seed);

// "t x value" text table plus a <path>.meta.json sidecar with domain and
// provenance; doubles printed with %.17g so they round-trip exactly.
void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);

// full noise-free grid in the same table layout (no sidecar)
void write_grid(const std::string& path, const GridSolution& grid);

// raw rows of either file kind, one (t, x, value) triple per row
Eigen::MatrixXd read_table(const std::string& path);

}  // namespace weakpde
