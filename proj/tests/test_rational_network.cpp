#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <weakpde/rational_network.hpp>
#include <weakpde/rng.hpp>

using namespace weakpde;

namespace {

// Independent re-derivation of the frozen activation constants: least-squares
// type-(3,2) fit of leaky ReLU (slope 0.01) on 401 points of [-1,1] with
// denominator normalized to b0 = 1, via 200 reweighting iterations.
std::array<double, 7> fit_reference_activation() {
  const int N = 401;
  Eigen::VectorXd xs(N), f(N);
  for (int i = 0; i < N; ++i) {
    xs[i] = -1.0 + 2.0 * i / (N - 1);
    f[i] = std::max(xs[i], 0.01 * xs[i]);
  }
  Eigen::VectorXd q = Eigen::VectorXd::Ones(N);
  Eigen::VectorXd c(6);
  for (int it = 0; it < 200; ++it) {
    Eigen::MatrixXd M(N, 6);
    Eigen::VectorXd r(N);
    for (int i = 0; i < N; ++i) {
      const double x = xs[i], w = 1.0 / q[i];
      M(i, 0) = w;
      M(i, 1) = w * x;
      M(i, 2) = w * x * x;
      M(i, 3) = w * x * x * x;
      M(i, 4) = -w * f[i] * x;
      M(i, 5) = -w * f[i] * x * x;
      r[i] = w * f[i];
    }
    c = M.colPivHouseholderQr().solve(r);
    for (int i = 0; i < N; ++i) q[i] = 1.0 + c[4] * xs[i] + c[5] * xs[i] * xs[i];
  }
  return {c[0], c[1], c[2], c[3], 1.0, c[4], c[5]};
}

NetworkConfig tiny_config(int layers = 2, int width = 3) {
  return NetworkConfig::for_domain(DomainBox::rect(0, 2, -1, 3), layers, width);
}

}  // namespace

TEST_CASE("stored activation constants match the fit oracle") {
  const auto oracle = fit_reference_activation();
  const RationalActivation act = RationalActivation::reference_init();
  CHECK(std::abs(act.num[0] - oracle[0]) <= 1e-12);
  CHECK(std::abs(act.num[1] - oracle[1]) <= 1e-12);
  CHECK(std::abs(act.num[2] - oracle[2]) <= 1e-12);
  CHECK(std::abs(act.num[3] - oracle[3]) <= 1e-12);
  CHECK(act.den[0] == 1.0);
  CHECK(std::abs(act.den[1] - oracle[5]) <= 1e-12);
  CHECK(std::abs(act.den[2] - oracle[6]) <= 1e-12);
  // denominator must have no real roots
  CHECK(act.den[1] * act.den[1] - 4.0 * act.den[2] * act.den[0] < 0.0);
  // value at zero is a0/b0
  CHECK(std::abs(act(0.0) - oracle[0]) <= 1e-12);
}

TEST_CASE("normalization maps the domain box onto [-1,1]") {
  const DomainBox box = DomainBox::rect(0, 10, -8, 8);
  const NetworkConfig cfg = NetworkConfig::for_domain(box);
  CHECK(cfg.input_dim == 2);
  CHECK(cfg.hidden_layers == 5);
  CHECK(cfg.width == 40);
  CHECK((0.0 - cfg.norm_shift[0]) * cfg.norm_scale[0] == -1.0);
  CHECK((10.0 - cfg.norm_shift[0]) * cfg.norm_scale[0] == 1.0);
  CHECK((-8.0 - cfg.norm_shift[1]) * cfg.norm_scale[1] == -1.0);
  CHECK((8.0 - cfg.norm_shift[1]) * cfg.norm_scale[1] == 1.0);

  DomainBox bad = box;
  bad.hi[1] = bad.lo[1];
  CHECK_THROWS(NetworkConfig::for_domain(bad));
}

TEST_CASE("initialization is seeded, bounded, and exactly reproducible") {
  const NetworkConfig cfg = tiny_config(3, 7);
  const Eigen::VectorXd p1 = init_network(cfg, 42);
  const Eigen::VectorXd p2 = init_network(cfg, 42);
  const Eigen::VectorXd p3 = init_network(cfg, 43);
  CHECK((p1 - p2).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((p1 - p3).lpNorm<Eigen::Infinity>() > 0.0);

  const NetOffsets off = net_offsets(cfg);
  CHECK(static_cast<int>(p1.size()) == off.total);
  const RationalActivation ref = RationalActivation::reference_init();
  for (const auto& L : off.layers) {
    const double bound = std::sqrt(6.0 / (L.in_dim + L.out_dim));
    for (int i = 0; i < L.out_dim * L.in_dim; ++i) {
      CHECK(std::abs(p1[L.weight + i]) <= bound);
    }
    for (int i = 0; i < L.out_dim; ++i) CHECK(p1[L.bias + i] == 0.0);
    for (int i = 0; i < 4; ++i) CHECK(p1[L.act_num + i] == ref.num[i]);
    for (int i = 0; i < 3; ++i) CHECK(p1[L.act_den + i] == ref.den[i]);
  }
  const double obound = std::sqrt(6.0 / (7 + 1));
  for (int i = 0; i < 7; ++i) CHECK(std::abs(p1[off.out_weight + i]) <= obound);
  CHECK(p1[off.out_bias] == 0.0);
}

TEST_CASE("batch evaluation equals point-by-point evaluation bit-for-bit") {
  const NetworkConfig cfg = tiny_config();
  const Eigen::VectorXd p = init_network(cfg, 9);
  Rng rng(1);
  Eigen::ArrayXXd pts(50, 2);
  for (int i = 0; i < 50; ++i) {
    pts(i, 0) = rng.uniform(0, 2);
    pts(i, 1) = rng.uniform(-1, 3);
  }
  const Eigen::ArrayXd batch = evaluate(cfg, p, pts);
  for (int i = 0; i < 50; ++i) {
    const Eigen::ArrayXd one = evaluate(cfg, p, pts.row(i));
    CHECK(one(0) == batch(i));
  }
}

TEST_CASE("all-zero parameters evaluate to exactly zero") {
  const NetworkConfig cfg = tiny_config();
  const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(net_offsets(cfg).total);
  Eigen::ArrayXXd pts(3, 2);
  pts << 0.0, 0.0, 1.0, 2.0, 2.0, -1.0;
  const Eigen::ArrayXd out = evaluate(cfg, zeros, pts);
  for (int i = 0; i < 3; ++i) CHECK(out(i) == 0.0);
}

TEST_CASE("singular activation denominator names the offending point") {
  NetworkConfig cfg = tiny_config(1, 1);
  const NetOffsets off = net_offsets(cfg);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(off.total);
  // h(x) = x_norm; activation 1/h blows up where x_norm = 0
  p[off.layers[0].weight + 0] = 0.0;  // t coefficient
  p[off.layers[0].weight + 1] = 1.0;  // x coefficient
  p[off.layers[0].act_num + 0] = 1.0;
  p[off.layers[0].act_den + 1] = 1.0;
  p[off.out_weight] = 1.0;
  Eigen::ArrayXXd pts(1, 2);
  pts << 0.5, 1.0;  // x = 1 is the box midpoint, so x_norm = 0
  CHECK_THROWS_WITH_AS(evaluate(cfg, p, pts), doctest::Contains("1"), EvalError);
}

TEST_CASE("debug domain check flags outside points") {
  const NetworkConfig cfg = tiny_config();
  const Eigen::VectorXd p = init_network(cfg, 3);
  const DomainBox box = DomainBox::rect(0, 2, -1, 3);
  Eigen::ArrayXXd inside(1, 2), outside(1, 2);
  inside << 1.0, 0.0;
  outside << 3.5, 0.0;
  CHECK_NOTHROW(evaluate(cfg, p, inside, &box));
  CHECK_THROWS_AS(evaluate(cfg, p, outside, &box), EvalError);
}

TEST_CASE("taped forward agrees with the plain evaluator") {
  const NetworkConfig cfg = tiny_config(2, 5);
  ParamLayout layout;
  const NetworkGroups g = register_network(layout, cfg, "net0.");
  Eigen::VectorXd params(layout.size());
  params.segment(g.begin_offset, g.size) = init_network(cfg, 17);

  Rng rng(2);
  Eigen::ArrayXXd pts(20, 2);
  for (int i = 0; i < 20; ++i) {
    pts(i, 0) = rng.uniform(0, 2);
    pts(i, 1) = rng.uniform(-1, 3);
  }
  Tape tape(layout, params);
  const int out = emit_network(tape, cfg, g, pts);
  const Eigen::ArrayXd plain =
      evaluate(cfg, params.segment(g.begin_offset, g.size), pts);
  for (int i = 0; i < 20; ++i) {
    const double rel = std::abs(tape.value(out)(i, 0) - plain(i)) /
                       std::max(std::abs(plain(i)), 1e-300);
    CHECK(rel <= 1e-14);
  }
}

TEST_CASE("registered groups tile a contiguous slice in declaration order") {
  const NetworkConfig cfg = tiny_config(2, 4);
  ParamLayout layout;
  layout.add("pad", 3);
  const NetworkGroups g = register_network(layout, cfg, "n.");
  CHECK(g.begin_offset == 3);
  CHECK(g.size == net_offsets(cfg).total);
  CHECK(layout.size() == 3 + g.size);
  // block order within the slice matches net_offsets
  const NetOffsets off = net_offsets(cfg);
  CHECK(layout.group(g.weight[0]).offset - g.begin_offset == off.layers[0].weight);
  CHECK(layout.group(g.act_den[1]).offset - g.begin_offset == off.layers[1].act_den);
  CHECK(layout.group(g.out_bias).offset - g.begin_offset == off.out_bias);
}

TEST_CASE("checkpoint round-trips bit-exactly and validates its header") {
  const NetworkConfig cfg = tiny_config(3, 6);
  const Eigen::VectorXd p = init_network(cfg, 77);
  const std::string path = "/tmp/weakpde_test_net.ckpt";
  save_network(path, cfg, p);
  const auto [cfg2, p2] = load_network(path);
  CHECK(cfg2.input_dim == cfg.input_dim);
  CHECK(cfg2.hidden_layers == cfg.hidden_layers);
  CHECK(cfg2.width == cfg.width);
  CHECK(cfg2.output_dim == cfg.output_dim);
  CHECK((cfg2.norm_shift - cfg.norm_shift).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((cfg2.norm_scale - cfg.norm_scale).lpNorm<Eigen::Infinity>() == 0.0);
  REQUIRE(p2.size() == p.size());
  CHECK((p2 - p).lpNorm<Eigen::Infinity>() == 0.0);

  // corrupt the magic
  FILE* f = std::fopen(path.c_str(), "r+b");
  std::fputc('X', f);
  std::fclose(f);
  CHECK_THROWS(load_network(path));
  std::remove(path.c_str());
}
