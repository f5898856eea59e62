#pragma once

// Dense verification of the matrix-free operators at tiny sizes. Reference
// matrices are assembled entry by entry from the shift-and-sum definitions and
// never call the operators they check.

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "odis/forward.hpp"
#include "odis/linalg.hpp"
#include "odis/recon.hpp"

namespace odis::oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline std::size_t cube_index(std::size_t H, std::size_t W, std::size_t r, std::size_t y, std::size_t c) {
  return (c * H + r) * W + y;
}

/// Row r*(W + d(C-1)) + y + d c, column (c, r, y) = 1.
inline Matrix disperse_matrix(std::size_t H, std::size_t W, std::size_t C, std::size_t d) {
  const std::size_t Wd = W + d * (C - 1);
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(H * Wd), static_cast<Eigen::Index>(H * W * C));
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t y = 0; y < W; ++y)
        m(static_cast<Eigen::Index>(r * Wd + y + d * c), static_cast<Eigen::Index>(cube_index(H, W, r, y, c))) = 1.0;
  return m;
}

inline Matrix pan_matrix(std::size_t H, std::size_t W, std::size_t C) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(H * W), static_cast<Eigen::Index>(H * W * C));
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t y = 0; y < W; ++y)
        m(static_cast<Eigen::Index>(r * W + y), static_cast<Eigen::Index>(cube_index(H, W, r, y, c))) = 1.0;
  return m;
}

inline Matrix normal_matrix(std::size_t H, std::size_t W, std::size_t C, std::size_t d, double rho,
                            double lambda) {
  const Matrix A = disperse_matrix(H, W, C, d), P = pan_matrix(H, W, C);
  return A.transpose() * A + lambda * P.transpose() * P +
         rho * Matrix::Identity(A.cols(), A.cols());
}

/// Cyclic normal matrix on rows of length L: each band is circularly shifted
/// by d c before summation, PAN sums all L columns.
inline Matrix cyclic_normal_matrix(std::size_t H, std::size_t L, std::size_t C, std::size_t d, double rho,
                                   double lambda) {
  const auto n = static_cast<Eigen::Index>(H * L * C);
  Matrix A = Matrix::Zero(static_cast<Eigen::Index>(H * L), n);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t y = 0; y < L; ++y)
        A(static_cast<Eigen::Index>(r * L + (y + d * c) % L), static_cast<Eigen::Index>(cube_index(H, L, r, y, c))) = 1.0;
  const Matrix P = pan_matrix(H, L, C);
  return A.transpose() * A + lambda * P.transpose() * P + rho * Matrix::Identity(n, n);
}

inline Matrix to_eigen(const DenseMatrix& d) {
  Matrix m(static_cast<Eigen::Index>(d.rows), static_cast<Eigen::Index>(d.cols));
  for (std::size_t r = 0; r < d.rows; ++r)
    for (std::size_t c = 0; c < d.cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = d(r, c);
  return m;
}

inline Vector to_eigen(std::span<const double> v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Vector random_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Vector v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = g(rng);
  return v;
}

inline double min_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  return es.eigenvalues().minCoeff();
}

inline double asymmetry(const Matrix& m) { return (m - m.transpose()).cwiseAbs().maxCoeff(); }

// Materializations of the matrix-free operators.

inline Matrix materialized_disperse(const OdisSpec& s) {
  return to_eigen(materialize_dense([&](auto in, auto out) { disperse(s, in, out); }, s.cube_shape().size(),
                                    s.height * s.dispersed_width()));
}
inline Matrix materialized_disperse_adjoint(const OdisSpec& s) {
  return to_eigen(materialize_dense([&](auto in, auto out) { disperse_adjoint(s, in, out); },
                                    s.height * s.dispersed_width(), s.cube_shape().size()));
}
inline Matrix materialized_pan(const OdisSpec& s) {
  const Shape sh = s.cube_shape();
  return to_eigen(materialize_dense([&](auto in, auto out) { pan_sum(sh, in, out); }, sh.size(), sh.pixels()));
}
inline Matrix materialized_pan_adjoint(const OdisSpec& s) {
  const Shape sh = s.cube_shape();
  return to_eigen(materialize_dense([&](auto in, auto out) { pan_adjoint(sh, in, out); }, sh.pixels(), sh.size()));
}

// ---------------------------------------------------------------------------
// Check suite.

struct Check {
  std::string name;
  double error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

inline Check make_check(std::string name, double error, double tolerance) {
  return {std::move(name), error, tolerance, std::isfinite(error) && error <= tolerance};
}

inline std::string dims_label(const OdisSpec& s) {
  return "(" + std::to_string(s.height) + "," + std::to_string(s.width) + "," + std::to_string(s.channels) +
         ",d=" + std::to_string(s.step) + ")";
}

inline Check hand_matrix_check() {
  Matrix hand(3, 4);
  hand << 1, 0, 0, 0,
          0, 1, 1, 0,
          0, 0, 0, 1;
  const Matrix got = materialized_disperse(OdisSpec{1, 2, 2, 1});
  const double err = got.rows() == 3 && got.cols() == 4 ? (got - hand).cwiseAbs().maxCoeff() : INFINITY;
  return make_check("disperse (1,2,2,d=1) equals hand matrix", err, 0.0);
}

inline const std::vector<OdisSpec>& oracle_dims() {
  static const std::vector<OdisSpec> dims{{1, 2, 2, 1}, {2, 3, 2, 1}, {2, 3, 2, 2}, {4, 6, 3, 1}, {4, 6, 3, 2}};
  return dims;
}

inline std::vector<Check> operator_checks(const OdisSpec& s) {
  std::vector<Check> out;
  const std::string tag = dims_label(s);
  const Matrix A = disperse_matrix(s.height, s.width, s.channels, s.step);
  const Matrix P = pan_matrix(s.height, s.width, s.channels);
  out.push_back(make_check("disperse dense " + tag, (materialized_disperse(s) - A).cwiseAbs().maxCoeff(), 1e-12));
  out.push_back(make_check("disperse adjoint dense " + tag,
                           (materialized_disperse_adjoint(s) - A.transpose()).cwiseAbs().maxCoeff(), 1e-12));
  out.push_back(make_check("pan dense " + tag, (materialized_pan(s) - P).cwiseAbs().maxCoeff(), 1e-12));
  out.push_back(make_check("pan adjoint dense " + tag,
                           (materialized_pan_adjoint(s) - P.transpose()).cwiseAbs().maxCoeff(), 1e-12));

  const double rho = 0.1, lambda = 0.5;
  const Matrix Hd = normal_matrix(s.height, s.width, s.channels, s.step, rho, lambda);
  const Matrix Hm = to_eigen(materialize_dense(NormalOperator(s, rho, lambda)));
  out.push_back(make_check("normal operator dense " + tag, (Hm - Hd).cwiseAbs().maxCoeff(), 1e-12));
  out.push_back(make_check("normal operator symmetric " + tag, asymmetry(Hm), 1e-12));
  out.push_back(make_check("normal operator eigenvalues >= rho " + tag, std::max(0.0, rho - min_eigenvalue(Hm)), 1e-10));

  std::mt19937_64 rng(11);
  const Vector x = random_vector(A.cols(), rng), y = random_vector(A.rows(), rng);
  Volume xv(s.cube_shape(), std::vector<double>(x.data(), x.data() + x.size()));
  Image yi(s.height, s.dispersed_width(), std::vector<double>(y.data(), y.data() + y.size()));
  const Vector expect = A.transpose() * (y - A * x);
  const Vector got = to_eigen(data_residual(xv, yi, s).values());
  out.push_back(make_check("data_residual dense " + tag, (got - expect).cwiseAbs().maxCoeff(), 1e-12));
  return out;
}

/// |P^{-1} H~ v - v| / |v| for the cyclic preconditioner at one setting.
inline double cyclic_exactness_error(std::size_t L, std::size_t C, std::size_t d, double rho, double lambda,
                                     std::size_t H = 2, std::uint64_t seed = 5) {
  const std::size_t W = L - d * (C - 1);
  const OdisSpec s{H, W, C, d};
  const CyclicPreconditioner pre(s, rho, lambda, L);
  const Matrix Ht = cyclic_normal_matrix(H, L, C, d, rho, lambda);
  std::mt19937_64 rng(seed);
  const Vector v = random_vector(static_cast<std::size_t>(Ht.cols()), rng);
  const Vector hv = Ht * v;
  std::vector<double> out(static_cast<std::size_t>(v.size()));
  pre.apply_cyclic(std::span<const double>(hv.data(), static_cast<std::size_t>(hv.size())), out);
  return (to_eigen(out) - v).norm() / v.norm();
}

inline Check cyclic_grid_check() {
  double worst = 0.0;
  for (std::size_t L : {8, 16})
    for (std::size_t C : {2, 3, 4})
      for (std::size_t d : {1, 2})
        for (double rho : {0.01, 0.1, 1.0})
          for (double lambda : {0.0, 0.5, 1.0}) worst = std::max(worst, cyclic_exactness_error(L, C, d, rho, lambda));
  return make_check("cyclic preconditioner inverts cyclic normal matrix (108 settings)", worst, 1e-10);
}

inline std::vector<Check> preconditioner_checks(const OdisSpec& s) {
  const std::string tag = dims_label(s);
  const double rho = 0.1, lambda = 0.5;
  std::vector<Check> out;
  for (auto policy : {PaddingPolicy::exact, PaddingPolicy::fast}) {
    const CyclicPreconditioner pre(s, rho, lambda, policy);
    const Matrix Pinv = to_eigen(materialize_dense(pre));
    const std::string p = policy == PaddingPolicy::exact ? " exact" : " fast";
    out.push_back(make_check("preconditioner symmetric" + p + " " + tag, asymmetry(Pinv), 1e-12));
    out.push_back(make_check("preconditioner positive definite" + p + " " + tag,
                             min_eigenvalue(Pinv) > 0.0 ? 0.0 : 1.0, 0.0));
  }
  return out;
}

/// PCG x-step against a dense LDLT solve of the same system.
inline Check x_step_check(const OdisSpec& s) {
  const double rho = 0.1, lambda = 0.5;
  std::mt19937_64 rng(3);
  const Shape sh = s.cube_shape();
  const Vector yd = random_vector(s.height * s.dispersed_width(), rng).cwiseAbs();
  const Vector yp = random_vector(sh.pixels(), rng).cwiseAbs();
  const Vector z = random_vector(sh.size(), rng), u = 0.1 * random_vector(sh.size(), rng);
  const Matrix A = disperse_matrix(s.height, s.width, s.channels, s.step);
  const Matrix P = pan_matrix(s.height, s.width, s.channels);
  const Vector rhs = A.transpose() * yd + lambda * P.transpose() * yp + rho * (z - u);
  const Vector expect = normal_matrix(s.height, s.width, s.channels, s.step, rho, lambda).ldlt().solve(rhs);

  AdmmState st = AdmmState::start(Volume(sh));
  st.z = Volume(sh, std::vector<double>(z.data(), z.data() + z.size()));
  st.u = Volume(sh, std::vector<double>(u.data(), u.data() + u.size()));
  const Image ydi(s.height, s.dispersed_width(), std::vector<double>(yd.data(), yd.data() + yd.size()));
  const Image ypi(s.height, s.width, std::vector<double>(yp.data(), yp.data() + yp.size()));
  x_step(st, ydi, ypi, s, rho, lambda, 200, 1e-13);
  const double err = (to_eigen(st.x.values()) - expect).norm() / expect.norm();
  return make_check("x_step matches dense solve " + dims_label(s), err, 1e-9);
}

inline std::vector<Check> run_all() {
  std::vector<Check> out{hand_matrix_check()};
  for (const auto& s : oracle_dims()) {
    auto c = operator_checks(s);
    out.insert(out.end(), c.begin(), c.end());
  }
  out.push_back(cyclic_grid_check());
  for (const auto& s : {OdisSpec{2, 3, 2, 1}, OdisSpec{4, 6, 3, 2}}) {
    auto c = preconditioner_checks(s);
    out.insert(out.end(), c.begin(), c.end());
    out.push_back(x_step_check(s));
  }
  return out;
}

}  // namespace odis::oracle
