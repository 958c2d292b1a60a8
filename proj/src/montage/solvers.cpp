#include "montage/solvers.hpp"

#include "montage/errors.hpp"
#include "montage/kernels.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <chrono>
#include <cmath>

namespace montage {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Eigen::SparseMatrix<double> to_eigen(const CsrMatrix &a) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(a.nnz()));
  for (std::int64_t r = 0; r < a.rows; ++r)
    for (std::int64_t k = a.row_ptr[static_cast<std::size_t>(r)];
         k < a.row_ptr[static_cast<std::size_t>(r) + 1]; ++k)
      trips.emplace_back(static_cast<int>(r),
                         static_cast<int>(a.col[static_cast<std::size_t>(k)]),
                         a.val[static_cast<std::size_t>(k)]);
  Eigen::SparseMatrix<double> m(static_cast<int>(a.rows),
                                static_cast<int>(a.cols));
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

std::vector<double> jacobi_inverse(const CsrMatrix &a) {
  std::vector<double> inv(static_cast<std::size_t>(a.rows), 1.0);
  for (std::int64_t r = 0; r < a.rows; ++r) {
    for (std::int64_t k = a.row_ptr[static_cast<std::size_t>(r)];
         k < a.row_ptr[static_cast<std::size_t>(r) + 1]; ++k) {
      if (a.col[static_cast<std::size_t>(k)] == r) {
        const double d = a.val[static_cast<std::size_t>(k)];
        if (d != 0.0 && std::isfinite(d))
          inv[static_cast<std::size_t>(r)] = 1.0 / d;
        break;
      }
    }
  }
  return inv;
}

void scale_into(std::span<const double> diag, std::span<const double> x,
                std::span<double> y) {
  const std::int64_t n = static_cast<std::int64_t>(x.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i)
    y[static_cast<std::size_t>(i)] =
        diag[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
}

} // namespace

std::string_view backend_name(Backend b) {
  switch (b) {
  case Backend::Direct:
    return "direct";
  case Backend::CG:
    return "cg";
  case Backend::BiCGSTAB:
    return "bicgstab";
  case Backend::GMRES:
    return "gmres";
  }
  return "unknown";
}

std::optional<Backend> backend_from_name(std::string_view name) {
  if (name == "direct")
    return Backend::Direct;
  if (name == "cg")
    return Backend::CG;
  if (name == "bicgstab")
    return Backend::BiCGSTAB;
  if (name == "gmres")
    return Backend::GMRES;
  return std::nullopt;
}

SolveReport solve_direct(const NormalSystem &ns) {
  const auto t0 = Clock::now();
  SolveReport report;
  report.status = "direct";

  Eigen::SparseMatrix<double> m = to_eigen(ns.a_tilde);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  ldlt.compute(m);
  if (ldlt.info() != Eigen::Success)
    throw SolverError("direct solve failed: matrix is not positive definite "
                      "(increase lambda or fix a tile)");
  const auto &dvec = ldlt.vectorD();
  for (Eigen::Index i = 0; i < dvec.size(); ++i) {
    if (!(dvec[i] > 0.0) || !std::isfinite(dvec[i]))
      throw SolverError("direct solve failed: non-positive pivot at index " +
                        std::to_string(i) +
                        " (increase lambda or fix a tile)");
  }

  Eigen::VectorXd b(static_cast<Eigen::Index>(ns.b_tilde.size()));
  for (std::size_t i = 0; i < ns.b_tilde.size(); ++i)
    b[static_cast<Eigen::Index>(i)] = ns.b_tilde[i];
  const Eigen::VectorXd x = ldlt.solve(b);
  report.x.assign(x.data(), x.data() + x.size());
  report.solve_seconds = seconds_since(t0);
  report.precision = precision(ns, report.x);
  return report;
}

namespace {

SolveReport run_cg(const NormalSystem &ns, const SolverConfig &cfg,
                   const IterObserver &observer) {
  const std::int64_t n = ns.a_tilde.rows;
  const std::int64_t max_iter = cfg.max_iter > 0 ? cfg.max_iter : 10 * n;
  const std::vector<double> minv = jacobi_inverse(ns.a_tilde);

  SolveReport rep;
  rep.x.assign(static_cast<std::size_t>(n), 0.0);
  std::vector<double> r = ns.b_tilde;
  std::vector<double> z(static_cast<std::size_t>(n));
  std::vector<double> p(static_cast<std::size_t>(n));
  std::vector<double> ap(static_cast<std::size_t>(n));

  const double bnorm = kernels::norm2(ns.b_tilde);
  const double stop = cfg.tol * (bnorm > 0.0 ? bnorm : 1.0);
  if (kernels::norm2(r) <= stop) {
    rep.status = "converged";
    return rep;
  }
  scale_into(minv, r, z);
  p = z;
  double rz = kernels::dot(r, z);
  for (std::int64_t it = 1; it <= max_iter; ++it) {
    kernels::spmv(ns.a_tilde, p, ap);
    const double p_ap = kernels::dot(p, ap);
    if (!(p_ap > 0.0)) {
      rep.status = "breakdown";
      rep.iterations = it - 1;
      return rep;
    }
    const double alpha = rz / p_ap;
    kernels::axpby(alpha, p, 1.0, rep.x);
    kernels::axpby(-alpha, ap, 1.0, r);
    const double rnorm = kernels::norm2(r);
    rep.residual_history.push_back(bnorm > 0.0 ? rnorm / bnorm : rnorm);
    rep.iterations = it;
    if (observer)
      observer(it, rep.x);
    if (rnorm <= stop) {
      rep.status = "converged";
      return rep;
    }
    scale_into(minv, r, z);
    const double rz_new = kernels::dot(r, z);
    const double beta = rz_new / rz;
    // p = z + beta p
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i)
      p[static_cast<std::size_t>(i)] = z[static_cast<std::size_t>(i)] +
                                       beta * p[static_cast<std::size_t>(i)];
    rz = rz_new;
  }
  rep.status = "max_iter";
  return rep;
}

SolveReport run_bicgstab(const NormalSystem &ns, const SolverConfig &cfg,
                         const IterObserver &observer) {
  const std::int64_t n = ns.a_tilde.rows;
  const std::int64_t max_iter = cfg.max_iter > 0 ? cfg.max_iter : 10 * n;
  const std::vector<double> minv = jacobi_inverse(ns.a_tilde);

  SolveReport rep;
  rep.x.assign(static_cast<std::size_t>(n), 0.0);
  std::vector<double> r = ns.b_tilde;
  const std::vector<double> r0 = r;
  std::vector<double> p(static_cast<std::size_t>(n), 0.0);
  std::vector<double> v(static_cast<std::size_t>(n), 0.0);
  std::vector<double> y(static_cast<std::size_t>(n));
  std::vector<double> z(static_cast<std::size_t>(n));
  std::vector<double> t(static_cast<std::size_t>(n));

  const double bnorm = kernels::norm2(ns.b_tilde);
  const double stop = cfg.tol * (bnorm > 0.0 ? bnorm : 1.0);
  if (kernels::norm2(r) <= stop) {
    rep.status = "converged";
    return rep;
  }

  double rho = 1.0, alpha = 1.0, omega = 1.0;
  const double tiny = 1e-300;
  for (std::int64_t it = 1; it <= max_iter; ++it) {
    const double rho_new = kernels::dot(r0, r);
    if (std::abs(rho_new) < tiny) {
      rep.status = "breakdown";
      rep.iterations = it - 1;
      return rep;
    }
    const double beta = (rho_new / rho) * (alpha / omega);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i)
      p[static_cast<std::size_t>(i)] =
          r[static_cast<std::size_t>(i)] +
          beta * (p[static_cast<std::size_t>(i)] -
                  omega * v[static_cast<std::size_t>(i)]);
    scale_into(minv, p, y);
    kernels::spmv(ns.a_tilde, y, v);
    const double r0v = kernels::dot(r0, v);
    if (std::abs(r0v) < tiny) {
      rep.status = "breakdown";
      rep.iterations = it - 1;
      return rep;
    }
    alpha = rho_new / r0v;
    kernels::axpby(alpha, y, 1.0, rep.x);
    kernels::axpby(-alpha, v, 1.0, r); // r is now the intermediate s
    double rnorm = kernels::norm2(r);
    if (rnorm <= stop) {
      rep.residual_history.push_back(bnorm > 0.0 ? rnorm / bnorm : rnorm);
      rep.iterations = it;
      rep.status = "converged";
      if (observer)
        observer(it, rep.x);
      return rep;
    }
    scale_into(minv, r, z);
    kernels::spmv(ns.a_tilde, z, t);
    const double tt = kernels::dot(t, t);
    if (tt < tiny) {
      rep.status = "breakdown";
      rep.iterations = it;
      return rep;
    }
    omega = kernels::dot(t, r) / tt;
    if (std::abs(omega) < tiny) {
      rep.status = "breakdown";
      rep.iterations = it;
      return rep;
    }
    kernels::axpby(omega, z, 1.0, rep.x);
    kernels::axpby(-omega, t, 1.0, r);
    rnorm = kernels::norm2(r);
    rep.residual_history.push_back(bnorm > 0.0 ? rnorm / bnorm : rnorm);
    rep.iterations = it;
    if (observer)
      observer(it, rep.x);
    if (rnorm <= stop) {
      rep.status = "converged";
      return rep;
    }
    rho = rho_new;
  }
  rep.status = "max_iter";
  return rep;
}

SolveReport run_gmres(const NormalSystem &ns, const SolverConfig &cfg,
                      const IterObserver & /*observer: iterates are only
                                              materialized at restarts*/) {
  const std::int64_t n = ns.a_tilde.rows;
  const std::int64_t max_iter = cfg.max_iter > 0 ? cfg.max_iter : 10 * n;
  const int m = std::max(1, cfg.restart);
  const std::vector<double> minv = jacobi_inverse(ns.a_tilde);

  SolveReport rep;
  rep.x.assign(static_cast<std::size_t>(n), 0.0);
  const double bnorm = kernels::norm2(ns.b_tilde);
  const double stop = cfg.tol * (bnorm > 0.0 ? bnorm : 1.0);

  std::vector<std::vector<double>> basis;
  std::vector<double> h(static_cast<std::size_t>((m + 1) * m), 0.0);
  std::vector<double> cs(static_cast<std::size_t>(m), 0.0);
  std::vector<double> sn(static_cast<std::size_t>(m), 0.0);
  std::vector<double> g(static_cast<std::size_t>(m) + 1, 0.0);
  std::vector<double> w(static_cast<std::size_t>(n));
  std::vector<double> tmp(static_cast<std::size_t>(n));
  auto hat = [&](int i, int j) -> double & {
    return h[static_cast<std::size_t>(i) * static_cast<std::size_t>(m) +
             static_cast<std::size_t>(j)];
  };

  // Right preconditioning keeps the monitored residual equal to the true
  // residual of the original system.
  auto apply_update = [&](int cols) {
    std::vector<double> yv(static_cast<std::size_t>(cols), 0.0);
    for (int i = cols - 1; i >= 0; --i) {
      double s = g[static_cast<std::size_t>(i)];
      for (int j = i + 1; j < cols; ++j)
        s -= hat(i, j) * yv[static_cast<std::size_t>(j)];
      yv[static_cast<std::size_t>(i)] = s / hat(i, i);
    }
    std::fill(tmp.begin(), tmp.end(), 0.0);
    for (int j = 0; j < cols; ++j)
      kernels::axpby(yv[static_cast<std::size_t>(j)], basis[static_cast<std::size_t>(j)],
                     1.0, tmp);
    // x += M^{-1} (V y)
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i)
      rep.x[static_cast<std::size_t>(i)] +=
          minv[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>(i)];
  };

  std::vector<double> r(static_cast<std::size_t>(n));
  while (rep.iterations < max_iter) {
    kernels::spmv(ns.a_tilde, rep.x, r);
    kernels::axpby(1.0, ns.b_tilde, -1.0, r); // r = b - A x
    const double beta = kernels::norm2(r);
    if (beta <= stop) {
      rep.status = "converged";
      return rep;
    }
    basis.assign(1, r);
    kernels::axpby(0.0, r, 1.0 / beta, basis[0]);
    std::fill(g.begin(), g.end(), 0.0);
    g[0] = beta;

    int j = 0;
    bool happy = false;
    for (; j < m && rep.iterations < max_iter; ++j) {
      scale_into(minv, basis[static_cast<std::size_t>(j)], tmp);
      kernels::spmv(ns.a_tilde, tmp, w);
      for (int i = 0; i <= j; ++i) {
        hat(i, j) = kernels::dot(w, basis[static_cast<std::size_t>(i)]);
        kernels::axpby(-hat(i, j), basis[static_cast<std::size_t>(i)], 1.0, w);
      }
      const double hnext = kernels::norm2(w);
      for (int i = 0; i < j; ++i) {
        const double t1 = cs[static_cast<std::size_t>(i)] * hat(i, j) +
                          sn[static_cast<std::size_t>(i)] * hat(i + 1, j);
        hat(i + 1, j) = -sn[static_cast<std::size_t>(i)] * hat(i, j) +
                        cs[static_cast<std::size_t>(i)] * hat(i + 1, j);
        hat(i, j) = t1;
      }
      const double denom = std::hypot(hat(j, j), hnext);
      if (denom == 0.0) {
        happy = true;
        ++j;
        break;
      }
      cs[static_cast<std::size_t>(j)] = hat(j, j) / denom;
      sn[static_cast<std::size_t>(j)] = hnext / denom;
      hat(j, j) = denom;
      g[static_cast<std::size_t>(j) + 1] =
          -sn[static_cast<std::size_t>(j)] * g[static_cast<std::size_t>(j)];
      g[static_cast<std::size_t>(j)] *= cs[static_cast<std::size_t>(j)];

      ++rep.iterations;
      const double rel =
          std::abs(g[static_cast<std::size_t>(j) + 1]) / (bnorm > 0.0 ? bnorm : 1.0);
      rep.residual_history.push_back(rel);
      if (std::abs(g[static_cast<std::size_t>(j) + 1]) <= stop ||
          hnext < 1e-300) {
        happy = true;
        ++j;
        break;
      }
      std::vector<double> next = w;
      kernels::axpby(0.0, w, 1.0 / hnext, next);
      basis.push_back(std::move(next));
    }
    apply_update(j);
    if (happy) {
      // Recompute the true residual; happy breakdown counts as convergence.
      kernels::spmv(ns.a_tilde, rep.x, r);
      kernels::axpby(1.0, ns.b_tilde, -1.0, r);
      if (kernels::norm2(r) <= std::max(stop, 1e-14 * (bnorm > 0.0 ? bnorm : 1.0))) {
        rep.status = "converged";
        return rep;
      }
    }
  }
  kernels::spmv(ns.a_tilde, rep.x, r);
  kernels::axpby(1.0, ns.b_tilde, -1.0, r);
  rep.status =
      kernels::norm2(r) <= stop ? std::string("converged") : std::string("max_iter");
  return rep;
}

} // namespace

SolveReport solve_iterative(const NormalSystem &ns, const SolverConfig &cfg,
                            const IterObserver &observer) {
  const auto t0 = Clock::now();
  SolveReport rep;
  switch (cfg.backend) {
  case Backend::CG:
    rep = run_cg(ns, cfg, observer);
    break;
  case Backend::BiCGSTAB:
    rep = run_bicgstab(ns, cfg, observer);
    break;
  case Backend::GMRES:
    rep = run_gmres(ns, cfg, observer);
    break;
  case Backend::Direct:
    throw std::invalid_argument("solve_iterative called with Direct backend");
  }
  rep.solve_seconds = seconds_since(t0);
  rep.precision = precision(ns, rep.x);
  return rep;
}

SolveReport solve(const NormalSystem &ns, const SolverConfig &cfg) {
  if (cfg.backend == Backend::Direct)
    return solve_direct(ns);
  return solve_iterative(ns, cfg);
}

double precision(const NormalSystem &ns, std::span<const double> x) {
  std::vector<double> r(static_cast<std::size_t>(ns.a_tilde.rows));
  kernels::spmv(ns.a_tilde, x, r);
  kernels::axpby(1.0, ns.b_tilde, -1.0, r);
  const double bnorm = kernels::norm2(ns.b_tilde);
  const double rnorm = kernels::norm2(r);
  return bnorm > 0.0 ? rnorm / bnorm : rnorm;
}

ResidualStats residual_stats(const SparseSystem &system,
                             std::span<const double> x) {
  std::vector<double> r(static_cast<std::size_t>(system.m()));
  kernels::spmv(system.a, x, r);
  const std::int64_t m = system.m();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i)
    r[static_cast<std::size_t>(i)] -= system.b[static_cast<std::size_t>(i)];

  std::map<std::string, std::pair<double, std::int64_t>> acc;
  for (const PairBlock &pb : system.pairs) {
    double sum = 0.0;
    for (std::int64_t i = 0; i < pb.n_points; ++i) {
      const double du = r[static_cast<std::size_t>(pb.row_begin + i)];
      const double dv =
          r[static_cast<std::size_t>(pb.row_begin + pb.n_points + i)];
      sum += std::hypot(du, dv);
    }
    for (const std::string *id : {&pb.p_tile, &pb.q_tile}) {
      auto &slot = acc[*id];
      slot.first += sum;
      slot.second += pb.n_points;
    }
  }

  ResidualStats stats;
  double total = 0.0;
  for (const auto &[id, slot] : acc) {
    const double mean = slot.second > 0 ? slot.first / static_cast<double>(slot.second) : 0.0;
    stats.per_tile_mean[id] = mean;
    total += mean;
  }
  stats.global_mean =
      acc.empty() ? 0.0 : total / static_cast<double>(acc.size());
  return stats;
}

} // namespace montage
