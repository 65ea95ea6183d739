#include "qrs/rotated_qr.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "qrs/error.hpp"

namespace qrs {

double check_loss(double tau, double r) { return r >= 0.0 ? tau * r : (tau - 1.0) * r; }

namespace {

struct Breakpoint {
  double t;
  double c;
  std::size_t i;
};

bool bp_less(const Breakpoint& a, const Breakpoint& b) {
  return a.t < b.t || (a.t == b.t && a.i < b.i);
}

// Smallest breakpoint (in (t, i) order) at which the accumulated slope gain
// reaches `need`; returns bps.size() if the gains never reach it.
std::size_t weighted_select(std::vector<Breakpoint>& bps, double need) {
  std::size_t lo = 0, hi = bps.size();
  double acc = 0.0;
  while (hi - lo > 16) {
    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(bps.begin() + static_cast<std::ptrdiff_t>(lo),
                     bps.begin() + static_cast<std::ptrdiff_t>(mid),
                     bps.begin() + static_cast<std::ptrdiff_t>(hi), bp_less);
    double left = 0.0;
    for (std::size_t q = lo; q < mid; ++q) left += bps[q].c;
    if (acc + left >= need) {
      hi = mid;
    } else if (acc + left + bps[mid].c >= need) {
      return mid;
    } else {
      acc += left + bps[mid].c;
      lo = mid + 1;
    }
  }
  std::sort(bps.begin() + static_cast<std::ptrdiff_t>(lo),
            bps.begin() + static_cast<std::ptrdiff_t>(hi), bp_less);
  for (std::size_t q = lo; q < hi; ++q) {
    acc += bps[q].c;
    if (acc >= need) return q;
  }
  return bps.size();
}

std::string default_name(std::size_t j) { return "x" + std::to_string(j); }

}  // namespace

RotatedQr::RotatedQr(const RowMatrix& x, std::span<const double> y, std::span<const double> weights,
                     std::vector<std::string> names) {
  n_ = static_cast<std::size_t>(x.rows());
  const auto k = x.cols();
  if (y.size() != n_) throw Error(ErrorCode::domain, "outcome length does not match the design");
  if (!weights.empty() && weights.size() != n_) {
    throw Error(ErrorCode::domain, "weight length does not match the design");
  }
  if (k == 0) throw Error(ErrorCode::domain, "design has no columns");
  compact_of_.assign(n_, -1);
  for (std::size_t i = 0; i < n_; ++i) {
    const double wi = weights.empty() ? 1.0 : weights[i];
    if (!std::isfinite(wi) || wi < 0.0) throw Error(ErrorCode::domain, "weights must be finite and nonnegative");
    if (!std::isfinite(y[i])) throw Error(ErrorCode::domain, "outcomes must be finite");
    if (wi > 0.0) {
      compact_of_[i] = static_cast<std::ptrdiff_t>(row_of_.size());
      row_of_.push_back(i);
      y_.push_back(y[i]);
      w_.push_back(wi);
      ztol_.push_back(1e-11 * (1.0 + std::abs(y[i])));
    }
  }
  const auto m = static_cast<Eigen::Index>(row_of_.size());
  if (m == 0) throw Error(ErrorCode::domain, "no observation carries positive weight");
  x_.resize(m, k);
  for (Eigen::Index r = 0; r < m; ++r) x_.row(r) = x.row(static_cast<Eigen::Index>(row_of_[static_cast<std::size_t>(r)]));

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x_);
  qr.setThreshold(1e-10);
  if (qr.rank() < k) {
    std::vector<std::string> cols;
    const auto perm = qr.colsPermutation().indices();
    for (Eigen::Index j = qr.rank(); j < k; ++j) {
      const auto c = static_cast<std::size_t>(perm(j));
      cols.push_back(c < names.size() ? names[c] : default_name(c));
    }
    std::string list;
    for (const auto& c : cols) list += (list.empty() ? "" : ", ") + c;
    throw CollinearityError(cols, "quantile regression design is rank deficient on the weighted support; dependent columns: " + list);
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    wscale_ += w_[static_cast<std::size_t>(i)] * std::max(1.0, x_.row(i).cwiseAbs().maxCoeff());
  }
}

std::vector<std::size_t> RotatedQr::cold_basis(const std::vector<double>& tau) const {
  (void)tau;
  const auto k = x_.cols();
  const auto m = static_cast<std::size_t>(x_.rows());
  // Weighted least squares start, then the k best-fitting independent rows.
  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd xty = Eigen::VectorXd::Zero(k);
  for (std::size_t i = 0; i < m; ++i) {
    const auto xi = x_.row(static_cast<Eigen::Index>(i));
    xtx.noalias() += w_[i] * xi.transpose() * xi;
    xty.noalias() += (w_[i] * y_[i]) * xi.transpose();
  }
  const Eigen::VectorXd b = xtx.ldlt().solve(xty);
  std::vector<double> absr(m);
  for (std::size_t i = 0; i < m; ++i) absr[i] = std::abs(y_[i] - x_.row(static_cast<Eigen::Index>(i)).dot(b));
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) { return absr[a] < absr[c]; });

  std::vector<std::size_t> basis;
  std::vector<Eigen::VectorXd> ortho;
  for (std::size_t i : order) {
    Eigen::VectorXd v = x_.row(static_cast<Eigen::Index>(i)).transpose();
    const double norm0 = v.norm();
    if (norm0 == 0.0) continue;
    for (const auto& q : ortho) v -= q.dot(v) * q;
    const double norm = v.norm();
    if (norm > 1e-8 * norm0) {
      ortho.push_back(v / norm);
      basis.push_back(i);
      if (static_cast<Eigen::Index>(basis.size()) == k) break;
    }
  }
  if (static_cast<Eigen::Index>(basis.size()) != k) {
    throw Error(ErrorCode::internal, "no nonsingular starting basis in a full-rank design");
  }
  return basis;
}

namespace {

struct Workspace {
  std::vector<double> tau;
  std::vector<double> r;
  std::vector<char> basic;
  std::vector<char> skip;
  std::vector<signed char> side;  // sign a zero-residual row is priced at
  std::vector<std::size_t> zeros;
  std::vector<Breakpoint> bps;
};

Workspace& workspace() {
  thread_local Workspace ws;
  return ws;
}

struct Core {
  const double* x;
  const double* y;
  const double* w;
  const double* ztol;
  std::size_t m;
  int k;
  double wscale;
};

// Slope contribution of a residual that is zero at t = 0 and moves with rate -a.
inline double zero_slope(double w, double tau, double a) {
  return w * (a > 0.0 ? a * (1.0 - tau) : -a * tau);
}

// Simplex over interpolating vertices. K is the design dimension when known
// at compile time, Eigen::Dynamic otherwise. `basis` holds compact rows.
template <int K>
QrSolution simplex(const Core& c, Workspace& ws, std::vector<std::size_t>& basis, bool tried_cold,
                   const std::function<void()>& reset_cold) {
  using Mat = Eigen::Matrix<double, K, K>;
  using Vec = Eigen::Matrix<double, K, 1>;
  const int k = K == Eigen::Dynamic ? c.k : K;
  const std::size_t ku = static_cast<std::size_t>(k);
  const std::size_t m = c.m;
  const double* tau = ws.tau.data();
  double* r = ws.r.data();
  char* basic = ws.basic.data();
  char* skip = ws.skip.data();
  ws.bps.resize(m);
  Breakpoint* bp = ws.bps.data();

  Mat xh(k, k), minv(k, k);
  Vec yh(k), b(k), g(k), q(k), delta(k);
  const std::size_t max_iter = std::max<std::size_t>(2000, 50 * m);

  for (std::size_t iter = 0;; ++iter) {
    if (iter > max_iter) {
      throw ConvergenceError(std::vector<double>(b.data(), b.data() + k),
                             "quantile regression simplex exceeded its iteration limit");
    }
    for (int a = 0; a < k; ++a) {
      const double* xr = c.x + basis[static_cast<std::size_t>(a)] * ku;
      for (int j = 0; j < k; ++j) xh(a, j) = xr[j];
      yh(a) = c.y[basis[static_cast<std::size_t>(a)]];
    }
    Eigen::FullPivLU<Mat> lu(xh);
    lu.setThreshold(1e-12);
    if (!lu.isInvertible()) {
      if (tried_cold) throw Error(ErrorCode::internal, "simplex basis became singular");
      tried_cold = true;
      reset_cold();
      continue;
    }
    minv = lu.inverse();
    b.noalias() = minv * yh;

    g.setZero();
    ws.zeros.clear();
    const double* bv = b.data();
    double* gv = g.data();
    for (std::size_t i = 0; i < m; ++i) {
      const double* xi = c.x + i * ku;
      double fit = 0.0;
      for (int j = 0; j < k; ++j) fit += xi[j] * bv[j];
      const double ri = c.y[i] - fit;
      r[i] = ri;
      const bool zero = std::abs(ri) <= c.ztol[i];
      const bool active = !basic[i] & !zero;
      skip[i] = static_cast<char>(!active);
      const double psi = active ? c.w[i] * (tau[i] - static_cast<double>(ri < 0.0)) : 0.0;
      for (int j = 0; j < k; ++j) gv[j] += psi * xi[j];
      if (zero && !basic[i]) ws.zeros.push_back(i);
    }
    q.noalias() = minv.transpose() * g;

    // Directional derivative along each edge leaving the vertex.
    double best = 0.0, best_d = 0.0;
    int best_j = -1;
    double best_sigma = 0.0;
    for (int j = 0; j < k; ++j) {
      const std::size_t hj = basis[static_cast<std::size_t>(j)];
      const double dnorm = std::max(minv.col(j).cwiseAbs().maxCoeff(), 1e-300);
      for (double sigma : {1.0, -1.0}) {
        double d = -sigma * q(j) + c.w[hj] * (sigma > 0.0 ? 1.0 - tau[hj] : tau[hj]);
        for (std::size_t i : ws.zeros) {
          const double* xi = c.x + i * ku;
          double a = 0.0;
          for (int cc = 0; cc < k; ++cc) a += xi[cc] * minv(cc, j);
          d += zero_slope(c.w[i], tau[i], sigma * a);
        }
        const double scaled = d / (c.wscale * dnorm);
        if (scaled < -1e-12 && (best_j < 0 || scaled < best)) {
          best = scaled;
          best_d = d;
          best_j = j;
          best_sigma = sigma;
        }
      }
    }
    bool degenerate_step = false;
    if (best_j < 0 && !ws.zeros.empty()) {
      // Every edge of this basis is non-descending, but a degenerate vertex
      // has further edges. Price zero-residual rows at their assigned side;
      // a negative reduced cost then calls for a zero-length pivot.
      Vec gl = g;
      for (std::size_t i : ws.zeros) {
        const double* xi = c.x + i * ku;
        const double psi = c.w[i] * (tau[i] - static_cast<double>(ws.side[i] < 0));
        for (int j = 0; j < k; ++j) gl(j) += psi * xi[j];
      }
      const Vec ql = minv.transpose() * gl;
      for (int j = 0; j < k; ++j) {
        const std::size_t hj = basis[static_cast<std::size_t>(j)];
        if (best_j >= 0 && hj > basis[static_cast<std::size_t>(best_j)]) continue;
        const double dnorm = std::max(minv.col(j).cwiseAbs().maxCoeff(), 1e-300);
        for (double sigma : {1.0, -1.0}) {
          const double d = -sigma * ql(j) + c.w[hj] * (sigma > 0.0 ? 1.0 - tau[hj] : tau[hj]);
          if (d / (c.wscale * dnorm) < -1e-12) {
            best_d = d;
            best_j = j;
            best_sigma = sigma;
            break;
          }
        }
      }
      degenerate_step = best_j >= 0;
    }
    if (best_j < 0) {
      QrSolution sol;
      sol.coef = Eigen::Map<const Eigen::VectorXd>(b.data(), k);
      double obj = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        if (!basic[i]) obj += c.w[i] * check_loss(tau[i], r[i]);
      }
      sol.objective = obj;
      sol.iterations = static_cast<int>(iter);
      sol.basis = basis;
      return sol;
    }

    delta = best_sigma * minv.col(best_j);
    const double* dv = delta.data();
    std::size_t count = 0;
    for (std::size_t i = 0; i < m; ++i) {
      const double* xi = c.x + i * ku;
      double a = 0.0;
      for (int j = 0; j < k; ++j) a += xi[j] * dv[j];
      const double ri = r[i];
      bp[count] = {ri / a, c.w[i] * std::abs(a), i};
      count += static_cast<std::size_t>(!skip[i] & (ri * a > 0.0));
    }
    if (degenerate_step) {
      for (std::size_t i : ws.zeros) {
        const double* xi = c.x + i * ku;
        double a = 0.0;
        for (int j = 0; j < k; ++j) a += xi[j] * dv[j];
        if (ws.side[i] * a > 0.0) bp[count++] = {0.0, c.w[i] * std::abs(a), i};
      }
    }
    ws.bps.resize(count);
    const std::size_t pick = weighted_select(ws.bps, -best_d);
    if (pick >= count) throw Error(ErrorCode::internal, "quantile regression objective is unbounded");
    const std::size_t enter = ws.bps[pick].i;
    if (degenerate_step) {
      // Zero rows passed before the entering one switch sides.
      for (std::size_t q = 0; q < pick; ++q) {
        if (ws.bps[q].t == 0.0) ws.side[ws.bps[q].i] = static_cast<signed char>(-ws.side[ws.bps[q].i]);
      }
    }
    ws.bps.resize(m);
    bp = ws.bps.data();
    const std::size_t leave = basis[static_cast<std::size_t>(best_j)];
    basic[leave] = 0;
    ws.side[leave] = static_cast<signed char>(best_sigma > 0.0 ? -1 : 1);
    basic[enter] = 1;
    basis[static_cast<std::size_t>(best_j)] = enter;
  }
}

}  // namespace

QrSolution RotatedQr::solve(std::span<const double> levels, const std::vector<std::size_t>& warm) const {
  if (levels.size() != n_) throw Error(ErrorCode::domain, "level vector length does not match the design");
  const auto ku = static_cast<std::size_t>(x_.cols());
  const std::size_t m = row_of_.size();
  Workspace& ws = workspace();
  ws.tau.resize(m);
  ws.r.resize(m);
  ws.skip.resize(m);
  ws.side.assign(m, 1);
  ws.basic.assign(m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    const double t = levels[row_of_[i]];
    if (!(t > 0.0 && t < 1.0)) {
      throw Error(ErrorCode::domain, "quantile levels must lie strictly inside (0,1), got " + std::to_string(t));
    }
    ws.tau[i] = std::clamp(t, kLevelClamp, 1.0 - kLevelClamp);
  }

  std::vector<std::size_t> basis;
  bool use_warm = warm.size() == ku;
  for (std::size_t r : warm) {
    if (!use_warm) break;
    if (r >= n_ || compact_of_[r] < 0) {
      use_warm = false;
      break;
    }
    const auto c = static_cast<std::size_t>(compact_of_[r]);
    if (ws.basic[c]) use_warm = false;
    ws.basic[c] = 1;
    basis.push_back(c);
  }
  const std::function<void()> reset_cold = [&] {
    std::fill(ws.basic.begin(), ws.basic.end(), 0);
    basis = cold_basis(ws.tau);
    for (std::size_t c : basis) ws.basic[c] = 1;
  };
  if (!use_warm) reset_cold();

  const Core core{x_.data(), y_.data(), w_.data(), ztol_.data(), m, static_cast<int>(ku), wscale_};
  QrSolution sol;
  switch (ku) {
    case 1: sol = simplex<1>(core, ws, basis, !use_warm, reset_cold); break;
    case 2: sol = simplex<2>(core, ws, basis, !use_warm, reset_cold); break;
    case 3: sol = simplex<3>(core, ws, basis, !use_warm, reset_cold); break;
    case 4: sol = simplex<4>(core, ws, basis, !use_warm, reset_cold); break;
    default: sol = simplex<Eigen::Dynamic>(core, ws, basis, !use_warm, reset_cold); break;
  }
  for (auto& row : sol.basis) row = row_of_[row];
  return sol;
}

double RotatedQr::objective(std::span<const double> levels, const Eigen::VectorXd& b) const {
  if (levels.size() != n_) throw Error(ErrorCode::domain, "level vector length does not match the design");
  double obj = 0.0;
  for (std::size_t i = 0; i < row_of_.size(); ++i) {
    const double t = std::clamp(levels[row_of_[i]], kLevelClamp, 1.0 - kLevelClamp);
    obj += w_[i] * check_loss(t, y_[i] - x_.row(static_cast<Eigen::Index>(i)).dot(b));
  }
  return obj;
}

QrSolution solve(const QrProblem& p) {
  RotatedQr solver(p.x, p.y, p.weights);
  return solver.solve(p.levels);
}

}  // namespace qrs
