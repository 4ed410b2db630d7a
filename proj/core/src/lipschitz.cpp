#include "lipschitz_detail.hpp"
#include "lipscde/lipschitz.hpp"

#include <cmath>
#include <numbers>

#include "lipscde/errors.hpp"

namespace lipscde {

namespace {

constexpr int kMaxIters = 4000;
constexpr double kStationaryTol = 1e-14;

void seed_vector(std::span<double> v, int attempt) {
  for (std::size_t j = 0; j < v.size(); ++j)
    v[j] = 1.0 + 0.5 * std::sin(double(3 * attempt + 1) * double(j + 1) + 0.3);
  double nrm = norm2(v);
  for (double& x : v) x /= nrm;
}

// Shared power iteration over an arbitrary linear operator given as
// apply / apply-adjoint callbacks.
template <class Fwd, class Adj>
double operator_norm(std::size_t in_dim, std::size_t out_dim, Fwd&& fwd, Adj&& adj,
                     int min_iters, Tensor* warm) {
  Tensor v(in_dim);
  bool warmed = warm != nullptr && warm->size() == in_dim && warm->all_finite() &&
                norm2(warm->values()) > 0.0;
  if (warmed) {
    v = *warm;
    double nrm = norm2(v.values());
    for (double& x : v.values()) x /= nrm;
  } else {
    seed_vector(v.values(), 0);
  }

  Tensor u(out_dim);
  double sigma = 0.0;
  for (int attempt = 0; attempt < 3; ++attempt) {
    double prev = -1.0;
    int iter = 0;
    for (; iter < kMaxIters; ++iter) {
      fwd(v, u);
      sigma = norm2(u.values());
      if (sigma == 0.0) break;  // v in the null space (or zero operator)
      adj(u, v);
      double nrm = norm2(v.values());
      if (nrm == 0.0) break;
      for (double& x : v.values()) x /= nrm;
      if (iter + 1 >= min_iters &&
          std::abs(sigma - prev) <= kStationaryTol * std::max(1.0, sigma))
        break;
      prev = sigma;
    }
    if (sigma > 0.0 || iter == kMaxIters) break;
    seed_vector(v.values(), attempt + 1);  // retry from a different direction
  }
  if (warm != nullptr) *warm = v;
  return sigma;
}

}  // namespace

double spectral_norm(const Tensor& m, int min_iters, Tensor* warm) {
  if (m.rank() != 2) throw ContractViolation("spectral_norm: 2-D matrix required");
  bool nonzero = false;
  for (double x : m.values())
    if (x != 0.0) nonzero = true;
  if (!nonzero) return 0.0;
  auto fwd = [&](const Tensor& v, Tensor& out) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
      const double* row = m.data() + i * m.cols();
      double s = 0.0;
      for (std::size_t j = 0; j < m.cols(); ++j) s += row[j] * v[j];
      out[i] = s;
    }
  };
  auto adj = [&](const Tensor& u, Tensor& out) {
    out.fill(0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
      const double* row = m.data() + i * m.cols();
      for (std::size_t j = 0; j < m.cols(); ++j) out[j] += row[j] * u[i];
    }
  };
  return operator_norm(m.cols(), m.rows(), fwd, adj, min_iters, warm);
}

Tensor spectral_norm_project(const Tensor& m, double bound) {
  if (bound <= 0.0) throw ContractViolation("spectral_norm_project: bound must be positive");
  Tensor out = m;
  detail::project_matrix_inplace(out, bound, nullptr);
  return out;
}

namespace detail {

void project_matrix_inplace(Tensor& m, double bound, Tensor* warm) {
  double sigma = spectral_norm(m, 50, warm);
  // the slack keeps projection bitwise idempotent: a projected matrix whose
  // re-estimated norm sits within rounding of the bound is left alone
  if (sigma <= bound * (1.0 + 1e-9)) return;
  double s = bound / sigma;
  for (double& x : m.values()) x *= s;
  // verify-and-rescale: power iteration may slightly under-estimate sigma
  double sigma2 = spectral_norm(m, 50, warm);
  if (sigma2 > bound * (1.0 + 5e-10)) {
    double s2 = bound / sigma2;
    for (double& x : m.values()) x *= s2;
  }
}

}  // namespace detail

Tensor conv1d_same(const Tensor& signal, const Tensor& kernel) {
  if (signal.rank() != 2) throw ContractViolation("conv1d_same: signal must be [T x c]");
  if (kernel.rank() != 3) throw ContractViolation("conv1d_same: kernel must be [out][in][tap]");
  if (kernel.dim(1) != signal.cols())
    throw ContractViolation("conv1d_same: channel mismatch");
  std::size_t T = signal.rows(), ci = signal.cols();
  std::size_t co = kernel.dim(0), kw = kernel.dim(2);
  if (kw > 2 * T) throw ContractViolation("conv1d_same: kernel wider than 2T");
  std::size_t p = (kw - 1) / 2;
  Tensor out(T, co);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t o = 0; o < co; ++o) {
      double s = 0.0;
      for (std::size_t q = 0; q < kw; ++q) {
        std::ptrdiff_t src = std::ptrdiff_t(t + q) - std::ptrdiff_t(p);
        if (src < 0 || src >= std::ptrdiff_t(T)) continue;
        for (std::size_t c = 0; c < ci; ++c)
          s += kernel(o, c, q) * signal(std::size_t(src), c);
      }
      out(t, o) = s;
    }
  return out;
}

Tensor conv1d_same_adjoint(const Tensor& out_grad, const Tensor& kernel) {
  std::size_t T = out_grad.rows(), co = kernel.dim(0);
  std::size_t ci = kernel.dim(1), kw = kernel.dim(2);
  if (out_grad.cols() != co) throw ContractViolation("conv1d_same_adjoint: shape");
  std::size_t p = (kw - 1) / 2;
  Tensor in(T, ci);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t o = 0; o < co; ++o) {
      double gv = out_grad(t, o);
      if (gv == 0.0) continue;
      for (std::size_t q = 0; q < kw; ++q) {
        std::ptrdiff_t src = std::ptrdiff_t(t + q) - std::ptrdiff_t(p);
        if (src < 0 || src >= std::ptrdiff_t(T)) continue;
        for (std::size_t c = 0; c < ci; ++c)
          in(std::size_t(src), c) += gv * kernel(o, c, q);
      }
    }
  return in;
}

double conv_operator_norm(const Tensor& kernel, std::size_t T, int min_iters,
                          Tensor* warm) {
  if (kernel.rank() != 3) throw ContractViolation("conv_operator_norm: kernel rank");
  std::size_t ci = kernel.dim(1), co = kernel.dim(0), kw = kernel.dim(2);
  std::size_t p = (kw - 1) / 2;
  bool nonzero = false;
  for (double x : kernel.values())
    if (x != 0.0) nonzero = true;
  if (!nonzero) return 0.0;
  auto fwd = [&](const Tensor& vflat, Tensor& out) {
    out.fill(0.0);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t o = 0; o < co; ++o) {
        double s = 0.0;
        for (std::size_t q = 0; q < kw; ++q) {
          std::ptrdiff_t src = std::ptrdiff_t(t + q) - std::ptrdiff_t(p);
          if (src < 0 || src >= std::ptrdiff_t(T)) continue;
          for (std::size_t c = 0; c < ci; ++c)
            s += kernel(o, c, q) * vflat[std::size_t(src) * ci + c];
        }
        out[t * co + o] = s;
      }
  };
  auto adj = [&](const Tensor& uflat, Tensor& out) {
    out.fill(0.0);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t o = 0; o < co; ++o) {
        double gv = uflat[t * co + o];
        if (gv == 0.0) continue;
        for (std::size_t q = 0; q < kw; ++q) {
          std::ptrdiff_t src = std::ptrdiff_t(t + q) - std::ptrdiff_t(p);
          if (src < 0 || src >= std::ptrdiff_t(T)) continue;
          for (std::size_t c = 0; c < ci; ++c)
            out[std::size_t(src) * ci + c] += gv * kernel(o, c, q);
        }
      }
  };
  return operator_norm(T * ci, T * co, fwd, adj, min_iters, warm);
}

namespace {

// Largest eigenvalue of a small real symmetric matrix by cyclic Jacobi
// rotations; exact to machine precision for these sizes.
double sym_lambda_max(Tensor h) {
  std::size_t n = h.rows();
  for (int sweep = 0; sweep < 60; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        double apq = h(p, q);
        if (apq == 0.0) continue;
        off = std::max(off, std::abs(apq));
        double theta = (h(q, q) - h(p, p)) / (2.0 * apq);
        double t = (theta >= 0.0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(1.0 + theta * theta));
        double c = 1.0 / std::sqrt(1.0 + t * t);
        double s = c * t;
        for (std::size_t k = 0; k < n; ++k) {
          double hkp = h(k, p), hkq = h(k, q);
          h(k, p) = c * hkp - s * hkq;
          h(k, q) = s * hkp + c * hkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          double hpk = h(p, k), hqk = h(q, k);
          h(p, k) = c * hpk - s * hqk;
          h(q, k) = s * hpk + c * hqk;
        }
      }
    if (off < 1e-15) break;
  }
  double lmax = h(0, 0);
  for (std::size_t i = 1; i < n; ++i) lmax = std::max(lmax, h(i, i));
  return lmax;
}

}  // namespace

double circular_conv_norm(const Tensor& kernel, std::size_t M) {
  if (kernel.rank() != 3) throw ContractViolation("circular_conv_norm: kernel rank");
  std::size_t co = kernel.dim(0), ci = kernel.dim(1), kw = kernel.dim(2);
  // K^H K and K K^H share their nonzero spectrum; embed the smaller Gram side
  std::size_t g = std::min(co, ci);
  bool use_out = co <= ci;
  double worst = 0.0;
  Tensor re(co, ci), im(co, ci);
  for (std::size_t k = 0; k < M; ++k) {
    double w = 2.0 * std::numbers::pi * double(k) / double(M);
    re.fill(0.0);
    im.fill(0.0);
    // transfer matrix K(w) = sum_q K_q e^{-i w q}
    for (std::size_t q = 0; q < kw; ++q) {
      double cq = std::cos(w * double(q)), sq = std::sin(w * double(q));
      for (std::size_t o = 0; o < co; ++o)
        for (std::size_t c = 0; c < ci; ++c) {
          re(o, c) += kernel(o, c, q) * cq;
          im(o, c) -= kernel(o, c, q) * sq;
        }
    }
    // Hermitian Gram matrix; its real embedding [[A, -B], [B, A]] shares the
    // spectrum, and cyclic Jacobi gives lambda_max to machine precision
    Tensor h(2 * g, 2 * g);
    std::size_t inner = use_out ? ci : co;
    for (std::size_t a = 0; a < g; ++a)
      for (std::size_t b = 0; b < g; ++b) {
        double ha = 0.0, hb = 0.0;
        for (std::size_t i = 0; i < inner; ++i) {
          double rea = use_out ? re(a, i) : re(i, a);
          double ima = use_out ? im(a, i) : im(i, a);
          double reb = use_out ? re(b, i) : re(i, b);
          double imb = use_out ? im(b, i) : im(i, b);
          ha += rea * reb + ima * imb;
          hb += rea * imb - ima * reb;
        }
        h(a, b) = ha;
        h(g + a, g + b) = ha;
        h(g + a, b) = hb;
        h(a, g + b) = -hb;
      }
    worst = std::max(worst, sym_lambda_max(std::move(h)));
  }
  return std::sqrt(std::max(0.0, worst));
}

void project_conv_kernel(Tensor& kernel, double bound, std::size_t T, Tensor* state) {
  std::size_t kw = kernel.dim(2);
  // delta certificate: if the kernel moved little since the last certified
  // norm, sigma(K) <= cert + sqrt(kw) * |K - K_prev|_F already proves the
  // bound and the frequency sweep can be skipped
  if (state != nullptr && state->size() == 1 + kernel.size()) {
    double cert = (*state)[0];
    double dist = 0.0;
    for (std::size_t i = 0; i < kernel.size(); ++i) {
      double d = kernel[i] - (*state)[1 + i];
      dist += d * d;
    }
    double upper = cert + std::sqrt(double(kw)) * std::sqrt(dist);
    if (upper <= bound) {
      (*state)[0] = upper;
      for (std::size_t i = 0; i < kernel.size(); ++i) (*state)[1 + i] = kernel[i];
      return;
    }
  }
  double sigma = circular_conv_norm(kernel, T + kw);
  if (sigma > bound * (1.0 + 1e-9)) {
    double s = bound / sigma;
    for (double& x : kernel.values()) x *= s;
    sigma = bound;
  }
  if (state != nullptr) {
    if (state->size() != 1 + kernel.size()) *state = Tensor(1 + kernel.size());
    (*state)[0] = std::min(sigma, bound);
    for (std::size_t i = 0; i < kernel.size(); ++i) (*state)[1 + i] = kernel[i];
  }
}

Tensor lipschitz_conv1d(const Tensor& signal, const Param& kernel) {
  return conv1d_same(signal, kernel.value);
}

}  // namespace lipscde
