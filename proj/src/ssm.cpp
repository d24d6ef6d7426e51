#include "qm/ssm.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace qm {

namespace {

void check_param_shapes(const SsmBlockParams& p, const char* where) {
  if (p.d < 1 || p.n_state < 1) {
    throw std::invalid_argument(std::string(where) +
                                ": d and n_state must be >= 1");
  }
  const auto dn = static_cast<std::size_t>(p.d) * p.n_state;
  if (p.a_log.size() != dn || p.w_b.size() != dn || p.w_c.size() != dn ||
      p.w_delta.size() != static_cast<std::size_t>(p.d) ||
      p.delta_bias.size() != static_cast<std::size_t>(p.d) ||
      p.d_skip.size() != static_cast<std::size_t>(p.d)) {
    throw std::invalid_argument(std::string(where) +
                                ": parameter array sizes do not match d=" +
                                std::to_string(p.d) +
                                ", n_state=" + std::to_string(p.n_state));
  }
}

// Per-timestep selected parameters for a whole sequence, shared by both
// scan evaluators so they see bit-identical inputs.
struct ScanInputs {
  std::vector<float> b_proj;  // L x N
  std::vector<float> c_proj;  // L x N
  std::vector<float> delta;   // L x D
  std::vector<float> a;       // D x N, A = -exp(a_log)
};

ScanInputs select_all(const Sequence& seq, const SsmBlockParams& p) {
  const int L = seq.len;
  const int D = p.d;
  const int N = p.n_state;
  ScanInputs in;
  in.b_proj.resize(static_cast<std::size_t>(L) * N);
  in.c_proj.resize(static_cast<std::size_t>(L) * N);
  in.delta.resize(static_cast<std::size_t>(L) * D);
  in.a.resize(static_cast<std::size_t>(D) * N);
  for (int c = 0; c < D; ++c) {
    for (int s = 0; s < N; ++s) {
      in.a[static_cast<std::size_t>(c) * N + s] =
          -std::exp(p.a_log[static_cast<std::size_t>(c) * N + s]);
    }
  }
  for (int t = 0; t < L; ++t) {
    const float* u = seq.step_ptr(t);
    double dproj = 0.0;
    for (int c = 0; c < D; ++c) dproj += static_cast<double>(p.w_delta[c]) * u[c];
    const float dproj_f = static_cast<float>(dproj);
    for (int c = 0; c < D; ++c) {
      in.delta[static_cast<std::size_t>(t) * D + c] =
          softplus(p.delta_bias[c] + dproj_f);
    }
    for (int s = 0; s < N; ++s) {
      double accb = 0.0;
      double accc = 0.0;
      const float* wb = p.w_b.data() + static_cast<std::size_t>(s) * D;
      const float* wc = p.w_c.data() + static_cast<std::size_t>(s) * D;
      for (int c = 0; c < D; ++c) {
        accb += static_cast<double>(wb[c]) * u[c];
        accc += static_cast<double>(wc[c]) * u[c];
      }
      in.b_proj[static_cast<std::size_t>(t) * N + s] = static_cast<float>(accb);
      in.c_proj[static_cast<std::size_t>(t) * N + s] = static_cast<float>(accc);
    }
  }
  return in;
}

// Discrete transition element for one (channel, state) pair at one step.
// Yields identical values in both evaluators.
inline void element_of(double delta_c, double a_cs, double b_ts, double u_tc,
                       double& a_bar, double& bx) {
  const double da = delta_c * a_cs;
  a_bar = std::exp(da);
  const double b_bar =
      (std::abs(da) < 1e-6) ? delta_c * b_ts : ((a_bar - 1.0) / a_cs) * b_ts;
  bx = b_bar * u_tc;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

void SsmBlockParams::validate() const { check_param_shapes(*this, "SsmBlockParams"); }

ScanElement scan_combine(const ScanElement& e1, const ScanElement& e2) {
  return {e2.a_bar * e1.a_bar, e2.a_bar * e1.bx + e2.bx};
}

float softplus(float x) {
  double r;
  if (x > 0.0f) {
    r = static_cast<double>(x) + std::log1p(std::exp(-static_cast<double>(x)));
  } else {
    r = std::log1p(std::exp(static_cast<double>(x)));
  }
  const float f = static_cast<float>(r);
  return f > std::numeric_limits<float>::min()
             ? f
             : std::numeric_limits<float>::min();
}

float softplus_inverse(float y) {
  if (y <= 0.0f) {
    throw std::invalid_argument("softplus_inverse: y must be > 0");
  }
  return static_cast<float>(std::log(std::expm1(static_cast<double>(y))));
}

Discretized zoh_discretize(float delta, float a, float b) {
  if (!(delta > 0.0f)) {
    throw std::invalid_argument("zoh_discretize: delta must be > 0, got " +
                                std::to_string(delta));
  }
  double a_bar, bx;
  element_of(delta, a, b, 1.0, a_bar, bx);
  return {static_cast<float>(a_bar), static_cast<float>(bx)};
}

SelectedParams select_params(std::span<const float> u,
                             const SsmBlockParams& p) {
  check_param_shapes(p, "select_params");
  if (static_cast<int>(u.size()) != p.d) {
    throw std::invalid_argument("select_params: input length " +
                                std::to_string(u.size()) +
                                " does not match d=" + std::to_string(p.d));
  }
  SelectedParams out;
  out.b.resize(p.n_state);
  out.c.resize(p.n_state);
  out.delta.resize(p.d);
  for (int s = 0; s < p.n_state; ++s) {
    double accb = 0.0, accc = 0.0;
    const float* wb = p.w_b.data() + static_cast<std::size_t>(s) * p.d;
    const float* wc = p.w_c.data() + static_cast<std::size_t>(s) * p.d;
    for (int c = 0; c < p.d; ++c) {
      accb += static_cast<double>(wb[c]) * u[c];
      accc += static_cast<double>(wc[c]) * u[c];
    }
    out.b[s] = static_cast<float>(accb);
    out.c[s] = static_cast<float>(accc);
  }
  double dproj = 0.0;
  for (int c = 0; c < p.d; ++c) {
    dproj += static_cast<double>(p.w_delta[c]) * u[c];
  }
  for (int c = 0; c < p.d; ++c) {
    out.delta[c] = softplus(p.delta_bias[c] + static_cast<float>(dproj));
  }
  return out;
}

float ssm_step(std::span<float> h, float u, std::span<const float> a_bar,
               std::span<const float> b_bar, std::span<const float> c,
               float d_skip_c) {
  const std::size_t n = h.size();
  if (a_bar.size() != n || b_bar.size() != n || c.size() != n) {
    throw std::invalid_argument("ssm_step: vector lengths do not match");
  }
  double y = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    h[s] = a_bar[s] * h[s] + b_bar[s] * u;
    y += static_cast<double>(c[s]) * h[s];
  }
  y += static_cast<double>(d_skip_c) * u;
  return static_cast<float>(y);
}

Sequence selective_scan_sequential(const Sequence& seq,
                                   const SsmBlockParams& p) {
  check_param_shapes(p, "selective_scan_sequential");
  if (seq.d != p.d) {
    throw std::invalid_argument(
        "selective_scan_sequential: sequence channel dim " +
        std::to_string(seq.d) + " does not match d=" + std::to_string(p.d));
  }
  const int L = seq.len;
  const int D = p.d;
  const int N = p.n_state;
  const ScanInputs in = select_all(seq, p);

  Sequence out(L, D);
  std::vector<double> h(static_cast<std::size_t>(D) * N, 0.0);
  for (int t = 0; t < L; ++t) {
    const float* u = seq.step_ptr(t);
    const float* bt = in.b_proj.data() + static_cast<std::size_t>(t) * N;
    const float* ct = in.c_proj.data() + static_cast<std::size_t>(t) * N;
    const float* dt = in.delta.data() + static_cast<std::size_t>(t) * D;
    float* y = out.step_ptr(t);
    for (int c = 0; c < D; ++c) {
      const double delta_c = dt[c];
      const double u_tc = u[c];
      double* hc = h.data() + static_cast<std::size_t>(c) * N;
      const float* ac = in.a.data() + static_cast<std::size_t>(c) * N;
      double acc = 0.0;
      for (int s = 0; s < N; ++s) {
        double a_bar, bx;
        element_of(delta_c, ac[s], bt[s], u_tc, a_bar, bx);
        hc[s] = a_bar * hc[s] + bx;
        acc += static_cast<double>(ct[s]) * hc[s];
      }
      y[c] = static_cast<float>(acc + static_cast<double>(p.d_skip[c]) * u_tc);
    }
  }
  return out;
}

Sequence selective_scan_parallel(const Sequence& seq,
                                 const SsmBlockParams& p) {
  check_param_shapes(p, "selective_scan_parallel");
  if (seq.d != p.d) {
    throw std::invalid_argument(
        "selective_scan_parallel: sequence channel dim " +
        std::to_string(seq.d) + " does not match d=" + std::to_string(p.d));
  }
  const int L = seq.len;
  const int D = p.d;
  const int N = p.n_state;
  const ScanInputs in = select_all(seq, p);
  const std::size_t L2 = next_pow2(static_cast<std::size_t>(L));

  Sequence out(L, D);
  std::vector<double> a(L2), x(L2);      // scan buffers
  std::vector<double> a0(L), x0(L);      // original elements
  std::vector<double> yacc(L);
  for (int c = 0; c < D; ++c) {
    std::fill(yacc.begin(), yacc.end(), 0.0);
    const float* ac = in.a.data() + static_cast<std::size_t>(c) * N;
    for (int s = 0; s < N; ++s) {
      for (int t = 0; t < L; ++t) {
        const double delta_c = in.delta[static_cast<std::size_t>(t) * D + c];
        const double u_tc = seq.data[static_cast<std::size_t>(t) * D + c];
        const double b_ts = in.b_proj[static_cast<std::size_t>(t) * N + s];
        element_of(delta_c, ac[s], b_ts, u_tc, a0[t], x0[t]);
        a[t] = a0[t];
        x[t] = x0[t];
      }
      for (std::size_t t = L; t < L2; ++t) {
        a[t] = 1.0;  // monoid identity
        x[t] = 0.0;
      }
      // Up-sweep: each internal node accumulates the in-order composition
      // of its subtree.
      for (std::size_t stride = 1; stride < L2; stride <<= 1) {
        for (std::size_t i = 2 * stride - 1; i < L2; i += 2 * stride) {
          const std::size_t l = i - stride;
          x[i] = a[i] * x[l] + x[i];
          a[i] = a[i] * a[l];
        }
      }
      // Down-sweep: turn subtree sums into exclusive prefixes.
      a[L2 - 1] = 1.0;
      x[L2 - 1] = 0.0;
      for (std::size_t stride = L2 >> 1; stride >= 1; stride >>= 1) {
        for (std::size_t i = 2 * stride - 1; i < L2; i += 2 * stride) {
          const std::size_t l = i - stride;
          const double ta = a[l];
          const double tx = x[l];
          a[l] = a[i];
          x[l] = x[i];
          // prefix-before-subtree composed with the left subtree sum
          x[i] = ta * x[i] + tx;
          a[i] = ta * a[i];
        }
        if (stride == 1) break;
      }
      // Inclusive value: h_t = a_t * prefix + bx_t (zero initial state).
      for (int t = 0; t < L; ++t) {
        const double h = a0[t] * x[t] + x0[t];
        yacc[t] += static_cast<double>(
                       in.c_proj[static_cast<std::size_t>(t) * N + s]) *
                   h;
      }
    }
    for (int t = 0; t < L; ++t) {
      const double u_tc = seq.data[static_cast<std::size_t>(t) * D + c];
      out.data[static_cast<std::size_t>(t) * D + c] = static_cast<float>(
          yacc[t] + static_cast<double>(p.d_skip[c]) * u_tc);
    }
  }
  return out;
}

SsmBlockParams make_seeded_params(int d, int n_state, std::uint64_t seed) {
  if (d < 1 || n_state < 1) {
    throw std::invalid_argument("make_seeded_params: d and n_state must be >= 1");
  }
  SsmBlockParams p;
  p.d = d;
  p.n_state = n_state;
  p.a_log.resize(static_cast<std::size_t>(d) * n_state);
  p.w_b.resize(static_cast<std::size_t>(d) * n_state);
  p.w_c.resize(static_cast<std::size_t>(d) * n_state);
  p.w_delta.resize(d);
  p.delta_bias.resize(d);
  p.d_skip.resize(d);
  SeededRng rng(seed);
  for (int c = 0; c < d; ++c) {
    for (int s = 0; s < n_state; ++s) {
      p.a_log[static_cast<std::size_t>(c) * n_state + s] =
          std::log(static_cast<float>(s + 1));
    }
  }
  // Fan-in scaled so projections stay O(1) at any channel width.
  const float proj_scale = 0.5f / std::sqrt(static_cast<float>(d));
  for (float& v : p.w_b) v = proj_scale * rng.next_symmetric();
  for (float& v : p.w_c) v = proj_scale * rng.next_symmetric();
  for (float& v : p.w_delta) v = proj_scale * rng.next_symmetric();
  for (float& v : p.d_skip) v = 0.5f * rng.next_symmetric();
  for (int c = 0; c < d; ++c) {
    p.delta_bias[c] = softplus_inverse(0.01f * (1 + c % 10));
  }
  return p;
}

namespace detail {

std::vector<double> scan_state_norms(const Sequence& seq,
                                     const SsmBlockParams& p) {
  check_param_shapes(p, "scan_state_norms");
  if (seq.d != p.d) {
    throw std::invalid_argument("scan_state_norms: channel dim mismatch");
  }
  const int L = seq.len;
  const int D = p.d;
  const int N = p.n_state;
  const ScanInputs in = select_all(seq, p);
  std::vector<double> h(static_cast<std::size_t>(D) * N, 0.0);
  std::vector<double> norms(L, 0.0);
  for (int t = 0; t < L; ++t) {
    const float* bt = in.b_proj.data() + static_cast<std::size_t>(t) * N;
    const float* dt = in.delta.data() + static_cast<std::size_t>(t) * D;
    double sq = 0.0;
    for (int c = 0; c < D; ++c) {
      const double delta_c = dt[c];
      const double u_tc = seq.data[static_cast<std::size_t>(t) * D + c];
      double* hc = h.data() + static_cast<std::size_t>(c) * N;
      const float* ac = in.a.data() + static_cast<std::size_t>(c) * N;
      for (int s = 0; s < N; ++s) {
        double a_bar, bx;
        element_of(delta_c, ac[s], bt[s], u_tc, a_bar, bx);
        hc[s] = a_bar * hc[s] + bx;
        sq += hc[s] * hc[s];
      }
    }
    norms[t] = std::sqrt(sq);
  }
  return norms;
}

}  // namespace detail

}  // namespace qm
