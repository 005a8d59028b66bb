// Test-only Monte-Carlo oracle for the population gradient: finite
// differences of the sample-average loss over a fixed prompt set.

#ifndef MAMBA_ICL_TESTS_ORACLE_SUPPORT_HPP_
#define MAMBA_ICL_TESTS_ORACLE_SUPPORT_HPP_

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mamba_icl/task_gen.hpp"
#include "mamba_icl/training.hpp"

namespace oracle {

using mamba_icl::Mat;
using mamba_icl::Vec;

// Per-prompt sufficient statistics with step size fixed at ln2/N, A = -I:
// y_hat = (C x_q + b_C)^T (1-a)(B s + b v + b_B ybar).
struct Stats {
  int d = 0;
  double a = 0;
  Mat xq, s;  // d x M
  Vec v, ybar, yq;
};

inline Stats collect(int d, int n, long m, std::uint64_t seed) {
  Stats st;
  st.d = d;
  st.a = mamba_icl::decay_factor(n);
  st.xq.resize(d, m);
  st.s.resize(d, m);
  st.v.resize(m);
  st.ybar.resize(m);
  st.yq.resize(m);
  mamba_icl::Rng rng = mamba_icl::make_stream(seed, 77);
  for (long i = 0; i < m; ++i) {
    const auto p = mamba_icl::sample_prompt(d, n, rng);
    const auto cs = mamba_icl::weighted_context_sums(p, st.a);
    st.xq.col(i) = p.x_q;
    st.s.col(i) = cs.s;
    st.v[i] = cs.v;
    st.ybar[i] = cs.y;
    st.yq[i] = p.y_q;
  }
  return st;
}

inline double sample_loss(const mamba_icl::MambaParams& p, const Stats& st) {
  const Mat B = (1 - st.a) * p.B(), C = p.C();
  const Vec b = (1 - st.a) * p.b(), bb = (1 - st.a) * p.b_b, bc = p.b_c;
  const long m = st.yq.size();
  Vec q(B.rows()), r(B.rows());
  double acc = 0;
  for (long i = 0; i < m; ++i) {
    q.noalias() = B * st.s.col(i);
    q += st.v[i] * b + st.ybar[i] * bb;
    r.noalias() = C * st.xq.col(i);
    r += bc;
    const double e = r.dot(q) - st.yq[i];
    acc += e * e;
  }
  return 0.5 * acc / static_cast<double>(m);
}

struct BlockCompare {
  std::string name;
  double rel_error = 0;
};

// Central differences of sample_loss for every coordinate of B, C, b, c,
// b_B, b_C versus population_gradients. Blocks whose analytic gradient is
// (near) zero are measured against the overall gradient norm.
inline std::vector<BlockCompare> compare_population_gradient(
    const mamba_icl::MambaParams& params, const Stats& st, double eps = 1e-4) {
  const auto k = mamba_icl::constants(params.d, params.n, params.d_h);
  const auto g = mamba_icl::population_gradients(params, k);
  const int d = params.d, dh = params.d_h;
  Mat fd_wb(dh, d + 1), fd_wc(dh, d + 1);
  Vec fd_bb(dh), fd_bc(dh);
  auto central = [&](auto&& poke) {
    mamba_icl::MambaParams up = params, dn = params;
    poke(up, eps);
    poke(dn, -eps);
    return (sample_loss(up, st) - sample_loss(dn, st)) / (2 * eps);
  };
  for (int i = 0; i < dh; ++i) {
    for (int j = 0; j <= d; ++j) {
      fd_wb(i, j) = central([&](auto& q, double e) { q.w_b(i, j) += e; });
      fd_wc(i, j) = central([&](auto& q, double e) { q.w_c(i, j) += e; });
    }
    fd_bb[i] = central([&](auto& q, double e) { q.b_b[i] += e; });
    fd_bc[i] = central([&](auto& q, double e) { q.b_c[i] += e; });
  }
  const double total = std::sqrt(g.B.squaredNorm() + g.C.squaredNorm() +
                                 g.b.squaredNorm() + g.c.squaredNorm());
  auto rel = [&](const Mat& fd, const Mat& an) {
    return (fd - an).norm() / std::max(an.norm(), total);
  };
  return {{"B", rel(fd_wb.leftCols(d), g.B)},
          {"C", rel(fd_wc.leftCols(d), g.C)},
          {"b", rel(fd_wb.col(d), g.b)},
          {"c", rel(fd_wc.col(d), g.c)},
          {"b_B", rel(fd_bb, g.b_b)},
          {"b_C", rel(fd_bc, g.b_c)}};
}

}  // namespace oracle

#endif  // MAMBA_ICL_TESTS_ORACLE_SUPPORT_HPP_
