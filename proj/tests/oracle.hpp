#pragma once

// Reference computations for the tests, written independently of the
// library: plain loops, no shared helpers beyond the value types.

#include <cmath>
#include <complex>
#include <functional>
#include <vector>

namespace oracle {

using cplx = std::complex<double>;

/// Central differences of f over (Re v_k, Im v_k) for every k, returned in
/// the same complex packing the library uses for gradients.
inline std::vector<cplx> gradient(const std::function<double(const std::vector<cplx>&)>& f, std::vector<cplx> v,
                                  double h = 1e-5) {
  std::vector<cplx> g(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) {
    const cplx x0 = v[k];
    v[k] = x0 + cplx(h, 0);
    double fp = f(v);
    v[k] = x0 - cplx(h, 0);
    double fm = f(v);
    const double dre = (fp - fm) / (2 * h);
    v[k] = x0 + cplx(0, h);
    fp = f(v);
    v[k] = x0 - cplx(0, h);
    fm = f(v);
    const double dim = (fp - fm) / (2 * h);
    v[k] = x0;
    g[k] = cplx(dre, dim);
  }
  return g;
}

inline std::vector<double> gradient(const std::function<double(const std::vector<double>&)>& f, std::vector<double> p,
                                    double h = 1e-4) {
  std::vector<double> g(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double p0 = p[k];
    p[k] = p0 + h;
    const double fp = f(p);
    p[k] = p0 - h;
    const double fm = f(p);
    p[k] = p0;
    g[k] = (fp - fm) / (2 * h);
  }
  return g;
}

template <class V>
double rel_err(const V& a, const V& b) {
  double num = 0, na = 0, nb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    num += std::norm(a[k] - b[k]);
    na += std::norm(a[k]);
    nb += std::norm(b[k]);
  }
  const double den = std::sqrt(std::max(na, nb));
  return den == 0 ? 0 : std::sqrt(num) / den;
}

/// Posterior mean of phi ~ U[-pi/2, pi/2] given z = a(phi) x + CN(0, I),
/// by midpoint quadrature on `n` nodes.
inline double isac_posterior_mean_quadrature(cplx x, const std::vector<cplx>& z, int n) {
  const double pi = 3.14159265358979323846;
  std::vector<double> phi(n), ll(n);
  double m = -INFINITY;
  for (int k = 0; k < n; ++k) {
    phi[k] = -pi / 2 + pi * (k + 0.5) / n;
    double r = 0;
    for (std::size_t q = 0; q < z.size(); ++q) r += std::norm(z[q] - std::polar(1.0, q * pi * std::sin(phi[k])) * x);
    ll[k] = -r;
    m = std::max(m, ll[k]);
  }
  double num = 0, den = 0;
  for (int k = 0; k < n; ++k) {
    const double w = std::exp(ll[k] - m);
    num += w * phi[k];
    den += w;
  }
  return num / den;
}

}  // namespace oracle
