#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <string>

#include "cdc/rng.hpp"
#include "cdc/types.hpp"

namespace cdc {

/// Uniformly weighted empirical measure (1/N) sum_i delta_{x_i} over C^dim.
///
/// Particles are stored contiguously; particle i occupies
/// [i * dim, (i + 1) * dim).
class ParticleSet {
public:
  ParticleSet() = default;

  ParticleSet(std::size_t n, std::size_t dim) : dim_(dim), data_(n * dim) {
    if (n == 0 || dim == 0) throw Error("ParticleSet: need at least one particle of dimension >= 1");
  }

  ParticleSet(std::size_t dim, CVec flat) : dim_(dim), data_(std::move(flat)) {
    if (dim_ == 0 || data_.empty() || data_.size() % dim_ != 0)
      throw Error("ParticleSet: flat storage is not a whole number of particles");
  }

  std::size_t size() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
  std::size_t dim() const { return dim_; }

  CSpan operator[](std::size_t i) const { return CSpan(data_).subspan(i * dim_, dim_); }
  MutCSpan operator[](std::size_t i) { return MutCSpan(data_).subspan(i * dim_, dim_); }

  const CVec& flat() const { return data_; }

  friend bool operator==(const ParticleSet&, const ParticleSet&) = default;

private:
  std::size_t dim_ = 0;
  CVec data_;
};

/// Pushforward of the empirical measure under `map`: particle i goes to
/// map(x_i), order preserved.
template <class Map>
  requires std::invocable<Map, CSpan>
ParticleSet pushforward(const ParticleSet& ps, Map&& map) {
  ParticleSet out(ps.size(), ps.dim());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const CVec y = std::invoke(map, ps[i]);
    if (y.size() != ps.dim()) throw Error("pushforward: map changed the particle dimension");
    std::copy(y.begin(), y.end(), out[i].begin());
  }
  return out;
}

template <class F>
  requires std::invocable<F, CSpan>
double empirical_mean_of(const ParticleSet& ps, F&& f) {
  double acc = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i) acc += std::invoke(f, ps[i]);
  return acc / static_cast<double>(ps.size());
}

enum class InitKind { Gaussian, Disk };

inline std::string to_string(InitKind k) { return k == InitKind::Gaussian ? "gaussian" : "disk"; }

/// Draws the initial particle set. Gaussian: per-coordinate CN(0, power),
/// rescaled so the empirical second moment per coordinate is exactly
/// `power`. Disk: uniform on the disk of radius sqrt(power). With
/// `real_only`, the imaginary parts are zero and the Gaussian variance goes
/// entirely to the real part.
inline ParticleSet initial_particles(std::size_t n, std::size_t dim, double power, InitKind kind,
                                     bool real_only, RngKey key) {
  ParticleSet ps(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    RngStream rng = key.stream(i, Role::Init);
    for (cplx& c : ps[i]) {
      if (real_only) {
        const double r = kind == InitKind::Gaussian ? std::sqrt(power) * rng.normal()
                                                    : rng.uniform(-std::sqrt(power), std::sqrt(power));
        c = cplx(r, 0.0);
      } else if (kind == InitKind::Gaussian) {
        const double s = std::sqrt(power / 2.0);
        const double re = rng.normal();
        const double im = rng.normal();
        c = cplx(s * re, s * im);
      } else {
        const double r = std::sqrt(power) * std::sqrt(rng.uniform(0.0, 1.0));
        const double th = rng.uniform(-kPi, kPi);
        c = std::polar(r, th);
      }
    }
  }
  if (kind == InitKind::Gaussian) {
    const double m2 = empirical_mean_of(ps, [](CSpan x) { return squared_norm(x); });
    if (m2 > 0.0) {
      const double g = std::sqrt(power * static_cast<double>(dim) / m2);
      for (std::size_t i = 0; i < n; ++i)
        for (cplx& c : ps[i]) c *= g;
    }
  }
  return ps;
}

}  // namespace cdc
