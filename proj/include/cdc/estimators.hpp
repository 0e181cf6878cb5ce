#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cdc/channel.hpp"
#include "cdc/particles.hpp"
#include "cdc/rng.hpp"
#include "cdc/sampling.hpp"
#include "cdc/types.hpp"

namespace cdc {

/// State estimator h(x, z) -> scalar state estimate.
///
/// `estimate_many` evaluates the estimator at `count` echo samples packed in
/// `zs` (count * z_dim entries) for one input x. Gradient blocks are written
/// only when non-empty: gx gets count * input_dim entries, gz gets
/// count * z_dim entries.
template <class E>
concept StateEstimator = requires(const E& ce, E& e, CSpan v, MutCSpan g, std::span<double> out, const StateSet& st,
                                  const ParticleSet& ps, const SampleBatch& b, double lr) {
  { ce.estimate(v, v, st) } -> std::convertible_to<double>;
  { ce.estimate_grad(v, v, st, g, g) } -> std::convertible_to<double>;
  ce.estimate_many(v, v, std::size_t{}, st, out, g, g);
  e.update(ps, b, lr);
};

// ---------------------------------------------------------------------------
// Posterior mean via self-normalized importance sampling over batch states.

template <ChannelModel C>
class PosteriorMeanEstimator {
public:
  explicit PosteriorMeanEstimator(const C& channel) : ch_(&channel) {}

  const C& channel() const { return *ch_; }

  double estimate(CSpan x, CSpan z, const StateSet& st) const {
    Scratch s(st.size(), 0, 0);
    return kernel(x, z, st, s, {}, {});
  }

  /// Gradient of sum_j w_j phi_j: each log-likelihood gradient enters with
  /// weight w_j (phi_j - h).
  double estimate_grad(CSpan x, CSpan z, const StateSet& st, MutCSpan gx, MutCSpan gz) const {
    Scratch s(st.size(), gx.empty() ? 0 : x.size(), gz.empty() ? 0 : z.size());
    return kernel(x, z, st, s, gx, gz);
  }

  void estimate_many(CSpan x, CSpan zs, std::size_t count, const StateSet& st, std::span<double> out, MutCSpan gx,
                     MutCSpan gz) const {
    const std::size_t dz = ch_->z_dim();
    const std::size_t dx = x.size();
    Scratch s(st.size(), gx.empty() ? 0 : dx, gz.empty() ? 0 : dz);
    for (std::size_t c = 0; c < count; ++c) {
      out[c] = kernel(x, zs.subspan(c * dz, dz), st, s, gx.empty() ? MutCSpan{} : gx.subspan(c * dx, dx),
                      gz.empty() ? MutCSpan{} : gz.subspan(c * dz, dz));
    }
  }

  void update(const ParticleSet&, const SampleBatch&, double) {}

private:
  struct Scratch {
    Scratch(std::size_t n_s, std::size_t dx, std::size_t dz) : ell(n_s), gx(n_s * dx), gz(n_s * dz) {}
    AlignedVec ell;
    CVec gx;
    CVec gz;
  };

  double kernel(CSpan x, CSpan z, const StateSet& st, Scratch& s, MutCSpan gx, MutCSpan gz) const {
    const std::size_t n = st.size();
    const std::size_t dx = gx.size();
    const std::size_t dz = gz.size();
    const bool want = dx > 0 || dz > 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (want)
        s.ell[j] = ch_->grad_log_p_z(z, x, st.values[j], st.feature(j), MutCSpan(s.gx).subspan(j * dx, dx),
                                     MutCSpan(s.gz).subspan(j * dz, dz));
      else
        s.ell[j] = ch_->log_p_z(z, x, st.values[j], st.feature(j));
    }
    softmax_inplace(s.ell);
    double h = 0.0;
    for (std::size_t j = 0; j < n; ++j) h += s.ell[j] * st.values[j];
    if (!want) return h;
    std::fill(gx.begin(), gx.end(), cplx{});
    std::fill(gz.begin(), gz.end(), cplx{});
    for (std::size_t j = 0; j < n; ++j) {
      const double c = s.ell[j] * (st.values[j] - h);
      for (std::size_t k = 0; k < dx; ++k) gx[k] += c * s.gx[j * dx + k];
      for (std::size_t k = 0; k < dz; ++k) gz[k] += c * s.gz[j * dz + k];
    }
    return h;
  }

  const C* ch_;
};

template <ChannelModel C>
double pm_estimate(CSpan x, CSpan z, const SampleBatch& b, const C& ch) {
  return PosteriorMeanEstimator<C>(ch).estimate(x, z, b.states);
}

// ---------------------------------------------------------------------------
// Fully connected ReLU network h_theta(x, z).
//
// Input vector: real parts of (x, z) followed by their imaginary parts, so
// for the ISAC channel with N_R antennas the width is 2 (1 + N_R).
// Hidden layers use ReLU (derivative 0 at 0); the output layer is linear.

class MlpEstimator {
public:
  struct Layer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;
  };

  struct Gradient {
    std::vector<Eigen::MatrixXd> weight;
    std::vector<Eigen::VectorXd> bias;
  };

  /// Zero-initialized network with the given hidden widths.
  MlpEstimator(std::size_t input_dim, std::size_t z_dim, std::vector<std::size_t> hidden)
      : input_dim_(input_dim), z_dim_(z_dim) {
    if (input_dim == 0 || z_dim == 0) throw Error("MlpEstimator: input and echo dimensions must be >= 1");
    widths_.push_back(2 * (input_dim + z_dim));
    for (std::size_t h : hidden) {
      if (h == 0) throw Error("MlpEstimator: hidden widths must be >= 1");
      widths_.push_back(h);
    }
    widths_.push_back(1);
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l)
      layers_.push_back({Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(widths_[l + 1]), static_cast<Eigen::Index>(widths_[l])),
                         Eigen::VectorXd::Zero(static_cast<Eigen::Index>(widths_[l + 1]))});
  }

  /// Glorot-uniform weights, zero biases.
  MlpEstimator(std::size_t input_dim, std::size_t z_dim, std::vector<std::size_t> hidden, std::uint64_t seed)
      : MlpEstimator(input_dim, z_dim, std::move(hidden)) {
    RngStream rng(seed, stream_id(0, 0, Role::EstimatorInit));
    for (Layer& L : layers_) {
      const double lim = std::sqrt(6.0 / static_cast<double>(L.weight.rows() + L.weight.cols()));
      for (Eigen::Index r = 0; r < L.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < L.weight.cols(); ++c) L.weight(r, c) = rng.uniform(-lim, lim);
    }
  }

  const std::vector<std::size_t>& widths() const { return widths_; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t z_dim() const { return z_dim_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) n += widths_[l + 1] * (widths_[l] + 1);
    return n;
  }

  void encode_input(CSpan x, CSpan z, Eigen::Ref<Eigen::VectorXd> u) const {
    check_dims(x, z);
    const std::size_t m = input_dim_ + z_dim_;
    for (std::size_t k = 0; k < input_dim_; ++k) {
      u(static_cast<Eigen::Index>(k)) = x[k].real();
      u(static_cast<Eigen::Index>(m + k)) = x[k].imag();
    }
    for (std::size_t k = 0; k < z_dim_; ++k) {
      u(static_cast<Eigen::Index>(input_dim_ + k)) = z[k].real();
      u(static_cast<Eigen::Index>(m + input_dim_ + k)) = z[k].imag();
    }
  }

  Eigen::VectorXd encode_input(CSpan x, CSpan z) const {
    Eigen::VectorXd u(static_cast<Eigen::Index>(widths_.front()));
    encode_input(x, z, u);
    return u;
  }

  double forward(CSpan x, CSpan z) const {
    Eigen::MatrixXd u = encode_input(x, z);
    return forward_batch(u)(0);
  }

  /// Forward pass over the columns of `inputs`. When `acts` is given it
  /// receives the input and each hidden activation (for backprop).
  Eigen::RowVectorXd forward_batch(const Eigen::MatrixXd& inputs, std::vector<Eigen::MatrixXd>* acts = nullptr) const {
    if (inputs.rows() != static_cast<Eigen::Index>(widths_.front())) throw Error("MlpEstimator: input width mismatch");
    Eigen::MatrixXd a = inputs;
    if (acts) {
      acts->clear();
      acts->push_back(a);
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Eigen::MatrixXd pre = layers_[l].weight * a;
      pre.colwise() += layers_[l].bias;
      if (l + 1 < layers_.size()) {
        a = pre.cwiseMax(0.0);
        if (acts) acts->push_back(a);
      } else {
        a = std::move(pre);
      }
    }
    return a.row(0);
  }

  /// Smallest |pre-activation| of any hidden unit over the columns of
  /// `inputs`: the distance to the nearest ReLU kink.
  double kink_margin(const Eigen::MatrixXd& inputs) const {
    double m = INFINITY;
    Eigen::MatrixXd a = inputs;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
      Eigen::MatrixXd pre = layers_[l].weight * a;
      pre.colwise() += layers_[l].bias;
      m = std::min(m, pre.cwiseAbs().minCoeff());
      a = pre.cwiseMax(0.0);
    }
    return m;
  }

  /// d output / d input for each column; `acts` from forward_batch.
  Eigen::MatrixXd input_gradient_batch(const std::vector<Eigen::MatrixXd>& acts) const {
    const Eigen::Index M = acts.front().cols();
    Eigen::MatrixXd delta = Eigen::MatrixXd::Ones(1, M);
    for (std::size_t l = layers_.size(); l-- > 0;) {
      Eigen::MatrixXd g = layers_[l].weight.transpose() * delta;
      if (l == 0) return g;
      delta = g.cwiseProduct((acts[l].array() > 0.0).cast<double>().matrix());
    }
    return delta;
  }

  /// Gradient of the output with respect to the encoded real input.
  Eigen::VectorXd input_gradient(CSpan x, CSpan z) const {
    std::vector<Eigen::MatrixXd> acts;
    forward_batch(encode_input(x, z), &acts);
    return input_gradient_batch(acts).col(0);
  }

  double estimate(CSpan x, CSpan z, const StateSet&) const { return forward(x, z); }

  double estimate_grad(CSpan x, CSpan z, const StateSet&, MutCSpan gx, MutCSpan gz) const {
    std::vector<Eigen::MatrixXd> acts;
    const double h = forward_batch(encode_input(x, z), &acts)(0);
    const Eigen::MatrixXd g = input_gradient_batch(acts);
    decode_gradient(g.col(0), gx, gz);
    return h;
  }

  void estimate_many(CSpan x, CSpan zs, std::size_t count, const StateSet&, std::span<double> out, MutCSpan gx,
                     MutCSpan gz) const {
    Eigen::MatrixXd U(static_cast<Eigen::Index>(widths_.front()), static_cast<Eigen::Index>(count));
    for (std::size_t c = 0; c < count; ++c) encode_input(x, zs.subspan(c * z_dim_, z_dim_), U.col(static_cast<Eigen::Index>(c)));
    std::vector<Eigen::MatrixXd> acts;
    const Eigen::RowVectorXd h = forward_batch(U, (gx.empty() && gz.empty()) ? nullptr : &acts);
    for (std::size_t c = 0; c < count; ++c) out[c] = h(static_cast<Eigen::Index>(c));
    if (gx.empty() && gz.empty()) return;
    const Eigen::MatrixXd G = input_gradient_batch(acts);
    for (std::size_t c = 0; c < count; ++c)
      decode_gradient(G.col(static_cast<Eigen::Index>(c)), gx.empty() ? MutCSpan{} : gx.subspan(c * input_dim_, input_dim_),
                      gz.empty() ? MutCSpan{} : gz.subspan(c * z_dim_, z_dim_));
  }

  Gradient zero_gradient() const {
    Gradient g;
    for (const Layer& L : layers_) {
      g.weight.push_back(Eigen::MatrixXd::Zero(L.weight.rows(), L.weight.cols()));
      g.bias.push_back(Eigen::VectorXd::Zero(L.bias.size()));
    }
    return g;
  }

  /// Adds scale * grad_theta sum_c (h(u_c) - t_c)^2 into `g`; returns the
  /// unscaled sum of squared errors.
  double accumulate_squared_error(const Eigen::MatrixXd& inputs, std::span<const double> targets, double scale,
                                  Gradient& g) const {
    std::vector<Eigen::MatrixXd> acts;
    const Eigen::RowVectorXd h = forward_batch(inputs, &acts);
    Eigen::MatrixXd delta(1, h.size());
    double sse = 0.0;
    for (Eigen::Index c = 0; c < h.size(); ++c) {
      const double e = h(c) - targets[static_cast<std::size_t>(c)];
      sse += e * e;
      delta(0, c) = 2.0 * scale * e;
    }
    for (std::size_t l = layers_.size(); l-- > 0;) {
      g.weight[l].noalias() += delta * acts[l].transpose();
      g.bias[l] += delta.rowwise().sum();
      if (l == 0) break;
      delta = (layers_[l].weight.transpose() * delta).cwiseProduct((acts[l].array() > 0.0).cast<double>().matrix());
    }
    return sse;
  }

  /// Gradient of the batch distortion
  /// (1 / (N N_s N_z)) sum_{i,j,l} (h(x_i, z_{i,j,l}) - s_j)^2.
  Gradient loss_gradient(const ParticleSet& ps, const SampleBatch& b, double* loss = nullptr) const {
    Gradient g = zero_gradient();
    const std::size_t per = b.z_per_particle();
    const double scale = 1.0 / static_cast<double>(ps.size() * per);
    Eigen::MatrixXd U(static_cast<Eigen::Index>(widths_.front()), static_cast<Eigen::Index>(per));
    std::vector<double> targets(per);
    double sse = 0.0;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      for (std::size_t j = 0; j < b.n_s(); ++j)
        for (std::size_t l = 0; l < b.n_z; ++l) {
          const std::size_t c = j * b.n_z + l;
          encode_input(ps[i], b.z_sample(i, j, l), U.col(static_cast<Eigen::Index>(c)));
          targets[c] = b.states.values[j];
        }
      sse += accumulate_squared_error(U, targets, scale, g);
    }
    if (loss) *loss = sse * scale;
    return g;
  }

  void apply(const Gradient& g, double lr) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      layers_[l].weight -= lr * g.weight[l];
      layers_[l].bias -= lr * g.bias[l];
    }
  }

  /// One plain SGD step on the batch distortion.
  void update(const ParticleSet& ps, const SampleBatch& b, double lr) { apply(loss_gradient(ps, b), lr); }

  /// Flat parameter vector: for each layer, the weight matrix row-major,
  /// then the bias.
  std::vector<double> parameters() const {
    std::vector<double> p;
    p.reserve(parameter_count());
    for (const Layer& L : layers_) {
      for (Eigen::Index r = 0; r < L.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < L.weight.cols(); ++c) p.push_back(L.weight(r, c));
      for (Eigen::Index r = 0; r < L.bias.size(); ++r) p.push_back(L.bias(r));
    }
    return p;
  }

  void set_parameters(std::span<const double> p) {
    if (p.size() != parameter_count()) throw Error("MlpEstimator: parameter vector has the wrong length");
    std::size_t o = 0;
    for (Layer& L : layers_) {
      for (Eigen::Index r = 0; r < L.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < L.weight.cols(); ++c) L.weight(r, c) = p[o++];
      for (Eigen::Index r = 0; r < L.bias.size(); ++r) L.bias(r) = p[o++];
    }
  }

  static std::vector<double> flatten(const Gradient& g) {
    std::vector<double> p;
    for (std::size_t l = 0; l < g.weight.size(); ++l) {
      for (Eigen::Index r = 0; r < g.weight[l].rows(); ++r)
        for (Eigen::Index c = 0; c < g.weight[l].cols(); ++c) p.push_back(g.weight[l](r, c));
      for (Eigen::Index r = 0; r < g.bias[l].size(); ++r) p.push_back(g.bias[l](r));
    }
    return p;
  }

  /// Raw little-endian float64 dump of parameters() with no header.
  void save(const std::filesystem::path& path) const {
    const std::vector<double> p = parameters();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
  }

  void load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::vector<double> p(parameter_count());
    in.read(reinterpret_cast<char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(p.size() * sizeof(double)) || in.peek() != EOF)
      throw Error(path.string() + ": size does not match the configured layer widths");
    set_parameters(p);
  }

private:
  void check_dims(CSpan x, CSpan z) const {
    if (x.size() != input_dim_ || z.size() != z_dim_) throw Error("MlpEstimator: (x, z) dimensions do not match the network");
  }

  void decode_gradient(const Eigen::Ref<const Eigen::VectorXd>& g, MutCSpan gx, MutCSpan gz) const {
    const std::size_t m = input_dim_ + z_dim_;
    for (std::size_t k = 0; k < gx.size(); ++k)
      gx[k] = cplx(g(static_cast<Eigen::Index>(k)), g(static_cast<Eigen::Index>(m + k)));
    for (std::size_t k = 0; k < gz.size(); ++k)
      gz[k] = cplx(g(static_cast<Eigen::Index>(input_dim_ + k)), g(static_cast<Eigen::Index>(m + input_dim_ + k)));
  }

  std::size_t input_dim_;
  std::size_t z_dim_;
  std::vector<std::size_t> widths_;
  std::vector<Layer> layers_;
};

static_assert(StateEstimator<MlpEstimator>);
static_assert(StateEstimator<PosteriorMeanEstimator<IsacMonostatic>>);

}  // namespace cdc
