#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cdc/cdc.hpp"
#include "oracle.hpp"
#include "support.hpp"

using namespace cdc;
using testing_support::random_cvec;

namespace {

StateSet random_states(const IsacMonostatic& ch, RngStream& rng, std::size_t n) {
  std::vector<State> s(n);
  for (State& v : s) v = ch.sample_state(rng);
  return make_state_set(ch, std::move(s));
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double e : v) s += e;
  return s / static_cast<double>(v.size());
}

}  // namespace

TEST(PmEstimate, ZeroInputGivesStateAverage) {
  const IsacMonostatic ch(2);
  const ParticleSet ps(1, CVec{0.0});
  const SampleBatch b = draw_batch(ps, ch, SamplingConfig{32, 1, 1, true}, RngKey{1, 1});
  EXPECT_NEAR(pm_estimate(ps[0], b.z_sample(0, 5, 0), b, ch), mean_of(b.states.values), 1e-14);
}

TEST(PmEstimate, SingleStateIsReturnedAsIs) {
  const IsacMonostatic ch(2);
  const ParticleSet ps(1, CVec{{2.0, 1.0}});
  const SampleBatch b = draw_batch(ps, ch, SamplingConfig{1, 1, 1, true}, RngKey{1, 1});
  EXPECT_EQ(pm_estimate(ps[0], CVec{{9, 9}, {-3, 1}}, b, ch), b.states.values[0]);
}

TEST(PmEstimate, StrongSignalPicksTheTrueAngle) {
  const IsacMonostatic ch(2);
  const StateSet st = make_state_set(ch, {-0.9, 0.6});
  const CVec x{{std::sqrt(1000.0), 0.0}};
  const CVec z = isac_sample_z(x, -0.9, CVec(2));
  EXPECT_NEAR(PosteriorMeanEstimator<IsacMonostatic>(ch).estimate(x, z, st), -0.9, 1e-3);
}

TEST(PmEstimate, StaysInsideStateRange) {
  const IsacMonostatic ch(2);
  RngStream rng(4, 4);
  const PosteriorMeanEstimator<IsacMonostatic> pm(ch);
  for (int k = 0; k < 100; ++k) {
    const StateSet st = random_states(ch, rng, 12);
    const double lo = *std::min_element(st.values.begin(), st.values.end());
    const double hi = *std::max_element(st.values.begin(), st.values.end());
    const double h = pm.estimate(random_cvec(rng, 1, 3), random_cvec(rng, 2, 3), st);
    EXPECT_GE(h, lo);
    EXPECT_LE(h, hi);
  }
}

TEST(PmGradient, SingleStateHasZeroGradient) {
  const IsacMonostatic ch(2);
  const StateSet st = make_state_set(ch, {0.4});
  CVec gx(1), gz(2);
  PosteriorMeanEstimator<IsacMonostatic>(ch).estimate_grad(CVec{{1, 2}}, CVec{{0.5, 0}, {1, 1}}, st, gx, gz);
  EXPECT_EQ(gx[0], cplx(0, 0));
  EXPECT_EQ(gz[0], cplx(0, 0));
  EXPECT_EQ(gz[1], cplx(0, 0));
}

// a(-phi) = conj(a(phi)), so with a symmetric state set and a real input the
// estimate is odd under z -> conj(z), and its z-gradient maps to minus its
// conjugate.
TEST(PmGradient, MirrorSymmetry) {
  const IsacMonostatic ch(2);
  const StateSet st = make_state_set(ch, {-0.7, -0.2, 0.2, 0.7});
  const PosteriorMeanEstimator<IsacMonostatic> pm(ch);
  const CVec x{{1.3, 0.0}};
  const CVec z{{0.4, 0.9}, {-1.1, 0.3}};
  const CVec zc{std::conj(z[0]), std::conj(z[1])};
  CVec gx(1), gz(2), gxc(1), gzc(2);
  const double h = pm.estimate_grad(x, z, st, gx, gz);
  const double hc = pm.estimate_grad(x, zc, st, gxc, gzc);
  EXPECT_NEAR(h, -hc, 1e-14);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_NEAR(gz[k].real(), -gzc[k].real(), 1e-13);
    EXPECT_NEAR(gz[k].imag(), gzc[k].imag(), 1e-13);
  }
}

TEST(PmGradient, MatchesFiniteDifferences) {
  const IsacMonostatic ch(2);
  const PosteriorMeanEstimator<IsacMonostatic> pm(ch);
  RngStream rng(31, 1);
  double worst = 0;
  for (int k = 0; k < 50; ++k) {
    const StateSet st = random_states(ch, rng, 24);
    const CVec x = random_cvec(rng, 1, 1.0);
    const CVec z = isac_sample_z(x, ch.sample_state(rng), sample_standard_complex_gaussian(rng, 2));
    CVec gx(1), gz(2);
    pm.estimate_grad(x, z, st, gx, gz);
    worst = std::max(worst, oracle::rel_err(gx, oracle::gradient([&](const CVec& v) { return pm.estimate(v, z, st); }, x)));
    worst = std::max(worst, oracle::rel_err(gz, oracle::gradient([&](const CVec& v) { return pm.estimate(x, v, st); }, z)));
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(PmEstimateMany, AgreesWithSinglePoint) {
  const IsacMonostatic ch(2);
  const PosteriorMeanEstimator<IsacMonostatic> pm(ch);
  RngStream rng(2, 9);
  const StateSet st = random_states(ch, rng, 10);
  const CVec x = random_cvec(rng, 1);
  const CVec zs = random_cvec(rng, 6);
  std::vector<double> h(3);
  CVec gx(3), gz(6);
  pm.estimate_many(x, zs, 3, st, h, gx, gz);
  for (std::size_t c = 0; c < 3; ++c) {
    CVec gx1(1), gz1(2);
    const double h1 = pm.estimate_grad(x, CSpan(zs).subspan(2 * c, 2), st, gx1, gz1);
    EXPECT_EQ(h[c], h1);
    EXPECT_EQ(gx[c], gx1[0]);
    EXPECT_EQ(gz[2 * c + 1], gz1[1]);
  }
}

TEST(Mlp, ZeroNetworkOutputsZero) {
  const MlpEstimator m(1, 2, {64, 64});
  EXPECT_EQ(m.widths(), (std::vector<std::size_t>{6, 64, 64, 1}));
  EXPECT_EQ(m.forward(CVec{{3, -1}}, CVec{{1, 1}, {-2, 5}}), 0.0);
  const Eigen::VectorXd g = m.input_gradient(CVec{{3, -1}}, CVec{{1, 1}, {-2, 5}});
  EXPECT_EQ(g.norm(), 0.0);
}

TEST(Mlp, OutputBiasPassesThrough) {
  MlpEstimator m(1, 2, {8, 8});
  m.layers().back().bias(0) = 0.37;
  EXPECT_EQ(m.forward(CVec{{3, -1}}, CVec{{1, 1}, {-2, 5}}), 0.37);
}

TEST(Mlp, SingleReluUnit) {
  MlpEstimator m(1, 1, {1});
  m.layers()[0].weight(0, 0) = 1.0;  // input 0 is Re x
  m.layers()[1].weight(0, 0) = 1.0;
  EXPECT_EQ(m.forward(CVec{{-1, 4}}, CVec{{2, 2}}), 0.0);
  EXPECT_EQ(m.forward(CVec{{2, 4}}, CVec{{2, 2}}), 2.0);
}

TEST(Mlp, InputGradientIsPathProduct) {
  MlpEstimator m(1, 1, {1});
  m.layers()[0].weight(0, 2) = 1.5;  // input 2 is Im x
  m.layers()[1].weight(0, 0) = -0.4;
  const Eigen::VectorXd g = m.input_gradient(CVec{{0, 2}}, CVec{{0, 0}});
  EXPECT_DOUBLE_EQ(g(2), 1.5 * -0.4);
  EXPECT_EQ(g(0), 0.0);
  CVec gx(1), gz(1);
  m.estimate_grad(CVec{{0, 2}}, CVec{{0, 0}}, {}, gx, gz);
  EXPECT_DOUBLE_EQ(gx[0].imag(), 1.5 * -0.4);
}

TEST(Mlp, RejectsMismatchedInputs) {
  const MlpEstimator m(1, 2, {4});
  EXPECT_THROW(m.forward(CVec{1.0}, CVec{1.0}), Error);
  EXPECT_THROW(MlpEstimator(1, 2, {4, 0}), Error);
  EXPECT_THROW(MlpEstimator(0, 2, {4}), Error);
}

TEST(Mlp, ParameterCountMatchesWidths) {
  const MlpEstimator m(1, 2, {64, 64}, 3);
  EXPECT_EQ(m.parameter_count(), 64u * 7 + 64u * 65 + 65u);
  EXPECT_EQ(m.parameters().size(), m.parameter_count());
}

TEST(Mlp, GlorotInitializationBounds) {
  const MlpEstimator m(1, 2, {64, 64}, 3);
  const double lim0 = std::sqrt(6.0 / (6 + 64));
  EXPECT_LE(m.layers()[0].weight.cwiseAbs().maxCoeff(), lim0);
  EXPECT_GT(m.layers()[0].weight.cwiseAbs().maxCoeff(), 0.8 * lim0);
  EXPECT_EQ(m.layers()[0].bias.norm(), 0.0);
  const MlpEstimator again(1, 2, {64, 64}, 3);
  EXPECT_EQ(m.parameters(), again.parameters());
}

TEST(MlpBackward, PerfectFitHasZeroGradient) {
  MlpEstimator m(1, 2, {4});
  m.layers().back().bias(0) = 0.3;
  Eigen::MatrixXd U = Eigen::MatrixXd::Ones(6, 3);
  const std::vector<double> t{0.3, 0.3, 0.3};
  MlpEstimator::Gradient g = m.zero_gradient();
  EXPECT_EQ(m.accumulate_squared_error(U, t, 1.0, g), 0.0);
  for (double v : MlpEstimator::flatten(g)) EXPECT_EQ(v, 0.0);
}

TEST(MlpBackward, LinearNetworkHandChainRule) {
  MlpEstimator m(1, 1, {});
  Eigen::MatrixXd u(4, 1);
  u << 0.5, -1.0, 2.0, 0.25;
  m.layers()[0].weight << 0.1, 0.2, -0.3, 0.4;
  const double h = 0.1 * 0.5 + 0.2 * -1.0 + -0.3 * 2.0 + 0.4 * 0.25;
  const double s = 0.7;
  MlpEstimator::Gradient g = m.zero_gradient();
  m.accumulate_squared_error(u, std::vector<double>{s}, 1.0, g);
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(g.weight[0](0, k), 2 * (h - s) * u(k), 1e-15);
  EXPECT_NEAR(g.bias[0](0), 2 * (h - s), 1e-15);
}

TEST(MlpBackward, MatchesFiniteDifferencesOnEveryParameter) {
  const IsacMonostatic ch(2);
  RngStream rng(44, 2);
  int done = 0;
  for (std::uint64_t seed = 1; done < 50; ++seed) {
    MlpEstimator m(1, 2, {8, 6}, seed);
    for (auto& L : m.layers())
      for (Eigen::Index k = 0; k < L.bias.size(); ++k) L.bias(k) = 0.1 * rng.normal();
    const ParticleSet ps = initial_particles(2, 1, 2.0, InitKind::Gaussian, false, RngKey{seed, 0});
    const SampleBatch b = draw_batch(ps, ch, SamplingConfig{3, 1, 2, true}, RngKey{seed, 1});
    Eigen::MatrixXd U(6, 12);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t l = 0; l < 2; ++l) m.encode_input(ps[i], b.z_sample(i, j, l), U.col(Eigen::Index(i * 6 + j * 2 + l)));
    if (m.kink_margin(U) < 1e-2) continue;  // a finite-difference step would cross a ReLU kink
    const std::vector<double> analytic = MlpEstimator::flatten(m.loss_gradient(ps, b));
    const std::vector<double> p0 = m.parameters();
    const auto fd = oracle::gradient(
        [&](const std::vector<double>& p) {
          MlpEstimator probe = m;
          probe.set_parameters(p);
          double loss = 0;
          probe.loss_gradient(ps, b, &loss);
          return loss;
        },
        p0, 1e-4);
    EXPECT_LT(oracle::rel_err(analytic, fd), 1e-4) << "seed " << seed;
    ++done;
  }
}

TEST(MlpInputGradient, MatchesFiniteDifferences) {
  RngStream rng(45, 2);
  int done = 0;
  for (std::uint64_t seed = 1; done < 50; ++seed) {
    const MlpEstimator m(1, 2, {16, 16}, seed);
    const CVec x = random_cvec(rng, 1), z = random_cvec(rng, 2);
    if (m.kink_margin(m.encode_input(x, z)) < 1e-4) continue;
    CVec gx(1), gz(2);
    m.estimate_grad(x, z, {}, gx, gz);
    EXPECT_LT(oracle::rel_err(gx, oracle::gradient([&](const CVec& v) { return m.forward(v, z); }, x)), 1e-4);
    EXPECT_LT(oracle::rel_err(gz, oracle::gradient([&](const CVec& v) { return m.forward(x, v); }, z)), 1e-4);
    ++done;
  }
}

TEST(MlpEstimateMany, AgreesWithSinglePoint) {
  const MlpEstimator m(1, 2, {8, 8}, 5);
  RngStream rng(2, 2);
  const CVec x = random_cvec(rng, 1), zs = random_cvec(rng, 8);
  std::vector<double> h(4);
  CVec gx(4), gz(8);
  m.estimate_many(x, zs, 4, {}, h, gx, gz);
  for (std::size_t c = 0; c < 4; ++c) {
    CVec gx1(1), gz1(2);
    EXPECT_NEAR(h[c], m.estimate_grad(x, CSpan(zs).subspan(2 * c, 2), {}, gx1, gz1), 1e-14);
    EXPECT_NEAR(std::abs(gx[c] - gx1[0]), 0.0, 1e-14);
  }
}

TEST(MlpSgd, SmallStepDoesNotIncreaseBatchLoss) {
  const IsacMonostatic ch(2);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    MlpEstimator m(1, 2, {16, 16}, seed);
    const ParticleSet ps = initial_particles(8, 1, 10.0, InitKind::Gaussian, false, RngKey{seed, 0});
    const SampleBatch b = draw_batch(ps, ch, SamplingConfig{16, 1, 2, true}, RngKey{seed, 1});
    double before = 0, after = 0;
    m.loss_gradient(ps, b, &before);
    m.update(ps, b, 1e-5);
    m.loss_gradient(ps, b, &after);
    EXPECT_LE(after, before) << "seed " << seed;
  }
}

TEST(MlpWeights, SaveLoadRoundTripAndLayout) {
  const MlpEstimator m(1, 2, {5, 3}, 9);
  const auto path = std::filesystem::temp_directory_path() / "cdc_test_weights.bin";
  m.save(path);
  EXPECT_EQ(std::filesystem::file_size(path), m.parameter_count() * sizeof(double));
  std::ifstream in(path, std::ios::binary);
  double first = 0, second = 0;
  in.read(reinterpret_cast<char*>(&first), 8);
  in.read(reinterpret_cast<char*>(&second), 8);
  EXPECT_EQ(first, m.layers()[0].weight(0, 0));
  EXPECT_EQ(second, m.layers()[0].weight(0, 1));

  MlpEstimator loaded(1, 2, {5, 3});
  loaded.load(path);
  EXPECT_EQ(loaded.parameters(), m.parameters());
  MlpEstimator wrong(1, 2, {5, 4});
  EXPECT_THROW(wrong.load(path), Error);
  std::filesystem::remove(path);
}

// The posterior mean beats arbitrary networks on the same batch.
TEST(PmOptimality, NoWorseThanNetworksOnSharedBatches) {
  const IsacMonostatic ch(2);
  const PosteriorMeanEstimator<IsacMonostatic> pm(ch);
  const ParticleSet ps = initial_particles(16, 1, 10.0, InitKind::Gaussian, false, RngKey{3, 0});
  const SampleBatch b = draw_batch(ps, ch, SamplingConfig{64, 1, 8, true}, RngKey{3, 1});
  const double d_pm = eval_distortion(ps, b, ch, pm);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    MlpEstimator m(1, 2, {32, 32}, seed);
    for (int step = 0; step < 200; ++step) m.update(ps, b, 1e-2);
    EXPECT_LE(d_pm, eval_distortion(ps, b, ch, m) + 1e-9) << "seed " << seed;
  }
}
