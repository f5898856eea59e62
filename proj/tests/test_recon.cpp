#include <gtest/gtest.h>

#include <random>

#include "odis/io.hpp"
#include "odis/metrics.hpp"
#include "odis/recon.hpp"

using namespace odis;

namespace {

Volume random_volume(const Shape& s, std::uint64_t seed, double lo = 0.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, 1.0);
  Volume v(s);
  for (auto& x : v.data()) x = u(rng);
  return v;
}

struct Noiseless {
  OdisSpec spec;
  Image disp, pan;
};

Noiseless measure(const Volume& x, std::size_t step = 1) {
  const auto spec = OdisSpec::for_shape(x.shape(), step);
  return {spec, odis_disperse(x, step).pixels, odis_pan(x)};
}

double distance(const Volume& a, const Volume& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
  return std::sqrt(s);
}

}  // namespace

TEST(Schedule, DefaultEndpoints) {
  const auto one = default_schedule(1);
  EXPECT_EQ(one.rhos(), (std::vector<double>{0.01}));
  const auto five = default_schedule(5);
  EXPECT_EQ(five.rho(0), 0.01);
  EXPECT_EQ(five.rho(4), 1.0);
  for (std::size_t k = 1; k < 5; ++k) EXPECT_GT(five.rho(k), five.rho(k - 1));
  for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(five.lambda(k), 1.0);
  EXPECT_EQ(five.sigma(4), 1.0);
  EXPECT_NEAR(five.sigma(0), 10.0, 1e-12);
  EXPECT_THROW(default_schedule(0), Error);
}

TEST(Schedule, Validation) {
  EXPECT_THROW(Schedule({0.1, 0.0}, {1, 1}), Error);
  EXPECT_THROW(Schedule({0.1}, {-1}), Error);
  EXPECT_THROW(Schedule({0.1, 0.2}, {1}), Error);
  EXPECT_THROW(Schedule({}, {}), Error);
}

TEST(Prior, Validation) {
  EXPECT_THROW(Prior::tv(0.1, 0), Error);
  EXPECT_THROW(Prior::guided(0, 0.1), Error);
  EXPECT_THROW(Prior::guided(1, 0.0), Error);
}

TEST(Initialize, ReplicatesPanOverC) {
  const OdisSpec s{1, 2, 2, 1};
  const auto x0 = initialize(Image(1, 3), Image(1, 2, std::vector<double>{4, 6}), s);
  EXPECT_EQ(x0.data(), (std::vector<double>{2, 3, 2, 3}));
}

TEST(Initialize, UniformCubeIsExact) {
  const Volume x(Shape{4, 5, 3}, 0.4);
  const auto m = measure(x);
  const auto x0 = initialize(m.disp, m.pan, m.spec);
  for (double v : x0.data()) EXPECT_NEAR(v, 0.4, 1e-15);
}

TEST(Initialize, ZeroAndShapeErrors) {
  const OdisSpec s{2, 3, 2, 1};
  const auto zero = initialize(Image(2, 4), Image(2, 3), s);
  for (double v : zero.data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(initialize(Image(2, 3), Image(2, 3), s), Error);
  EXPECT_THROW(initialize(Image(2, 4), Image(2, 4), s), Error);
}

TEST(XStep, ProximalAnchoringDominatesAsRhoGrows) {
  const Shape sh{6, 8, 4};
  const auto gt = random_volume(sh, 1);
  auto m = measure(gt);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0, 0.3);
  for (auto& v : m.disp.data()) v += g(rng);
  for (auto& v : m.pan.data()) v += g(rng);
  double previous = INFINITY;
  for (double rho : {1.0, 10.0, 100.0}) {
    AdmmState st = AdmmState::start(Volume(sh));
    st.z = gt;
    st.u = Volume(sh);
    x_step(st, m.disp, m.pan, m.spec, rho, 1.0, 50, 1e-12);
    const double d = distance(st.x, gt);
    EXPECT_LT(d, previous) << rho;
    previous = d;
  }
}

TEST(XStep, SingleChannelExactRecovery) {
  const Shape sh{5, 7, 1};
  const auto gt = random_volume(sh, 3);
  const auto m = measure(gt, 2);
  AdmmState st = AdmmState::start(Volume(sh));
  x_step(st, m.disp, m.pan, m.spec, 1e-9, 1.0, 10, 1e-14);
  EXPECT_LE(distance(st.x, gt) / std::sqrt(static_cast<double>(sh.size())), 1e-8);
}

TEST(XStep, ScaleEquivariance) {
  const Shape sh{4, 6, 3};
  const auto gt = random_volume(sh, 4);
  const auto m = measure(gt);
  const double alpha = 3.5;
  Image disp2 = m.disp, pan2 = m.pan;
  for (auto& v : disp2.data()) v *= alpha;
  for (auto& v : pan2.data()) v *= alpha;
  AdmmState a = AdmmState::start(initialize(m.disp, m.pan, m.spec));
  AdmmState b = AdmmState::start(initialize(disp2, pan2, m.spec));
  x_step(a, m.disp, m.pan, m.spec, 0.1, 1.0, 10, 1e-14);
  x_step(b, disp2, pan2, m.spec, 0.1, 1.0, 10, 1e-14);
  for (std::size_t i = 0; i < a.x.size(); ++i) EXPECT_NEAR(b.x.data()[i], alpha * a.x.data()[i], 1e-10);
}

TEST(ZStep, IdentityAndTvFixedPoint) {
  const auto v = random_volume({5, 6, 2}, 5);
  EXPECT_EQ(z_step(v, Prior::identity(), 1.0, nullptr).data(), v.data());
  const Volume c(Shape{5, 6, 2}, 0.7);
  const auto z = z_step(c, Prior::tv(0.5, 50), 2.0, nullptr);
  for (double x : z.data()) EXPECT_NEAR(x, 0.7, 1e-12);
}

TEST(ZStep, TvReducesTotalVariation) {
  const Shape sh{16, 16, 1};
  auto v = random_volume(sh, 6);
  auto tv = [&](const Volume& x) {
    double s = 0;
    for (std::size_t r = 0; r < 16; ++r)
      for (std::size_t c = 0; c < 16; ++c) {
        const double dx = r + 1 < 16 ? x(r + 1, c, 0) - x(r, c, 0) : 0;
        const double dy = c + 1 < 16 ? x(r, c + 1, 0) - x(r, c, 0) : 0;
        s += std::sqrt(dx * dx + dy * dy);
      }
    return s;
  };
  const auto z = z_step(v, Prior::tv(0.1, 50), 1.0, nullptr);
  EXPECT_LT(tv(z), 0.5 * tv(v));
}

TEST(ZStep, GuidedFilterSelfGuidanceIsIdentity) {
  const Shape sh{12, 10, 1};
  const auto v = random_volume(sh, 7);
  const Image pan(12, 10, v.data());  // guide = PAN / C = the single band
  const auto z = z_step(v, Prior::guided(2, 1e-12), 1.0, &pan);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(z.data()[i], v.data()[i], 1e-6);
}

TEST(ZStep, GuidedNeedsPan) {
  EXPECT_THROW(z_step(Volume(Shape{3, 3, 2}), Prior::guided(1, 0.1), 1.0, nullptr), Error);
}

TEST(DualUpdate, Identities) {
  const Shape sh{2, 3, 2};
  AdmmState st = AdmmState::start(random_volume(sh, 8));
  st.u = random_volume(sh, 9);
  const auto u0 = st.u;
  st.z = st.x;
  dual_update(st);
  EXPECT_EQ(st.u.data(), u0.data());

  AdmmState s2 = AdmmState::start(Volume(sh));
  s2.z = random_volume(sh, 10);
  const auto delta = random_volume(sh, 11);
  for (std::size_t i = 0; i < sh.size(); ++i) s2.x.data()[i] = s2.z.data()[i] + delta.data()[i];
  dual_update(s2);
  for (std::size_t i = 0; i < sh.size(); ++i) EXPECT_NEAR(s2.u.data()[i], delta.data()[i], 1e-15);
}

TEST(DataResidual, Cases) {
  const auto gt = random_volume({3, 4, 3}, 12);
  const auto m = measure(gt);
  const auto r = data_residual(gt, m.disp, m.spec);
  for (double v : r.data()) EXPECT_NEAR(v, 0.0, 1e-14);
  const auto r0 = data_residual(Volume(gt.shape()), m.disp, m.spec);
  EXPECT_EQ(r0.data(), odis_adjoint_disperse(m.disp, m.spec).data());
  EXPECT_THROW(data_residual(Volume(Shape{3, 4, 2}), m.disp, m.spec), Error);
}

TEST(Objective, Cases) {
  const auto gt = random_volume({3, 4, 3}, 13);
  const auto m = measure(gt);
  EXPECT_NEAR(objective(gt, m.disp, m.pan, m.spec, 1.0), 0.0, 1e-20);
  const double dd = dot(m.disp.values(), m.disp.values()), pp = dot(m.pan.values(), m.pan.values());
  EXPECT_NEAR(objective(Volume(gt.shape()), m.disp, m.pan, m.spec, 0.7), 0.5 * dd + 0.35 * pp, 1e-12);
  EXPECT_NEAR(objective(Volume(gt.shape()), m.disp, m.pan, m.spec, 0.0), 0.5 * dd, 1e-12);
}

TEST(Reconstruct, SingleChannelIdentityExactInOneStage) {
  const auto gt = random_volume({8, 8, 1}, 14);
  const auto m = measure(gt);
  const auto rec = reconstruct(m.disp, m.pan, m.spec, Schedule({1e-9}, {1.0}), Prior::identity(), {10, 1e-14});
  for (std::size_t i = 0; i < gt.size(); ++i) EXPECT_NEAR(rec.estimate.data()[i], gt.data()[i], 1e-6);
}

TEST(Reconstruct, FixedPointAtGroundTruth) {
  const auto gt = random_volume({6, 8, 3}, 15);
  const auto m = measure(gt);
  AdmmState st = AdmmState::start(gt);
  x_step(st, m.disp, m.pan, m.spec, 0.1, 1.0, 10, 1e-12);
  st.z = z_step(st.x, Prior::identity(), 1.0, &m.pan);
  dual_update(st);
  EXPECT_LE(distance(st.x, gt), 1e-6);
  EXPECT_LE(distance(st.z, gt), 1e-6);
}

TEST(Reconstruct, IdentityPriorDualTelescopes) {
  const auto gt = random_volume({8, 10, 4}, 16);
  const auto m = measure(gt);
  const Shape sh = gt.shape();
  AdmmState st = AdmmState::start(initialize(m.disp, m.pan, m.spec));
  const auto sched = default_schedule(6);
  for (std::size_t k = 0; k < sched.stages(); ++k) {
    x_step(st, m.disp, m.pan, m.spec, sched.rho(k), sched.lambda(k), 10, 1e-10);
    Volume v = st.x;
    for (std::size_t i = 0; i < v.size(); ++i) v.data()[i] += st.u.data()[i];
    st.z = z_step(v, Prior::identity(), sched.sigma(k), nullptr);
    dual_update(st);
    EXPECT_EQ(st.x.shape(), sh);
    EXPECT_EQ(st.z.shape(), sh);
  }
  for (double v : st.u.data()) EXPECT_LE(std::abs(v), 1e-10);
}

TEST(Reconstruct, IdentityPriorObjectiveNonIncreasing) {
  const auto gt = random_volume({16, 16, 4}, 17);
  const auto m = measure(gt);
  const auto rec = reconstruct(m.disp, m.pan, m.spec, default_schedule(8), Prior::identity(), {10, 1e-10});
  ASSERT_EQ(rec.diagnostics.size(), 8u);
  for (std::size_t k = 1; k < rec.diagnostics.size(); ++k)
    EXPECT_LE(rec.diagnostics[k].objective, rec.diagnostics[k - 1].objective + 1e-8) << k;
}

TEST(Reconstruct, TvImprovesSmoothScene) {
  const auto cube = synth_cube(SceneKind::smooth_gradient, {32, 32, 8}, 0);
  const auto m = measure(cube.volume());
  const auto rec = reconstruct(m.disp, m.pan, m.spec, default_schedule(8), Prior::tv(1e-3), {10, 1e-8});
  EXPECT_GE(psnr(cube.volume(), rec.estimate) - psnr(cube.volume(), rec.initial), 10.0);
  EXPECT_LE(sam(cube.volume(), rec.estimate), 10.0);
  for (double v : rec.estimate.data()) EXPECT_GE(v, 0.0);
  for (const auto& d : rec.diagnostics) {
    EXPECT_NEAR(d.sigma, 1.0 / std::sqrt(d.rho), 1e-15);
    EXPECT_GE(d.residual_norm, 0.0);
  }
}

// Frozen from the reference run on the noiseless 64x64x8 smooth scene
// (initial 16.19 dB, final 51.37 dB, SAM 0.64 deg).
TEST(Reconstruct, RegressionSmoothScene64) {
  const auto cube = synth_cube(SceneKind::smooth_gradient, {64, 64, 8}, 0);
  const auto m = measure(cube.volume());
  const auto rec = reconstruct(m.disp, m.pan, m.spec, default_schedule(8), Prior::tv(1e-3), {10, 1e-8});
  EXPECT_NEAR(psnr(cube.volume(), rec.initial), 16.19, 0.01);
  EXPECT_GE(psnr(cube.volume(), rec.estimate), 51.0);
  EXPECT_LE(sam(cube.volume(), rec.estimate), 1.0);
}

TEST(Reconstruct, GuidedPriorRuns) {
  const auto cube = synth_cube(SceneKind::gaussian_blobs, {24, 24, 6}, 3);
  const auto m = measure(cube.volume());
  const auto rec = reconstruct(m.disp, m.pan, m.spec, default_schedule(4), Prior::guided(2, 1e-3), {10, 1e-8});
  EXPECT_GT(psnr(cube.volume(), rec.estimate), psnr(cube.volume(), rec.initial));
}

TEST(Reconstruct, Deterministic) {
  const auto cube = synth_cube(SceneKind::checker_spectra, {16, 16, 4}, 4);
  const auto m = measure(cube.volume(), 2);
  const auto a = reconstruct(m.disp, m.pan, m.spec, default_schedule(3), Prior::tv(1e-3), {5, 1e-8});
  const auto b = reconstruct(m.disp, m.pan, m.spec, default_schedule(3), Prior::tv(1e-3), {5, 1e-8});
  EXPECT_EQ(a.estimate.data(), b.estimate.data());
}

TEST(ReconstructSystem, MaskedSystemsImproveOnInit) {
  const auto cube = synth_cube(SceneKind::smooth_gradient, {16, 16, 4}, 0);
  for (auto kind : {SystemKind::sd_cassi, SystemKind::sd_cassi_dc, SystemKind::dd_cassi_dc, SystemKind::pmvis_dc}) {
    const Mask mask = kind == SystemKind::pmvis_dc ? random_channel_map(16, 16, 4, 1) : random_binary_mask(16, 16, 0.5, 1);
    const SystemModel model(SystemSpec::make(kind, 4, 1, mask), cube.shape());
    Image coded(16, model.coded_width());
    model.apply_coded(cube.values(), coded.values());
    std::optional<Image> pan;
    if (model.has_pan()) pan = odis_pan(cube);
    const auto rec = reconstruct_system(model, coded, pan, default_schedule(6), Prior::tv(1e-3), {10, 1e-8});
    EXPECT_GT(psnr(cube.volume(), rec.estimate), psnr(cube.volume(), rec.initial)) << to_string(kind);
  }
}

TEST(ReconstructSystem, ArmPresenceChecked) {
  const SystemModel model(SystemSpec::odis(2, 1), {4, 4, 2});
  EXPECT_THROW(reconstruct_system(model, Image(4, 5), std::nullopt, default_schedule(1), Prior::identity()), Error);
}
