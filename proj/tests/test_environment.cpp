#include "stldrive/environment.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <random>
#include <set>

namespace stldrive {
namespace {

ReferencePath straight(double length, double spacing = 1.0)
{
  const std::vector<Vec2> poly{{0, 0}, {length, 0}};
  return ReferencePath::from_polyline(poly, spacing);
}

TEST(ReferencePath, Validation)
{
  EXPECT_THROW(ReferencePath(std::vector<PathPoint>{{0, 0, 0}}), std::invalid_argument);
  EXPECT_THROW(ReferencePath(std::vector<PathPoint>{{0, 0, 0}, {1, 0, 0}, {3, 0, 0}}), std::invalid_argument);
  const ReferencePath p(std::vector<PathPoint>{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}});
  EXPECT_DOUBLE_EQ(p.spacing(), 1.0);
  EXPECT_DOUBLE_EQ(p.length(), 2.0);
}

TEST(ReferencePath, ResampledArcIsUniform)
{
  std::vector<Vec2> poly;
  for (int i = 0; i <= 90; ++i) {
    const double th = i * std::numbers::pi / 180.0;
    poly.emplace_back(50.0 * std::sin(th), 50.0 * (1.0 - std::cos(th)));
  }
  const auto path = ReferencePath::from_polyline(poly, 0.5);
  EXPECT_NEAR(path.spacing(), 0.5, 0.01);
  EXPECT_NEAR(path.length(), 50.0 * std::numbers::pi / 2, 0.05);
  EXPECT_NEAR(path.points().back().psi, std::numbers::pi / 2, 0.02);
}

TEST(TrackingError, MatchesBruteForce)
{
  std::vector<Vec2> poly{{0, 0}, {20, 0}, {20, 20}, {-5, 30}};
  const auto path = ReferencePath::from_polyline(poly, 0.7);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-10, 35);
  for (int i = 0; i < 500; ++i) {
    const SimpleState s{u(rng), u(rng), 0, 0};
    double best = std::numeric_limits<double>::infinity();
    for (const auto & p : path.points()) best = std::min(best, std::sqrt((p.x - s.x) * (p.x - s.x) + (p.y - s.y) * (p.y - s.y)));
    EXPECT_NEAR(tracking_error(path, s), best, 1e-12);
  }
}

TEST(TrackingError, OnPathIsZero)
{
  const auto path = straight(10.0);
  EXPECT_EQ(tracking_error(path, {3.0, 0.0, 0.0, 0.0}), 0.0);
  const std::vector<Vec2> yaxis{{0, -5}, {0, 5}};
  EXPECT_DOUBLE_EQ(tracking_error(ReferencePath::from_polyline(yaxis, 1.0), {1.0, 0.0, 0.0, 0.0}), 1.0);
}

TEST(Aabb, Examples)
{
  const auto a = aabb_of(0, 0, 0, 4, 2);
  EXPECT_EQ(a, (Aabb{-2, 2, -1, 1}));
  const auto b = aabb_of(0, 0, std::numbers::pi / 4, 4.22, 1.8);
  // (4.22 + 1.8) / (2 sqrt 2)
  EXPECT_NEAR(b.x_max, 2.1283914113715077, 1e-12);
  EXPECT_NEAR(b.y_max, 2.1283914113715077, 1e-12);
  EXPECT_THROW(aabb_of(0, 0, 0, 0, 1), std::invalid_argument);
  const auto c = aabb_of(0, 0, std::numbers::pi / 2, 4.22, 1.8);
  EXPECT_NEAR(c.x_max, 0.9, 1e-12);
  EXPECT_NEAR(c.y_max, 2.11, 1e-12);
  EXPECT_TRUE(aabb_intersects(a, a));
  EXPECT_FALSE(aabb_intersects({0, 1, 0, 1}, {1.01, 2, 0, 1}));

  EXPECT_TRUE(aabb_intersects({0, 1, 0, 1}, {1, 2, 1, 2}));
  EXPECT_FALSE(aabb_intersects({0, 1, 0, 1}, {1.0001, 2, 0, 1}));
  EXPECT_DOUBLE_EQ(aabb_gap({0, 1, 0, 1}, {4, 5, 5, 6}), 5.0);
}

TEST(Aabb, IntersectionIsSymmetricAndContainsCorners)
{
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-5, 5), ang(-3.1, 3.1);
  for (int i = 0; i < 1000; ++i) {
    const auto a = aabb_of(u(rng), u(rng), ang(rng), 4.22, 1.8);
    const auto b = aabb_of(u(rng), u(rng), ang(rng), 4.22, 1.8);
    EXPECT_EQ(aabb_intersects(a, b), aabb_intersects(b, a));
    EXPECT_EQ(aabb_intersects(a, b), aabb_gap(a, b) == 0.0);
  }
  const double x = 1.0, y = -2.0, psi = 0.4, l = 4.22, w = 1.8;
  const auto box  = aabb_of(x, y, psi, l, w);
  for (double sl : {-0.5, 0.5})
    for (double sw : {-0.5, 0.5}) {
      const double cx = x + sl * l * std::cos(psi) - sw * w * std::sin(psi);
      const double cy = y + sl * l * std::sin(psi) + sw * w * std::cos(psi);
      EXPECT_TRUE((Aabb{box.x_min - 1e-12, box.x_max + 1e-12, box.y_min - 1e-12, box.y_max + 1e-12}.contains(cx, cy)));
    }
}

TEST(OneNorm, Clearance)
{
  EXPECT_DOUBLE_EQ(one_norm_clearance({1, 1}, {-2, 3}), 5.0);
  EXPECT_EQ(one_norm_clearance({2, 2}, {2, 2}), 0.0);
  EXPECT_GE(one_norm_clearance({0.6, 0.4}, {0, 0}), 1.0);
}

TEST(NearbyVehicles, MatchesBruteForce)
{
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-30, 30);
  std::vector<TrafficVehicle> vs;
  for (int i = 0; i < 200; ++i) vs.push_back({.id = 1000 - i, .state = {u(rng), u(rng), 0, 0}});
  vs.push_back({.id = 5000, .state = {10, 0, 0, 0}});
  const Vec2 ego(0, 0);
  const auto got = nearby_vehicles(ego, vs, 10.0);
  std::set<int> want;
  for (const auto & v : vs)
    if (v.state.x * v.state.x + v.state.y * v.state.y <= 100.0) want.insert(v.id);
  EXPECT_EQ(got, std::vector<int>(want.begin(), want.end()));
  EXPECT_TRUE(std::is_sorted(got.begin(), got.end()));
  EXPECT_EQ(got.back(), 5000);
  EXPECT_THROW(nearby_vehicles(ego, vs, 0.0), std::invalid_argument);
}

TEST(Predict, ConstantVelocityRollout)
{
  std::vector<TrafficVehicle> vs{{.id = 4, .state = {0, 0, std::numbers::pi / 2, 2}}};
  const std::vector<int> ids{4};
  const auto tr = predict_trajectories(vs, ids, 10, 0.1);
  ASSERT_EQ(tr.at(4).size(), 11u);
  EXPECT_NEAR(tr.at(4).back().y, 2.0, 1e-12);
  EXPECT_NEAR(tr.at(4).back().x, 0.0, 1e-12);
  std::vector<TrafficVehicle> diag{{.id = 1, .state = {0, 0, std::numbers::pi / 4, std::sqrt(2.0)}}, {.id = 2, .state = {5, 5, 1.0, 0.0}}};
  const std::vector<int> both{1, 2};
  const auto td = predict_trajectories(diag, both, 10, 0.1);
  for (int k = 0; k <= 10; ++k) {
    EXPECT_NEAR(td.at(1)[static_cast<std::size_t>(k)].x, 0.1 * k, 1e-12);
    EXPECT_NEAR(td.at(1)[static_cast<std::size_t>(k)].y, 0.1 * k, 1e-12);
    EXPECT_EQ(td.at(2)[static_cast<std::size_t>(k)], diag[1].state);
  }
  const std::vector<int> bad{7};
  EXPECT_THROW(predict_trajectories(vs, bad, 10, 0.1), std::out_of_range);
}

TEST(TrafficLight, Phases)
{
  TrafficLight tl{{{LightColor::Red, 5.0}, {LightColor::Green, 4.0}, {LightColor::Yellow, 1.0}}, 0.0};
  EXPECT_EQ(tl.phase_at(0.0), LightColor::Red);
  EXPECT_EQ(tl.phase_at(5.0), LightColor::Green);
  EXPECT_EQ(tl.phase_at(9.5), LightColor::Yellow);
  EXPECT_EQ(tl.phase_at(10.0), LightColor::Red);
  tl.offset = 5.0;
  EXPECT_EQ(tl.phase_at(0.0), LightColor::Green);
}

TEST(DesiredTrajectory, CruiseOnStraight)
{
  const auto path = straight(100.0);
  const std::vector<RoadFeature> none;
  const auto wp = extract_desired_trajectory(path, {10.0, 0.5, 0.0, 0.0}, none, 10, 0.1, 8.0);
  ASSERT_EQ(wp.size(), 11u);
  for (int k = 0; k <= 10; ++k) {
    EXPECT_NEAR(wp[static_cast<std::size_t>(k)].x_des, 10.0 + 0.8 * k, 1e-9);
    EXPECT_EQ(wp[static_cast<std::size_t>(k)].y_des, 0.0);
    EXPECT_EQ(wp[static_cast<std::size_t>(k)].v_des, 8.0);
  }
  EXPECT_THROW(extract_desired_trajectory(path, {}, none, 0, 0.1, 8.0), std::invalid_argument);
}

TEST(DesiredTrajectory, SpeedLimitCapsInsideZone)
{
  const auto path = straight(100.0);
  const std::vector<RoadFeature> fs{{SpeedLimit{3.0}, {20, 40, -5, 5}}};
  const auto wp = extract_desired_trajectory(path, {15.0, 0.0, 0.0, 0.0}, fs, 30, 0.1, 10.0);
  for (const auto & w : wp) {
    if (fs[0].zone.contains(w.x_des, w.y_des)) {
      EXPECT_LE(w.v_des, 3.0);
    } else {
      EXPECT_EQ(w.v_des, 10.0);
    }
  }
}

TEST(DesiredTrajectory, HeldStopRampsToZero)
{
  const auto path = straight(100.0);
  RoadFeature stop{StopSign{}, {30, 40, -5, 5}, {40, 0}, 3.0};
  const std::vector<RoadFeature> fs{stop};
  const std::vector<FeatureStatus> held{{LightColor::Green, false}}, released{{LightColor::Green, true}};

  const auto wp = extract_desired_trajectory(path, {36.0, 0.0, 0.0, 0.0}, fs, held, 10, 0.1, 10.0);
  double prev = wp.front().v_des;
  for (const auto & w : wp) {
    EXPECT_LE(w.v_des, prev + 1e-12);
    EXPECT_LE(w.x_des, 37.0 + 1e-9);
    prev = w.v_des;
  }
  EXPECT_NEAR(wp.front().v_des, 10.0 * (37.0 - 36.0) / 7.0, 1e-9);

  const auto at_stop = extract_desired_trajectory(path, {37.0, 0.0, 0.0, 0.0}, fs, held, 10, 0.1, 10.0);
  for (const auto & w : at_stop) EXPECT_EQ(w.v_des, 0.0);

  const auto go = extract_desired_trajectory(path, {37.0, 0.0, 0.0, 0.0}, fs, released, 10, 0.1, 10.0);
  EXPECT_EQ(go.front().v_des, 10.0);
}

TEST(DesiredTrajectory, RedLightHoldsGreenReleases)
{
  const auto path = straight(100.0);
  RoadFeature light{TrafficLight{{{LightColor::Red, 5.0}, {LightColor::Green, 5.0}}}, {30, 40, -5, 5}, {40, 0}, 3.2};
  const std::vector<RoadFeature> fs{light};
  const std::vector<FeatureStatus> red{{LightColor::Red, false}}, green{{LightColor::Green, false}};
  EXPECT_EQ(extract_desired_trajectory(path, {36.8, 0, 0, 0}, fs, red, 5, 0.1, 10.0).front().v_des, 0.0);
  EXPECT_EQ(extract_desired_trajectory(path, {36.8, 0, 0, 0}, fs, green, 5, 0.1, 10.0).front().v_des, 10.0);
}

TEST(RoadFeature, Validation)
{
  EXPECT_THROW((RoadFeature{SpeedLimit{0.0}, {0, 1, 0, 1}}.validate()), std::invalid_argument);
  EXPECT_THROW((RoadFeature{StopSign{}, {2, 1, 0, 1}}.validate()), std::invalid_argument);
  EXPECT_THROW((RoadFeature{TrafficLight{}, {0, 1, 0, 1}}.validate()), std::invalid_argument);
  EXPECT_NO_THROW((RoadFeature{SpeedLimit{5.0}, {0, 1, 0, 1}}.validate()));
}

}  // namespace
}  // namespace stldrive
