#include <gtest/gtest.h>

#include "clusterscreen/dbscan.hpp"
#include "support/synthetic.hpp"

namespace cs = clusterscreen;

TEST(Dbscan, HandWorkedLine) {
  // 0 1 2 form a chain, 10 11 a pair, 50 is alone
  cs::Matrix X{{0}, {1}, {2}, {10}, {11}, {50}};
  auto r = cs::dbscan_fit_predict(X, {.eps = 1.0, .min_samples = 2});
  EXPECT_EQ(r.labels, (cs::Assignment{0, 0, 0, 1, 1, -1}));
  EXPECT_EQ(r.clusters, 2);
  r = cs::dbscan_fit_predict(X, {.eps = 1.0, .min_samples = 3});
  EXPECT_EQ(r.labels, (cs::Assignment{0, 0, 0, -1, -1, -1}));
  EXPECT_EQ(r.core, (std::vector<bool>{false, true, false, false, false, false}));
}

TEST(Dbscan, NeighborhoodIsInclusiveAndCountsSelf) {
  cs::Matrix X{{0}, {0.5}};
  auto r = cs::dbscan_fit_predict(X, {.eps = 0.5, .min_samples = 2});
  EXPECT_EQ(r.labels, (cs::Assignment{0, 0}));
  r = cs::dbscan_fit_predict(X, {.eps = 0.4999, .min_samples = 2});
  EXPECT_EQ(r.labels, (cs::Assignment{-1, -1}));
  r = cs::dbscan_fit_predict(X, {.eps = 0.1, .min_samples = 1});
  EXPECT_EQ(r.labels, (cs::Assignment{0, 1}));
}

TEST(Dbscan, BorderPointKeepsFirstCluster) {
  // (0,0) is a border point of both the left and the right group
  cs::Matrix X{{-1, 0}, {-1.5, 0.3}, {-1.5, -0.3}, {0, 0}, {1, 0}, {1.5, 0.3}, {1.5, -0.3}};
  auto r = cs::dbscan_fit_predict(X, {.eps = 1.0, .min_samples = 4});
  EXPECT_FALSE(r.core[3]);
  EXPECT_TRUE(r.core[0]);
  EXPECT_TRUE(r.core[4]);
  EXPECT_EQ(r.labels, (cs::Assignment{0, 0, 0, 0, 1, 1, 1}));
}

TEST(Dbscan, EveryPointNoiseWhenEpsTiny) {
  cs::Rng rng(2);
  auto X = synth::uniform_points(30, 2, rng);
  auto r = cs::dbscan_fit_predict(X, {.eps = 1e-9, .min_samples = 2});
  EXPECT_EQ(r.clusters, 0);
  EXPECT_TRUE(std::all_of(r.labels.begin(), r.labels.end(), [](int l) { return l == -1; }));
}

TEST(Dbscan, InvalidConfig) {
  cs::Matrix X{{0}};
  EXPECT_THROW(cs::dbscan_fit_predict(X, {.eps = 0.0}), cs::ConfigError);
  EXPECT_THROW(cs::dbscan_fit_predict(X, {.eps = 1.0, .min_samples = 0}), cs::ConfigError);
}
