#include <cmath>

#include <gtest/gtest.h>

#include "ccg/errors.hpp"
#include "ccg/metrics.hpp"

using namespace ccg;

TEST(Mae, HandComputed) {
  const std::vector<double> a{1.0, 2.0, 3.0}, b{1.0, 3.0, 4.0};
  EXPECT_DOUBLE_EQ(mae(a, b), 2.0 / 3.0);
  EXPECT_THROW(mae(a, std::vector<double>{1.0}), InvalidArgument);
  EXPECT_THROW(mae(std::vector<double>{}, std::vector<double>{}), InvalidArgument);
}

TEST(CrossCorr, ShiftedSeriesPeaksAtOne) {
  const std::vector<double> a{1.0, 3.0, 2.0, 5.0, 4.0, 6.0};
  const std::vector<double> b{0.0, 1.0, 3.0, 2.0, 5.0, 4.0};
  EXPECT_LT(crosscorr_peak(a, b, 0), 0.99);
  EXPECT_NEAR(crosscorr_peak(a, b, 1), 1.0, 1e-12);
}

TEST(CrossCorr, AntiCorrelatedAndConstant) {
  const std::vector<double> a{1.0, 2.0, 3.0, 4.0}, b{4.0, 3.0, 2.0, 1.0};
  EXPECT_NEAR(crosscorr_peak(a, b, 0), -1.0, 1e-12);
  EXPECT_THROW(crosscorr_peak(a, std::vector<double>{2.0, 2.0, 2.0, 2.0}, 1), UndefinedCorrelation);
}

TEST(Crossing, FractionDifference) {
  const std::vector<double> a{1.0, 6.0, 7.0, 2.0, 8.0}, b{6.0, 6.0, 1.0, 1.0, 1.0};
  EXPECT_DOUBLE_EQ(crossing_level_error(a, b, 5.0), 0.2);
  EXPECT_DOUBLE_EQ(crossing_threshold(Kpi::Throughput), 5.0);
  EXPECT_DOUBLE_EQ(crossing_threshold(Kpi::Delay), 15.0);
}

TEST(Align, TruncatesToCommonLength) {
  const auto [a, b] = align({1.0, 2.0, 3.0}, {4.0, 5.0});
  EXPECT_EQ(a.size(), 2u);
  EXPECT_EQ(b.size(), 2u);
}

TEST(CellSeries, MeanOverUes) {
  KpiSeries k;
  k.throughput_mbps = {{1.0, 2.0}, {3.0, 6.0}};
  k.delay_ms = {{10.0, 10.0}, {20.0, 30.0}};
  k.delivered_bits = k.throughput_mbps;
  EXPECT_EQ(cell_series(k, Kpi::Throughput), (std::vector<double>{2.0, 4.0}));
  EXPECT_EQ(cell_series(k, Kpi::Delay), (std::vector<double>{15.0, 20.0}));
}

TEST(Res, Examples) {
  EXPECT_DOUBLE_EQ(*relative_excess_samples(5, 5), 0.0);
  EXPECT_DOUBLE_EQ(*relative_excess_samples(6, 2), 2.0);
  EXPECT_DOUBLE_EQ(*relative_excess_samples(3, 2), 0.5);
  EXPECT_FALSE(relative_excess_samples(4, std::nullopt).has_value());
}
