#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "support.hpp"

namespace mixdta {
namespace {

using test::add_observations;
using test::make_link;
using test::make_nodes;

// Two-node network; link 0 has free-flow time 80 s.
Network pair_net() {
  return Network(make_nodes({"A", "B"}), {make_link("L", "A", "B", 800, 10), make_link("R", "B", "A", 800, 10)});
}

TripRecord one_link(LinkIndex l, double entry, double tt) {
  TripRecord t;
  t.links.push_back({l, entry, entry + tt});
  return t;
}

CostHistory history_with(const Network& net, double c1, std::uint32_t f1, double c2, std::uint32_t f2) {
  std::vector<TripRecord> prev, prev2;
  if (f1) add_observations(prev, 0, 0, 900, c1, f1);
  if (f2) add_observations(prev2, 0, 0, 900, c2, f2);
  CostHistory h(net, 900);
  h.set_tables(aggregate_costs(prev, net, 900), aggregate_costs(prev2, net, 900));
  return h;
}

TEST(Costs, SingleObservation) {
  const auto net = pair_net();
  const std::vector<TripRecord> trips{one_link(0, 0, 100)};
  const auto t = aggregate_costs(trips, net, 900);
  const auto* c = t.find(0, 0);
  ASSERT_NE(c, nullptr);
  EXPECT_DOUBLE_EQ(c->mean(), 100.0);
  EXPECT_EQ(c->flow, 1u);
  EXPECT_EQ(t.find(1, 0), nullptr);
}

TEST(Costs, MeanOfTwo) {
  const auto net = pair_net();
  const std::vector<TripRecord> trips{one_link(0, 10, 100), one_link(0, 20, 140)};
  const auto table = aggregate_costs(trips, net, 900);
  const auto* c = table.find(0, 0);
  ASSERT_NE(c, nullptr);
  EXPECT_DOUBLE_EQ(c->mean(), 120.0);
  EXPECT_EQ(c->flow, 2u);
}

TEST(Costs, HalfOpenBins) {
  const auto net = pair_net();
  const std::vector<TripRecord> trips{one_link(0, 899, 50), one_link(0, 901, 70), one_link(0, 900, 60)};
  const auto t = aggregate_costs(trips, net, 900);
  ASSERT_NE(t.find(0, 0), nullptr);
  EXPECT_DOUBLE_EQ(t.find(0, 0)->mean(), 50.0);
  EXPECT_EQ(t.find(0, 1)->flow, 2u);
  EXPECT_EQ(t.bin_of(899.999), 0u);
  EXPECT_EQ(t.bin_of(900.0), 1u);
}

TEST(Costs, OpenTraversalsSkipped) {
  const auto net = pair_net();
  TripRecord t;
  t.links.push_back({0, 0, 50});
  t.links.push_back({1, 50});  // still on link at horizon
  const auto table = aggregate_costs(std::vector<TripRecord>{t}, net, 900);
  EXPECT_NE(table.find(0, 0), nullptr);
  EXPECT_EQ(table.find(1, 0), nullptr);
}

TEST(Costs, ExitBeforeEntryRejected) {
  const auto net = pair_net();
  EXPECT_THROW(aggregate_costs(std::vector<TripRecord>{one_link(0, 100, -5)}, net, 900), DataError);
}

TEST(Costs, LinkCostLookup) {
  const auto net = pair_net();
  const auto h = history_with(net, 120, 3, 0, 0);
  EXPECT_DOUBLE_EQ(link_cost(h, 0, 10), 120.0);
  EXPECT_DOUBLE_EQ(link_cost(h, 1, 10), 80.0);       // empty cell
  EXPECT_DOUBLE_EQ(link_cost(h, 0, 1e6), 80.0);      // beyond any data
  EXPECT_THROW(link_cost(h, 7, 0), LookupError);
  EXPECT_THROW(link_cost(h, 0, -1), ContractError);
}

TEST(Costs, MarginalHandValue) {
  const auto net = pair_net();
  // 120 + 600 * (120 - 100) / (600 - 500)
  EXPECT_NEAR(marginal_link_cost(history_with(net, 120, 600, 100, 500), 0, 0), 240.0, 1e-9);
}

TEST(Costs, MarginalEqualFlowsFallBack) {
  const auto net = pair_net();
  EXPECT_DOUBLE_EQ(marginal_link_cost(history_with(net, 150, 400, 130, 400), 0, 0), 150.0);
}

TEST(Costs, MarginalNegativeSlopeClamped) {
  const auto net = pair_net();
  EXPECT_DOUBLE_EQ(marginal_link_cost(history_with(net, 100, 600, 120, 500), 0, 0), 100.0);
}

TEST(Costs, MarginalCapped) {
  const auto net = pair_net();
  // Raw value 100 + 50 * 900 / 1 is far above 10 * 100.
  EXPECT_DOUBLE_EQ(marginal_link_cost(history_with(net, 1000, 50, 100, 49), 0, 0), 10000.0);
  EXPECT_DOUBLE_EQ(marginal_link_cost(history_with(net, 100, 51, 10, 50), 0, 0), 1000.0);
}

TEST(Costs, MarginalMissingCells) {
  const auto net = pair_net();
  EXPECT_DOUBLE_EQ(marginal_link_cost(history_with(net, 130, 5, 0, 0), 0, 0), 130.0);
  EXPECT_DOUBLE_EQ(marginal_link_cost(history_with(net, 0, 0, 130, 5), 0, 0), 80.0);
}

TEST(Costs, MarginalNeverBelowExperienced) {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const auto net = test::random_small_network(rng, 6, 8);
    const auto h = test::random_history(net, rng, 4);
    for (LinkIndex l = 0; l < net.link_count(); ++l) {
      for (double t = 0; t < 5 * 900; t += 137) {
        EXPECT_GE(marginal_link_cost(h, l, t), link_cost(h, l, t));
      }
    }
  }
}

TEST(Costs, MarginalFlatHistoryEqualsExperienced) {
  const auto net = pair_net();
  const auto h = history_with(net, 150, 20, 150, 20);
  EXPECT_DOUBLE_EQ(marginal_link_cost(h, 0, 0), link_cost(h, 0, 0));
}

// Aggregation against a direct std::map grouping.
TEST(Costs, MatchesDirectGrouping) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto net = test::random_small_network(rng, 5, 5);
    std::vector<TripRecord> trips(1 + rng.below(20));
    std::map<std::pair<LinkIndex, long>, std::pair<double, int>> expect;
    std::vector<int> per_link(net.link_count(), 0);
    for (auto& t : trips) {
      const auto n = 1 + rng.below(4);
      for (std::size_t k = 0; k < n; ++k) {
        const LinkIndex l = static_cast<LinkIndex>(rng.below(net.link_count()));
        const double entry = rng.uniform(0, 4000);
        const double tt = rng.uniform(1, 500);
        t.links.push_back({l, entry, entry + tt});
        auto& e = expect[{l, long(entry / 900)}];
        e.first += tt;
        e.second += 1;
        ++per_link[l];
      }
    }
    const auto table = aggregate_costs(trips, net, 900);
    for (const auto& [key, v] : expect) {
      const auto* c = table.find(key.first, static_cast<std::size_t>(key.second));
      ASSERT_NE(c, nullptr);
      EXPECT_EQ(c->flow, static_cast<std::uint32_t>(v.second));
      EXPECT_NEAR(c->mean(), v.first / v.second, 1e-9);
    }
    for (LinkIndex l = 0; l < net.link_count(); ++l) {
      int total = 0;
      for (std::size_t b = 0; b < table.bin_count(l); ++b) {
        if (const auto* c = table.find(l, b)) total += int(c->flow);
      }
      EXPECT_EQ(total, per_link[l]);
    }
  }
}

TEST(Costs, HistoryShift) {
  const auto net = pair_net();
  CostHistory h(net, 900);
  h.push(aggregate_costs(std::vector<TripRecord>{one_link(0, 0, 100)}, net, 900));
  h.push(aggregate_costs(std::vector<TripRecord>{one_link(0, 0, 200)}, net, 900));
  EXPECT_DOUBLE_EQ(h.prev().find(0, 0)->mean(), 200.0);
  EXPECT_DOUBLE_EQ(h.prev2().find(0, 0)->mean(), 100.0);
  EXPECT_THROW(h.push(CostTable(net.link_count(), 600)), ContractError);
}

TEST(Costs, DumpFormat) {
  const auto net = pair_net();
  const auto t = aggregate_costs(std::vector<TripRecord>{one_link(0, 1000, 90)}, net, 900);
  std::ostringstream out;
  write_cost_table(t, net, out);
  EXPECT_EQ(out.str(), "link_id,bin_index,mean_tt_s,flow\nL,1,90.000000,1\n");
}

}  // namespace
}  // namespace mixdta
