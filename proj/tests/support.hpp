#pragma once

// Fixtures and brute-force oracles shared by the unit and acceptance tests.

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "mixdta/mixdta.hpp"

namespace mixdta::test {

inline Link make_link(std::string id, std::string from, std::string to, double length_m, double speed_mps = 10.0,
                      int lanes = 1) {
  return Link{std::move(id), std::move(from), std::move(to), length_m, lanes, speed_mps, std::nullopt};
}

inline std::vector<Node> make_nodes(std::initializer_list<const char*> ids) {
  std::vector<Node> out;
  double x = 0.0;
  for (const auto* id : ids) out.push_back({id, x++, 0.0});
  return out;
}

/// Every simple path from o to d by depth-first search.
inline std::vector<Path> enumerate_simple_paths(const Network& net, NodeIndex o, NodeIndex d) {
  std::vector<Path> out;
  std::vector<char> on_path(net.node_count(), 0);
  std::vector<LinkIndex> stack;
  std::function<void(NodeIndex)> dfs = [&](NodeIndex u) {
    if (u == d) {
      out.push_back(Path{stack, o, d});
      return;
    }
    on_path[u] = 1;
    for (LinkIndex l = 0; l < net.link_count(); ++l) {
      if (net.from(l) != u || on_path[net.to(l)]) continue;
      stack.push_back(l);
      dfs(net.to(l));
      stack.pop_back();
    }
    on_path[u] = 0;
  };
  dfs(o);
  return out;
}

/// Random network on n nodes with a Hamiltonian cycle plus extra random links,
/// built without the library generator.
inline Network random_small_network(Rng& rng, std::size_t n, std::size_t extra) {
  std::vector<Node> nodes;
  for (std::size_t i = 0; i < n; ++i) nodes.push_back({"v" + std::to_string(i), double(i), 0.0});
  std::vector<Link> links;
  std::vector<std::vector<char>> used(n, std::vector<char>(n, 0));
  auto add = [&](std::size_t a, std::size_t b) {
    used[a][b] = 1;
    links.push_back(make_link("l" + std::to_string(links.size()), nodes[a].id, nodes[b].id,
                              rng.uniform(100.0, 1500.0), rng.uniform(8.0, 20.0), 1 + int(rng.below(2))));
  };
  for (std::size_t i = 0; i < n; ++i) add(i, (i + 1) % n);
  for (std::size_t k = 0; k < extra; ++k) {
    const auto a = rng.below(n);
    const auto b = rng.below(n);
    if (a != b && !used[a][b]) add(a, b);
  }
  return Network(std::move(nodes), std::move(links));
}

/// Trip records that produce, after aggregation, the given per-cell means and flows.
inline void add_observations(std::vector<TripRecord>& trips, LinkIndex link, std::size_t bin, double interval_s,
                             double mean_s, std::uint32_t flow) {
  for (std::uint32_t k = 0; k < flow; ++k) {
    TripRecord t;
    t.vehicle = static_cast<VehicleId>(trips.size());
    const double entry = (static_cast<double>(bin) + 0.5) * interval_s;
    t.links.push_back({link, entry, entry + mean_s});
    trips.push_back(std::move(t));
  }
}

/// Random populated two-table history over the first `bins` bins.
inline CostHistory random_history(const Network& net, Rng& rng, std::size_t bins, double interval_s = 900.0,
                                  double fill = 0.7) {
  CostHistory h(net, interval_s);
  std::vector<TripRecord> prev, prev2;
  for (LinkIndex l = 0; l < net.link_count(); ++l) {
    const double ff = net.free_flow_time(l);
    for (std::size_t b = 0; b < bins; ++b) {
      if (rng.uniform() < fill) add_observations(prev, l, b, interval_s, ff * rng.uniform(1.0, 3.0), 1 + rng.below(30));
      if (rng.uniform() < fill) add_observations(prev2, l, b, interval_s, ff * rng.uniform(1.0, 3.0), 1 + rng.below(30));
    }
  }
  h.set_tables(aggregate_costs(prev, net, interval_s), aggregate_costs(prev2, net, interval_s));
  return h;
}

}  // namespace mixdta::test
