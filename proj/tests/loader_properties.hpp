#pragma once

// Randomized loader cases and the invariant checks run against them.

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "support.hpp"

namespace mixdta::test {

struct LoaderCase {
  Network net;
  std::vector<Vehicle> vehicles;
  std::vector<Path> paths;
  LoaderConfig cfg;
  bool reroute = false;
};

inline LoaderCase random_loader_case(Rng& rng, bool allow_reroute) {
  LoaderCase c;
  const auto n = 3 + rng.below(5);
  c.net = random_small_network(rng, n, n + rng.below(2 * n));
  const auto count = 1 + rng.below(80);
  c.reroute = allow_reroute && rng.uniform() < 0.5;
  for (std::size_t i = 0; i < count; ++i) {
    const auto o = static_cast<NodeIndex>(rng.below(n));
    auto d = static_cast<NodeIndex>(rng.below(n - 1));
    if (d >= o) ++d;
    const auto all = enumerate_simple_paths(c.net, o, d);
    const auto cls = rng.uniform() < 0.5 ? VehicleClass::CAV : VehicleClass::HDV;
    const bool rr = c.reroute && cls == VehicleClass::CAV && rng.uniform() < 0.7;
    c.vehicles.push_back(Vehicle{VehicleId(i), cls, o, d, rng.uniform(0, 200), rr});
    c.paths.push_back(all[rng.below(all.size())]);
  }
  c.cfg.horizon_s = rng.uniform() < 0.3 ? rng.uniform(200, 500) : 3600;
  c.cfg.segment_length_m = rng.uniform(50, 300);
  c.cfg.jam_threshold = rng.uniform(0.3, 1.0);
  c.cfg.reroute_period_s = rng.uniform(10, 90);
  return c;
}

/// Names of the invariant families checked by check_loader_case.
enum class LoaderProperty { Conservation, Fifo, Capacity, Headway, PathFaithful };

struct Violation {
  LoaderProperty property;
  std::string what;
};

inline std::vector<Violation> check_loader_case(const LoaderCase& c, const LoadResult& r, const LoadingTrace& tr,
                                                const ClassConfigs& classes) {
  std::vector<Violation> out;
  auto fail = [&](LoaderProperty p, std::string msg) { out.push_back({p, std::move(msg)}); };

  // Conservation per class: every inserted vehicle either arrived or is flagged unfinished.
  std::map<VehicleClass, std::size_t> in, fin, open;
  for (const auto& v : c.vehicles) ++in[v.cls];
  for (const auto& t : r.trips) ++(t.finished ? fin : open)[t.cls];
  for (auto cls : {VehicleClass::HDV, VehicleClass::CAV}) {
    if (in[cls] != fin[cls] + open[cls]) fail(LoaderProperty::Conservation, "class count mismatch");
  }
  std::size_t terminal = 0;
  for (const auto& e : tr.exits) terminal += e.next_segment == kNoIndex;
  if (terminal != fin[VehicleClass::HDV] + fin[VehicleClass::CAV]) {
    fail(LoaderProperty::Conservation, "terminal exits differ from finished trips");
  }
  for (const auto& t : r.trips) {
    if (t.arrive_s < t.depart_s) fail(LoaderProperty::Conservation, fmt::format("vehicle {} arrives early", t.vehicle));
    if (!t.finished && t.arrive_s != c.cfg.horizon_s) {
      fail(LoaderProperty::Conservation, fmt::format("vehicle {} unfinished before horizon", t.vehicle));
    }
  }

  // FIFO and capacity per segment.
  std::vector<std::vector<VehicleId>> entered(tr.segments.size()), exited(tr.segments.size());
  for (const auto& e : tr.entries) {
    entered[e.segment].push_back(e.vehicle);
    if (e.occupancy_after > tr.segments[e.segment].capacity) {
      fail(LoaderProperty::Capacity, fmt::format("segment {} holds {}", e.segment, e.occupancy_after));
    }
  }
  for (const auto& e : tr.exits) exited[e.segment].push_back(e.vehicle);
  for (std::size_t s = 0; s < tr.segments.size(); ++s) {
    if (exited[s].size() > entered[s].size() ||
        !std::equal(exited[s].begin(), exited[s].end(), entered[s].begin())) {
      fail(LoaderProperty::Fifo, fmt::format("segment {} reorders vehicles", s));
    }
  }

  // Minimum headway between consecutive exits of a segment, from the follower's class and regime.
  std::vector<double> last(tr.segments.size(), -1e18);
  for (const auto& e : tr.exits) {
    const auto& seg = tr.segments[e.segment];
    const bool cur_jam = e.occupancy_before >= c.cfg.jam_threshold * seg.capacity;
    bool next_jam = false;
    int lanes = seg.lanes;
    if (e.next_segment != kNoIndex) {
      const auto& nx = tr.segments[e.next_segment];
      next_jam = e.next_occupancy_before >= c.cfg.jam_threshold * nx.capacity;
      lanes = nx.lanes;
      if (e.next_occupancy_before >= nx.capacity) fail(LoaderProperty::Capacity, "moved into a full segment");
    }
    const double h = classes[e.cls].tau_multiplier * regime_headway(cur_jam, next_jam, c.cfg.headways) / lanes;
    if (e.time_s - last[e.segment] < h - 1e-9) {
      fail(LoaderProperty::Headway, fmt::format("segment {} at {}: gap {} < {}", e.segment, e.time_s,
                                                e.time_s - last[e.segment], h));
    }
    last[e.segment] = e.time_s;
  }

  // Trip records are connected and, without rerouting, follow the assigned path.
  for (std::size_t i = 0; i < r.trips.size(); ++i) {
    const auto& t = r.trips[i];
    NodeIndex at = t.origin;
    for (std::size_t k = 0; k < t.links.size(); ++k) {
      if (c.net.from(t.links[k].link) != at) fail(LoaderProperty::PathFaithful, "disconnected trip record");
      at = c.net.to(t.links[k].link);
      if (k + 1 < t.links.size() && t.links[k].exit_s != t.links[k + 1].entry_s) {
        fail(LoaderProperty::Conservation, "time gap between links");
      }
    }
    if (t.finished && at != t.destination) fail(LoaderProperty::PathFaithful, "finished away from destination");
    if (!c.reroute) {
      const auto& p = c.paths[i].links;
      bool ok = t.reroute_count == 0 && t.links.size() <= p.size();
      for (std::size_t k = 0; ok && k < t.links.size(); ++k) ok = t.links[k].link == p[k];
      if (t.finished) ok = ok && t.links.size() == p.size();
      if (!ok) fail(LoaderProperty::PathFaithful, fmt::format("vehicle {} left its path", t.vehicle));
    }
  }
  return out;
}

}  // namespace mixdta::test
