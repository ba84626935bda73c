#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "mixdta/common.hpp"
#include "mixdta/costs.hpp"
#include "mixdta/network.hpp"

namespace mixdta {

enum class CostKind { Experienced, Marginal };

struct Path {
  std::vector<LinkIndex> links;
  NodeIndex origin = 0;
  NodeIndex destination = 0;

  bool operator==(const Path&) const = default;
};

inline void validate_path(const Network& net, const Path& p) {
  if (p.links.empty()) throw ContractError("path has no links");
  std::vector<char> used(net.link_count(), 0);
  NodeIndex at = p.origin;
  for (auto l : p.links) {
    if (l >= net.link_count()) throw ContractError(fmt::format("path uses unknown link index {}", l));
    if (net.from(l) != at) {
      throw ContractError(fmt::format("path is disconnected at link '{}'", net.link(l).id));
    }
    if (used[l]) throw ContractError(fmt::format("path repeats link '{}'", net.link(l).id));
    used[l] = 1;
    at = net.to(l);
  }
  if (at != p.destination) throw ContractError("path does not end at its destination");
}

inline std::string link_sequence(const Network& net, const Path& p, char sep = ' ') {
  std::string out;
  for (std::size_t i = 0; i < p.links.size(); ++i) {
    if (i) out += sep;
    out += net.link(p.links[i]).id;
  }
  return out;
}

/// Time-dependent link travel times built once from a CostHistory.
///
/// raw() is the binned value (link_cost or marginal_link_cost). operator() is
/// its FIFO-consistent form: the earliest exit time over all entry times
/// t' >= t, minus t. Exit time t + cost(t) is then nondecreasing in t, so
/// earliest-arrival label setting is exact for path_cost.
class TravelTimeField {
 public:
  TravelTimeField(const CostHistory& history, CostKind kind)
      : interval_s_(history.interval_s()), kind_(kind) {
    const auto n = history.link_count();
    free_flow_.resize(n);
    bins_.resize(n);
    later_exit_.resize(n);
    for (LinkIndex l = 0; l < n; ++l) {
      free_flow_[l] = history.free_flow(l);
      const auto count = history.prev().bin_count(l);
      auto& c = bins_[l];
      c.resize(count);
      for (std::size_t k = 0; k < count; ++k) {
        const double t = static_cast<double>(k) * interval_s_;
        c[k] = kind == CostKind::Experienced ? link_cost(history, l, t) : marginal_link_cost(history, l, t);
      }
      auto& later = later_exit_[l];
      later.resize(count);
      double best = static_cast<double>(count) * interval_s_ + free_flow_[l];
      for (std::size_t k = count; k-- > 0;) {
        later[k] = best;  // min over j > k of (j * interval + c_j)
        best = std::min(best, static_cast<double>(k) * interval_s_ + c[k]);
      }
    }
  }

  CostKind kind() const { return kind_; }
  double interval_s() const { return interval_s_; }
  std::size_t link_count() const { return free_flow_.size(); }

  double raw(LinkIndex l, double t) const {
    check(l, t);
    const auto k = static_cast<std::size_t>(std::floor(t / interval_s_));
    return k < bins_[l].size() ? bins_[l][k] : free_flow_[l];
  }

  double operator()(LinkIndex l, double t) const {
    check(l, t);
    const auto k = static_cast<std::size_t>(std::floor(t / interval_s_));
    if (k >= bins_[l].size()) return free_flow_[l];
    return std::min(bins_[l][k], later_exit_[l][k] - t);
  }

 private:
  void check(LinkIndex l, double t) const {
    if (l >= free_flow_.size()) throw LookupError(fmt::format("unknown link index {}", l));
    if (!(t >= 0)) throw ContractError(fmt::format("time must be >= 0 (got {})", t));
  }

  double interval_s_;
  CostKind kind_;
  std::vector<double> free_flow_;
  std::vector<std::vector<double>> bins_;
  std::vector<std::vector<double>> later_exit_;
};

/// Accumulates link costs along the path, advancing the clock by each cost.
template <class CostFn>
double path_cost_with(const Path& p, double depart_s, CostFn&& cost) {
  double t = depart_s;
  for (auto l : p.links) t += cost(l, t);
  return t - depart_s;
}

inline double path_cost(const Path& p, const TravelTimeField& field, double depart_s) {
  return path_cost_with(p, depart_s, field);
}

inline double path_cost(const Path& p, const CostHistory& history, double depart_s, CostKind kind) {
  return path_cost(p, TravelTimeField(history, kind), depart_s);
}

/// Earliest-arrival label-setting search from `origin` departing at `depart_s`.
/// cost(link, t) must be positive and FIFO-consistent. When two labels reach a
/// node at the same time, the one with fewer links wins, then the one whose
/// link-index sequence is lexicographically smaller.
template <class CostFn>
std::optional<Path> earliest_arrival_path(const Network& net, NodeIndex origin, NodeIndex destination,
                                          double depart_s, CostFn&& cost) {
  const auto n = net.node_count();
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> arrival(n, inf);
  std::vector<std::uint32_t> hops(n, std::numeric_limits<std::uint32_t>::max());
  std::vector<LinkIndex> pred(n, kNoIndex);
  std::vector<char> settled(n, 0);

  struct Label {
    double arrival;
    std::uint32_t hops;
    NodeIndex node;
    bool operator>(const Label& o) const {
      if (arrival != o.arrival) return arrival > o.arrival;
      if (hops != o.hops) return hops > o.hops;
      return node > o.node;
    }
  };
  std::priority_queue<Label, std::vector<Label>, std::greater<>> heap;

  auto sequence = [&](NodeIndex v) {
    std::vector<LinkIndex> seq;
    while (v != origin) {
      seq.push_back(pred[v]);
      v = net.from(pred[v]);
    }
    std::reverse(seq.begin(), seq.end());
    return seq;
  };

  arrival[origin] = depart_s;
  hops[origin] = 0;
  heap.push({depart_s, 0, origin});
  while (!heap.empty()) {
    const Label top = heap.top();
    heap.pop();
    const auto u = top.node;
    if (settled[u] || top.arrival != arrival[u] || top.hops != hops[u]) continue;
    settled[u] = 1;
    if (u == destination) break;
    for (auto l : net.outgoing(u)) {
      const auto v = net.to(l);
      if (settled[v]) continue;
      const double cand = arrival[u] + cost(l, arrival[u]);
      if (cand == inf) continue;  // link excluded by the caller
      const auto cand_hops = hops[u] + 1;
      bool better = cand < arrival[v] || (cand == arrival[v] && cand_hops < hops[v]);
      if (!better && cand == arrival[v] && cand_hops == hops[v]) {
        auto mine = sequence(u);
        mine.push_back(l);
        better = mine < sequence(v);
      }
      if (better) {
        arrival[v] = cand;
        hops[v] = cand_hops;
        pred[v] = l;
        heap.push({cand, cand_hops, v});
      }
    }
  }
  if (!settled[destination]) return std::nullopt;
  return Path{sequence(destination), origin, destination};
}

inline Path shortest_path_td(const Network& net, const TravelTimeField& field, NodeIndex origin,
                             NodeIndex destination, double depart_s) {
  if (origin >= net.node_count() || destination >= net.node_count()) throw LookupError("unknown node index");
  if (origin == destination) throw ContractError("shortest path: origin equals destination");
  auto p = earliest_arrival_path(net, origin, destination, depart_s, field);
  if (!p) {
    throw NoPathError(fmt::format("no path from '{}' to '{}'", net.node(origin).id, net.node(destination).id));
  }
  return std::move(*p);
}

inline Path shortest_path_td(const Network& net, const CostHistory& history, NodeIndex origin,
                             NodeIndex destination, double depart_s, CostKind kind) {
  return shortest_path_td(net, TravelTimeField(history, kind), origin, destination, depart_s);
}

// Path sets -------------------------------------------------------------------

/// A vehicle's accumulated alternatives, oldest first.
struct PathSet {
  std::vector<Path> paths;

  bool contains(const Path& p) const { return std::find(paths.begin(), paths.end(), p) != paths.end(); }
  std::size_t size() const { return paths.size(); }
  bool empty() const { return paths.empty(); }
};

/// Adds `candidate` unless already present; above k_max evicts the currently most
/// expensive path (the older one on ties).
inline PathSet update_path_set(PathSet set, Path candidate, const TravelTimeField& field, double depart_s,
                               std::size_t k_max) {
  if (k_max < 1) throw ParameterError("k_max must be >= 1");
  if (!set.empty() &&
      (set.paths.front().origin != candidate.origin || set.paths.front().destination != candidate.destination)) {
    throw ContractError("path set update: OD mismatch");
  }
  if (set.contains(candidate)) return set;
  set.paths.push_back(std::move(candidate));
  while (set.paths.size() > k_max) {
    std::size_t worst = 0;
    double worst_cost = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < set.paths.size(); ++i) {
      const double c = path_cost(set.paths[i], field, depart_s);
      if (c > worst_cost) {
        worst_cost = c;
        worst = i;
      }
    }
    set.paths.erase(set.paths.begin() + static_cast<std::ptrdiff_t>(worst));
  }
  return set;
}

inline PathSet update_path_set(PathSet set, Path candidate, const CostHistory& history, double depart_s,
                               CostKind kind, std::size_t k_max) {
  return update_path_set(std::move(set), std::move(candidate), TravelTimeField(history, kind), depart_s, k_max);
}

}  // namespace mixdta
