#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <vector>

#include <fmt/format.h>

#include "mixdta/common.hpp"
#include "mixdta/csv.hpp"
#include "mixdta/demand.hpp"
#include "mixdta/network.hpp"

namespace mixdta {

struct LinkTraversal {
  LinkIndex link = 0;
  double entry_s = 0.0;
  double exit_s = std::numeric_limits<double>::quiet_NaN();  // NaN while still on the link

  bool complete() const { return !std::isnan(exit_s); }
};

/// One vehicle's outcome from a network loading.
struct TripRecord {
  VehicleId vehicle = 0;
  VehicleClass cls = VehicleClass::HDV;
  NodeIndex origin = 0;
  NodeIndex destination = 0;
  double depart_s = 0.0;
  double arrive_s = 0.0;  // horizon for unfinished trips
  std::vector<LinkTraversal> links;
  double distance_m = 0.0;
  int reroute_count = 0;
  bool finished = false;

  double travel_time() const { return arrive_s - depart_s; }
};

/// Per-(link, bin) mean travel time and vehicle count for one iteration.
/// Bins are half-open [k*interval, (k+1)*interval); an observation is binned by
/// its link-entry time.
class CostTable {
 public:
  struct Cell {
    double sum_tt_s = 0.0;
    std::uint32_t flow = 0;

    bool populated() const { return flow > 0; }
    double mean() const { return sum_tt_s / flow; }
  };

  CostTable() = default;
  CostTable(std::size_t link_count, double interval_s) : interval_s_(interval_s), cells_(link_count) {
    if (!(interval_s > 0)) throw ParameterError("cost table interval must be > 0");
  }

  double interval_s() const { return interval_s_; }
  std::size_t link_count() const { return cells_.size(); }

  std::size_t bin_of(double t) const {
    if (!(t >= 0)) throw ContractError(fmt::format("time must be >= 0 (got {})", t));
    return static_cast<std::size_t>(std::floor(t / interval_s_));
  }

  // Bins [0, bin_count) may be populated for this link; later ones are empty.
  std::size_t bin_count(LinkIndex l) const { return cells_.at(l).size(); }

  const Cell* find(LinkIndex l, std::size_t bin) const {
    const auto& row = cells_.at(l);
    if (bin >= row.size() || !row[bin].populated()) return nullptr;
    return &row[bin];
  }

  void add(LinkIndex l, double entry_s, double travel_time_s) {
    auto& row = cells_.at(l);
    const auto bin = bin_of(entry_s);
    if (bin >= row.size()) row.resize(bin + 1);
    row[bin].sum_tt_s += travel_time_s;
    row[bin].flow += 1;
  }

  bool empty() const {
    return std::all_of(cells_.begin(), cells_.end(), [](const auto& row) {
      return std::none_of(row.begin(), row.end(), [](const Cell& c) { return c.populated(); });
    });
  }

 private:
  double interval_s_ = 900.0;
  std::vector<std::vector<Cell>> cells_;
};

/// Bins every completed link traversal by its entry time. Traversals still open
/// at the horizon carry no travel time and are skipped.
inline CostTable aggregate_costs(std::span<const TripRecord> trips, const Network& net, double interval_s) {
  CostTable table(net.link_count(), interval_s);
  for (const auto& trip : trips) {
    for (const auto& tr : trip.links) {
      if (!tr.complete()) continue;
      if (tr.link >= net.link_count()) {
        throw DataError(fmt::format("vehicle {}: unknown link index {}", trip.vehicle, tr.link));
      }
      if (tr.exit_s < tr.entry_s) {
        throw DataError(fmt::format("vehicle {} on link '{}': exit {} before entry {}", trip.vehicle,
                                    net.link(tr.link).id, tr.exit_s, tr.entry_s));
      }
      table.add(tr.link, tr.entry_s, tr.exit_s - tr.entry_s);
    }
  }
  return table;
}

/// Link cost tables of the two most recent iterations plus free-flow times.
class CostHistory {
 public:
  CostHistory() = default;
  CostHistory(const Network& net, double interval_s, double cap_mult = 10.0)
      : prev_(net.link_count(), interval_s), prev2_(net.link_count(), interval_s), cap_mult_(cap_mult) {
    if (!(cap_mult >= 1)) throw ParameterError("marginal cost cap multiplier must be >= 1");
    free_flow_.reserve(net.link_count());
    for (LinkIndex l = 0; l < net.link_count(); ++l) free_flow_.push_back(net.free_flow_time(l));
  }

  const CostTable& prev() const { return prev_; }
  const CostTable& prev2() const { return prev2_; }
  double interval_s() const { return prev_.interval_s(); }
  double cap_mult() const { return cap_mult_; }
  std::size_t link_count() const { return free_flow_.size(); }

  double free_flow(LinkIndex l) const {
    if (l >= free_flow_.size()) throw LookupError(fmt::format("unknown link index {}", l));
    return free_flow_[l];
  }

  // Make `latest` the i-1 table; the old i-1 table becomes i-2.
  void push(CostTable latest) {
    if (latest.link_count() != free_flow_.size() || latest.interval_s() != prev_.interval_s()) {
      throw ContractError("cost table does not match history link set or interval");
    }
    prev2_ = std::move(prev_);
    prev_ = std::move(latest);
  }

  void set_tables(CostTable prev, CostTable prev2) {
    if (prev.link_count() != free_flow_.size() || prev2.link_count() != free_flow_.size() ||
        prev.interval_s() != prev2.interval_s()) {
      throw ContractError("cost tables do not match history link set or interval");
    }
    prev_ = std::move(prev);
    prev2_ = std::move(prev2);
  }

 private:
  CostTable prev_;
  CostTable prev2_;
  std::vector<double> free_flow_;
  double cap_mult_ = 10.0;
};

/// Previous iteration's mean travel time of `link` in the bin containing t, or the
/// free-flow time when that cell is empty.
inline double link_cost(const CostHistory& h, LinkIndex link, double t) {
  const double ff = h.free_flow(link);
  const auto* c = h.prev().find(link, h.prev().bin_of(t));
  return c ? c->mean() : ff;
}

/// Marginal travel time surrogate from the finite difference of the last two
/// iterations: c1 + f1 * (c1 - c2) / (f1 - f2). The slope is clamped at zero and
/// the result capped at cap_mult * c1; missing cells or f1 == f2 fall back to
/// link_cost.
inline double marginal_link_cost(const CostHistory& h, LinkIndex link, double t) {
  const double ff = h.free_flow(link);
  const auto bin = h.prev().bin_of(t);
  const auto* c1 = h.prev().find(link, bin);
  const auto* c2 = h.prev2().find(link, bin);
  if (!c1) return ff;
  const double cost1 = c1->mean();
  if (!c2 || c1->flow == c2->flow) return cost1;
  const double f1 = c1->flow;
  const double f2 = c2->flow;
  const double slope = std::max(0.0, (cost1 - c2->mean()) / (f1 - f2));
  return std::min(cost1 + f1 * slope, h.cap_mult() * cost1);
}

inline void write_cost_table(const CostTable& table, const Network& net, std::ostream& out) {
  out << "link_id,bin_index,mean_tt_s,flow\n";
  for (LinkIndex l = 0; l < table.link_count(); ++l) {
    for (std::size_t b = 0; b < table.bin_count(l); ++b) {
      if (const auto* c = table.find(l, b)) {
        out << net.link(l).id << ',' << b << ',' << csv::num(c->mean()) << ',' << c->flow << '\n';
      }
    }
  }
}

}  // namespace mixdta
