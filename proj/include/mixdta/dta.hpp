#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "mixdta/choice.hpp"
#include "mixdta/common.hpp"
#include "mixdta/costs.hpp"
#include "mixdta/demand.hpp"
#include "mixdta/mesosim.hpp"
#include "mixdta/network.hpp"
#include "mixdta/routing.hpp"

namespace mixdta {

struct DtaConfig {
  int max_iterations = 100;
  double epsilon_s = 5.0;
  int plateau_window = 3;
  double plateau_rel_change = 0.02;
  ChoiceConfig choice;
  std::size_t k_max = 4;
  double interval_s = 900.0;
  double marginal_cap_mult = 10.0;
  LoaderConfig loader;
  std::uint64_t seed = 1;

  void validate() const {
    if (max_iterations < 1) throw ValidationError("dta.max_iterations: must be >= 1");
    if (!(epsilon_s > 0)) throw ValidationError("dta.epsilon_s: must be > 0");
    if (plateau_window < 1) throw ValidationError("dta.plateau_window: must be >= 1");
    if (!(plateau_rel_change > 0 && plateau_rel_change < 1)) {
      throw ValidationError("dta.plateau_rel_change: must be in (0, 1)");
    }
    choice.validate();
    if (k_max < 1) throw ValidationError("dta.k_max: must be >= 1");
    if (!(interval_s > 0)) throw ValidationError("dta.interval_s: must be > 0");
    if (!(marginal_cap_mult >= 1)) throw ValidationError("dta.marginal_cap_mult: must be >= 1");
    loader.validate();
  }
};

enum class StopCriterion { Epsilon, Plateau, MaxIterations };

inline std::string_view to_string(StopCriterion c) {
  switch (c) {
    case StopCriterion::Epsilon: return "epsilon";
    case StopCriterion::Plateau: return "plateau";
    case StopCriterion::MaxIterations: return "max_iterations";
  }
  return "?";
}

struct IterationReport {
  int iteration = 0;
  double gap1_s = 0.0;
  double gap2_s = 0.0;
  double hybrid_gap_s = 0.0;
  double total_travel_time_h = 0.0;
  double avg_speed_kmh = 0.0;
  double avg_distance_km = 0.0;
  std::size_t unfinished_count = 0;
};

struct Metrics {
  double total_travel_time_h = 0.0;
  double avg_speed_kmh = 0.0;
  double avg_distance_km = 0.0;
};

/// Horizon-truncated trips count with their time up to the horizon.
inline Metrics compute_metrics(std::span<const TripRecord> trips) {
  Metrics m;
  if (trips.empty()) return m;
  double seconds = 0.0;
  double meters = 0.0;
  for (const auto& t : trips) {
    seconds += t.travel_time();
    meters += t.distance_m;
  }
  m.total_travel_time_h = seconds / 3600.0;
  m.avg_distance_km = meters / 1000.0 / static_cast<double>(trips.size());
  m.avg_speed_kmh = m.total_travel_time_h > 0 ? (meters / 1000.0) / m.total_travel_time_h : 0.0;
  return m;
}

namespace detail {

// Mean over OD pairs of (mean value - least value) among that pair's vehicles.
template <class ValueFn>
double od_gap(std::span<const TripRecord> trips, VehicleClass cls, ValueFn&& value) {
  struct Acc {
    double sum = 0.0;
    double min = std::numeric_limits<double>::infinity();
    std::size_t n = 0;
  };
  std::map<std::pair<NodeIndex, NodeIndex>, Acc> by_od;
  for (const auto& t : trips) {
    if (t.cls != cls || !t.finished) continue;
    const double v = value(t);
    auto& a = by_od[{t.origin, t.destination}];
    a.sum += v;
    a.min = std::min(a.min, v);
    ++a.n;
  }
  if (by_od.empty()) return 0.0;
  double total = 0.0;
  for (const auto& [od, a] : by_od) total += std::max(0.0, a.sum / static_cast<double>(a.n) - a.min);
  return total / static_cast<double>(by_od.size());
}

}  // namespace detail

/// HDV gap on experienced travel times. Non-HDV and unfinished trips are ignored.
inline double compute_gap1(std::span<const TripRecord> trips) {
  return detail::od_gap(trips, VehicleClass::HDV, [](const TripRecord& t) { return t.travel_time(); });
}

/// CAV gap on experienced marginal travel times: each CAV's marginal time is the
/// sum of marginal_link_cost over its links at their recorded entry times, read
/// from `history` (which already holds this iteration's table as prev()).
inline double compute_gap2(std::span<const TripRecord> trips, const CostHistory& history) {
  return detail::od_gap(trips, VehicleClass::CAV, [&](const TripRecord& t) {
    double sum = 0.0;
    for (const auto& tr : t.links) sum += marginal_link_cost(history, tr.link, tr.entry_s);
    return sum;
  });
}

inline double hybrid_gap(double gap1_s, double gap2_s) { return (gap1_s + gap2_s) / 2.0; }

struct AssignmentResult {
  std::vector<IterationReport> reports;
  std::vector<TripRecord> trips;  // final iteration
  std::vector<Path> final_paths;
  std::vector<PathSet> path_sets;
  CostHistory history;
  StopCriterion criterion = StopCriterion::MaxIterations;
};

using IterationObserver = std::function<void(const IterationReport&)>;

inline IterationReport make_report(int iteration, std::span<const TripRecord> trips, const CostHistory& history) {
  IterationReport r;
  r.iteration = iteration;
  r.gap1_s = compute_gap1(trips);
  r.gap2_s = compute_gap2(trips, history);
  r.hybrid_gap_s = hybrid_gap(r.gap1_s, r.gap2_s);
  const auto m = compute_metrics(trips);
  r.total_travel_time_h = m.total_travel_time_h;
  r.avg_speed_kmh = m.avg_speed_kmh;
  r.avg_distance_km = m.avg_distance_km;
  for (const auto& t : trips) r.unfinished_count += t.finished ? 0 : 1;
  return r;
}

/// Iterative multiclass assignment.
///
/// Iteration 0 loads every vehicle on its free-flow shortest path. Each later
/// iteration i routes every vehicle on the history of iterations i-1 and i-2
/// (experienced times for UE classes, marginal times for SO classes), merges the
/// new path into its path set, draws a logit proposal, applies probabilistic
/// swapping against the previous final path, and loads the result. Stops when
/// the hybrid gap drops below epsilon, when its relative change stays below
/// plateau_rel_change for plateau_window iterations, or at max_iterations.
inline AssignmentResult run_assignment(const Network& net, const Demand& demand, const ClassConfigs& classes,
                                       const DtaConfig& cfg, const IterationObserver& observer = {}) {
  cfg.validate();
  classes.validate();
  const auto& vehicles = demand.vehicles;
  const auto n = vehicles.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (vehicles[i].id != i) throw ContractError("run_assignment: vehicle ids must be 0..n-1 in order");
  }
  const LoaderConfig& loader = cfg.loader;
  for (const auto& v : vehicles) {
    if (v.depart_s > loader.horizon_s) {
      throw ContractError(fmt::format("run_assignment: vehicle {} departs after the loading horizon", v.id));
    }
  }

  AssignmentResult res;
  res.history = CostHistory(net, cfg.interval_s, cfg.marginal_cap_mult);
  res.final_paths.resize(n);
  res.path_sets.resize(n);

  auto load_and_report = [&](int iteration) {
    LoadResult loaded;
    try {
      loaded = run_loading(net, vehicles, res.final_paths, classes, loader, res.history);
    } catch (const Error& e) {
      throw Error(fmt::format("iteration {}: {}", iteration, e.what()));
    }
    res.history.push(std::move(loaded.costs));
    res.trips = std::move(loaded.trips);
    res.reports.push_back(make_report(iteration, res.trips, res.history));
    if (observer) observer(res.reports.back());
  };

  // Free-flow costs are time-invariant, so one search per OD pair suffices.
  {
    const TravelTimeField free_flow(res.history, CostKind::Experienced);
    std::map<std::pair<NodeIndex, NodeIndex>, Path> by_od;
    for (std::size_t v = 0; v < n; ++v) {
      const auto key = std::make_pair(vehicles[v].origin, vehicles[v].destination);
      auto it = by_od.find(key);
      if (it == by_od.end()) {
        try {
          it = by_od.emplace(key, shortest_path_td(net, free_flow, key.first, key.second, 0.0)).first;
        } catch (const Error& e) {
          throw Error(fmt::format("iteration 0: vehicle {}: {}", vehicles[v].id, e.what()));
        }
      }
      res.final_paths[v] = it->second;
      res.path_sets[v].paths = {it->second};
    }
  }
  load_and_report(0);

  int plateau_run = 0;
  for (int i = 1; i <= cfg.max_iterations; ++i) {
    const TravelTimeField experienced(res.history, CostKind::Experienced);
    const TravelTimeField marginal(res.history, CostKind::Marginal);
    for (std::size_t v = 0; v < n; ++v) {
      const auto& veh = vehicles[v];
      const auto& field = classes[veh.cls].routing == RoutingPrinciple::UE ? experienced : marginal;
      try {
        Path fresh = shortest_path_td(net, field, veh.origin, veh.destination, veh.depart_s);
        res.path_sets[v] = update_path_set(std::move(res.path_sets[v]), std::move(fresh), field, veh.depart_s, cfg.k_max);
      } catch (const Error& e) {
        throw Error(fmt::format("iteration {}: vehicle {}: {}", i, veh.id, e.what()));
      }
      Rng rng = Rng::stream(cfg.seed, veh.id, static_cast<std::uint64_t>(i));
      const Path& proposal = select_path(res.path_sets[v], field, veh.depart_s, cfg.choice.theta, rng);
      Path chosen = pswap(&res.final_paths[v], proposal, i, cfg.choice.gamma, rng);
      res.final_paths[v] = std::move(chosen);
    }
    load_and_report(i);

    const auto& cur = res.reports.back();
    if (cur.hybrid_gap_s < cfg.epsilon_s) {
      res.criterion = StopCriterion::Epsilon;
      break;
    }
    if (i >= 2) {
      const double prev = res.reports[res.reports.size() - 2].hybrid_gap_s;
      const double change = std::abs(cur.hybrid_gap_s - prev);
      const double rel = prev > 0 ? change / prev : (change == 0 ? 0.0 : 1.0);
      plateau_run = rel < cfg.plateau_rel_change ? plateau_run + 1 : 0;
      if (plateau_run >= cfg.plateau_window) {
        res.criterion = StopCriterion::Plateau;
        break;
      }
    }
    if (i == cfg.max_iterations) res.criterion = StopCriterion::MaxIterations;
  }
  return res;
}

inline void write_iteration_reports(std::span<const IterationReport> reports, std::ostream& out) {
  out << "iteration,gap1_s,gap2_s,hybrid_gap_s,ttt_h,avg_speed_kmh,avg_distance_km,unfinished\n";
  for (const auto& r : reports) {
    out << r.iteration << ',' << csv::num(r.gap1_s) << ',' << csv::num(r.gap2_s) << ',' << csv::num(r.hybrid_gap_s)
        << ',' << csv::num(r.total_travel_time_h) << ',' << csv::num(r.avg_speed_kmh) << ','
        << csv::num(r.avg_distance_km) << ',' << r.unfinished_count << '\n';
  }
}

// Path sets ranked by each vehicle's own routing cost on the final history.
inline void write_route_dump(const AssignmentResult& res, const Network& net, std::span<const Vehicle> vehicles,
                             const ClassConfigs& classes, std::ostream& out) {
  out << "vehicle_id,iteration,path_rank,link_sequence,cost_s\n";
  const TravelTimeField experienced(res.history, CostKind::Experienced);
  const TravelTimeField marginal(res.history, CostKind::Marginal);
  const int iteration = res.reports.empty() ? 0 : res.reports.back().iteration;
  for (std::size_t v = 0; v < res.path_sets.size(); ++v) {
    const auto& set = res.path_sets[v];
    const auto& field = classes[vehicles[v].cls].routing == RoutingPrinciple::UE ? experienced : marginal;
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t k = 0; k < set.paths.size(); ++k) {
      ranked.emplace_back(path_cost(set.paths[k], field, vehicles[v].depart_s), k);
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      out << vehicles[v].id << ',' << iteration << ',' << r << ',' << link_sequence(net, set.paths[ranked[r].second])
          << ',' << csv::num(ranked[r].first) << '\n';
    }
  }
}

}  // namespace mixdta
