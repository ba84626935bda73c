#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "mixdta/common.hpp"
#include "mixdta/csv.hpp"
#include "mixdta/network.hpp"

namespace mixdta {

enum class VehicleClass : std::uint8_t { HDV = 0, CAV = 1 };

inline std::string_view to_string(VehicleClass c) { return c == VehicleClass::HDV ? "HDV" : "CAV"; }

inline VehicleClass parse_vehicle_class(std::string_view s) {
  if (s == "HDV") return VehicleClass::HDV;
  if (s == "CAV") return VehicleClass::CAV;
  throw FormatError(fmt::format("unknown vehicle class '{}'", s));
}

// UE routes on experienced link times, SO on marginal link times.
enum class RoutingPrinciple { UE, SO };

inline std::string_view to_string(RoutingPrinciple p) { return p == RoutingPrinciple::UE ? "UE" : "SO"; }

inline RoutingPrinciple parse_routing_principle(std::string_view s) {
  if (s == "UE") return RoutingPrinciple::UE;
  if (s == "SO") return RoutingPrinciple::SO;
  throw FormatError(fmt::format("unknown routing principle '{}' (expected UE or SO)", s));
}

struct ClassConfig {
  VehicleClass cls = VehicleClass::HDV;
  double tau_multiplier = 1.0;       // scales the queue model's minimum headways
  double reroute_probability = 0.0;  // share of the class flagged for en-route rerouting
  RoutingPrinciple routing = RoutingPrinciple::UE;

  void validate() const {
    const auto name = to_string(cls);
    if (!(tau_multiplier > 0) || !std::isfinite(tau_multiplier)) {
      throw ValidationError(fmt::format("classes.{}.tau: must be > 0 (got {})", name, tau_multiplier));
    }
    if (!(reroute_probability >= 0 && reroute_probability <= 1)) {
      throw ValidationError(
          fmt::format("classes.{}.reroute_probability: must be in [0, 1] (got {})", name, reroute_probability));
    }
  }
};

// Calibrated queue-model multipliers: 1.06 for human drivers, 0.79 for CAVs.
inline constexpr double kHdvTau = 1.06;
inline constexpr double kCavTau = 0.79;

struct ClassConfigs {
  ClassConfig hdv{VehicleClass::HDV, kHdvTau, 0.0, RoutingPrinciple::UE};
  ClassConfig cav{VehicleClass::CAV, kCavTau, 0.5, RoutingPrinciple::SO};

  const ClassConfig& operator[](VehicleClass c) const { return c == VehicleClass::HDV ? hdv : cav; }
  ClassConfig& operator[](VehicleClass c) { return c == VehicleClass::HDV ? hdv : cav; }

  void validate() const {
    hdv.validate();
    cav.validate();
  }
};

struct Vehicle {
  VehicleId id = 0;
  VehicleClass cls = VehicleClass::HDV;
  NodeIndex origin = 0;
  NodeIndex destination = 0;
  double depart_s = 0.0;
  bool reroute_enabled = false;

  bool operator==(const Vehicle&) const = default;
};

struct Demand {
  std::vector<Vehicle> vehicles;
  double horizon_s = 0.0;

  std::size_t count(VehicleClass c) const {
    return static_cast<std::size_t>(
        std::count_if(vehicles.begin(), vehicles.end(), [c](const Vehicle& v) { return v.cls == c; }));
  }

  // Vehicles per OD pair for one class (pi_H / pi_C); its size is delta_H / delta_C.
  std::map<std::pair<NodeIndex, NodeIndex>, std::size_t> od_counts(VehicleClass c) const {
    std::map<std::pair<NodeIndex, NodeIndex>, std::size_t> out;
    for (const auto& v : vehicles)
      if (v.cls == c) ++out[{v.origin, v.destination}];
    return out;
  }
};

struct OdEntry {
  NodeIndex origin = 0;
  NodeIndex destination = 0;
  std::uint64_t count = 0;

  bool operator==(const OdEntry&) const = default;
};

/// CSV with header `origin,destination,count`. Zero-count rows are dropped.
inline std::vector<OdEntry> parse_od_csv(std::istream& in, const Network& net) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<OdEntry> out;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    if (!header) {
      if (f.size() != 3 || f[0] != "origin" || f[1] != "destination" || f[2] != "count") {
        throw FormatError(fmt::format("od line {}: expected header 'origin,destination,count'", line_no));
      }
      header = true;
      continue;
    }
    if (f.size() != 3) throw FormatError(fmt::format("od line {}: expected 3 fields, got {}", line_no, f.size()));
    long long count = 0;
    if (!csv::parse_int(f[2], count)) {
      throw FormatError(fmt::format("od line {}: field 'count': not an integer: '{}'", line_no, f[2]));
    }
    if (count < 0) throw ValidationError(fmt::format("od line {}: negative count {}", line_no, count));
    const auto o = net.find_node(f[0]);
    const auto d = net.find_node(f[1]);
    if (!o) throw ValidationError(fmt::format("od line {}: unknown origin node '{}'", line_no, f[0]));
    if (!d) throw ValidationError(fmt::format("od line {}: unknown destination node '{}'", line_no, f[1]));
    if (count == 0) continue;
    if (*o == *d) throw ValidationError(fmt::format("od line {}: origin equals destination '{}'", line_no, f[0]));
    out.push_back({*o, *d, static_cast<std::uint64_t>(count)});
  }
  if (!header) throw FormatError("od file: missing header 'origin,destination,count'");
  return out;
}

inline std::vector<OdEntry> load_od_matrix(const std::filesystem::path& path, const Network& net) {
  auto in = csv::open_input(path);
  return parse_od_csv(in, net);
}

struct ExpandOptions {
  double pr_cav = 0.0;  // percent
  double window_start_s = 0.0;
  double window_end_s = 3600.0;
  double reroute_probability = 0.0;
  std::uint64_t seed = 1;
  double horizon_s = 0.0;  // <= 0: use window_end_s
};

/// Expands OD counts into individual trips.
///
/// The CAV count is split across entries by largest-remainder rounding so the
/// global CAV share is within one vehicle of pr_cav. Which vehicles of an entry
/// become CAVs, their departure times, and their reroute draws come from
/// pr-independent random streams, so the CAV population at a lower pr is a subset
/// of the one at a higher pr and sweeps differ only in class labels.
inline Demand expand_od(std::span<const OdEntry> entries, const ExpandOptions& opt) {
  if (!(opt.pr_cav >= 0 && opt.pr_cav <= 100)) {
    throw ParameterError(fmt::format("pr_cav must be in [0, 100] (got {})", opt.pr_cav));
  }
  if (!(opt.window_end_s > opt.window_start_s) || opt.window_start_s < 0) {
    throw ParameterError("depart window must satisfy 0 <= t0 < t1");
  }
  if (!(opt.reroute_probability >= 0 && opt.reroute_probability <= 1)) {
    throw ParameterError("reroute_probability must be in [0, 1]");
  }
  const double horizon = opt.horizon_s > 0 ? opt.horizon_s : opt.window_end_s;
  if (horizon < opt.window_end_s) throw ParameterError("horizon must not end before the depart window");

  std::uint64_t total = 0;
  for (const auto& e : entries) total += e.count;
  const auto target = static_cast<std::uint64_t>(std::llround(static_cast<double>(total) * opt.pr_cav / 100.0));

  std::vector<std::uint64_t> cavs(entries.size());
  std::vector<double> frac(entries.size());
  std::uint64_t assigned = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const double quota = static_cast<double>(entries[i].count) * opt.pr_cav / 100.0;
    cavs[i] = std::min(entries[i].count, static_cast<std::uint64_t>(std::floor(quota)));
    frac[i] = quota - static_cast<double>(cavs[i]);
    assigned += cavs[i];
  }
  std::vector<std::size_t> order(entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < target && k < order.size(); ++k) {
    const auto i = order[k];
    if (cavs[i] < entries[i].count) {
      ++cavs[i];
      ++assigned;
    }
  }

  Demand d;
  d.horizon_s = horizon;
  d.vehicles.reserve(total);
  VehicleId next_id = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    std::vector<std::uint32_t> rank(e.count);
    for (std::uint32_t k = 0; k < e.count; ++k) rank[k] = k;
    Rng pick = Rng::stream(opt.seed, 1, i);
    pick.shuffle(rank.begin(), rank.end());
    std::vector<char> is_cav(e.count, 0);
    for (std::uint64_t k = 0; k < cavs[i]; ++k) is_cav[rank[k]] = 1;
    for (std::uint64_t k = 0; k < e.count; ++k) {
      Vehicle v;
      v.id = next_id++;
      v.cls = is_cav[k] ? VehicleClass::CAV : VehicleClass::HDV;
      v.origin = e.origin;
      v.destination = e.destination;
      Rng dep = Rng::stream(opt.seed, 2, v.id);
      v.depart_s = dep.uniform(opt.window_start_s, opt.window_end_s);
      Rng rr = Rng::stream(opt.seed, 3, v.id);
      const double u = rr.uniform();
      v.reroute_enabled = v.cls == VehicleClass::CAV && u < opt.reroute_probability;
      d.vehicles.push_back(v);
    }
  }
  return d;
}

// Trip list -------------------------------------------------------------------

inline void write_trip_list(const Demand& d, const Network& net, std::ostream& out) {
  out << "vehicle_id,class,origin,destination,depart_s,reroute_enabled\n";
  for (const auto& v : d.vehicles) {
    out << v.id << ',' << to_string(v.cls) << ',' << net.node(v.origin).id << ',' << net.node(v.destination).id
        << ',' << csv::num(v.depart_s) << ',' << (v.reroute_enabled ? 1 : 0) << '\n';
  }
}

inline Demand parse_trip_list(std::istream& in, const Network& net, double horizon_s) {
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  Demand d;
  d.horizon_s = horizon_s;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    if (!header) {
      if (f.size() != 6 || f[0] != "vehicle_id" || f[1] != "class" || f[2] != "origin" || f[3] != "destination" ||
          f[4] != "depart_s" || f[5] != "reroute_enabled") {
        throw FormatError(fmt::format(
            "trip line {}: expected header 'vehicle_id,class,origin,destination,depart_s,reroute_enabled'", line_no));
      }
      header = true;
      continue;
    }
    if (f.size() != 6) throw FormatError(fmt::format("trip line {}: expected 6 fields", line_no));
    long long id = 0, rr = 0;
    double dep = 0;
    if (!csv::parse_int(f[0], id) || id < 0) throw FormatError(fmt::format("trip line {}: field 'vehicle_id'", line_no));
    if (!csv::parse_double(f[4], dep)) throw FormatError(fmt::format("trip line {}: field 'depart_s'", line_no));
    if (!csv::parse_int(f[5], rr) || (rr != 0 && rr != 1)) {
      throw FormatError(fmt::format("trip line {}: field 'reroute_enabled' must be 0 or 1", line_no));
    }
    Vehicle v;
    v.id = static_cast<VehicleId>(id);
    v.cls = parse_vehicle_class(f[1]);
    const auto o = net.find_node(f[2]);
    const auto dst = net.find_node(f[3]);
    if (!o || !dst) throw ValidationError(fmt::format("trip line {}: unknown node", line_no));
    if (*o == *dst) throw ValidationError(fmt::format("trip line {}: origin equals destination", line_no));
    if (dep < 0 || dep > horizon_s) {
      throw ValidationError(fmt::format("trip line {}: depart_s {} outside [0, horizon {}]", line_no, dep, horizon_s));
    }
    v.origin = *o;
    v.destination = *dst;
    v.depart_s = dep;
    v.reroute_enabled = rr == 1;
    if (v.reroute_enabled && v.cls == VehicleClass::HDV) {
      throw ValidationError(fmt::format("trip line {}: HDVs cannot be reroute-enabled", line_no));
    }
    if (v.id != d.vehicles.size()) {
      throw ValidationError(fmt::format("trip line {}: vehicle ids must be 0..n-1 in order", line_no));
    }
    d.vehicles.push_back(v);
  }
  if (!header) throw FormatError("trip file: missing header");
  return d;
}

inline Demand load_trip_list(const std::filesystem::path& path, const Network& net, double horizon_s) {
  auto in = csv::open_input(path);
  return parse_trip_list(in, net, horizon_s);
}

}  // namespace mixdta
