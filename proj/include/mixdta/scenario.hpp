#pragma once

#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "mixdta/common.hpp"
#include "mixdta/csv.hpp"
#include "mixdta/demand.hpp"
#include "mixdta/dta.hpp"
#include "mixdta/mesosim.hpp"
#include "mixdta/network.hpp"

namespace mixdta {

namespace fs = std::filesystem;

struct NetworkFileSource {
  fs::path file;
  NetworkFormat format = NetworkFormat::NativeJson;
  TntpOptions tntp;
};

struct OdDemandSource {
  fs::path od_file;
  double window_start_s = 0.0;
  double window_end_s = 3600.0;
};

struct TripDemandSource {
  fs::path trip_file;
};

struct OutputConfig {
  fs::path dir = "out";
  bool volumes = true;
  bool routes = false;
};

/// One scenario: where the network and demand come from plus every model
/// constant. Relative paths are resolved against the config file's directory.
struct ScenarioConfig {
  std::variant<NetworkFileSource, RandomNetworkSpec> network;
  std::variant<OdDemandSource, TripDemandSource> demand;
  std::optional<double> pr_cav;  // percent; OD demand only
  std::uint64_t seed = 1;
  ClassConfigs classes;
  DtaConfig dta;  // dta.seed mirrors seed
  OutputConfig output;

  bool uses_od() const { return std::holds_alternative<OdDemandSource>(demand); }
};

namespace detail {

using nlohmann::json;

// Field-aware view of a JSON object: type errors and unknown keys are reported
// with their dotted path.
class FieldReader {
 public:
  FieldReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError(fmt::format("{}: expected an object", where()));
  }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void mark(const std::string& key) { seen_.insert(key); }

  FieldReader child(const std::string& key) {
    seen_.insert(key);
    return FieldReader(j_.at(key), field(key));
  }

  double number(const std::string& key, double def) {
    seen_.insert(key);
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number()) throw ValidationError(fmt::format("{}: expected a number", field(key)));
    return v.get<double>();
  }

  std::uint64_t count(const std::string& key, std::uint64_t def) {
    seen_.insert(key);
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      throw ValidationError(fmt::format("{}: expected a nonnegative integer", field(key)));
    }
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool def) {
    seen_.insert(key);
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) throw ValidationError(fmt::format("{}: expected true or false", field(key)));
    return v.get<bool>();
  }

  std::string string(const std::string& key, const std::string& def) {
    seen_.insert(key);
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_string()) throw ValidationError(fmt::format("{}: expected a string", field(key)));
    return v.get<std::string>();
  }

  template <class T, class Parse>
  T parsed(const std::string& key, T def, Parse&& parse) {
    if (!has(key)) {
      seen_.insert(key);
      return def;
    }
    const auto s = string(key, "");
    try {
      return parse(s);
    } catch (const Error& e) {
      throw ValidationError(fmt::format("{}: {}", field(key), e.what()));
    }
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ValidationError(fmt::format("{}: unknown field", field(key)));
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) path = base / path;
  return path.lexically_normal();
}

inline ClassConfig read_class(FieldReader r, ClassConfig c) {
  c.tau_multiplier = r.number("tau", c.tau_multiplier);
  c.reroute_probability = r.number("reroute_probability", c.reroute_probability);
  c.routing = r.parsed("routing", c.routing, [](const std::string& s) { return parse_routing_principle(s); });
  r.finish();
  return c;
}

inline json class_json(const ClassConfig& c) {
  return {{"tau", c.tau_multiplier},
          {"reroute_probability", c.reroute_probability},
          {"routing", std::string(to_string(c.routing))}};
}

inline std::string format_name(NetworkFormat f) { return f == NetworkFormat::Tntp ? "tntp" : "native-json"; }

}  // namespace detail

/// Parses a scenario document. Every field is optional except the network and
/// demand sources; unknown fields are rejected.
inline ScenarioConfig parse_scenario(const nlohmann::json& doc, const fs::path& base_dir) {
  using detail::FieldReader;
  ScenarioConfig cfg;
  FieldReader root(doc, "");

  if (!root.has("network")) throw ValidationError("network: missing (give network.file or network.generator)");
  {
    auto r = root.child("network");
    const bool file = r.has("file");
    const bool gen = r.has("generator");
    if (file == gen) throw ValidationError("network: give exactly one of network.file and network.generator");
    if (file) {
      NetworkFileSource src;
      src.file = detail::resolve(base_dir, r.string("file", ""));
      src.format = r.parsed("format", NetworkFormat::NativeJson,
                            [](const std::string& s) { return parse_network_format(s); });
      if (r.has("tntp")) {
        auto t = r.child("tntp");
        src.tntp.length_unit_m = t.number("length_unit_m", src.tntp.length_unit_m);
        src.tntp.time_unit_s = t.number("time_unit_s", src.tntp.time_unit_s);
        src.tntp.lanes = static_cast<int>(t.count("lanes", static_cast<std::uint64_t>(src.tntp.lanes)));
        t.finish();
      }
      cfg.network = src;
    } else {
      RandomNetworkSpec spec;
      auto g = r.child("generator");
      spec.n_junctions = g.count("n_junctions", spec.n_junctions);
      spec.n_edges = g.count("n_edges", spec.n_edges);
      spec.min_length_m = g.number("min_length_m", spec.min_length_m);
      spec.max_length_m = g.number("max_length_m", spec.max_length_m);
      spec.speed_limit_mps = g.number("speed_limit_mps", spec.speed_limit_mps);
      spec.seed = g.count("seed", spec.seed);
      g.mark("lane_choices");
      if (g.has("lane_choices")) {
        const auto& lanes = doc.at("network").at("generator").at("lane_choices");
        if (!lanes.is_array() || lanes.empty()) {
          throw ValidationError("network.generator.lane_choices: expected a nonempty array");
        }
        spec.lane_choices.clear();
        for (const auto& v : lanes) {
          if (!v.is_number_integer() || v.get<int>() < 1) {
            throw ValidationError("network.generator.lane_choices: entries must be integers >= 1");
          }
          spec.lane_choices.push_back(v.get<int>());
        }
      }
      g.finish();
      cfg.network = spec;
    }
    r.finish();
  }

  if (!root.has("demand")) throw ValidationError("demand: missing (give demand.od_file or demand.trip_file)");
  {
    auto r = root.child("demand");
    const bool od = r.has("od_file");
    const bool trips = r.has("trip_file");
    if (od == trips) throw ValidationError("demand: give exactly one of demand.od_file and demand.trip_file");
    if (od) {
      OdDemandSource src;
      src.od_file = detail::resolve(base_dir, r.string("od_file", ""));
      src.window_start_s = r.number("window_start_s", src.window_start_s);
      src.window_end_s = r.number("window_end_s", src.window_end_s);
      cfg.demand = src;
    } else {
      cfg.demand = TripDemandSource{detail::resolve(base_dir, r.string("trip_file", ""))};
    }
    r.finish();
  }

  if (root.has("pr_cav")) cfg.pr_cav = root.number("pr_cav", 0.0);
  root.mark("pr_cav");
  cfg.seed = root.count("seed", cfg.seed);

  if (root.has("classes")) {
    auto r = root.child("classes");
    if (r.has("HDV")) cfg.classes.hdv = detail::read_class(r.child("HDV"), cfg.classes.hdv);
    if (r.has("CAV")) cfg.classes.cav = detail::read_class(r.child("CAV"), cfg.classes.cav);
    r.finish();
  }

  if (root.has("dta")) {
    auto r = root.child("dta");
    auto& d = cfg.dta;
    d.max_iterations = static_cast<int>(r.count("max_iterations", static_cast<std::uint64_t>(d.max_iterations)));
    d.epsilon_s = r.number("epsilon_s", d.epsilon_s);
    d.plateau_window = static_cast<int>(r.count("plateau_window", static_cast<std::uint64_t>(d.plateau_window)));
    d.plateau_rel_change = r.number("plateau_rel_change", d.plateau_rel_change);
    d.choice.theta = r.number("theta", d.choice.theta);
    d.choice.gamma = r.number("gamma", d.choice.gamma);
    d.k_max = r.count("k_max", d.k_max);
    d.interval_s = r.number("interval_s", d.interval_s);
    d.marginal_cap_mult = r.number("marginal_cap_mult", d.marginal_cap_mult);
    r.finish();
  }

  if (root.has("loader")) {
    auto r = root.child("loader");
    auto& l = cfg.dta.loader;
    l.l_eff_m = r.number("l_eff_m", l.l_eff_m);
    l.jam_threshold = r.number("jam_threshold", l.jam_threshold);
    l.reroute_period_s = r.number("reroute_period_s", l.reroute_period_s);
    l.segment_length_m = r.number("segment_length_m", l.segment_length_m);
    l.horizon_s = r.number("horizon_s", l.horizon_s);
    l.estimate_window = r.count("estimate_window", l.estimate_window);
    l.estimate_max_age_s = r.number("estimate_max_age_s", l.estimate_max_age_s);
    if (r.has("headways")) {
      auto h = r.child("headways");
      l.headways.free_free = h.number("free_free", l.headways.free_free);
      l.headways.free_jam = h.number("free_jam", l.headways.free_jam);
      l.headways.jam_free = h.number("jam_free", l.headways.jam_free);
      l.headways.jam_jam = h.number("jam_jam", l.headways.jam_jam);
      h.finish();
    }
    r.finish();
  }

  if (root.has("output")) {
    auto r = root.child("output");
    cfg.output.dir = r.string("dir", cfg.output.dir.string());
    cfg.output.volumes = r.boolean("volumes", cfg.output.volumes);
    cfg.output.routes = r.boolean("routes", cfg.output.routes);
    r.finish();
  }
  cfg.output.dir = detail::resolve(base_dir, cfg.output.dir.string());
  root.finish();

  cfg.dta.seed = cfg.seed;
  return cfg;
}

inline ScenarioConfig load_scenario(const fs::path& path) {
  auto in = csv::open_input(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return parse_scenario(doc, fs::absolute(path).parent_path());
}

/// Checks ranges, cross-field rules and that referenced files exist.
inline void validate(const ScenarioConfig& cfg) {
  if (const auto* src = std::get_if<NetworkFileSource>(&cfg.network)) {
    if (!fs::is_regular_file(src->file)) {
      throw ValidationError(fmt::format("network.file: no such file: {}", src->file.string()));
    }
    if (!(src->tntp.length_unit_m > 0)) throw ValidationError("network.tntp.length_unit_m: must be > 0");
    if (!(src->tntp.time_unit_s > 0)) throw ValidationError("network.tntp.time_unit_s: must be > 0");
    if (src->tntp.lanes < 1) throw ValidationError("network.tntp.lanes: must be >= 1");
  } else {
    const auto& g = std::get<RandomNetworkSpec>(cfg.network);
    if (g.n_junctions < 2) throw ValidationError("network.generator.n_junctions: must be >= 2");
    if (g.n_edges < g.n_junctions || g.n_edges > g.n_junctions * (g.n_junctions - 1)) {
      throw ValidationError("network.generator.n_edges: must be in [n_junctions, n_junctions * (n_junctions - 1)]");
    }
    if (!(g.min_length_m > 0 && g.max_length_m >= g.min_length_m)) {
      throw ValidationError("network.generator: need 0 < min_length_m <= max_length_m");
    }
    if (!(g.speed_limit_mps > 0)) throw ValidationError("network.generator.speed_limit_mps: must be > 0");
  }

  if (const auto* src = std::get_if<OdDemandSource>(&cfg.demand)) {
    if (!fs::is_regular_file(src->od_file)) {
      throw ValidationError(fmt::format("demand.od_file: no such file: {}", src->od_file.string()));
    }
    if (!(src->window_start_s >= 0)) throw ValidationError("demand.window_start_s: must be >= 0");
    if (!(src->window_end_s > src->window_start_s)) {
      throw ValidationError("demand.window_end_s: must be > demand.window_start_s");
    }
    if (src->window_end_s > cfg.dta.loader.horizon_s) {
      throw ValidationError("demand.window_end_s: must not exceed loader.horizon_s");
    }
    const double pr = cfg.pr_cav.value_or(0.0);
    if (!(pr >= 0 && pr <= 100)) throw ValidationError(fmt::format("pr_cav: must be in [0, 100] (got {})", pr));
  } else {
    const auto& trips = std::get<TripDemandSource>(cfg.demand);
    if (!fs::is_regular_file(trips.trip_file)) {
      throw ValidationError(fmt::format("demand.trip_file: no such file: {}", trips.trip_file.string()));
    }
    if (cfg.pr_cav) throw ValidationError("pr_cav: not allowed with demand.trip_file (classes come from the file)");
  }

  cfg.classes.validate();
  if (cfg.classes.hdv.reroute_probability != 0) {
    throw ValidationError("classes.HDV.reroute_probability: must be 0 (only CAVs reroute)");
  }
  cfg.dta.validate();
}

/// The fully resolved config: every default materialized, paths absolute.
inline nlohmann::json effective_config(const ScenarioConfig& cfg) {
  using nlohmann::json;
  json doc;
  if (const auto* src = std::get_if<NetworkFileSource>(&cfg.network)) {
    doc["network"] = {{"file", fs::absolute(src->file).string()}, {"format", detail::format_name(src->format)}};
    if (src->format == NetworkFormat::Tntp) {
      doc["network"]["tntp"] = {{"length_unit_m", src->tntp.length_unit_m},
                                {"time_unit_s", src->tntp.time_unit_s},
                                {"lanes", src->tntp.lanes}};
    }
  } else {
    const auto& g = std::get<RandomNetworkSpec>(cfg.network);
    doc["network"]["generator"] = {{"n_junctions", g.n_junctions},     {"n_edges", g.n_edges},
                                   {"min_length_m", g.min_length_m},   {"max_length_m", g.max_length_m},
                                   {"lane_choices", g.lane_choices},   {"speed_limit_mps", g.speed_limit_mps},
                                   {"seed", g.seed}};
  }
  if (const auto* src = std::get_if<OdDemandSource>(&cfg.demand)) {
    doc["demand"] = {{"od_file", fs::absolute(src->od_file).string()},
                     {"window_start_s", src->window_start_s},
                     {"window_end_s", src->window_end_s}};
    doc["pr_cav"] = cfg.pr_cav.value_or(0.0);
  } else {
    doc["demand"] = {{"trip_file", fs::absolute(std::get<TripDemandSource>(cfg.demand).trip_file).string()}};
  }
  doc["seed"] = cfg.seed;
  doc["classes"] = {{"HDV", detail::class_json(cfg.classes.hdv)}, {"CAV", detail::class_json(cfg.classes.cav)}};
  const auto& d = cfg.dta;
  doc["dta"] = {{"max_iterations", d.max_iterations},
                {"epsilon_s", d.epsilon_s},
                {"plateau_window", d.plateau_window},
                {"plateau_rel_change", d.plateau_rel_change},
                {"theta", d.choice.theta},
                {"gamma", d.choice.gamma},
                {"k_max", d.k_max},
                {"interval_s", d.interval_s},
                {"marginal_cap_mult", d.marginal_cap_mult}};
  const auto& l = d.loader;
  doc["loader"] = {{"l_eff_m", l.l_eff_m},
                   {"jam_threshold", l.jam_threshold},
                   {"reroute_period_s", l.reroute_period_s},
                   {"segment_length_m", l.segment_length_m},
                   {"horizon_s", l.horizon_s},
                   {"estimate_window", l.estimate_window},
                   {"estimate_max_age_s", l.estimate_max_age_s},
                   {"headways",
                    {{"free_free", l.headways.free_free},
                     {"free_jam", l.headways.free_jam},
                     {"jam_free", l.headways.jam_free},
                     {"jam_jam", l.headways.jam_jam}}}};
  doc["output"] = {{"dir", fs::absolute(cfg.output.dir).string()},
                   {"volumes", cfg.output.volumes},
                   {"routes", cfg.output.routes}};
  return doc;
}

inline Network build_network(const ScenarioConfig& cfg) {
  if (const auto* src = std::get_if<NetworkFileSource>(&cfg.network)) {
    return load_network(src->file, src->format, src->tntp);
  }
  return generate_random_network(std::get<RandomNetworkSpec>(cfg.network));
}

inline Demand build_demand(const ScenarioConfig& cfg, const Network& net) {
  if (const auto* src = std::get_if<OdDemandSource>(&cfg.demand)) {
    const auto entries = load_od_matrix(src->od_file, net);
    ExpandOptions opt;
    opt.pr_cav = cfg.pr_cav.value_or(0.0);
    opt.window_start_s = src->window_start_s;
    opt.window_end_s = src->window_end_s;
    opt.reroute_probability = cfg.classes.cav.reroute_probability;
    opt.seed = cfg.seed;
    opt.horizon_s = cfg.dta.loader.horizon_s;
    return expand_od(entries, opt);
  }
  return load_trip_list(std::get<TripDemandSource>(cfg.demand).trip_file, net, cfg.dta.loader.horizon_s);
}

struct ScenarioSummary {
  double pr_cav = 0.0;
  std::size_t vehicles = 0;
  Metrics metrics;
  double final_gap_s = 0.0;
  int iterations = 0;  // index of the last iteration run
  StopCriterion criterion = StopCriterion::MaxIterations;
  std::size_t unfinished = 0;
};

inline std::string summary_line(const ScenarioSummary& s) {
  return fmt::format("pr={} vehicles={} ttt_h={:.6f} avg_speed_kmh={:.6f} avg_distance_km={:.6f} "
                     "final_gap_s={:.6f} iterations={} criterion={} unfinished={}",
                     s.pr_cav, s.vehicles, s.metrics.total_travel_time_h, s.metrics.avg_speed_kmh,
                     s.metrics.avg_distance_km, s.final_gap_s, s.iterations, to_string(s.criterion), s.unfinished);
}

/// Runs the assignment and writes config.json, iterations.csv, trips.csv,
/// summary.csv and, when enabled, volumes.csv and routes.csv into output.dir.
inline ScenarioSummary run_scenario(const ScenarioConfig& cfg, const IterationObserver& observer = {}) {
  validate(cfg);
  const Network net = build_network(cfg);
  const Demand demand = build_demand(cfg, net);
  const auto res = run_assignment(net, demand, cfg.classes, cfg.dta, observer);

  ScenarioSummary s;
  s.pr_cav = cfg.pr_cav.value_or(demand.vehicles.empty()
                                     ? 0.0
                                     : 100.0 * static_cast<double>(demand.count(VehicleClass::CAV)) /
                                           static_cast<double>(demand.vehicles.size()));
  s.vehicles = demand.vehicles.size();
  s.metrics = compute_metrics(res.trips);
  s.final_gap_s = res.reports.back().hybrid_gap_s;
  s.iterations = res.reports.back().iteration;
  s.criterion = res.criterion;
  s.unfinished = res.reports.back().unfinished_count;

  const auto& dir = cfg.output.dir;
  fs::create_directories(dir);
  {
    auto out = csv::open_output(dir / "config.json");
    out << effective_config(cfg).dump(2) << '\n';
  }
  {
    auto out = csv::open_output(dir / "iterations.csv");
    write_iteration_reports(res.reports, out);
  }
  {
    auto out = csv::open_output(dir / "trips.csv");
    write_trip_records(res.trips, out);
  }
  if (cfg.output.volumes) {
    auto out = csv::open_output(dir / "volumes.csv");
    write_link_volumes(res.trips, net, out);
  }
  if (cfg.output.routes) {
    auto out = csv::open_output(dir / "routes.csv");
    write_route_dump(res, net, demand.vehicles, cfg.classes, out);
  }
  {
    auto out = csv::open_output(dir / "summary.csv");
    out << "pr,vehicles,ttt_h,avg_speed_kmh,avg_distance_km,final_gap_s,iterations,criterion,unfinished\n";
    out << csv::num(s.pr_cav) << ',' << s.vehicles << ',' << csv::num(s.metrics.total_travel_time_h) << ','
        << csv::num(s.metrics.avg_speed_kmh) << ',' << csv::num(s.metrics.avg_distance_km) << ','
        << csv::num(s.final_gap_s) << ',' << s.iterations << ',' << to_string(s.criterion) << ',' << s.unfinished
        << '\n';
  }
  return s;
}

struct SweepRow {
  double pr = 0.0;
  ScenarioSummary summary;
  double ttt_improvement_pct = 0.0;
};

inline std::string pr_dir_name(double pr) { return fmt::format("pr_{}", pr); }

/// Runs the base scenario once per penetration rate (same seed and OD demand)
/// into output.dir/pr_<p>/ and writes output.dir/sweep.csv. Improvement is
/// relative to PR 0, which is run as a reference even when not requested.
/// Up to `jobs` scenarios run concurrently.
inline std::vector<SweepRow> run_sweep(const ScenarioConfig& base, const std::vector<double>& prs,
                                       unsigned jobs = 1, bool verbose = false) {
  if (!base.uses_od()) throw ValidationError("sweep: demand must come from demand.od_file");
  if (prs.empty()) throw ValidationError("sweep: empty PR list");
  for (std::size_t i = 0; i < prs.size(); ++i) {
    if (!(prs[i] >= 0 && prs[i] <= 100)) throw ValidationError(fmt::format("sweep: PR {} not in [0, 100]", prs[i]));
    if (std::find(prs.begin(), prs.begin() + static_cast<std::ptrdiff_t>(i), prs[i]) != prs.begin() + static_cast<std::ptrdiff_t>(i)) {
      throw ValidationError(fmt::format("sweep: PR {} listed twice", prs[i]));
    }
  }
  validate(base);

  std::vector<double> todo = prs;
  const bool has_zero = std::find(prs.begin(), prs.end(), 0.0) != prs.end();
  if (!has_zero) todo.push_back(0.0);

  std::vector<std::optional<ScenarioSummary>> done(todo.size());
  std::vector<std::exception_ptr> errors(todo.size());
  std::mutex log_mutex;
  std::size_t next = 0;
  std::mutex next_mutex;

  auto worker = [&] {
    for (;;) {
      std::size_t k;
      {
        std::lock_guard lock(next_mutex);
        if (next >= todo.size()) return;
        if (std::any_of(errors.begin(), errors.end(), [](const auto& e) { return e != nullptr; })) return;
        k = next++;
      }
      ScenarioConfig cfg = base;
      cfg.pr_cav = todo[k];
      cfg.output.dir = base.output.dir / pr_dir_name(todo[k]);
      IterationObserver obs;
      if (verbose) {
        obs = [&, pr = todo[k]](const IterationReport& r) {
          std::lock_guard lock(log_mutex);
          fmt::print(stderr, "[pr {}] iteration {} hybrid_gap_s={:.3f} ttt_h={:.3f}\n", pr, r.iteration,
                     r.hybrid_gap_s, r.total_travel_time_h);
        };
      }
      try {
        done[k] = run_scenario(cfg, obs);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };

  const unsigned n_threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(todo.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t k = 0; k < todo.size(); ++k) {
    if (errors[k]) {
      try {
        std::rethrow_exception(errors[k]);
      } catch (const std::exception& e) {
        throw Error(fmt::format("sweep: pr {}: {}", todo[k], e.what()));
      }
    }
  }

  const auto zero = std::find(todo.begin(), todo.end(), 0.0) - todo.begin();
  const double ttt0 = done[static_cast<std::size_t>(zero)]->metrics.total_travel_time_h;
  std::vector<SweepRow> rows;
  for (std::size_t k = 0; k < prs.size(); ++k) {
    SweepRow row;
    row.pr = prs[k];
    row.summary = *done[k];
    const double ttt = row.summary.metrics.total_travel_time_h;
    row.ttt_improvement_pct = ttt0 > 0 ? 100.0 * (ttt0 - ttt) / ttt0 : 0.0;
    rows.push_back(row);
  }

  fs::create_directories(base.output.dir);
  auto out = csv::open_output(base.output.dir / "sweep.csv");
  out << "pr,ttt_h,avg_speed_kmh,avg_distance_km,final_gap_s,ttt_improvement_pct\n";
  for (const auto& r : rows) {
    out << csv::num(r.pr) << ',' << csv::num(r.summary.metrics.total_travel_time_h) << ','
        << csv::num(r.summary.metrics.avg_speed_kmh) << ',' << csv::num(r.summary.metrics.avg_distance_km) << ','
        << csv::num(r.summary.final_gap_s) << ',' << csv::num(r.ttt_improvement_pct) << '\n';
  }
  return rows;
}

}  // namespace mixdta
