#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <ostream>
#include <queue>
#include <span>
#include <vector>

#include <fmt/format.h>

#include "mixdta/common.hpp"
#include "mixdta/costs.hpp"
#include "mixdta/demand.hpp"
#include "mixdta/network.hpp"
#include "mixdta/routing.hpp"

namespace mixdta {

/// Base minimum headways (s) between consecutive exits of a queue segment, by the
/// free/jammed state of the current and the next segment.
struct RegimeHeadways {
  double free_free = 1.4;
  double free_jam = 1.4;
  double jam_free = 2.0;
  double jam_jam = 1.7;

  void validate() const {
    if (!(free_free > 0 && free_jam > 0 && jam_free > 0 && jam_jam > 0)) {
      throw ValidationError("loader.headways: all regime headways must be > 0");
    }
    if (jam_free < free_free) throw ValidationError("loader.headways: jam_free must be >= free_free");
  }
};

inline double regime_headway(bool current_jammed, bool next_jammed, const RegimeHeadways& h) {
  if (current_jammed) return next_jammed ? h.jam_jam : h.jam_free;
  return next_jammed ? h.free_jam : h.free_free;
}

struct LoaderConfig {
  double l_eff_m = 7.5;          // jam spacing per vehicle and lane
  double jam_threshold = 0.8;    // occupancy share at or above which a segment is jammed
  RegimeHeadways headways;
  double reroute_period_s = 60.0;
  double segment_length_m = 100.0;
  double horizon_s = 7200.0;
  std::size_t estimate_window = 10;    // recent traversals averaged by the live estimator
  double estimate_max_age_s = 900.0;   // ... within this many seconds

  void validate() const {
    if (!(l_eff_m > 0)) throw ValidationError("loader.l_eff_m: must be > 0");
    if (!(jam_threshold > 0 && jam_threshold <= 1)) throw ValidationError("loader.jam_threshold: must be in (0, 1]");
    headways.validate();
    if (!(reroute_period_s > 0)) throw ValidationError("loader.reroute_period_s: must be > 0");
    if (!(segment_length_m > 0)) throw ValidationError("loader.segment_length_m: must be > 0");
    if (!(horizon_s > 0)) throw ValidationError("loader.horizon_s: must be > 0");
    if (estimate_window < 1) throw ValidationError("loader.estimate_window: must be >= 1");
    if (!(estimate_max_age_s > 0)) throw ValidationError("loader.estimate_max_age_s: must be > 0");
  }
};

/// Live link travel-time estimate used by en-route rerouting: the mean of the
/// last `window` completed traversals that exited within `max_age` seconds,
/// floored at free flow.
class LinkTimeEstimator {
 public:
  LinkTimeEstimator(const Network& net, std::size_t window, double max_age_s)
      : window_(window), max_age_s_(max_age_s), recent_(net.link_count()) {
    free_flow_.reserve(net.link_count());
    for (LinkIndex l = 0; l < net.link_count(); ++l) free_flow_.push_back(net.free_flow_time(l));
  }

  void record(LinkIndex link, double exit_s, double travel_time_s) {
    auto& r = recent_.at(link);
    r.push_back({exit_s, travel_time_s});
    if (r.size() > window_) r.pop_front();
  }

  double estimate(LinkIndex link, double now) const {
    const auto& r = recent_.at(link);
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& [exit_s, tt] : r) {
      if (exit_s >= now - max_age_s_) {
        sum += tt;
        ++n;
      }
    }
    return n ? std::max(free_flow_[link], sum / static_cast<double>(n)) : free_flow_[link];
  }

 private:
  struct Sample {
    double exit_s;
    double travel_time_s;
  };
  std::size_t window_;
  double max_age_s_;
  std::vector<std::deque<Sample>> recent_;
  std::vector<double> free_flow_;
};

inline double estimate_link_time(const LinkTimeEstimator& live, LinkIndex link, double now) {
  return live.estimate(link, now);
}

// Optional event trace for property checks --------------------------------------

struct SegmentInfo {
  LinkIndex link = 0;
  std::uint32_t index = 0;  // position along the link
  double length_m = 0.0;
  int lanes = 1;
  std::uint32_t capacity = 1;
  double free_time_s = 0.0;
};

struct SegmentEntry {
  double time_s;
  std::uint32_t segment;
  VehicleId vehicle;
  std::uint32_t occupancy_after;
};

struct SegmentExit {
  double time_s;
  std::uint32_t segment;
  VehicleId vehicle;
  VehicleClass cls;
  std::uint32_t occupancy_before;
  std::uint32_t next_segment;  // kNoIndex when the trip ends here
  std::uint32_t next_occupancy_before;
};

struct LoadingTrace {
  std::vector<SegmentInfo> segments;
  std::vector<SegmentEntry> entries;
  std::vector<SegmentExit> exits;
};

struct LoadResult {
  std::vector<TripRecord> trips;  // same order as the input vehicles
  CostTable costs;
};

namespace detail {

class QueueLoader {
 public:
  QueueLoader(const Network& net, std::span<const Vehicle> vehicles, std::span<const Path> paths,
              const ClassConfigs& classes, const LoaderConfig& cfg, LoadingTrace* trace)
      : net_(net), vehicles_(vehicles), classes_(classes), cfg_(cfg), trace_(trace),
        live_(net, cfg.estimate_window, cfg.estimate_max_age_s) {
    if (vehicles.size() != paths.size()) throw ContractError("run_loading: one path per vehicle required");
    for (std::size_t i = 0; i < vehicles.size(); ++i) {
      const auto& v = vehicles[i];
      const auto& p = paths[i];
      if (p.origin != v.origin || p.destination != v.destination) {
        throw ContractError(fmt::format("vehicle {}: path OD does not match the vehicle", v.id));
      }
      try {
        validate_path(net, p);
      } catch (const ContractError& e) {
        throw ContractError(fmt::format("vehicle {}: {}", v.id, e.what()));
      }
      if (!(v.depart_s >= 0 && v.depart_s <= cfg.horizon_s)) {
        throw ContractError(fmt::format("vehicle {}: departure {} outside [0, horizon]", v.id, v.depart_s));
      }
    }
    build_segments();
    state_.resize(vehicles.size());
    records_.resize(vehicles.size());
    for (std::size_t i = 0; i < vehicles.size(); ++i) {
      const auto& v = vehicles[i];
      state_[i].path = paths[i].links;
      auto& r = records_[i];
      r.vehicle = v.id;
      r.cls = v.cls;
      r.origin = v.origin;
      r.destination = v.destination;
      r.depart_s = v.depart_s;
      push(v.depart_s, EventType::Depart, static_cast<std::uint32_t>(i));
    }
  }

  std::vector<TripRecord> run() {
    while (!events_.empty()) {
      const Event ev = events_.top();
      if (ev.time > cfg_.horizon_s) break;
      events_.pop();
      switch (ev.type) {
        case EventType::Depart:
          depart(ev.id, ev.time);
          break;
        case EventType::Try:
          if (pending_[ev.id] == ev.seq) {
            pending_[ev.id] = 0;
            if (ev.id < segs_.size()) {
              try_exit(ev.id, ev.time);
            } else {
              try_insert(ev.id, ev.time);
            }
          }
          break;
        case EventType::Reroute:
          reroute(ev.id, ev.time, false);
          break;
      }
    }
    for (std::size_t i = 0; i < records_.size(); ++i) {
      if (!state_[i].done) {
        records_[i].arrive_s = cfg_.horizon_s;
        records_[i].finished = false;
      }
    }
    return std::move(records_);
  }

 private:
  enum class EventType : std::uint8_t { Depart, Try, Reroute };

  struct Event {
    double time;
    std::uint64_t seq;
    EventType type;
    std::uint32_t id;
    bool operator>(const Event& o) const { return time != o.time ? time > o.time : seq > o.seq; }
  };

  struct Segment {
    LinkIndex link;
    std::uint32_t index;
    double length_m;
    int lanes;
    std::uint32_t capacity;
    double free_time_s;
    std::deque<std::uint32_t> queue;  // vehicle slots, head first
    double last_exit = -std::numeric_limits<double>::infinity();
    std::vector<std::uint32_t> waiters;  // blocked sources in blocking order
  };

  struct VehicleState {
    std::vector<LinkIndex> path;
    std::uint32_t pos = 0;           // index into path of the current link
    std::uint32_t seg = kNoIndex;    // current segment
    double earliest_exit = 0.0;
    bool in_network = false;
    bool done = false;
  };

  void build_segments() {
    link_first_seg_.resize(net_.link_count());
    link_seg_count_.resize(net_.link_count());
    for (LinkIndex l = 0; l < net_.link_count(); ++l) {
      const auto& link = net_.link(l);
      const auto n = static_cast<std::uint32_t>(std::max(1.0, std::round(link.length_m / cfg_.segment_length_m)));
      const double len = link.length_m / n;
      const auto cap = static_cast<std::uint32_t>(std::max(1.0, std::floor(len * link.lanes / cfg_.l_eff_m)));
      link_first_seg_[l] = static_cast<std::uint32_t>(segs_.size());
      link_seg_count_[l] = n;
      for (std::uint32_t k = 0; k < n; ++k) {
        segs_.push_back(Segment{l, k, len, link.lanes, cap, len / link.speed_limit_mps, {}, -std::numeric_limits<double>::infinity(), {}});
        if (trace_) trace_->segments.push_back({l, k, len, link.lanes, cap, len / link.speed_limit_mps});
      }
    }
    insertion_.resize(net_.link_count());
    const auto sources = segs_.size() + net_.link_count();
    pending_.assign(sources, 0);
    blocked_on_.assign(sources, kNoIndex);
  }

  std::uint32_t insertion_source(LinkIndex l) const { return static_cast<std::uint32_t>(segs_.size() + l); }

  void push(double t, EventType type, std::uint32_t id) { events_.push({t, ++seq_, type, id}); }

  // At most one live Try event per source; older ones become stale.
  void schedule(std::uint32_t source, double t) {
    events_.push({t, ++seq_, EventType::Try, source});
    pending_[source] = seq_;
  }

  bool jammed(const Segment& s, std::size_t occupancy) const {
    return static_cast<double>(occupancy) >= cfg_.jam_threshold * static_cast<double>(s.capacity);
  }

  void block(std::uint32_t source, std::uint32_t target) {
    if (blocked_on_[source] == target) return;
    unblock(source);
    segs_[target].waiters.push_back(source);
    blocked_on_[source] = target;
  }

  void unblock(std::uint32_t source) {
    const auto t = blocked_on_[source];
    if (t == kNoIndex) return;
    auto& w = segs_[t].waiters;
    w.erase(std::find(w.begin(), w.end(), source));
    blocked_on_[source] = kNoIndex;
  }

  void enter(std::uint32_t slot, std::uint32_t seg, double now) {
    auto& s = segs_[seg];
    auto& st = state_[slot];
    s.queue.push_back(slot);
    st.seg = seg;
    st.earliest_exit = now + s.free_time_s;
    if (trace_) {
      trace_->entries.push_back({now, seg, vehicles_[slot].id, static_cast<std::uint32_t>(s.queue.size())});
    }
    if (s.queue.size() == 1) schedule(seg, st.earliest_exit);
  }

  void start_link(std::uint32_t slot, double now) {
    records_[slot].links.push_back({state_[slot].path[state_[slot].pos], now});
  }

  void depart(std::uint32_t slot, double now) {
    const auto& v = vehicles_[slot];
    if (v.reroute_enabled) {
      reroute(slot, now, true);
      push(now + cfg_.reroute_period_s, EventType::Reroute, slot);
    }
    const LinkIndex first = state_[slot].path.front();
    auto& q = insertion_[first];
    q.push_back(slot);
    if (q.size() == 1) schedule(insertion_source(first), now);
  }

  void try_insert(std::uint32_t source, double now) {
    const LinkIndex link = source - static_cast<std::uint32_t>(segs_.size());
    auto& q = insertion_[link];
    if (q.empty()) return;
    const auto target = link_first_seg_[link];
    if (segs_[target].queue.size() >= segs_[target].capacity) {
      block(source, target);
      return;
    }
    unblock(source);
    const auto slot = q.front();
    q.pop_front();
    state_[slot].in_network = true;
    start_link(slot, now);
    enter(slot, target, now);
    if (!q.empty()) schedule(source, now);
  }

  void try_exit(std::uint32_t seg, double now) {
    auto& s = segs_[seg];
    if (s.queue.empty()) return;
    const auto slot = s.queue.front();
    auto& st = state_[slot];
    if (now < st.earliest_exit) {
      schedule(seg, st.earliest_exit);
      return;
    }
    std::uint32_t next = kNoIndex;
    if (s.index + 1 < link_seg_count_[s.link]) {
      next = seg + 1;
    } else if (st.pos + 1 < st.path.size()) {
      next = link_first_seg_[st.path[st.pos + 1]];
    }
    const bool cur_jam = jammed(s, s.queue.size());
    const bool next_jam = next != kNoIndex && jammed(segs_[next], segs_[next].queue.size());
    const int lanes = next != kNoIndex ? segs_[next].lanes : s.lanes;
    const double headway =
        classes_[vehicles_[slot].cls].tau_multiplier * regime_headway(cur_jam, next_jam, cfg_.headways) / lanes;
    if (now < s.last_exit + headway) {
      schedule(seg, s.last_exit + headway);
      return;
    }
    if (next != kNoIndex && segs_[next].queue.size() >= segs_[next].capacity) {
      block(seg, next);
      return;
    }
    unblock(seg);

    if (trace_) {
      trace_->exits.push_back({now, seg, vehicles_[slot].id, vehicles_[slot].cls,
                               static_cast<std::uint32_t>(s.queue.size()), next,
                               next != kNoIndex ? static_cast<std::uint32_t>(segs_[next].queue.size()) : 0u});
    }
    s.queue.pop_front();
    s.last_exit = now;

    auto& rec = records_[slot];
    const bool leaves_link = next == kNoIndex || segs_[next].link != s.link;
    if (leaves_link) {
      auto& tr = rec.links.back();
      tr.exit_s = now;
      rec.distance_m += net_.link(s.link).length_m;
      live_.record(s.link, now, now - tr.entry_s);
    }
    if (next == kNoIndex) {
      st.done = true;
      st.in_network = false;
      st.seg = kNoIndex;
      rec.arrive_s = now;
      rec.finished = true;
    } else {
      if (leaves_link) {
        ++st.pos;
        start_link(slot, now);
      }
      enter(slot, next, now);
    }

    if (!s.queue.empty()) schedule(seg, std::max(now, state_[s.queue.front()].earliest_exit));
    for (auto w : s.waiters) schedule(w, now);
  }

  // Switches to the best remaining route under live estimates when it is
  // strictly shorter than the current remaining route.
  void reroute(std::uint32_t slot, double now, bool before_insertion) {
    auto& st = state_[slot];
    if (st.done) return;
    if (!before_insertion) {
      push(now + cfg_.reroute_period_s, EventType::Reroute, slot);
      if (!st.in_network) return;
    }
    const auto& v = vehicles_[slot];
    // Links up to `keep` stay fixed; the rest may be replaced.
    const std::size_t keep = before_insertion ? 0 : st.pos + 1;
    const NodeIndex from = keep == 0 ? v.origin : net_.to(st.path[keep - 1]);
    if (from == v.destination) return;

    std::vector<char> banned(net_.link_count(), 0);
    for (std::size_t k = 0; k < keep; ++k) banned[st.path[k]] = 1;
    auto live_cost = [&](LinkIndex l, double) {
      return banned[l] ? std::numeric_limits<double>::infinity() : live_.estimate(l, now);
    };
    auto best = earliest_arrival_path(net_, from, v.destination, now, live_cost);
    if (!best) return;
    double current = 0.0;
    for (std::size_t k = keep; k < st.path.size(); ++k) current += live_.estimate(st.path[k], now);
    const double candidate = path_cost_with(*best, now, live_cost);
    if (!(candidate < current)) return;
    if (std::equal(best->links.begin(), best->links.end(), st.path.begin() + static_cast<std::ptrdiff_t>(keep),
                   st.path.end())) {
      return;
    }
    st.path.resize(keep);
    st.path.insert(st.path.end(), best->links.begin(), best->links.end());
    ++records_[slot].reroute_count;
    // A head waiting at the end of its link must re-evaluate its next segment.
    if (st.in_network && segs_[st.seg].queue.front() == slot) schedule(st.seg, now);
  }

  const Network& net_;
  std::span<const Vehicle> vehicles_;
  const ClassConfigs& classes_;
  const LoaderConfig& cfg_;
  LoadingTrace* trace_;
  LinkTimeEstimator live_;

  std::vector<Segment> segs_;
  std::vector<std::uint32_t> link_first_seg_;
  std::vector<std::uint32_t> link_seg_count_;
  std::vector<std::deque<std::uint32_t>> insertion_;
  std::vector<std::uint64_t> pending_;
  std::vector<std::uint32_t> blocked_on_;
  std::vector<VehicleState> state_;
  std::vector<TripRecord> records_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
  std::uint64_t seq_ = 0;
};

}  // namespace detail

/// Loads the given final paths with a class-aware FIFO queue model.
///
/// Links are cut into segments of roughly `segment_length_m`. A segment's head
/// vehicle leaves at max(entry + free time, previous exit + h), where
/// h = tau(class) * regime_headway(current, next) / lanes(next), and only when the
/// next segment has room. Reroute-enabled vehicles re-plan before insertion and
/// every reroute period against live link estimates. Vehicles still travelling
/// at the horizon are closed out with arrive_s = horizon and finished = false.
inline LoadResult run_loading(const Network& net, std::span<const Vehicle> vehicles, std::span<const Path> paths,
                              const ClassConfigs& classes, const LoaderConfig& cfg, const CostHistory& history,
                              LoadingTrace* trace = nullptr) {
  cfg.validate();
  classes.validate();
  detail::QueueLoader loader(net, vehicles, paths, classes, cfg, trace);
  LoadResult out;
  out.trips = loader.run();
  out.costs = aggregate_costs(out.trips, net, history.interval_s());
  return out;
}

/// Vehicles that entered each link.
inline std::vector<std::size_t> link_volumes(std::span<const TripRecord> trips, std::size_t link_count) {
  std::vector<std::size_t> v(link_count, 0);
  for (const auto& t : trips)
    for (const auto& tr : t.links) ++v.at(tr.link);
  return v;
}

inline void write_trip_records(std::span<const TripRecord> trips, std::ostream& out) {
  out << "vehicle_id,class,depart_s,arrive_s,distance_m,reroute_count,finished\n";
  for (const auto& t : trips) {
    out << t.vehicle << ',' << to_string(t.cls) << ',' << csv::num(t.depart_s) << ',' << csv::num(t.arrive_s) << ','
        << csv::num(t.distance_m) << ',' << t.reroute_count << ',' << (t.finished ? 1 : 0) << '\n';
  }
}

inline void write_link_volumes(std::span<const TripRecord> trips, const Network& net, std::ostream& out) {
  const auto v = link_volumes(trips, net.link_count());
  out << "link_id,volume_veh\n";
  for (LinkIndex l = 0; l < net.link_count(); ++l) out << net.link(l).id << ',' << v[l] << '\n';
}

}  // namespace mixdta
