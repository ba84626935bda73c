#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <nlohmann/json.hpp>

#include "mixdta/common.hpp"
#include "mixdta/csv.hpp"

namespace mixdta {

struct Node {
  std::string id;
  double x = 0.0;  // meters
  double y = 0.0;

  bool operator==(const Node&) const = default;
};

struct Link {
  std::string id;
  std::string from;
  std::string to;
  double length_m = 0.0;
  int lanes = 1;
  double speed_limit_mps = 0.0;
  // Imported from TNTP and kept for reference only; the queue model ignores it.
  std::optional<double> capacity_vph;

  bool operator==(const Link&) const = default;
};

inline double free_flow_time(const Link& link) { return link.length_m / link.speed_limit_mps; }

/// Directed road network. Immutable once constructed; the constructor validates
/// every node/link invariant and builds the outgoing-link adjacency.
class Network {
 public:
  Network() = default;

  Network(std::vector<Node> nodes, std::vector<Link> links)
      : nodes_(std::move(nodes)), links_(std::move(links)) {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!node_index_.emplace(nodes_[i].id, static_cast<NodeIndex>(i)).second) {
        throw ValidationError(fmt::format("duplicate node id '{}'", nodes_[i].id));
      }
    }
    std::vector<std::string> dangling;
    std::vector<std::string> bad;
    link_from_.resize(links_.size());
    link_to_.resize(links_.size());
    for (std::size_t i = 0; i < links_.size(); ++i) {
      const Link& l = links_[i];
      if (!link_index_.emplace(l.id, static_cast<LinkIndex>(i)).second) {
        throw ValidationError(fmt::format("duplicate link id '{}'", l.id));
      }
      const auto f = node_index_.find(l.from);
      const auto t = node_index_.find(l.to);
      if (f == node_index_.end() || t == node_index_.end()) {
        dangling.push_back(l.id);
        continue;
      }
      link_from_[i] = f->second;
      link_to_[i] = t->second;
      if (l.from == l.to) bad.push_back(fmt::format("{} (from == to)", l.id));
      if (!(l.length_m > 0.0) || !std::isfinite(l.length_m)) bad.push_back(fmt::format("{} (length_m)", l.id));
      if (l.lanes < 1) bad.push_back(fmt::format("{} (lanes)", l.id));
      if (!(l.speed_limit_mps > 0.0) || !std::isfinite(l.speed_limit_mps)) {
        bad.push_back(fmt::format("{} (speed_limit_mps)", l.id));
      }
    }
    if (!dangling.empty()) {
      throw ValidationError(
          fmt::format("links reference unknown nodes: {}", fmt::join(dangling, ", ")));
    }
    if (!bad.empty()) throw ValidationError(fmt::format("invalid links: {}", fmt::join(bad, ", ")));

    // CSR adjacency, links in index order per node.
    out_offsets_.assign(nodes_.size() + 1, 0);
    for (auto f : link_from_) ++out_offsets_[f + 1];
    for (std::size_t i = 0; i < nodes_.size(); ++i) out_offsets_[i + 1] += out_offsets_[i];
    out_links_.resize(links_.size());
    std::vector<std::uint32_t> fill(out_offsets_.begin(), out_offsets_.end() - 1);
    for (std::size_t i = 0; i < links_.size(); ++i) {
      out_links_[fill[link_from_[i]]++] = static_cast<LinkIndex>(i);
    }
  }

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t link_count() const { return links_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Link>& links() const { return links_; }
  const Node& node(NodeIndex n) const { return nodes_.at(n); }
  const Link& link(LinkIndex l) const { return links_.at(l); }
  NodeIndex from(LinkIndex l) const { return link_from_[l]; }
  NodeIndex to(LinkIndex l) const { return link_to_[l]; }
  double free_flow_time(LinkIndex l) const { return mixdta::free_flow_time(links_.at(l)); }

  std::span<const LinkIndex> outgoing(NodeIndex n) const {
    return {out_links_.data() + out_offsets_.at(n), out_links_.data() + out_offsets_.at(n + 1)};
  }

  std::optional<NodeIndex> find_node(std::string_view id) const {
    const auto it = node_index_.find(std::string(id));
    if (it == node_index_.end()) return std::nullopt;
    return it->second;
  }

  NodeIndex node_index(std::string_view id) const {
    if (auto n = find_node(id)) return *n;
    throw LookupError(fmt::format("unknown node id '{}'", id));
  }

  std::optional<LinkIndex> find_link(std::string_view id) const {
    const auto it = link_index_.find(std::string(id));
    if (it == link_index_.end()) return std::nullopt;
    return it->second;
  }

  LinkIndex link_index(std::string_view id) const {
    if (auto l = find_link(id)) return *l;
    throw LookupError(fmt::format("unknown link id '{}'", id));
  }

  bool operator==(const Network& other) const {
    return nodes_ == other.nodes_ && links_ == other.links_;
  }

 private:
  std::vector<Node> nodes_;
  std::vector<Link> links_;
  std::unordered_map<std::string, NodeIndex> node_index_;
  std::unordered_map<std::string, LinkIndex> link_index_;
  std::vector<NodeIndex> link_from_;
  std::vector<NodeIndex> link_to_;
  std::vector<std::uint32_t> out_offsets_;
  std::vector<LinkIndex> out_links_;
};

// Connectivity ----------------------------------------------------------------

namespace detail {

inline std::size_t reach_count(std::size_t n, std::span<const NodeIndex> from,
                               std::span<const NodeIndex> to, NodeIndex start) {
  std::vector<std::vector<NodeIndex>> adj(n);
  for (std::size_t i = 0; i < from.size(); ++i) adj[from[i]].push_back(to[i]);
  std::vector<char> seen(n, 0);
  std::vector<NodeIndex> stack{start};
  seen[start] = 1;
  std::size_t count = 1;
  while (!stack.empty()) {
    const auto u = stack.back();
    stack.pop_back();
    for (auto v : adj[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++count;
        stack.push_back(v);
      }
    }
  }
  return count;
}

}  // namespace detail

// Forward search from node 0 on the graph and on its reverse.
inline bool is_strongly_connected(const Network& net) {
  const auto n = net.node_count();
  if (n <= 1) return true;
  std::vector<NodeIndex> from(net.link_count()), to(net.link_count());
  for (LinkIndex l = 0; l < net.link_count(); ++l) {
    from[l] = net.from(l);
    to[l] = net.to(l);
  }
  return detail::reach_count(n, from, to, 0) == n && detail::reach_count(n, to, from, 0) == n;
}

// Native JSON -----------------------------------------------------------------

inline nlohmann::json to_json(const Network& net) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : net.nodes()) nodes.push_back({{"id", n.id}, {"x", n.x}, {"y", n.y}});
  nlohmann::json links = nlohmann::json::array();
  for (const auto& l : net.links()) {
    links.push_back({{"id", l.id},
                     {"from", l.from},
                     {"to", l.to},
                     {"length_m", l.length_m},
                     {"lanes", l.lanes},
                     {"speed_limit_mps", l.speed_limit_mps}});
  }
  return {{"nodes", std::move(nodes)}, {"links", std::move(links)}};
}

inline Network network_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("nodes") || !doc.contains("links")) {
    throw FormatError("native network: expected an object with 'nodes' and 'links' arrays");
  }
  std::vector<Node> nodes;
  std::vector<Link> links;
  auto field = [](const nlohmann::json& rec, const char* key, const char* what, std::size_t idx) {
    if (!rec.contains(key)) throw FormatError(fmt::format("native network: {}[{}] missing field '{}'", what, idx, key));
    return rec.at(key);
  };
  try {
    const auto& jn = doc.at("nodes");
    for (std::size_t i = 0; i < jn.size(); ++i) {
      const auto& r = jn[i];
      Node n;
      n.id = field(r, "id", "nodes", i).get<std::string>();
      n.x = r.value("x", 0.0);
      n.y = r.value("y", 0.0);
      nodes.push_back(std::move(n));
    }
    const auto& jl = doc.at("links");
    for (std::size_t i = 0; i < jl.size(); ++i) {
      const auto& r = jl[i];
      Link l;
      l.id = field(r, "id", "links", i).get<std::string>();
      l.from = field(r, "from", "links", i).get<std::string>();
      l.to = field(r, "to", "links", i).get<std::string>();
      l.length_m = field(r, "length_m", "links", i).get<double>();
      l.lanes = field(r, "lanes", "links", i).get<int>();
      l.speed_limit_mps = field(r, "speed_limit_mps", "links", i).get<double>();
      links.push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("native network: {}", e.what()));
  }
  return Network(std::move(nodes), std::move(links));
}

// TNTP ------------------------------------------------------------------------

// TNTP carries no units or lane counts; the caller declares them.
struct TntpOptions {
  double length_unit_m = 1.0;  // meters per TNTP length unit
  double time_unit_s = 60.0;   // seconds per TNTP free-flow-time unit
  int lanes = 1;
};

/// Reads a TNTP net file: `<KEY> value` metadata lines up to `<END OF METADATA>`,
/// `~` comments, then whitespace-separated records
/// `init term capacity length free_flow_time ... ;`.
inline Network parse_tntp(std::istream& in, const TntpOptions& opts = {}) {
  std::string line;
  std::size_t line_no = 0;
  std::optional<long long> declared_nodes;
  std::optional<long long> declared_links;
  bool in_metadata = true;
  std::vector<Link> links;
  std::set<long long> seen_nodes;

  auto fail = [&](std::string_view field, std::string_view msg) {
    throw FormatError(fmt::format("tntp line {}: field '{}': {}", line_no, field, msg));
  };

  while (std::getline(in, line)) {
    ++line_no;
    std::string_view sv = csv::trim(line);
    if (sv.empty() || sv.front() == '~') continue;
    if (in_metadata && sv.front() == '<') {
      const auto close = sv.find('>');
      if (close == std::string_view::npos) fail("metadata", "unterminated tag");
      const auto key = sv.substr(1, close - 1);
      const auto value = csv::trim(sv.substr(close + 1));
      if (key == "END OF METADATA") {
        in_metadata = false;
      } else if (key == "NUMBER OF NODES" || key == "NUMBER OF LINKS") {
        long long v = 0;
        if (!csv::parse_int(value, v) || v < 0) fail(key, "expected a nonnegative integer");
        (key == "NUMBER OF NODES" ? declared_nodes : declared_links) = v;
      }
      continue;
    }
    in_metadata = false;
    if (sv.back() == ';') sv = csv::trim(sv.substr(0, sv.size() - 1));
    const auto f = csv::split_ws(sv);
    static constexpr const char* names[] = {"init_node", "term_node", "capacity", "length", "free_flow_time"};
    if (f.size() < 5) fail(names[std::min<std::size_t>(f.size(), 4)], "missing");
    long long a = 0, b = 0;
    double cap = 0, len = 0, fft = 0;
    if (!csv::parse_int(f[0], a)) fail(names[0], fmt::format("not an integer: '{}'", f[0]));
    if (!csv::parse_int(f[1], b)) fail(names[1], fmt::format("not an integer: '{}'", f[1]));
    if (!csv::parse_double(f[2], cap)) fail(names[2], fmt::format("not a number: '{}'", f[2]));
    if (!csv::parse_double(f[3], len)) fail(names[3], fmt::format("not a number: '{}'", f[3]));
    if (!csv::parse_double(f[4], fft)) fail(names[4], fmt::format("not a number: '{}'", f[4]));
    if (!(fft > 0)) fail(names[4], "must be > 0");
    Link l;
    l.id = std::to_string(links.size() + 1);
    l.from = std::to_string(a);
    l.to = std::to_string(b);
    l.length_m = len * opts.length_unit_m;
    l.lanes = opts.lanes;
    l.speed_limit_mps = l.length_m / (fft * opts.time_unit_s);
    l.capacity_vph = cap;
    seen_nodes.insert(a);
    seen_nodes.insert(b);
    links.push_back(std::move(l));
  }
  if (declared_links && static_cast<std::size_t>(*declared_links) != links.size()) {
    throw FormatError(fmt::format("tntp: <NUMBER OF LINKS> declares {} but {} records found",
                                  *declared_links, links.size()));
  }
  std::vector<Node> nodes;
  if (declared_nodes) {
    for (long long i = 1; i <= *declared_nodes; ++i) nodes.push_back({std::to_string(i), 0.0, 0.0});
  } else {
    for (auto id : seen_nodes) nodes.push_back({std::to_string(id), 0.0, 0.0});
  }
  return Network(std::move(nodes), std::move(links));
}

enum class NetworkFormat { NativeJson, Tntp };

inline NetworkFormat parse_network_format(std::string_view s) {
  if (s == "native-json" || s == "json") return NetworkFormat::NativeJson;
  if (s == "tntp") return NetworkFormat::Tntp;
  throw ParameterError(fmt::format("unknown network format '{}' (expected native-json or tntp)", s));
}

inline Network load_network(const std::filesystem::path& path, NetworkFormat format,
                            const TntpOptions& tntp = {}) {
  auto in = csv::open_input(path);
  if (format == NetworkFormat::Tntp) return parse_tntp(in, tntp);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return network_from_json(doc);
}

inline void save_network(const Network& net, const std::filesystem::path& path) {
  auto out = csv::open_output(path);
  out << to_json(net).dump(2) << '\n';
}

// Random generation -----------------------------------------------------------

struct RandomNetworkSpec {
  std::size_t n_junctions = 100;
  std::size_t n_edges = 278;
  double min_length_m = 200.0;
  double max_length_m = 1000.0;
  std::vector<int> lane_choices{1, 2};
  double speed_limit_mps = 13.89;
  std::uint64_t seed = 1;
};

/// Random strongly connected network: a random Hamiltonian cycle over all
/// junctions, then distinct extra edges drawn uniformly among the remaining
/// ordered pairs.
inline Network generate_random_network(const RandomNetworkSpec& spec) {
  const std::size_t n = spec.n_junctions;
  if (n < 2) throw ParameterError("random network: n_junctions must be >= 2");
  if (spec.n_edges < n) {
    throw ParameterError(fmt::format(
        "random network: {} edges cannot strongly connect {} junctions (need >= {})", spec.n_edges, n, n));
  }
  if (spec.n_edges > n * (n - 1)) {
    throw ParameterError(fmt::format("random network: {} edges exceed the {} possible ordered pairs",
                                     spec.n_edges, n * (n - 1)));
  }
  if (!(spec.min_length_m > 0) || spec.max_length_m < spec.min_length_m) {
    throw ParameterError("random network: length range must satisfy 0 < min <= max");
  }
  if (spec.lane_choices.empty() ||
      std::any_of(spec.lane_choices.begin(), spec.lane_choices.end(), [](int v) { return v < 1; })) {
    throw ParameterError("random network: lane_choices must be nonempty and >= 1");
  }
  if (!(spec.speed_limit_mps > 0)) throw ParameterError("random network: speed must be > 0");

  Rng rng(spec.seed);
  const double side = std::sqrt(static_cast<double>(n)) * 0.5 * (spec.min_length_m + spec.max_length_m);
  std::vector<Node> nodes(n);
  for (std::size_t i = 0; i < n; ++i) {
    nodes[i].id = fmt::format("n{}", i);
    nodes[i].x = rng.uniform(0.0, side);
    nodes[i].y = rng.uniform(0.0, side);
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order.begin(), order.end());

  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::set<std::pair<std::size_t, std::size_t>> used;
  for (std::size_t i = 0; i < n; ++i) {
    const auto e = std::make_pair(order[i], order[(i + 1) % n]);
    if (used.insert(e).second) edges.push_back(e);
  }
  const std::size_t all_pairs = n * (n - 1);
  if (all_pairs <= 4'000'000) {
    std::vector<std::pair<std::size_t, std::size_t>> rest;
    rest.reserve(all_pairs - used.size());
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b)
        if (a != b && !used.count({a, b})) rest.emplace_back(a, b);
    rng.shuffle(rest.begin(), rest.end());
    for (std::size_t i = 0; edges.size() < spec.n_edges; ++i) edges.push_back(rest[i]);
  } else {
    while (edges.size() < spec.n_edges) {
      const auto a = rng.below(n);
      const auto b = rng.below(n);
      if (a != b && used.insert({a, b}).second) edges.emplace_back(a, b);
    }
  }

  std::vector<Link> links;
  links.reserve(edges.size());
  for (std::size_t i = 0; i < edges.size(); ++i) {
    Link l;
    l.id = fmt::format("e{}", i);
    l.from = nodes[edges[i].first].id;
    l.to = nodes[edges[i].second].id;
    l.length_m = spec.min_length_m == spec.max_length_m ? spec.min_length_m
                                                          : rng.uniform(spec.min_length_m, spec.max_length_m);
    l.lanes = spec.lane_choices[rng.below(spec.lane_choices.size())];
    l.speed_limit_mps = spec.speed_limit_mps;
    links.push_back(std::move(l));
  }
  return Network(std::move(nodes), std::move(links));
}

}  // namespace mixdta
