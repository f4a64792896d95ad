#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>

#include <spdlog/spdlog.h>

#include "stratus/evalkit.hpp"
#include "stratus/textmatch.hpp"

namespace stratus::eval {

double sae(double pred, double truth, double sigma) {
  if (!(sigma > 0.0)) throw Error("bad_sigma", "standard deviation must be positive");
  return std::abs(pred - truth) / sigma;
}

std::vector<double> quantiles(std::vector<double> values, const std::vector<double>& qs) {
  if (values.empty()) throw Error("empty_input", "quantiles of an empty sample");
  std::sort(values.begin(), values.end());
  std::vector<double> out;
  out.reserve(qs.size());
  const double last = static_cast<double>(values.size() - 1);
  for (double q : qs) {
    if (!(q >= 0.0 && q <= 1.0)) throw Error("bad_quantile", "quantile level outside [0, 1]");
    const double h = last * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    out.push_back(values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]));
  }
  return out;
}

double hours_abs_error(double pred_h, double truth_h) { return std::abs(pred_h - truth_h); }

double relative_error(double pred, double truth) {
  return truth == 0.0 ? std::abs(pred) : std::abs(pred - truth) / std::abs(truth);
}

// ---------------------------------------------------------------------------

AliasTable AliasTable::parse(const std::string& text) {
  AliasTable t;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error("bad_alias", "alias line " + std::to_string(n) + " lacks '='");
    const std::string alias = text::normalize(line.substr(0, eq));
    std::string canon = line.substr(eq + 1);
    canon.erase(0, canon.find_first_not_of(" \t"));
    canon.erase(canon.find_last_not_of(" \t\r") + 1);
    if (alias.empty() || canon.empty())
      throw Error("bad_alias", "alias line " + std::to_string(n) + " has an empty side");
    t.map_[alias] = canon;
  }
  return t;
}

AliasTable AliasTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io_error", "cannot read alias table " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::optional<std::string> AliasTable::lookup(const std::string& name) const {
  auto it = map_.find(text::normalize(name));
  if (it == map_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> match_location(const std::string& extracted, const geo::GeoIndex& index,
                                          const AliasTable& aliases, double threshold) {
  if (auto canon = aliases.lookup(extracted)) {
    if (const auto* f = index.find_by_normalized_name(text::normalize(*canon))) return f->name;
  }
  try {
    return geo::geocode(index, extracted, threshold).name;
  } catch (const Error&) {
    return std::nullopt;
  }
}

// ---------------------------------------------------------------------------
// Transport

namespace {

void check_problem(const std::vector<double>& supply, const std::vector<double>& demand,
                   const std::vector<double>& cost) {
  if (supply.empty() || demand.empty()) throw Error("empty_support", "transport between empty supports");
  if (cost.size() != supply.size() * demand.size()) throw Error("dimension_mismatch", "cost matrix shape");
}

}  // namespace

double transport_cost_ssp(const std::vector<double>& supply, const std::vector<double>& demand,
                          const std::vector<double>& cost) {
  check_problem(supply, demand, cost);
  const std::size_t n = supply.size(), m = demand.size();
  const double total = std::accumulate(supply.begin(), supply.end(), 0.0);
  const double eps = 1e-15 * std::max(1.0, total);

  // Successive shortest paths on the bipartite residual graph. Nodes 0..n-1
  // are sources, n..n+m-1 sinks; forward arcs are uncapacitated, reverse
  // arcs carry the current flow.
  std::vector<double> s = supply, d = demand, flow(n * m, 0.0), pot(n + m, 0.0);
  std::vector<double> dist(n + m);
  std::vector<std::ptrdiff_t> prev(n + m);
  std::vector<char> done(n + m);
  const double inf = std::numeric_limits<double>::infinity();
  double remaining = total;

  while (remaining > eps * static_cast<double>(n + m)) {
    std::fill(dist.begin(), dist.end(), inf);
    std::fill(prev.begin(), prev.end(), -1);
    std::fill(done.begin(), done.end(), 0);
    for (std::size_t i = 0; i < n; ++i)
      if (s[i] > eps) dist[i] = 0.0;
    std::ptrdiff_t target = -1;
    for (;;) {
      std::ptrdiff_t x = -1;
      for (std::size_t k = 0; k < n + m; ++k)
        if (!done[k] && dist[k] < inf && (x < 0 || dist[k] < dist[static_cast<std::size_t>(x)]))
          x = static_cast<std::ptrdiff_t>(k);
      if (x < 0) break;
      const auto ux = static_cast<std::size_t>(x);
      done[ux] = 1;
      if (ux >= n && d[ux - n] > eps) {
        target = x;
        break;
      }
      if (ux < n) {
        for (std::size_t j = 0; j < m; ++j) {
          const double rc = std::max(0.0, cost[ux * m + j] + pot[ux] - pot[n + j]);
          if (dist[ux] + rc < dist[n + j]) {
            dist[n + j] = dist[ux] + rc;
            prev[n + j] = x;
          }
        }
      } else {
        const std::size_t j = ux - n;
        for (std::size_t i = 0; i < n; ++i) {
          if (flow[i * m + j] <= eps) continue;
          const double rc = std::max(0.0, -cost[i * m + j] + pot[ux] - pot[i]);
          if (dist[ux] + rc < dist[i]) {
            dist[i] = dist[ux] + rc;
            prev[i] = x;
          }
        }
      }
    }
    if (target < 0) throw Error("unbalanced", "supply and demand totals differ");

    const double reach = dist[static_cast<std::size_t>(target)];
    for (std::size_t k = 0; k < n + m; ++k) pot[k] += std::min(dist[k], reach);

    // Bottleneck along the path back to its starting source.
    double amount = d[static_cast<std::size_t>(target) - n];
    std::size_t x = static_cast<std::size_t>(target);
    while (prev[x] >= 0) {
      const auto p = static_cast<std::size_t>(prev[x]);
      if (p >= n) amount = std::min(amount, flow[x * m + (p - n)]);  // reverse arc sink p -> source x
      x = p;
    }
    amount = std::min(amount, s[x]);
    s[x] -= amount;
    if (s[x] <= eps) s[x] = 0.0;
    x = static_cast<std::size_t>(target);
    d[x - n] -= amount;
    if (d[x - n] <= eps) d[x - n] = 0.0;
    while (prev[x] >= 0) {
      const auto p = static_cast<std::size_t>(prev[x]);
      if (p < n) {
        flow[p * m + (x - n)] += amount;
      } else {
        double& f = flow[x * m + (p - n)];
        f -= amount;
        if (f <= eps) f = 0.0;
      }
      x = p;
    }
    remaining -= amount;
    if (amount <= 0.0) {
      // Only reachable through rounding; settle the leftovers greedily.
      remaining = std::accumulate(s.begin(), s.end(), 0.0);
      if (remaining <= eps * static_cast<double>(n + m)) break;
    }
  }
  double c = 0.0;
  for (std::size_t k = 0; k < n * m; ++k) c += flow[k] * cost[k];
  return c;
}

namespace {

struct TreeArc {
  std::size_t i, j;
  double flow;
};

// Transportation simplex on the bipartite spanning-tree basis. Returns
// nullopt when the pivot guard trips so the caller can fall back.
std::optional<double> network_simplex(const std::vector<double>& supply, const std::vector<double>& demand,
                                      const std::vector<double>& cost) {
  const std::size_t n = supply.size(), m = demand.size(), nodes = n + m, arcs = n * m;
  double max_cost = 0.0;
  for (double c : cost) max_cost = std::max(max_cost, std::abs(c));
  const double tol = 1e-12 * std::max(1.0, max_cost);

  // Greedy start: cheapest arcs first. Each assignment exhausts a row or a
  // column exactly, so the chosen arcs form a forest.
  std::vector<std::size_t> order(arcs);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cost[a] < cost[b]; });
  std::vector<double> s = supply, d = demand;
  std::vector<TreeArc> tree;
  std::vector<std::size_t> uf(nodes);
  std::iota(uf.begin(), uf.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (uf[x] != x) x = uf[x] = uf[uf[x]];
    return x;
  };
  for (std::size_t k : order) {
    const std::size_t i = k / m, j = k % m;
    if (s[i] <= 0.0 || d[j] <= 0.0) continue;
    const double q = std::min(s[i], d[j]);
    if (q == s[i]) s[i] = 0.0;
    else s[i] -= q;
    if (q == d[j]) d[j] = 0.0;
    else d[j] -= q;
    tree.push_back({i, j, q});
    uf[find(i)] = find(n + j);
  }
  // Zero-flow arcs join the forest into a spanning tree.
  for (std::size_t k : order) {
    if (tree.size() == nodes - 1) break;
    const std::size_t i = k / m, j = k % m;
    if (find(i) == find(n + j)) continue;
    tree.push_back({i, j, 0.0});
    uf[find(i)] = find(n + j);
  }

  std::vector<std::vector<std::size_t>> adj(nodes);
  for (std::size_t a = 0; a < tree.size(); ++a) {
    adj[tree[a].i].push_back(a);
    adj[n + tree[a].j].push_back(a);
  }
  std::vector<double> pot(nodes);
  std::vector<std::size_t> parent(nodes), parent_arc(nodes), depth(nodes), queue(nodes);
  auto refresh = [&] {
    // Row potentials u_i and column potentials v_j with u_i + v_j = c_ij on tree arcs.
    std::vector<char> seen(nodes, 0);
    std::size_t head = 0, tail = 0;
    queue[tail++] = 0;
    seen[0] = 1;
    pot[0] = 0.0;
    depth[0] = 0;
    parent[0] = 0;
    while (head < tail) {
      const std::size_t x = queue[head++];
      for (std::size_t a : adj[x]) {
        const std::size_t y = x < n ? n + tree[a].j : tree[a].i;
        if (seen[y]) continue;
        seen[y] = 1;
        pot[y] = cost[tree[a].i * m + tree[a].j] - pot[x];
        parent[y] = x;
        parent_arc[y] = a;
        depth[y] = depth[x] + 1;
        queue[tail++] = y;
      }
    }
  };

  const std::size_t block = std::max<std::size_t>(64, static_cast<std::size_t>(std::sqrt(static_cast<double>(arcs))));
  const std::size_t guard = 50 * arcs + 1000;
  std::size_t next = 0;
  std::vector<std::size_t> path_arcs;
  for (std::size_t iter = 0;; ++iter) {
    if (iter > guard) return std::nullopt;
    refresh();
    // Block pricing: most negative reduced cost within the first block that has one.
    std::size_t enter = arcs;
    double best = -tol;
    for (std::size_t scanned = 0; scanned < arcs;) {
      const std::size_t stop = std::min(arcs, scanned + block);
      for (; scanned < stop; ++scanned) {
        const std::size_t k = (next + scanned) % arcs;
        const double rc = cost[k] - pot[k / m] - pot[n + k % m];
        if (rc < best) {
          best = rc;
          enter = k;
        }
      }
      if (enter != arcs) break;
    }
    if (enter == arcs) break;
    next = (enter + 1) % arcs;

    // Cycle: entering arc, then the tree path from column j back to row i.
    const std::size_t ei = enter / m, ej = enter % m;
    std::size_t a = n + ej, b = ei;
    std::vector<std::size_t> from_col, from_row;
    while (depth[a] > depth[b]) {
      from_col.push_back(parent_arc[a]);
      a = parent[a];
    }
    while (depth[b] > depth[a]) {
      from_row.push_back(parent_arc[b]);
      b = parent[b];
    }
    while (a != b) {
      from_col.push_back(parent_arc[a]);
      a = parent[a];
      from_row.push_back(parent_arc[b]);
      b = parent[b];
    }
    path_arcs = from_col;
    path_arcs.insert(path_arcs.end(), from_row.rbegin(), from_row.rend());

    double theta = std::numeric_limits<double>::infinity();
    std::size_t leave_pos = 0;
    for (std::size_t p = 0; p < path_arcs.size(); p += 2) {
      if (tree[path_arcs[p]].flow < theta) {
        theta = tree[path_arcs[p]].flow;
        leave_pos = p;
      }
    }
    for (std::size_t p = 0; p < path_arcs.size(); ++p) {
      double& f = tree[path_arcs[p]].flow;
      f = p % 2 == 0 ? f - theta : f + theta;
      if (f < 0.0) f = 0.0;
    }
    const std::size_t slot = path_arcs[leave_pos];
    auto unlink = [&](std::size_t node) {
      auto& v = adj[node];
      v.erase(std::find(v.begin(), v.end(), slot));
    };
    unlink(tree[slot].i);
    unlink(n + tree[slot].j);
    tree[slot] = {ei, ej, theta};
    adj[ei].push_back(slot);
    adj[n + ej].push_back(slot);
  }
  double c = 0.0;
  for (const auto& t : tree) c += t.flow * cost[t.i * m + t.j];
  return c;
}

}  // namespace

double transport_cost(const std::vector<double>& supply, const std::vector<double>& demand,
                      const std::vector<double>& cost) {
  check_problem(supply, demand, cost);
  if (auto c = network_simplex(supply, demand, cost)) return *c;
  spdlog::warn("network simplex hit its pivot guard; using shortest paths");
  return transport_cost_ssp(supply, demand, cost);
}

namespace {

std::vector<std::pair<std::size_t, double>> top_support(const geo::RegionDistribution& dist, std::size_t k) {
  std::vector<std::pair<std::size_t, double>> cells;
  for (std::size_t c = 0; c < dist.mass.size(); ++c)
    if (dist.mass[c] > 0.0) cells.emplace_back(c, dist.mass[c]);
  if (cells.empty()) throw Error("empty_support", "distribution for '" + dist.feature_id + "' has no mass");
  std::stable_sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (cells.size() > k) cells.resize(k);
  double total = 0.0;
  for (const auto& [c, m] : cells) total += m;
  for (auto& [c, m] : cells) m /= total;
  return cells;
}

}  // namespace

double location_emd(const geo::RegionDistribution& pred, const geo::RegionDistribution& ref,
                    const grid::GridSpec& spec, std::size_t k) {
  if (pred.mass.size() != spec.n_cells() || ref.mass.size() != spec.n_cells())
    throw Error("grid_mismatch", "distributions are not on the evaluation grid");
  auto a = top_support(pred, k);
  auto b = top_support(ref, k);
  // With a metric ground cost, mass shared by a cell can stay in place.
  std::map<std::size_t, double*> in_b;
  for (auto& [c, m] : b) in_b[c] = &m;
  for (auto& [c, m] : a) {
    auto it = in_b.find(c);
    if (it == in_b.end()) continue;
    const double common = std::min(m, *it->second);
    m -= common;
    *it->second -= common;
  }
  auto drop_empty = [](auto& cells) {
    cells.erase(std::remove_if(cells.begin(), cells.end(), [](const auto& e) { return e.second <= 1e-15; }),
                cells.end());
  };
  drop_empty(a);
  drop_empty(b);
  if (a.empty() || b.empty()) return 0.0;
  std::vector<double> supply, demand, cost(a.size() * b.size());
  for (const auto& [c, m] : a) supply.push_back(m);
  for (const auto& [c, m] : b) demand.push_back(m);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      cost[i * b.size() + j] = a[i].first == b[j].first ? 0.0 : geo::cell_distance_km(spec, a[i].first, b[j].first);
  return transport_cost(supply, demand, cost);
}

UnionDistribution union_distribution(const std::vector<std::string>& names, const geo::GeoIndex& index,
                                     const AliasTable& aliases) {
  UnionDistribution u;
  u.dist.n_lat = index.spec().n_lat();
  u.dist.n_lon = index.spec().n_lon();
  u.dist.mass.assign(index.spec().n_cells(), 0.0);
  std::vector<char> in(index.spec().n_cells(), 0);
  for (const auto& name : names) {
    const auto canon = match_location(name, index, aliases);
    const geo::GeoFeature* f = canon ? index.find_by_normalized_name(text::normalize(*canon)) : nullptr;
    if (!f) {
      spdlog::info("unmatched location '{}' contributes no mass", name);
      u.unmatched.push_back(name);
      continue;
    }
    u.matched.push_back(f->name);
    for (std::size_t c : index.cells_of(f->id)) in[c] = 1;
  }
  u.dist.feature_id = "union";
  double total = 0.0;
  for (std::size_t c = 0; c < in.size(); ++c)
    if (in[c]) total += index.weights().values[c];
  if (total > 0.0)
    for (std::size_t c = 0; c < in.size(); ++c)
      if (in[c]) u.dist.mass[c] = index.weights().values[c] / total;
  return u;
}

ExtremeScore extreme_scores(const std::vector<std::string>& pred, const std::vector<std::string>& ref,
                            const geo::GeoIndex& index, const AliasTable& aliases) {
  ExtremeScore s;
  s.predicted = !pred.empty();
  s.occurred = !ref.empty();
  if (!s.predicted && !s.occurred) return s;
  if (s.predicted != s.occurred) {
    s.emd_km = std::numeric_limits<double>::infinity();
    return s;
  }
  const auto p = union_distribution(pred, index, aliases);
  const auto r = union_distribution(ref, index, aliases);
  if (p.matched.empty() || r.matched.empty()) {
    s.emd_km = std::numeric_limits<double>::infinity();
    return s;
  }
  s.emd_km = location_emd(p.dist, r.dist, index.spec());
  return s;
}

double occurrence_f1(const std::vector<ExtremeScore>& batch) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& s : batch) {
    tp += s.predicted && s.occurred;
    fp += s.predicted && !s.occurred;
    fn += !s.predicted && s.occurred;
  }
  if (tp + fp + fn == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

// ---------------------------------------------------------------------------
// Correctness

const char* to_string(Rule rule) {
  switch (rule) {
    case Rule::sae: return "sae";
    case Rule::relative: return "relative";
    case Rule::location: return "location";
    case Rule::emd: return "emd";
    case Rule::boolean: return "boolean";
    case Rule::discussion: return "discussion";
    case Rule::hours: return "hours";
  }
  return "unknown";
}

Rule parse_rule(const std::string& text) {
  for (Rule r : {Rule::sae, Rule::relative, Rule::location, Rule::emd, Rule::boolean, Rule::discussion, Rule::hours})
    if (text == to_string(r)) return r;
  throw Error("bad_rule", "unknown correctness rule '" + text + "'");
}

bool correctness(Rule rule, double v) {
  switch (rule) {
    case Rule::sae: return v < kSaeThreshold;
    case Rule::relative: return v < kRelativeThreshold;
    case Rule::emd: return v < kEmdThresholdKm;
    case Rule::discussion: return v > kDiscussionThreshold;
    case Rule::hours: return v == 0.0;
    case Rule::location:
    case Rule::boolean: return v == 1.0;
  }
  return false;
}

}  // namespace stratus::eval
