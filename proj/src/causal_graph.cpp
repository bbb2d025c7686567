#include "gmethods/causal_graph.hpp"

#include <algorithm>
#include <deque>
#include <sstream>
#include <stdexcept>

namespace gmethods {

namespace {

void check_name(const std::string& name) {
  if (name.empty()) throw std::invalid_argument("vertex name must be nonempty");
  for (char c : name)
    if (std::isspace(static_cast<unsigned char>(c)))
      throw std::invalid_argument("vertex name may not contain whitespace: '" + name + "'");
}

}  // namespace

int CausalDag::add_vertex(const std::string& name, bool hidden) {
  check_name(name);
  if (index_.count(name))
    throw std::invalid_argument("duplicate vertex '" + name + "'");
  int id = size();
  verts_.push_back({name, hidden});
  parents_.emplace_back();
  children_.emplace_back();
  index_[name] = id;
  return id;
}

int CausalDag::index_of(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

int CausalDag::require(const std::string& name) const {
  int i = index_of(name);
  if (i < 0) throw std::invalid_argument("unknown vertex '" + name + "'");
  return i;
}

bool CausalDag::reachable(int from, int to) const {
  if (from == to) return true;
  std::vector<bool> seen(verts_.size(), false);
  std::deque<int> q{from};
  seen[static_cast<std::size_t>(from)] = true;
  while (!q.empty()) {
    int v = q.front();
    q.pop_front();
    for (int c : children_[static_cast<std::size_t>(v)]) {
      if (c == to) return true;
      if (!seen[static_cast<std::size_t>(c)]) {
        seen[static_cast<std::size_t>(c)] = true;
        q.push_back(c);
      }
    }
  }
  return false;
}

void CausalDag::add_edge(int from, int to) {
  if (from < 0 || from >= size() || to < 0 || to >= size())
    throw std::invalid_argument("edge endpoint out of range");
  if (from == to)
    throw std::invalid_argument("self-loop on '" + verts_[static_cast<std::size_t>(from)].name + "'");
  auto& ch = children_[static_cast<std::size_t>(from)];
  if (std::find(ch.begin(), ch.end(), to) != ch.end())
    throw std::invalid_argument("duplicate edge " + verts_[static_cast<std::size_t>(from)].name +
                                " -> " + verts_[static_cast<std::size_t>(to)].name);
  if (reachable(to, from))
    throw std::invalid_argument("edge " + verts_[static_cast<std::size_t>(from)].name + " -> " +
                                verts_[static_cast<std::size_t>(to)].name + " would create a cycle");
  ch.push_back(to);
  parents_[static_cast<std::size_t>(to)].push_back(from);
}

void CausalDag::add_edge(const std::string& from, const std::string& to) {
  add_edge(require(from), require(to));
}

std::vector<std::pair<int, int>> CausalDag::edges() const {
  std::vector<std::pair<int, int>> out;
  for (int v = 0; v < size(); ++v)
    for (int c : children_[static_cast<std::size_t>(v)]) out.emplace_back(v, c);
  std::sort(out.begin(), out.end());
  return out;
}

std::set<int> CausalDag::ancestors(const std::set<int>& of) const {
  std::set<int> out;
  std::deque<int> q(of.begin(), of.end());
  while (!q.empty()) {
    int v = q.front();
    q.pop_front();
    for (int p : parents_[static_cast<std::size_t>(v)]) {
      if (!out.count(p) && !of.count(p)) {
        out.insert(p);
        q.push_back(p);
      }
    }
  }
  return out;
}

std::set<int> CausalDag::descendants(const std::set<int>& of) const {
  std::set<int> out;
  std::deque<int> q(of.begin(), of.end());
  while (!q.empty()) {
    int v = q.front();
    q.pop_front();
    for (int c : children_[static_cast<std::size_t>(v)]) {
      if (!out.count(c) && !of.count(c)) {
        out.insert(c);
        q.push_back(c);
      }
    }
  }
  return out;
}

std::vector<int> CausalDag::topological_order() const {
  std::vector<int> indeg(verts_.size(), 0);
  for (int v = 0; v < size(); ++v)
    for (int c : children_[static_cast<std::size_t>(v)]) ++indeg[static_cast<std::size_t>(c)];
  // Min-index tie break keeps the order deterministic.
  std::set<int> ready;
  for (int v = 0; v < size(); ++v)
    if (indeg[static_cast<std::size_t>(v)] == 0) ready.insert(v);
  std::vector<int> order;
  while (!ready.empty()) {
    int v = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(v);
    for (int c : children_[static_cast<std::size_t>(v)])
      if (--indeg[static_cast<std::size_t>(c)] == 0) ready.insert(c);
  }
  return order;
}

// ---------------------------------------------------------------------------
// d-separation via reachability over (vertex, arrival-direction) states.

namespace {

struct DsepContext {
  const CausalDag* g;
  const std::vector<bool>* fixed;  // may be null (plain DAG)
};

bool is_fixed(const DsepContext& ctx, int v) {
  return ctx.fixed && (*ctx.fixed)[static_cast<std::size_t>(v)];
}

std::set<int> resolve_set(const DsepContext& ctx, const std::vector<std::string>& names,
                          const char* what, bool conditioning, const DsepOptions& opt) {
  std::set<int> out;
  for (const auto& n : names) {
    int v = ctx.g->require(n);
    if (is_fixed(ctx, v))
      throw std::invalid_argument(std::string(what) + " vertex '" + n +
                                  "' is fixed; d-separation queries apply to random vertices");
    if (conditioning && ctx.g->vertex(v).hidden && !opt.allow_hidden_conditioning)
      throw std::invalid_argument("conditioning set contains hidden vertex '" + n +
                                  "'; such conditioning is unavailable in observed data");
    if (!out.insert(v).second)
      throw std::invalid_argument(std::string("duplicate vertex '") + n + "' in query");
  }
  return out;
}

bool dsep_impl(const DsepContext& ctx, const IndependenceQuery& q, const DsepOptions& opt) {
  if (q.left.empty() || q.right.empty())
    throw std::invalid_argument("d-separation query needs nonempty left and right sets");
  std::set<int> X = resolve_set(ctx, q.left, "left", false, opt);
  std::set<int> Y = resolve_set(ctx, q.right, "right", false, opt);
  std::set<int> Z = resolve_set(ctx, q.given, "conditioning", true, opt);
  for (int v : X)
    if (Y.count(v) || Z.count(v))
      throw std::invalid_argument("query sets must be disjoint ('" +
                                  ctx.g->vertex(v).name + "' repeats)");
  for (int v : Y)
    if (Z.count(v))
      throw std::invalid_argument("query sets must be disjoint ('" +
                                  ctx.g->vertex(v).name + "' repeats)");

  std::set<int> anZ = ctx.g->ancestors(Z);
  for (int z : Z) anZ.insert(z);

  const CausalDag& g = *ctx.g;
  // State = vertex * 2 + dir; dir 0: arrived along an edge into the vertex
  // (from a parent), dir 1: arrived against an edge (from a child).
  std::vector<bool> seen(static_cast<std::size_t>(g.size()) * 2, false);
  std::deque<int> queue;
  auto push = [&](int v, int dir) {
    if (is_fixed(ctx, v)) return;  // fixed vertices block every trail
    int s = v * 2 + dir;
    if (!seen[static_cast<std::size_t>(s)]) {
      seen[static_cast<std::size_t>(s)] = true;
      queue.push_back(s);
    }
  };
  for (int x : X) {
    for (int c : g.children(x)) push(c, 0);
    for (int p : g.parents(x)) push(p, 1);
  }
  while (!queue.empty()) {
    int s = queue.front();
    queue.pop_front();
    int v = s / 2, dir = s % 2;
    if (Y.count(v)) return false;  // active trail reached the right set
    bool in_z = Z.count(v) != 0;
    if (dir == 0) {
      // prev -> v: continue as a chain through children, or as a collider
      // back up to parents when v is an ancestor of the conditioning set.
      if (!in_z)
        for (int c : g.children(v)) push(c, 0);
      if (anZ.count(v))
        for (int p : g.parents(v)) push(p, 1);
    } else {
      // prev <- v: fork to children or chain up to parents, both need v
      // unconditioned.
      if (!in_z) {
        for (int c : g.children(v)) push(c, 0);
        for (int p : g.parents(v)) push(p, 1);
      }
    }
  }
  return true;
}

}  // namespace

bool d_separated(const CausalDag& g, const IndependenceQuery& q, DsepOptions opt) {
  DsepContext ctx{&g, nullptr};
  return dsep_impl(ctx, q, opt);
}

bool d_separated(const Swig& g, const IndependenceQuery& q, DsepOptions opt) {
  DsepContext ctx{&g.graph, &g.fixed};
  return dsep_impl(ctx, q, opt);
}

// ---------------------------------------------------------------------------
// Node splitting.

int Swig::random_index_of_base(const std::string& base_name) const {
  for (int v = 0; v < graph.size(); ++v)
    if (!fixed[static_cast<std::size_t>(v)] && base[static_cast<std::size_t>(v)] == base_name)
      return v;
  return -1;
}

Swig swig_from_dag(const CausalDag& g,
                   const std::vector<std::pair<std::string, std::string>>& assignment) {
  if (assignment.empty())
    throw std::invalid_argument("intervention assignment must be nonempty");
  std::map<int, std::string> value_of;  // source vertex -> constant label
  std::set<std::string> labels;
  for (const auto& [name, value] : assignment) {
    int v = g.require(name);
    if (g.vertex(v).hidden)
      throw std::invalid_argument("cannot intervene on hidden vertex '" + name + "'");
    if (value_of.count(v))
      throw std::invalid_argument("vertex '" + name + "' intervened on twice");
    check_name(value);
    if (!labels.insert(value).second)
      throw std::invalid_argument("constant label '" + value + "' used twice");
    value_of[v] = value;
  }

  // Split first with placeholder names, then relabel once the fixed-node
  // reachability (which decides the counterfactual suffixes) is known.
  int n = g.size();
  std::vector<int> random_id(static_cast<std::size_t>(n));
  std::map<int, int> fixed_id;  // source vertex -> fixed node id
  CausalDag out;
  std::vector<bool> fixed_flag;
  std::vector<std::string> base_name;
  std::vector<std::string> tmp_names;
  for (int v = 0; v < n; ++v) {
    std::string placeholder = "r" + std::to_string(v);
    random_id[static_cast<std::size_t>(v)] = out.add_vertex(placeholder, g.vertex(v).hidden);
    fixed_flag.push_back(false);
    base_name.push_back(g.vertex(v).name);
    if (value_of.count(v)) {
      fixed_id[v] = out.add_vertex("f" + std::to_string(v));
      fixed_flag.push_back(true);
      base_name.push_back(g.vertex(v).name);
    }
  }
  for (const auto& [from, to] : g.edges()) {
    int src = value_of.count(from) ? fixed_id[from] : random_id[static_cast<std::size_t>(from)];
    out.add_edge(src, random_id[static_cast<std::size_t>(to)]);
  }

  // Suffix of a random node: constant labels of the fixed nodes that reach it,
  // ordered by the source declaration order of the treatments.
  std::vector<std::set<int>> reached_by(static_cast<std::size_t>(out.size()));
  for (const auto& [src_v, fid] : fixed_id) {
    std::deque<int> q{fid};
    std::set<int> seen{fid};
    while (!q.empty()) {
      int v = q.front();
      q.pop_front();
      for (int c : out.children(v))
        if (seen.insert(c).second) q.push_back(c);
    }
    seen.erase(fid);
    for (int v : seen) reached_by[static_cast<std::size_t>(v)].insert(src_v);
  }

  CausalDag relabeled;
  for (int v = 0; v < out.size(); ++v) {
    std::string label;
    if (fixed_flag[static_cast<std::size_t>(v)]) {
      label = value_of[g.require(base_name[static_cast<std::size_t>(v)])];
    } else {
      label = base_name[static_cast<std::size_t>(v)];
      const auto& sufs = reached_by[static_cast<std::size_t>(v)];
      if (!sufs.empty()) {
        label += '(';
        bool first = true;
        for (int s : sufs) {  // std::set over source indices = declaration order
          if (!first) label += ',';
          label += value_of[s];
          first = false;
        }
        label += ')';
      }
    }
    relabeled.add_vertex(label, out.vertex(v).hidden);  // throws on label collisions
  }
  for (const auto& [from, to] : out.edges()) relabeled.add_edge(from, to);

  Swig swig;
  swig.graph = std::move(relabeled);
  swig.fixed = std::move(fixed_flag);
  swig.base = std::move(base_name);
  swig.assignment = assignment;
  return swig;
}

Swig swig_from_dag(const Swig& g,
                   const std::vector<std::pair<std::string, std::string>>& assignment) {
  auto canon = [](std::vector<std::pair<std::string, std::string>> a) {
    std::sort(a.begin(), a.end());
    return a;
  };
  if (canon(assignment) == canon(g.assignment)) return g;  // idempotent re-intervention
  throw std::invalid_argument(
      "re-intervening on a SWIG with a different assignment is not supported; "
      "intervene on the source DAG instead");
}

// ---------------------------------------------------------------------------
// Text format.

namespace {

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> toks;
  std::stringstream ss(line);
  std::string t;
  while (ss >> t) toks.push_back(t);
  return toks;
}

// Shared line reader; node_extra handles format-specific attributes and
// returns false on unknown ones.
template <typename NodeFn>
void parse_lines(const std::string& text, const std::string& header, CausalDag* g,
                 NodeFn node_extra) {
  std::stringstream ss(text);
  std::string line;
  bool header_seen = false;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto toks = tokenize(line);
    if (toks.empty() || toks[0][0] == '#') continue;
    if (!header_seen) {
      if (toks.size() != 1 || toks[0] != header)
        throw std::invalid_argument("line " + std::to_string(lineno) + ": expected header '" +
                                    header + "'");
      header_seen = true;
      continue;
    }
    if (toks[0] == "node") {
      if (toks.size() < 2)
        throw std::invalid_argument("line " + std::to_string(lineno) + ": node needs a name");
      bool hidden = false;
      std::vector<std::string> extra;
      for (std::size_t i = 2; i < toks.size(); ++i) {
        if (toks[i] == "hidden")
          hidden = true;
        else
          extra.push_back(toks[i]);
      }
      int id = g->add_vertex(toks[1], hidden);
      node_extra(id, toks[1], extra, lineno);
    } else if (toks[0] == "edge") {
      if (toks.size() != 3)
        throw std::invalid_argument("line " + std::to_string(lineno) +
                                    ": edge needs exactly two names");
      g->add_edge(toks[1], toks[2]);
    } else {
      throw std::invalid_argument("line " + std::to_string(lineno) + ": unknown directive '" +
                                  toks[0] + "'");
    }
  }
  if (!header_seen) throw std::invalid_argument("empty graph text (missing '" + header + "' header)");
}

}  // namespace

CausalDag CausalDag::parse(const std::string& text) {
  CausalDag g;
  parse_lines(text, "dag", &g,
              [](int, const std::string&, const std::vector<std::string>& extra, std::size_t lineno) {
                if (!extra.empty())
                  throw std::invalid_argument("line " + std::to_string(lineno) +
                                              ": unknown node attribute '" + extra[0] + "'");
              });
  return g;
}

std::string CausalDag::format() const {
  std::ostringstream out;
  out << "dag\n";
  for (int v = 0; v < size(); ++v) {
    out << "node " << vertex(v).name;
    if (vertex(v).hidden) out << " hidden";
    out << '\n';
  }
  for (const auto& [from, to] : edges())
    out << "edge " << vertex(from).name << ' ' << vertex(to).name << '\n';
  return out.str();
}

Swig Swig::parse(const std::string& text) {
  Swig s;
  std::vector<bool> fixed;
  std::vector<std::string> base;
  parse_lines(text, "swig", &s.graph,
              [&](int id, const std::string& name, const std::vector<std::string>& extra,
                  std::size_t lineno) {
                fixed.resize(static_cast<std::size_t>(id) + 1, false);
                base.resize(static_cast<std::size_t>(id) + 1);
                base[static_cast<std::size_t>(id)] = name;
                for (const auto& attr : extra) {
                  if (attr == "fixed")
                    fixed[static_cast<std::size_t>(id)] = true;
                  else if (attr.rfind("base=", 0) == 0)
                    base[static_cast<std::size_t>(id)] = attr.substr(5);
                  else
                    throw std::invalid_argument("line " + std::to_string(lineno) +
                                                ": unknown node attribute '" + attr + "'");
                }
              });
  fixed.resize(static_cast<std::size_t>(s.graph.size()), false);
  base.resize(static_cast<std::size_t>(s.graph.size()));
  s.fixed = std::move(fixed);
  s.base = std::move(base);
  for (int v = 0; v < s.graph.size(); ++v) {
    if (s.fixed[static_cast<std::size_t>(v)]) {
      if (!s.graph.parents(v).empty())
        throw std::invalid_argument("fixed vertex '" + s.graph.vertex(v).name +
                                    "' may not have incoming edges");
      s.assignment.emplace_back(s.base[static_cast<std::size_t>(v)], s.graph.vertex(v).name);
    }
  }
  return s;
}

std::string Swig::format() const {
  std::ostringstream out;
  out << "swig\n";
  for (int v = 0; v < graph.size(); ++v) {
    out << "node " << graph.vertex(v).name;
    if (graph.vertex(v).hidden) out << " hidden";
    if (fixed[static_cast<std::size_t>(v)]) out << " fixed";
    if (base[static_cast<std::size_t>(v)] != graph.vertex(v).name)
      out << " base=" << base[static_cast<std::size_t>(v)];
    out << '\n';
  }
  for (const auto& [from, to] : graph.edges())
    out << "edge " << graph.vertex(from).name << ' ' << graph.vertex(to).name << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------

RandomizationStatus check_randomization(const CausalDag& g) {
  for (const char* req : {"A1", "A2", "Y"}) {
    int v = g.require(req);
    if (g.vertex(v).hidden)
      throw std::invalid_argument(std::string("designated vertex '") + req +
                                  "' must be observed");
  }
  bool has_l = g.index_of("L") >= 0;
  if (has_l && g.vertex(g.index_of("L")).hidden)
    throw std::invalid_argument("designated vertex 'L' must be observed");

  Swig s = swig_from_dag(g, {{"A1", "a1"}, {"A2", "a2"}});
  auto label = [&](const std::string& base) {
    int v = s.random_index_of_base(base);
    return s.graph.vertex(v).name;
  };
  std::string Yc = label("Y"), A1c = label("A1"), A2c = label("A2");
  std::vector<std::string> given{A1c};
  if (has_l) given.push_back(label("L"));

  RandomizationStatus st;
  st.full = d_separated(s, {{Yc}, {A1c, A2c}, {}});
  bool y_indep_a2 = d_separated(s, {{Yc}, {A2c}, given});
  std::vector<std::string> joint{Yc};
  if (has_l) joint.push_back(label("L"));
  st.sequential_joint = d_separated(s, {joint, {A1c}, {}}) && y_indep_a2;
  st.y_only = d_separated(s, {{Yc}, {A1c}, {}}) && y_indep_a2;
  return st;
}

}  // namespace gmethods
