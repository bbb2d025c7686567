#pragma once

// Reference d-separation by exhaustive enumeration of simple paths. Only
// suitable for small graphs (everything here is <= 8 vertices); the library's
// reachability algorithm is checked against this implementation.

#include <set>
#include <vector>

#include "gmethods/causal_graph.hpp"

namespace gmethods::testing {

struct PathOracle {
  const CausalDag& g;
  const std::vector<bool>* fixed = nullptr;  // optional SWIG fixed mask
  std::set<int> Z;
  std::set<int> anZ;  // ancestors of Z including Z

  PathOracle(const CausalDag& graph, const std::set<int>& cond,
             const std::vector<bool>* fixed_mask = nullptr)
      : g(graph), fixed(fixed_mask), Z(cond) {
    anZ = g.ancestors(Z);
    for (int z : Z) anZ.insert(z);
  }

  bool is_fixed(int v) const { return fixed && (*fixed)[static_cast<std::size_t>(v)]; }

  // A path is a vertex sequence; into[i] says whether the edge between
  // path[i-1] and path[i] points into path[i].
  bool path_active(const std::vector<int>& path, const std::vector<bool>& into) const {
    for (std::size_t i = 1; i + 1 < path.size(); ++i) {
      int v = path[i];
      if (is_fixed(v)) return false;  // constants carry no association
      bool collider = into[i] && !into[i + 1];
      if (collider) {
        if (!anZ.count(v)) return false;
      } else {
        if (Z.count(v)) return false;
      }
    }
    return true;
  }

  bool connected(int x, int y) const {
    std::vector<int> path{x};
    std::vector<bool> into{false};
    std::vector<bool> used(static_cast<std::size_t>(g.size()), false);
    used[static_cast<std::size_t>(x)] = true;
    return dfs(x, y, path, into, used);
  }

 private:
  bool dfs(int v, int target, std::vector<int>& path, std::vector<bool>& into,
           std::vector<bool>& used) const {
    auto step = [&](int next, bool edge_into_next) {
      if (used[static_cast<std::size_t>(next)]) return false;
      path.push_back(next);
      into.push_back(edge_into_next);
      used[static_cast<std::size_t>(next)] = true;
      bool hit = false;
      if (next == target) {
        hit = path_active(path, into);
      }
      if (!hit) hit = dfs(next, target, path, into, used);
      used[static_cast<std::size_t>(next)] = false;
      path.pop_back();
      into.pop_back();
      return hit;
    };
    for (int c : g.children(v))
      if (step(c, true)) return true;
    for (int p : g.parents(v))
      if (step(p, false)) return true;
    return false;
  }
};

inline bool d_separated_by_paths(const CausalDag& g, const IndependenceQuery& q,
                                 const std::vector<bool>* fixed_mask = nullptr) {
  std::set<int> Z;
  for (const auto& n : q.given) Z.insert(g.require(n));
  PathOracle oracle(g, Z, fixed_mask);
  for (const auto& xs : q.left)
    for (const auto& ys : q.right)
      if (oracle.connected(g.require(xs), g.require(ys))) return false;
  return true;
}

}  // namespace gmethods::testing
