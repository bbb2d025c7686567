#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace gmethods {

// Directed acyclic graph with observed/hidden vertex marking. Vertex order is
// insertion order and is used as the canonical order for serialization and
// for sorting counterfactual suffixes.
class CausalDag {
 public:
  struct Vertex {
    std::string name;
    bool hidden = false;
  };

  int add_vertex(const std::string& name, bool hidden = false);
  void add_edge(const std::string& from, const std::string& to);
  void add_edge(int from, int to);

  int index_of(const std::string& name) const;  // -1 when absent
  int require(const std::string& name) const;   // throws on unknown name

  int size() const { return static_cast<int>(verts_.size()); }
  const Vertex& vertex(int i) const { return verts_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& parents(int i) const { return parents_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& children(int i) const { return children_[static_cast<std::size_t>(i)]; }
  std::vector<std::pair<int, int>> edges() const;

  std::set<int> ancestors(const std::set<int>& of) const;    // excludes `of` itself
  std::set<int> descendants(const std::set<int>& of) const;  // excludes `of` itself
  std::vector<int> topological_order() const;                 // == vertex order (enforced on add)

  // Text format:
  //   dag
  //   node <name> [hidden]
  //   edge <from> <to>
  // Blank lines and lines starting with '#' are ignored.
  static CausalDag parse(const std::string& text);
  std::string format() const;

 private:
  bool reachable(int from, int to) const;

  std::vector<Vertex> verts_;
  std::vector<std::vector<int>> parents_, children_;
  std::map<std::string, int> index_;
};

// Single-world intervention graph: node-split transform of a CausalDag under
// an assignment of constants to treatment vertices. Random halves keep their
// incoming edges and are relabeled with the fixed constants upstream of them;
// fixed halves take over the outgoing edges and carry no incoming edges.
struct Swig {
  CausalDag graph;
  std::vector<bool> fixed;              // by graph vertex index
  std::vector<std::string> base;        // source-dag vertex name per graph vertex
  std::vector<std::pair<std::string, std::string>> assignment;  // (treatment, value label)

  int random_index_of_base(const std::string& base_name) const;  // -1 when absent

  // Text format mirrors CausalDag with header `swig` and per-node attributes
  // `fixed` and `base=<name>`.
  static Swig parse(const std::string& text);
  std::string format() const;
};

struct IndependenceQuery {
  std::vector<std::string> left, right, given;
};

struct DsepOptions {
  // Internal soundness checks condition on hidden vertices; user-facing
  // queries must not (such conditioning is unavailable in any data).
  bool allow_hidden_conditioning = false;
};

// True when every left vertex is d-separated from every right vertex given
// the conditioning set. Throws std::invalid_argument on unknown names,
// non-disjoint sets, or hidden/fixed vertices used where forbidden.
bool d_separated(const CausalDag& g, const IndependenceQuery& q, DsepOptions opt = {});
bool d_separated(const Swig& g, const IndependenceQuery& q, DsepOptions opt = {});

// Intervenes on the named treatments with the given constant labels.
// Re-applying the same assignment to a SWIG is the identity.
Swig swig_from_dag(const CausalDag& g,
                   const std::vector<std::pair<std::string, std::string>>& assignment);
Swig swig_from_dag(const Swig& g,
                   const std::vector<std::pair<std::string, std::string>>& assignment);

// Which randomization conditions the DAG supports for the two-time-point
// structure with designated vertices A1, L (optional), A2, Y:
//   full:             Y(a1,a2) independent of (A1, A2(a1)) jointly
//   sequential_joint: (Y(a1,a2), L(a1)) indep of A1; Y(a1,a2) indep of A2(a1) given A1, L(a1)
//   y_only:           Y(a1,a2) indep of A1;          Y(a1,a2) indep of A2(a1) given A1, L(a1)
// Each is decided by d-separation on the SWIG for the static intervention.
struct RandomizationStatus {
  bool full = false;
  bool sequential_joint = false;
  bool y_only = false;
};

RandomizationStatus check_randomization(const CausalDag& g);

}  // namespace gmethods
