#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cgflow/errors.hpp"

namespace cgflow {

enum class NodeRole { Treatment, Outcome, Confounder, OtherCause, Plain };

inline std::string role_name(NodeRole r) {
  switch (r) {
    case NodeRole::Treatment: return "treatment";
    case NodeRole::Outcome: return "outcome";
    case NodeRole::Confounder: return "confounder";
    case NodeRole::OtherCause: return "other";
    case NodeRole::Plain: return "plain";
  }
  return "plain";
}

inline NodeRole role_from_name(const std::string& s) {
  if (s == "treatment") return NodeRole::Treatment;
  if (s == "outcome") return NodeRole::Outcome;
  if (s == "confounder") return NodeRole::Confounder;
  if (s == "other") return NodeRole::OtherCause;
  if (s == "plain") return NodeRole::Plain;
  throw ConfigError("unknown node role '" + s + "'");
}

// Directed acyclic graph over named variables. Node order is declaration
// order and fixes the variable index order used everywhere downstream.
// adjacency[i][j] == true exactly when node j is a parent of node i.
class CausalDag {
 public:
  CausalDag() = default;

  CausalDag(std::vector<std::string> nodes,
            std::vector<std::pair<std::string, std::string>> edges) {
    build(std::move(nodes), std::move(edges));
  }

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& node_names() const { return names_; }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const std::vector<std::size_t>& topo_order() const { return topo_; }
  const std::vector<std::vector<bool>>& adjacency() const { return adj_; }

  bool has_node(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw UnknownNode("unknown node '" + name + "'");
    return it->second;
  }

  bool is_edge(std::size_t parent, std::size_t child) const { return adj_[child][parent]; }

  std::vector<std::size_t> parent_indices(std::size_t i) const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < size(); ++j)
      if (adj_[i][j]) out.push_back(j);
    return out;
  }

  std::set<std::string> parents(const std::string& node) const {
    const std::size_t i = index_of(node);
    std::set<std::string> out;
    for (std::size_t j : parent_indices(i)) out.insert(names_[j]);
    return out;
  }

  // All nodes reachable from `node` along directed edges (excluding itself).
  std::vector<std::size_t> descendant_indices(std::size_t i) const {
    std::vector<bool> seen(size(), false);
    std::vector<std::size_t> stack{i}, out;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (std::size_t v = 0; v < size(); ++v) {
        if (adj_[v][u] && !seen[v]) {
          seen[v] = true;
          stack.push_back(v);
          out.push_back(v);
        }
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  bool has_path(const std::string& from, const std::string& to) const {
    const std::size_t t = index_of(to);
    for (std::size_t v : descendant_indices(index_of(from)))
      if (v == t) return true;
    return false;
  }

  // Removes every edge into `target`; all other edges are preserved.
  CausalDag mutilate(const std::string& target) const {
    const std::size_t t = index_of(target);
    std::vector<std::pair<std::string, std::string>> kept;
    for (std::size_t child = 0; child < size(); ++child) {
      if (child == t) continue;
      for (std::size_t parent : parent_indices(child))
        kept.emplace_back(names_[parent], names_[child]);
    }
    return CausalDag(names_, std::move(kept));
  }

  // Canonical text form: node declarations in index order, then edges
  // sorted lexicographically by (parent, child).
  std::string serialize() const {
    std::vector<std::pair<std::string, std::string>> edges;
    for (std::size_t child = 0; child < size(); ++child)
      for (std::size_t parent : parent_indices(child))
        edges.emplace_back(names_[parent], names_[child]);
    std::sort(edges.begin(), edges.end());
    std::string out;
    for (const auto& n : names_) {
      if (!out.empty()) out += "; ";
      out += n;
    }
    for (const auto& [p, c] : edges) out += "; " + p + "->" + c;
    return out;
  }

 private:
  void build(std::vector<std::string> nodes,
             std::vector<std::pair<std::string, std::string>> edges) {
    names_ = std::move(nodes);
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (names_[i].empty()) throw EmptySpec("empty node name");
      if (!index_.emplace(names_[i], i).second)
        throw DuplicateNode("duplicate node '" + names_[i] + "'");
    }
    adj_.assign(size(), std::vector<bool>(size(), false));
    for (const auto& [p, c] : edges) {
      auto pi = index_.find(p), ci = index_.find(c);
      if (pi == index_.end()) throw UnknownNodeInEdge("edge references unknown node '" + p + "'");
      if (ci == index_.end()) throw UnknownNodeInEdge("edge references unknown node '" + c + "'");
      adj_[ci->second][pi->second] = true;
    }
    compute_topo();
  }

  // Kahn's algorithm; ties resolved by declaration index so the order is
  // deterministic.
  void compute_topo() {
    const std::size_t n = size();
    std::vector<std::size_t> indeg(n, 0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (adj_[i][j]) ++indeg[i];
    std::set<std::size_t> ready;
    for (std::size_t i = 0; i < n; ++i)
      if (indeg[i] == 0) ready.insert(i);
    topo_.clear();
    while (!ready.empty()) {
      const std::size_t u = *ready.begin();
      ready.erase(ready.begin());
      topo_.push_back(u);
      for (std::size_t v = 0; v < n; ++v) {
        if (adj_[v][u] && --indeg[v] == 0) ready.insert(v);
      }
    }
    if (topo_.size() != n) throw CycleDetected("graph contains a directed cycle");
  }

  std::vector<std::string> names_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::vector<bool>> adj_;
  std::vector<std::size_t> topo_;
};

namespace detail {
inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline bool valid_identifier(const std::string& s) {
  if (s.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  for (char ch : s)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_')) return false;
  return true;
}
}  // namespace detail

// Grammar: semicolon-separated statements; a statement is either a node
// name (declaration) or "Parent->Child". Whitespace is insignificant.
// Declarations must precede any edge that uses them.
inline CausalDag parse_dag(const std::string& text) {
  std::vector<std::string> nodes;
  std::vector<std::pair<std::string, std::string>> edges;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t semi = text.find(';', pos);
    const std::string stmt =
        detail::trim(text.substr(pos, semi == std::string::npos ? std::string::npos : semi - pos));
    pos = semi == std::string::npos ? text.size() + 1 : semi + 1;
    if (stmt.empty()) continue;
    const std::size_t arrow = stmt.find("->");
    if (arrow == std::string::npos) {
      if (!detail::valid_identifier(stmt))
        throw EmptySpec("invalid node declaration '" + stmt + "'");
      nodes.push_back(stmt);
    } else {
      const std::string p = detail::trim(stmt.substr(0, arrow));
      const std::string c = detail::trim(stmt.substr(arrow + 2));
      if (!detail::valid_identifier(p) || !detail::valid_identifier(c))
        throw UnknownNodeInEdge("malformed edge '" + stmt + "'");
      edges.emplace_back(p, c);
    }
  }
  if (nodes.empty()) throw EmptySpec("no node declarations");
  return CausalDag(std::move(nodes), std::move(edges));
}

}  // namespace cgflow
