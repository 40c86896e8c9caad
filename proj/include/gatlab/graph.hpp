#pragma once

#include "gatlab/types.hpp"

#include <cstddef>
#include <utility>
#include <vector>

namespace gatlab {

// Directed, unweighted graph. An edge (i, j) means node j sends messages to
// node i, so j is a member of the neighbor set of i. Immutable once built.
class Graph {
 public:
  using Edge = std::pair<int, int>;

  Graph() = default;
  // Duplicate edges collapse. Throws std::invalid_argument on an index
  // outside [0, node_count).
  Graph(int node_count, std::vector<Edge> edges);

  static Graph from_adjacency(const Eigen::MatrixXi& adjacency);

  int node_count() const { return node_count_; }
  // Sorted ascending; includes i itself when i has a self-loop.
  const std::vector<int>& neighbors(int i) const;
  bool has_self_loop(int i) const;
  bool has_edge(int i, int j) const;
  // Sorted lexicographically.
  const std::vector<Edge>& edges() const { return edges_; }

  friend bool operator==(const Graph&, const Graph&) = default;

 private:
  int node_count_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> neighbors_;
};

// Node 0 is the centre: bidirectional edges to every other node plus a
// self-loop on node 0. Throws std::invalid_argument for n < 2.
Graph star_graph(int n);

// A(i, j) = 1 iff (i, j) is an edge.
Eigen::MatrixXi adjacency(const Graph& g);

}  // namespace gatlab
