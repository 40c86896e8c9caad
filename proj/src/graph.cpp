#include "gatlab/graph.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace gatlab {

Graph::Graph(int node_count, std::vector<Edge> edges)
    : node_count_(node_count), edges_(std::move(edges)) {
  if (node_count < 0) throw std::invalid_argument("negative node count");
  for (const auto& [i, j] : edges_) {
    if (i < 0 || j < 0 || i >= node_count || j >= node_count) {
      throw std::invalid_argument("edge (" + std::to_string(i) + ", " +
                                  std::to_string(j) + ") out of range for " +
                                  std::to_string(node_count) + " nodes");
    }
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());

  neighbors_.assign(static_cast<std::size_t>(node_count), {});
  for (const auto& [i, j] : edges_) {
    neighbors_[static_cast<std::size_t>(i)].push_back(j);
  }
}

Graph Graph::from_adjacency(const Eigen::MatrixXi& adjacency) {
  if (adjacency.rows() != adjacency.cols()) {
    throw ShapeError("adjacency matrix must be square");
  }
  const int n = static_cast<int>(adjacency.rows());
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (adjacency(i, j) != 0) edges.emplace_back(i, j);
    }
  }
  return Graph(n, std::move(edges));
}

const std::vector<int>& Graph::neighbors(int i) const {
  if (i < 0 || i >= node_count_) {
    throw std::out_of_range("node " + std::to_string(i) + " out of range");
  }
  return neighbors_[static_cast<std::size_t>(i)];
}

bool Graph::has_edge(int i, int j) const {
  const auto& nb = neighbors(i);
  return std::binary_search(nb.begin(), nb.end(), j);
}

bool Graph::has_self_loop(int i) const { return has_edge(i, i); }

Graph star_graph(int n) {
  if (n < 2) {
    throw std::invalid_argument("star graph needs at least 2 nodes, got " +
                                std::to_string(n));
  }
  std::vector<Graph::Edge> edges;
  edges.reserve(static_cast<std::size_t>(2 * (n - 1) + 1));
  edges.emplace_back(0, 0);
  for (int j = 1; j < n; ++j) {
    edges.emplace_back(0, j);
    edges.emplace_back(j, 0);
  }
  return Graph(n, std::move(edges));
}

Eigen::MatrixXi adjacency(const Graph& g) {
  Eigen::MatrixXi a = Eigen::MatrixXi::Zero(g.node_count(), g.node_count());
  for (const auto& [i, j] : g.edges()) a(i, j) = 1;
  return a;
}

}  // namespace gatlab
