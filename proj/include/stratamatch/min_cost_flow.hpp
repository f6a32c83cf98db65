#pragma once

#include <vector>

namespace stratamatch {

// Successive shortest paths with Johnson potentials and a binary-heap
// Dijkstra. Costs must be non-negative, which lets the potentials start at
// zero. Ties between equal-distance labels resolve to the lower node index and
// the lower edge id, so identical graphs always yield identical flows.
class MinCostFlow {
 public:
  explicit MinCostFlow(int n_nodes);

  // Returns the id of the forward edge.
  int add_edge(int from, int to, int capacity, double cost);

  struct Result {
    int flow = 0;
    double cost = 0.0;
  };
  // Pushes up to `flow_limit` units from source to sink at minimum cost.
  Result solve(int source, int sink, int flow_limit);

  [[nodiscard]] int flow(int edge_id) const;
  [[nodiscard]] int n_nodes() const { return static_cast<int>(adjacency_.size()); }

 private:
  struct Edge {
    int to;
    int residual;
    double cost;
  };

  bool shortest_path(int source, int sink);

  std::vector<Edge> edges_;  // edge e and its reverse e ^ 1
  std::vector<int> capacity_;
  std::vector<std::vector<int>> adjacency_;
  std::vector<double> potential_;
  std::vector<double> distance_;
  std::vector<int> parent_edge_;
};

}  // namespace stratamatch
