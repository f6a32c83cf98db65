#include "stratamatch/min_cost_flow.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <queue>
#include <utility>

#include "stratamatch/error.hpp"

namespace stratamatch {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace

MinCostFlow::MinCostFlow(int n_nodes)
    : adjacency_(static_cast<std::size_t>(n_nodes)),
      potential_(static_cast<std::size_t>(n_nodes), 0.0),
      distance_(static_cast<std::size_t>(n_nodes), kInf),
      parent_edge_(static_cast<std::size_t>(n_nodes), -1) {}

int MinCostFlow::add_edge(int from, int to, int capacity, double cost) {
  if (cost < 0.0) throw Error(ErrorCode::InvalidArgument, "negative arc cost");
  if (capacity < 0) throw Error(ErrorCode::InvalidArgument, "negative arc capacity");
  const int id = static_cast<int>(edges_.size());
  edges_.push_back({to, capacity, cost});
  edges_.push_back({from, 0, -cost});
  capacity_.push_back(capacity);
  capacity_.push_back(0);
  adjacency_[static_cast<std::size_t>(from)].push_back(id);
  adjacency_[static_cast<std::size_t>(to)].push_back(id + 1);
  return id;
}

int MinCostFlow::flow(int edge_id) const {
  const auto e = static_cast<std::size_t>(edge_id);
  return capacity_[e] - edges_[e].residual;
}

bool MinCostFlow::shortest_path(int source, int sink) {
  std::fill(distance_.begin(), distance_.end(), kInf);
  std::fill(parent_edge_.begin(), parent_edge_.end(), -1);
  using Label = std::pair<double, int>;
  std::priority_queue<Label, std::vector<Label>, std::greater<>> heap;
  distance_[static_cast<std::size_t>(source)] = 0.0;
  heap.emplace(0.0, source);
  while (!heap.empty()) {
    auto [d, u] = heap.top();
    heap.pop();
    const auto uu = static_cast<std::size_t>(u);
    if (d > distance_[uu]) continue;
    for (int id : adjacency_[uu]) {
      const Edge& e = edges_[static_cast<std::size_t>(id)];
      if (e.residual <= 0) continue;
      const auto v = static_cast<std::size_t>(e.to);
      // Reduced costs are non-negative up to rounding.
      const double reduced = std::max(0.0, e.cost + potential_[uu] - potential_[v]);
      const double nd = d + reduced;
      if (nd < distance_[v]) {
        distance_[v] = nd;
        parent_edge_[v] = id;
        heap.emplace(nd, e.to);
      }
    }
  }
  if (distance_[static_cast<std::size_t>(sink)] == kInf) return false;
  for (std::size_t v = 0; v < potential_.size(); ++v) {
    if (distance_[v] < kInf) potential_[v] += distance_[v];
  }
  return true;
}

MinCostFlow::Result MinCostFlow::solve(int source, int sink, int flow_limit) {
  Result result;
  while (result.flow < flow_limit && shortest_path(source, sink)) {
    int push = flow_limit - result.flow;
    for (int v = sink; v != source;) {
      const int id = parent_edge_[static_cast<std::size_t>(v)];
      push = std::min(push, edges_[static_cast<std::size_t>(id)].residual);
      v = edges_[static_cast<std::size_t>(id ^ 1)].to;
    }
    for (int v = sink; v != source;) {
      const int id = parent_edge_[static_cast<std::size_t>(v)];
      auto& e = edges_[static_cast<std::size_t>(id)];
      e.residual -= push;
      edges_[static_cast<std::size_t>(id ^ 1)].residual += push;
      result.cost += push * e.cost;
      v = edges_[static_cast<std::size_t>(id ^ 1)].to;
    }
    result.flow += push;
  }
  return result;
}

}  // namespace stratamatch
