#include "isolab/mincut.hpp"

#include <algorithm>
#include <limits>
#include <queue>
#include <stdexcept>

namespace isolab {

MaxFlow::MaxFlow(int vertex_count) {
  if (vertex_count <= 0) throw std::invalid_argument("flow network needs at least one vertex");
  adjacency_.resize(vertex_count);
}

int MaxFlow::add_edge(int from, int to, double capacity) {
  if (from < 0 || from >= vertex_count() || to < 0 || to >= vertex_count())
    throw std::out_of_range("flow edge endpoint out of range");
  if (capacity < 0.0) throw std::invalid_argument("flow capacity must be nonnegative");
  const int id = static_cast<int>(edges_.size());
  edges_.push_back(Edge{to, capacity});
  edges_.push_back(Edge{from, 0.0});
  adjacency_[from].push_back(id);
  adjacency_[to].push_back(id + 1);
  return id;
}

bool MaxFlow::build_levels(int source, int sink) {
  level_.assign(vertex_count(), -1);
  std::queue<int> frontier;
  level_[source] = 0;
  frontier.push(source);
  while (!frontier.empty()) {
    const int v = frontier.front();
    frontier.pop();
    for (int id : adjacency_[v]) {
      const Edge& e = edges_[id];
      if (e.capacity > kFlowEps && level_[e.to] < 0) {
        level_[e.to] = level_[v] + 1;
        frontier.push(e.to);
      }
    }
  }
  return level_[sink] >= 0;
}

double MaxFlow::push_blocking(int v, int sink, double limit) {
  if (v == sink) return limit;
  for (int& i = next_arc_[v]; i < static_cast<int>(adjacency_[v].size()); ++i) {
    const int id = adjacency_[v][i];
    Edge& e = edges_[id];
    if (e.capacity <= kFlowEps || level_[e.to] != level_[v] + 1) continue;
    const double pushed = push_blocking(e.to, sink, std::min(limit, e.capacity));
    if (pushed > 0.0) {
      e.capacity -= pushed;
      edges_[id ^ 1].capacity += pushed;
      return pushed;
    }
  }
  return 0.0;
}

double MaxFlow::run(int source, int sink) {
  if (source == sink) throw std::invalid_argument("flow source and sink must differ");
  double total = 0.0;
  while (build_levels(source, sink)) {
    next_arc_.assign(vertex_count(), 0);
    while (true) {
      const double pushed = push_blocking(source, sink, std::numeric_limits<double>::infinity());
      if (pushed <= 0.0) break;
      total += pushed;
    }
  }
  return total;
}

std::vector<char> MaxFlow::source_side(int source) const {
  std::vector<char> reachable(vertex_count(), 0);
  std::queue<int> frontier;
  reachable[source] = 1;
  frontier.push(source);
  while (!frontier.empty()) {
    const int v = frontier.front();
    frontier.pop();
    for (int id : adjacency_[v]) {
      const Edge& e = edges_[id];
      if (e.capacity > kFlowEps && !reachable[e.to]) {
        reachable[e.to] = 1;
        frontier.push(e.to);
      }
    }
  }
  return reachable;
}

}  // namespace isolab
