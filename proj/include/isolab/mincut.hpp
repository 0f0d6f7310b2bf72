#pragma once

#include <cstdint>
#include <vector>

namespace isolab {

// Max-flow / min-cut on a directed graph with real capacities (Dinic's
// algorithm). Capacities below kFlowEps are treated as exhausted, which keeps
// the residual search stable under floating-point cancellation.
class MaxFlow {
 public:
  static constexpr double kFlowEps = 1e-12;

  explicit MaxFlow(int vertex_count);

  // Adds a directed edge and its zero-capacity reverse twin. Returns the
  // edge's index (its twin is index ^ 1).
  int add_edge(int from, int to, double capacity);

  double run(int source, int sink);

  // After run(): the minimal cut's source side, i.e. the vertices still
  // reachable from the source in the residual graph. Indexed by vertex.
  std::vector<char> source_side(int source) const;

  int vertex_count() const { return static_cast<int>(adjacency_.size()); }

 private:
  struct Edge {
    int to;
    double capacity;  // residual
  };

  bool build_levels(int source, int sink);
  double push_blocking(int v, int sink, double limit);

  std::vector<Edge> edges_;
  std::vector<std::vector<int>> adjacency_;
  std::vector<int> level_;
  std::vector<int> next_arc_;
};

}  // namespace isolab
