#pragma once

// Random generators of GMs that satisfy each solver's structural precondition.

#include <random>

#include "lseq/graph.hpp"
#include "oracle.hpp"

namespace instances {

using lseq::Edge;
using lseq::Graph;
using lseq::Node;

/// Tree with center 0 and three branches; views[b] is a node of branch b.
struct Bottleneck {
  Graph graph;
  Node center = 0;
  std::array<Node, 3> views{};
};

inline Bottleneck random_bottleneck(std::mt19937_64& rng, int max_nodes = 8) {
  std::uniform_int_distribution<int> extra(0, max_nodes - 4);
  int n = 4 + extra(rng);
  std::vector<Edge> edges{{0, 1}, {0, 2}, {0, 3}};
  std::vector<int> branch{-1, 0, 1, 2};
  for (int v = 4; v < n; ++v) {
    std::uniform_int_distribution<int> parent(1, v - 1);
    int p = parent(rng);
    edges.push_back(lseq::make_edge(p, v));
    branch.push_back(branch[p]);
  }
  Bottleneck b;
  for (int k = 0; k < 3; ++k) {
    std::vector<Node> in;
    for (int v = 1; v < n; ++v)
      if (branch[v] == k) in.push_back(v);
    std::uniform_int_distribution<std::size_t> pick(0, in.size() - 1);
    b.views[k] = in[pick(rng)];
  }
  b.graph = Graph(n, edges, {b.views[0], b.views[1], b.views[2]});
  return b;
}

/// Three blocks S - C - T: every S-T path crosses C.
struct Split {
  Graph graph;
  lseq::NodeSet S, C, T;
};

inline Split random_split(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> size(1, 2), cut(1, 2);
  int ns = size(rng), nc = cut(rng), nt = size(rng);
  Split s;
  int next = 0;
  for (int k = 0; k < ns; ++k) s.S.push_back(next++);
  for (int k = 0; k < nc; ++k) s.C.push_back(next++);
  for (int k = 0; k < nt; ++k) s.T.push_back(next++);
  std::vector<Edge> edges;
  std::bernoulli_distribution coin(0.6);
  auto link = [&](const lseq::NodeSet& a, const lseq::NodeSet& b) {
    bool any = false;
    for (Node u : a)
      for (Node v : b)
        if (u < v && coin(rng)) {
          edges.push_back({u, v});
          any = true;
        }
    if (!any) edges.push_back(lseq::make_edge(a.front(), b.back()));
  };
  link(s.S, s.C);
  link(s.C, s.T);
  if (ns == 2) edges.push_back({s.S[0], s.S[1]});
  s.graph = Graph(next, edges, {});
  return s;
}

}  // namespace instances
