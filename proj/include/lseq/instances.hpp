#pragma once

#include <cstdint>
#include <vector>

#include "lseq/model.hpp"
#include "lseq/solvers.hpp"

namespace lseq {

struct CrbmSpec {
  int visible_rows = 4;
  int visible_cols = 3;
  int filter_rows = 2;
  int filter_cols = 2;
  int stride = 1;
};

struct RegularSpec {
  int node_count = 30;
  int degree = 5;
  int latent_count = 2;
  std::uint64_t seed = 0;
};

/// rows x cols grid, node id r*cols+c; boundary visible, interior latent.
Graph make_grid(int rows, int cols);

/// Visible nodes 0..N*M-1 row-major, then one latent node per filter placement.
Graph make_crbm(const CrbmSpec& spec);

/// Configuration model with restart on self-loops or repeated edges.
Graph make_random_regular(const RegularSpec& spec, int retry_cap = 200000);

struct Condition1Witness {
  Node node = -1;
  Node j = -1, k = -1, l = -1;
  NodeSet conditioned_on;
};

/// Latent nodes recoverable by one decomposition after conditioning on the
/// other neighbors of two visible neighbors.  One witness per node.
std::vector<Condition1Witness> condition1_nodes(const Graph& graph);

/// Rules with preference +1 for every latent node and condition set; pairs
/// with no usable reference are appended to `skipped` when given.
std::vector<LabelRule> attractive_label_family(const Graph& graph,
                                               const std::vector<NodeSet>& condition_sets,
                                               std::vector<std::pair<Node, NodeSet>>* skipped = nullptr);

/// |beta| uniform on [lo, hi] with a random sign (always + when attractive);
/// gamma uniform on [-hi, hi].
GMParams random_params(const Graph& graph, double lo, double hi, std::uint64_t seed,
                       bool attractive = false);

}  // namespace lseq
