#ifndef MOVSEM_CELLGRAPH_HPP
#define MOVSEM_CELLGRAPH_HPP

#include "movsem/features.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace movsem::grid {

struct GridSpec {
    double cell_size_m = 100.0;
    double dx = 0.0; // cell extent in normalized x units
    double dy = 0.0; // cell extent in normalized y units
    std::int64_t nx = 0;
    std::int64_t ny = 0;

    static GridSpec make(const geo::Region& region, double cell_size_m);
};

/// Column-major cell index: floor(x/dx)*ny + floor(y/dy). Coordinates at the
/// far region edge (1.0) clamp into the last row/column.
std::int64_t assign_cell(double x_norm, double y_norm, const GridSpec& grid);

std::vector<std::int64_t> assign_cells(const feat::NormalizedTrajectory& norm,
                                       const GridSpec& grid);

// Directed transition-count graph over visited cells.
class CellGraph {
  public:
    struct Edge {
        std::int64_t dst = 0;
        double weight = 0.0;
    };

    void add_node(std::int64_t cell);
    void add_edge(std::int64_t src, std::int64_t dst, double weight);

    std::size_t node_count() const { return adjacency_.size(); }
    bool empty() const { return adjacency_.empty(); }
    double total_weight() const;

    const std::vector<Edge>* out_edges(std::int64_t src) const;
    bool has_edge(std::int64_t src, std::int64_t dst) const;
    std::vector<std::int64_t> nodes() const; // ascending order

    void save_edge_list(const std::string& path) const;
    static CellGraph load_edge_list(const std::string& path);

  private:
    // sorted adjacency keeps walk generation and persistence deterministic
    std::map<std::int64_t, std::vector<Edge>> adjacency_;
};

/// Count consecutive cell transitions across all trajectories; self-loops
/// count when consecutive points share a cell. Trajectories with fewer than
/// two points contribute their cell as an isolated node.
CellGraph build_graph(const std::vector<std::vector<std::int64_t>>& cell_sequences);

struct WalkConfig {
    std::size_t walks_per_node = 10;
    std::size_t walk_length = 80;
    double p = 1.0; // return bias
    double q = 1.0; // in-out bias
};

/// Second-order biased random walks. Walk (node, k) is a pure function of
/// (graph, config, seed), so generation may be parallelized freely.
std::vector<std::vector<std::int64_t>> node2vec_walks(const CellGraph& graph,
                                                      const WalkConfig& config,
                                                      std::uint64_t seed);

struct SkipgramConfig {
    std::size_t dimension = 64;
    std::size_t window = 10;
    std::size_t negatives = 5;
    std::size_t epochs = 5;
    double learning_rate = 0.025;
};

struct SkipgramResult {
    feat::CellEmbeddingTable table;
    std::vector<double> epoch_loss; // mean negative-sampling loss per epoch
};

/// Skip-gram with negative sampling over the walk corpus, single-threaded
/// SGD with linear learning-rate decay. Negative draws follow the unigram
/// distribution raised to the 3/4 power. Deterministic under seed.
SkipgramResult train_skipgram(const std::vector<std::vector<std::int64_t>>& walks,
                              const SkipgramConfig& config, std::uint64_t seed);

void save_embedding_table(const std::string& base_path, const feat::CellEmbeddingTable& table);
feat::CellEmbeddingTable load_embedding_table(const std::string& base_path);

} // namespace movsem::grid

#endif // MOVSEM_CELLGRAPH_HPP
