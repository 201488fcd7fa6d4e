#include "movsem/cellgraph.hpp"

#include "movsem/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

namespace movsem::grid {

GridSpec GridSpec::make(const geo::Region& region, double cell_size_m) {
    if (!(cell_size_m > 0.0)) throw ConfigError("GridSpec: cell size must be positive");
    GridSpec g;
    g.cell_size_m = cell_size_m;
    g.dx = cell_size_m / region.width_m;
    g.dy = cell_size_m / region.height_m;
    g.nx = static_cast<std::int64_t>(std::ceil(1.0 / g.dx));
    g.ny = static_cast<std::int64_t>(std::ceil(1.0 / g.dy));
    if (g.nx < 1 || g.ny < 1) throw ConfigError("GridSpec: degenerate grid");
    return g;
}

std::int64_t assign_cell(double x_norm, double y_norm, const GridSpec& grid) {
    auto idx = [](double v, double delta, std::int64_t n) {
        std::int64_t i = static_cast<std::int64_t>(std::floor(v / delta));
        if (i < 0) i = 0;
        if (i >= n) i = n - 1; // includes points exactly on the far edge
        return i;
    };
    return idx(x_norm, grid.dx, grid.nx) * grid.ny + idx(y_norm, grid.dy, grid.ny);
}

std::vector<std::int64_t> assign_cells(const feat::NormalizedTrajectory& norm,
                                       const GridSpec& grid) {
    std::vector<std::int64_t> cells;
    cells.reserve(norm.length());
    for (const auto& p : norm.pts) cells.push_back(assign_cell(p[0], p[1], grid));
    return cells;
}

void CellGraph::add_node(std::int64_t cell) { adjacency_.try_emplace(cell); }

void CellGraph::add_edge(std::int64_t src, std::int64_t dst, double weight) {
    add_node(dst);
    auto& edges = adjacency_[src];
    for (auto& e : edges) {
        if (e.dst == dst) {
            e.weight += weight;
            return;
        }
    }
    edges.push_back({dst, weight});
}

double CellGraph::total_weight() const {
    double total = 0.0;
    for (const auto& [src, edges] : adjacency_) {
        for (const auto& e : edges) total += e.weight;
    }
    return total;
}

const std::vector<CellGraph::Edge>* CellGraph::out_edges(std::int64_t src) const {
    auto it = adjacency_.find(src);
    return it == adjacency_.end() ? nullptr : &it->second;
}

bool CellGraph::has_edge(std::int64_t src, std::int64_t dst) const {
    const auto* edges = out_edges(src);
    if (!edges) return false;
    for (const auto& e : *edges) {
        if (e.dst == dst) return true;
    }
    return false;
}

std::vector<std::int64_t> CellGraph::nodes() const {
    std::vector<std::int64_t> out;
    out.reserve(adjacency_.size());
    for (const auto& [cell, edges] : adjacency_) out.push_back(cell);
    return out;
}

void CellGraph::save_edge_list(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("CellGraph: cannot open " + path);
    for (const auto& [src, edges] : adjacency_) {
        if (edges.empty()) out << src << " -1 0\n"; // keep isolated nodes
        for (const auto& e : edges) out << src << ' ' << e.dst << ' ' << e.weight << '\n';
    }
}

CellGraph CellGraph::load_edge_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("CellGraph: cannot open " + path);
    CellGraph g;
    std::int64_t src, dst;
    double w;
    while (in >> src >> dst >> w) {
        g.add_node(src);
        if (dst >= 0 && w > 0) g.add_edge(src, dst, w);
    }
    return g;
}

CellGraph build_graph(const std::vector<std::vector<std::int64_t>>& cell_sequences) {
    CellGraph g;
    for (const auto& cells : cell_sequences) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            g.add_node(cells[i]);
            if (i + 1 < cells.size()) g.add_edge(cells[i], cells[i + 1], 1.0);
        }
    }
    return g;
}

namespace {

// Weighted pick by cumulative sum; weights need not be normalized.
std::size_t pick_weighted(const std::vector<double>& weights, Rng& rng) {
    double total = 0.0;
    for (double w : weights) total += w;
    double r = rng.uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (r < acc) return i;
    }
    return weights.size() - 1;
}

} // namespace

std::vector<std::vector<std::int64_t>> node2vec_walks(const CellGraph& graph,
                                                      const WalkConfig& config,
                                                      std::uint64_t seed) {
    if (graph.empty()) throw DataError("node2vec_walks: empty graph");
    std::vector<std::int64_t> starts = graph.nodes();
    std::vector<std::vector<std::int64_t>> walks;
    walks.reserve(starts.size() * config.walks_per_node);

    std::vector<double> weights;
    for (std::size_t s = 0; s < starts.size(); ++s) {
        for (std::size_t k = 0; k < config.walks_per_node; ++k) {
            Rng rng(seed_stream(seed, 0x0a1c, s, k));
            std::vector<std::int64_t> walk;
            walk.reserve(config.walk_length);
            std::int64_t cur = starts[s];
            walk.push_back(cur);
            std::int64_t prev = -1;
            while (walk.size() < config.walk_length) {
                const auto* edges = graph.out_edges(cur);
                if (!edges || edges->empty()) break; // sink: stop early
                weights.clear();
                weights.reserve(edges->size());
                for (const auto& e : *edges) {
                    double bias;
                    if (prev < 0) {
                        bias = 1.0; // first step is first-order
                    } else if (e.dst == prev) {
                        bias = 1.0 / config.p;
                    } else if (graph.has_edge(prev, e.dst)) {
                        bias = 1.0;
                    } else {
                        bias = 1.0 / config.q;
                    }
                    weights.push_back(e.weight * bias);
                }
                std::size_t pick = pick_weighted(weights, rng);
                prev = cur;
                cur = (*edges)[pick].dst;
                walk.push_back(cur);
            }
            walks.push_back(std::move(walk));
        }
    }
    return walks;
}

SkipgramResult train_skipgram(const std::vector<std::vector<std::int64_t>>& walks,
                              const SkipgramConfig& config, std::uint64_t seed) {
    if (config.dimension == 0) throw ConfigError("train_skipgram: dimension must be > 0");
    if (walks.empty()) throw DataError("train_skipgram: empty walk corpus");

    // vocabulary in first-appearance order; counts for the negative table
    std::vector<std::int64_t> vocab;
    std::unordered_map<std::int64_t, std::size_t> index;
    std::vector<double> counts;
    std::size_t tokens = 0;
    for (const auto& walk : walks) {
        for (std::int64_t cell : walk) {
            auto [it, inserted] = index.try_emplace(cell, vocab.size());
            if (inserted) {
                vocab.push_back(cell);
                counts.push_back(0.0);
            }
            counts[it->second] += 1.0;
            ++tokens;
        }
    }
    const std::size_t v = vocab.size();
    const std::size_t d = config.dimension;

    // unigram^(3/4) alias-free sampling table
    std::vector<double> cum(v);
    double z = 0.0;
    for (std::size_t i = 0; i < v; ++i) {
        z += std::pow(counts[i], 0.75);
        cum[i] = z;
    }

    Rng rng(seed_stream(seed, 0x5916));
    std::vector<float> in_vec(v * d);
    std::vector<float> out_vec(v * d, 0.0f);
    for (auto& x : in_vec) x = static_cast<float>((rng.uniform() - 0.5) / static_cast<double>(d));

    auto sample_negative = [&]() {
        double r = rng.uniform() * z;
        auto it = std::lower_bound(cum.begin(), cum.end(), r);
        return static_cast<std::size_t>(it - cum.begin());
    };

    auto sigmoid = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };

    SkipgramResult result;
    // total center-context pairs per epoch, for the linear lr schedule
    std::size_t pairs_per_epoch = 0;
    for (const auto& walk : walks) {
        for (std::size_t i = 0; i < walk.size(); ++i) {
            std::size_t lo = i >= config.window ? i - config.window : 0;
            std::size_t hi = std::min(walk.size(), i + config.window + 1);
            pairs_per_epoch += hi - lo - 1;
        }
    }
    const double total_pairs = static_cast<double>(pairs_per_epoch * std::max<std::size_t>(config.epochs, 1));

    std::vector<float> grad_in(d);
    std::size_t seen = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        double loss_sum = 0.0;
        std::size_t loss_n = 0;
        for (const auto& walk : walks) {
            for (std::size_t i = 0; i < walk.size(); ++i) {
                std::size_t center = index[walk[i]];
                std::size_t lo = i >= config.window ? i - config.window : 0;
                std::size_t hi = std::min(walk.size(), i + config.window + 1);
                for (std::size_t j = lo; j < hi; ++j) {
                    if (j == i) continue;
                    double lr = config.learning_rate *
                                std::max(1.0 - static_cast<double>(seen) / total_pairs, 1e-4);
                    ++seen;
                    std::size_t context = index[walk[j]];
                    float* wi = in_vec.data() + center * d;
                    std::fill(grad_in.begin(), grad_in.end(), 0.0f);
                    double pair_loss = 0.0;
                    for (std::size_t neg = 0; neg <= config.negatives; ++neg) {
                        std::size_t target;
                        double label;
                        if (neg == 0) {
                            target = context;
                            label = 1.0;
                        } else {
                            target = sample_negative();
                            if (target == context) continue;
                            label = 0.0;
                        }
                        float* wo = out_vec.data() + target * d;
                        double dot = 0.0;
                        for (std::size_t k = 0; k < d; ++k) dot += wi[k] * wo[k];
                        double pred = sigmoid(dot);
                        pair_loss -= label > 0.5 ? std::log(std::max(pred, 1e-12))
                                                 : std::log(std::max(1.0 - pred, 1e-12));
                        float g = static_cast<float>((pred - label) * lr);
                        for (std::size_t k = 0; k < d; ++k) {
                            grad_in[k] += g * wo[k];
                            wo[k] -= g * wi[k];
                        }
                    }
                    for (std::size_t k = 0; k < d; ++k) wi[k] -= grad_in[k];
                    loss_sum += pair_loss;
                    ++loss_n;
                }
            }
        }
        result.epoch_loss.push_back(loss_n ? loss_sum / static_cast<double>(loss_n) : 0.0);
    }

    result.table.dimension = d;
    for (std::size_t i = 0; i < v; ++i) {
        result.table.vectors.emplace(
            vocab[i], std::vector<float>(in_vec.begin() + i * d, in_vec.begin() + (i + 1) * d));
    }
    return result;
}

void save_embedding_table(const std::string& base_path, const feat::CellEmbeddingTable& table) {
    io::FloatBlock block;
    block.dimension = table.dimension;
    std::vector<std::int64_t> cells;
    cells.reserve(table.vectors.size());
    for (const auto& [cell, vec] : table.vectors) cells.push_back(cell);
    std::sort(cells.begin(), cells.end());
    for (std::int64_t cell : cells) {
        block.ids.push_back(std::to_string(cell));
        const auto& vec = table.vectors.at(cell);
        block.values.insert(block.values.end(), vec.begin(), vec.end());
    }
    io::save_float_block(base_path, block);
}

feat::CellEmbeddingTable load_embedding_table(const std::string& base_path) {
    io::FloatBlock block = io::load_float_block(base_path);
    feat::CellEmbeddingTable table;
    table.dimension = block.dimension;
    for (std::size_t i = 0; i < block.ids.size(); ++i) {
        std::int64_t cell = std::stoll(block.ids[i]);
        table.vectors.emplace(cell,
                              std::vector<float>(block.values.begin() + i * block.dimension,
                                                 block.values.begin() + (i + 1) * block.dimension));
    }
    return table;
}

} // namespace movsem::grid
