#ifndef MOVSEM_FEATURES_HPP
#define MOVSEM_FEATURES_HPP

#include "movsem/data.hpp"

#include <array>
#include <cstdint>
#include <unordered_map>
#include <vector>

namespace movsem::feat {

// Squared-displacement threshold below which the heading is defined as 0.
inline constexpr double kHeadingEps = 1e-6;

struct NormalizedTrajectory {
    // per-point (x, y) in region-relative units; inside the region both lie in [0, 1]
    std::vector<std::array<double, 2>> pts;

    std::size_t length() const { return pts.size(); }
};

/// Mercator-project and rescale against the region's projected bounds.
/// Out-of-region points yield coordinates outside [0, 1]; filtering them is
/// the ingestion stage's job.
NormalizedTrajectory normalize(const data::RawTrajectory& traj, const geo::Region& region);

struct MovementDynamics {
    double dx = 0.0;
    double dy = 0.0;
    double theta = 0.0; // heading in [-1, 1], pi-normalized arctan2
};

/// Per-point displacement and heading. The first point gets (0, 0, 0); a
/// displacement with squared norm <= kHeadingEps gets heading 0.
std::vector<MovementDynamics> movement_dynamics(const NormalizedTrajectory& norm);

// Cell-id -> structural embedding map. Missing cells fall back to zeros.
struct CellEmbeddingTable {
    std::size_t dimension = 0;
    std::unordered_map<std::int64_t, std::vector<float>> vectors;

    const float* find(std::int64_t cell) const {
        auto it = vectors.find(cell);
        return it == vectors.end() ? nullptr : it->second.data();
    }
};

// Row-major L x d_in feature matrix; d_in = 3 + d_se for the full feature
// set, d_in = d_se when only the cell embedding is used.
struct FeatureSequence {
    std::size_t dim = 0;
    std::vector<float> values;

    std::size_t length() const { return dim ? values.size() / dim : 0; }
    const float* row(std::size_t i) const { return values.data() + i * dim; }
};

enum class FeatureMode {
    kFull,     // [dx, dy, theta, ST]
    kCellOnly, // [ST] (movement-dynamics features removed)
};

/// Concatenate per-point movement dynamics with the cell embedding of each
/// point. Unknown cells contribute the all-zeros vector.
FeatureSequence compose_features(const std::vector<MovementDynamics>& dyn,
                                 const std::vector<std::int64_t>& cells,
                                 const CellEmbeddingTable& table,
                                 FeatureMode mode = FeatureMode::kFull);

inline std::size_t feature_dim(FeatureMode mode, std::size_t d_se) {
    return mode == FeatureMode::kFull ? 3 + d_se : d_se;
}

} // namespace movsem::feat

#endif // MOVSEM_FEATURES_HPP
