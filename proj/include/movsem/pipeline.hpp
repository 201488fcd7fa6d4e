#ifndef MOVSEM_PIPELINE_HPP
#define MOVSEM_PIPELINE_HPP

#include "movsem/augment.hpp"
#include "movsem/cellgraph.hpp"

namespace movsem::pipe {

/// Everything needed to turn a raw trajectory into encoder input: the region,
/// the grid, the frozen cell-embedding table, and the feature mode.
struct FeaturePipeline {
    geo::Region region;
    grid::GridSpec gridspec;
    const feat::CellEmbeddingTable* table = nullptr;
    feat::FeatureMode mode = feat::FeatureMode::kFull;

    std::size_t feature_dim() const { return feat::feature_dim(mode, table->dimension); }

    feat::FeatureSequence featurize(const data::RawTrajectory& traj) const {
        feat::NormalizedTrajectory norm = feat::normalize(traj, region);
        std::vector<feat::MovementDynamics> dyn = feat::movement_dynamics(norm);
        std::vector<std::int64_t> cells = grid::assign_cells(norm, gridspec);
        return feat::compose_features(dyn, cells, *table, mode);
    }

    /// Features of an augmented view; displacements reflect the surviving
    /// neighbor structure, not slices of the original features.
    feat::FeatureSequence featurize_view(const data::RawTrajectory& traj,
                                         const aug::AugmentedView& view) const {
        return featurize(aug::apply_view(traj, view));
    }
};

} // namespace movsem::pipe

#endif // MOVSEM_PIPELINE_HPP
