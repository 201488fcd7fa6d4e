#include "movsem/features.hpp"

#include <cmath>

namespace movsem::feat {

NormalizedTrajectory normalize(const data::RawTrajectory& traj, const geo::Region& region) {
    NormalizedTrajectory norm;
    norm.pts.reserve(traj.points.size());
    for (const auto& p : traj.points) {
        geo::MeterPoint m = geo::mercator(p.lon, p.lat);
        norm.pts.push_back({(m.x - region.x_min_m) / region.width_m,
                            (m.y - region.y_min_m) / region.height_m});
    }
    return norm;
}

std::vector<MovementDynamics> movement_dynamics(const NormalizedTrajectory& norm) {
    std::vector<MovementDynamics> dyn(norm.length());
    for (std::size_t i = 1; i < norm.length(); ++i) {
        double dx = norm.pts[i][0] - norm.pts[i - 1][0];
        double dy = norm.pts[i][1] - norm.pts[i - 1][1];
        double theta = 0.0;
        if (dx * dx + dy * dy > kHeadingEps) {
            theta = std::atan2(dy, dx) / geo::kPi;
        }
        dyn[i] = {dx, dy, theta};
    }
    return dyn;
}

FeatureSequence compose_features(const std::vector<MovementDynamics>& dyn,
                                 const std::vector<std::int64_t>& cells,
                                 const CellEmbeddingTable& table, FeatureMode mode) {
    if (dyn.size() != cells.size()) {
        throw DataError("compose_features: dynamics and cell sequences differ in length");
    }
    FeatureSequence seq;
    seq.dim = feature_dim(mode, table.dimension);
    seq.values.assign(dyn.size() * seq.dim, 0.0f);
    for (std::size_t i = 0; i < dyn.size(); ++i) {
        float* row = seq.values.data() + i * seq.dim;
        std::size_t off = 0;
        if (mode == FeatureMode::kFull) {
            row[0] = static_cast<float>(dyn[i].dx);
            row[1] = static_cast<float>(dyn[i].dy);
            row[2] = static_cast<float>(dyn[i].theta);
            off = 3;
        }
        if (const float* st = table.find(cells[i])) {
            for (std::size_t d = 0; d < table.dimension; ++d) row[off + d] = st[d];
        }
        // unknown cell: leave the zero vector in place
    }
    return seq;
}

} // namespace movsem::feat
