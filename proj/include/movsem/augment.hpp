#ifndef MOVSEM_AUGMENT_HPP
#define MOVSEM_AUGMENT_HPP

#include "movsem/features.hpp"

#include <cstdint>
#include <vector>

namespace movsem::aug {

// Inverse-curvature weight smoothing and probability cap for view generation.
inline constexpr double kCurvatureEps = 0.01;
inline constexpr double kMaxDropProb = 0.9;

struct CurvatureProfile {
    // per-point turning magnitude in [0, 1]: pi-normalized absolute heading
    // change; 0 at endpoints and wherever a displacement is below the heading
    // threshold
    std::vector<double> kappa;
    // endpoints are always flagged keep
    std::vector<std::uint8_t> keep_always;
};

/// Turning-angle curvature of a normalized trajectory. Interior point i gets
/// |wrap(theta_{i+1} - theta_i)| with the difference wrapped into (-1, 1].
CurvatureProfile curvature_profile(const feat::NormalizedTrajectory& norm);

struct AugmentedView {
    std::vector<std::size_t> kept; // strictly increasing original indices
};

/// Curvature-guided view: drop probability per droppable point is
/// min(p_max, rho * (1/(kappa+eps)) / mean(1/(kappa+eps))), so straight-run
/// points drop first. Endpoints survive; if fewer than max(2, floor_len)
/// points survive, the highest-curvature dropped points are restored.
AugmentedView cga_view(const CurvatureProfile& profile, double rho, std::uint64_t seed,
                       std::size_t floor_len);

/// Pre-clip per-point drop probabilities used by cga_view (testing hook;
/// rho times the normalized inverse-curvature weight of droppable points,
/// 0 at endpoints).
std::vector<double> cga_drop_probabilities(const CurvatureProfile& profile, double rho);

/// Uniform Bernoulli point drops with the same survivor floor as CGA.
AugmentedView random_point_mask(std::size_t length, double rho, std::uint64_t seed,
                                std::size_t floor_len);

/// Drops one contiguous interior span of ceil(rho*L) points.
AugmentedView block_mask(std::size_t length, double rho, std::uint64_t seed,
                         std::size_t floor_len);

/// Evaluation perturbation: each point independently dropped with probability
/// rho (survivor floor 2: the original endpoints are restored if needed).
data::RawTrajectory downsample(const data::RawTrajectory& traj, double rho, std::uint64_t seed);

/// Evaluation perturbation: ceil(rho*L) uniformly chosen points are shifted
/// by independent uniform offsets in [-delta, delta] meters per projected
/// axis, then un-projected.
data::RawTrajectory distort(const data::RawTrajectory& traj, double rho, double delta_m,
                            std::uint64_t seed);

/// Restrict a trajectory to the view's surviving points.
data::RawTrajectory apply_view(const data::RawTrajectory& traj, const AugmentedView& view);

} // namespace movsem::aug

#endif // MOVSEM_AUGMENT_HPP
