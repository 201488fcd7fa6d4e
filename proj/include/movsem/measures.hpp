#ifndef MOVSEM_MEASURES_HPP
#define MOVSEM_MEASURES_HPP

#include "movsem/data.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace movsem::dist {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

using PointSeq = std::vector<Point>;

/// Mercator-project a trajectory into meters.
PointSeq to_meters(const data::RawTrajectory& traj);

enum class PointMetric { kEuclidean, kChebyshev };

/// Edit Distance on Real sequence: substitution is free when the points are
/// within eps_m under the chosen metric, otherwise every edit costs 1.
std::size_t edr(const PointSeq& a, const PointSeq& b, double eps_m,
                PointMetric metric = PointMetric::kEuclidean);

/// Symmetric Hausdorff distance (max of directed nearest-neighbor maxima).
double hausdorff(const PointSeq& a, const PointSeq& b);

/// Discrete Frechet distance via the standard coupling recurrence.
double frechet_discrete(const PointSeq& a, const PointSeq& b);

/// Edit Distance with Projections over segment chains. Replacement cost is
/// d(starts) + d(ends) weighted by the combined segment length; an edit may
/// first split the current segment at the projection of the opposing
/// trajectory's next point. Follows the measure this implementation is named
/// after (Ranu et al., ICDE 2015); both inputs need at least 2 points.
double edwp(const PointSeq& a, const PointSeq& b);

enum class Measure { kEdr, kEdwp, kHausdorff, kFrechet };

Measure measure_from_name(const std::string& name);
std::string measure_name(Measure m);

struct MeasureParams {
    double edr_eps_m = 100.0; // default: one Porto-scale grid cell
    PointMetric edr_metric = PointMetric::kEuclidean;
};

double evaluate_measure(Measure m, const PointSeq& a, const PointSeq& b,
                        const MeasureParams& params);

/// Symmetric pairwise distance matrix, row-major n x n with a zero diagonal.
/// Deterministic regardless of `threads`.
std::vector<double> pairwise_matrix(const std::vector<PointSeq>& seqs, Measure m,
                                    const MeasureParams& params, unsigned threads = 1);

} // namespace movsem::dist

#endif // MOVSEM_MEASURES_HPP
