#ifndef MOVSEM_DATA_HPP
#define MOVSEM_DATA_HPP

#include "movsem/geo.hpp"

#include <string>
#include <vector>

namespace movsem::data {

struct GpsPoint {
    double lon = 0.0; // degrees
    double lat = 0.0; // degrees
    double t = 0.0;   // seconds since epoch
};

struct RawTrajectory {
    std::string id;
    std::vector<GpsPoint> points;

    std::size_t length() const { return points.size(); }
};

struct IngestStats {
    std::size_t parsed = 0;
    std::size_t skipped = 0;
};

/// Parse a taxi-trip CSV: header row names the columns, the polyline column
/// holds a JSON array of [lon, lat] pairs. Timestamps are synthesized at
/// `sample_interval_s` from the row's start time (timestamp column when
/// present, else 0). Malformed rows are skipped and counted.
std::vector<RawTrajectory> ingest_porto_csv(const std::string& path, const geo::Region& region,
                                            IngestStats* stats = nullptr,
                                            double sample_interval_s = 15.0);

/// Line-oriented interchange format: one {"id": ..., "points": [[lon,lat,t],...]}
/// object per line. Bad lines are skipped with a counted warning.
std::vector<RawTrajectory> ingest_jsonl(const std::string& path, IngestStats* stats = nullptr);

void save_jsonl(const std::string& path, const std::vector<RawTrajectory>& trajs);

/// Keep trajectories with length in [l_min, l_max] whose points all lie in
/// `region`. Idempotent.
std::vector<RawTrajectory> filter_dataset(const std::vector<RawTrajectory>& trajs,
                                          const geo::Region& region, std::size_t l_min,
                                          std::size_t l_max);

struct DatasetSplit {
    std::vector<std::string> train;
    std::vector<std::string> validation;
    std::vector<std::string> test;
    // finetune subsets, carved from `test` with the same ratios
    std::vector<std::string> finetune_train;
    std::vector<std::string> finetune_validation;
    std::vector<std::string> finetune_test;
};

/// Deterministic shuffle under `seed`; sizes floor(ratio*N) with the
/// remainder assigned to train. The finetune subsets re-partition the test
/// ids with the same ratios.
DatasetSplit split_dataset(const std::vector<RawTrajectory>& trajs,
                           double train_ratio, double val_ratio, double test_ratio,
                           std::uint64_t seed);

struct SyntheticConfig {
    std::size_t l_min = 20;
    std::size_t l_max = 76;      // uniform length range; default averages ~48 points
    double speed_mps = 10.0;     // travel speed along roads
    double dt_s = 15.0;          // sampling interval
    double turn_prob = 0.15;     // chance of a 90-degree turn per step
    double noise_m = 2.0;        // per-point GPS jitter in meters
    double margin_frac = 0.05;   // start-point margin from the region edge
};

/// Simulated drives on an axis-aligned road grid: straight runs with
/// occasional 90-degree turns, reflected inward near the region boundary.
/// Pure function of (n, region, seed, config). With turn_prob == 0 the walk
/// never turns (output is collinear and may leave the region).
std::vector<RawTrajectory> generate_synthetic(std::size_t n, const geo::Region& region,
                                              std::uint64_t seed,
                                              const SyntheticConfig& config = {});

} // namespace movsem::data

#endif // MOVSEM_DATA_HPP
