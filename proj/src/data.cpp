#include "movsem/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

namespace movsem::data {

namespace {

// RFC4180-ish line splitter: honors double quotes, doubled quotes inside
// quoted fields. No multi-line fields (the polyline arrays never contain
// newlines in this corpus).
std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

int find_column(const std::vector<std::string>& header, const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (lower(header[i]) == name) return static_cast<int>(i);
    }
    return -1;
}

} // namespace

std::vector<RawTrajectory> ingest_porto_csv(const std::string& path, const geo::Region& region,
                                            IngestStats* stats, double sample_interval_s) {
    (void)region; // filtering is a separate stage; the region is kept for interface symmetry
    std::ifstream in(path);
    if (!in) throw DataError("ingest_porto_csv: cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw DataError("ingest_porto_csv: empty file " + path);
    auto header = split_csv_line(line);
    int poly_col = find_column(header, "polyline");
    int id_col = find_column(header, "trip_id");
    int ts_col = find_column(header, "timestamp");
    if (poly_col < 0) throw DataError("ingest_porto_csv: no POLYLINE column in " + path);

    std::vector<RawTrajectory> out;
    IngestStats st;
    std::size_t row_no = 0;
    while (std::getline(in, line)) {
        ++row_no;
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (poly_col >= static_cast<int>(fields.size())) {
            ++st.skipped;
            continue;
        }
        nlohmann::json poly = nlohmann::json::parse(fields[poly_col], nullptr, false);
        if (poly.is_discarded() || !poly.is_array() || poly.empty()) {
            ++st.skipped;
            continue;
        }
        double t0 = 0.0;
        if (ts_col >= 0 && ts_col < static_cast<int>(fields.size())) {
            char* end = nullptr;
            t0 = std::strtod(fields[ts_col].c_str(), &end);
            if (end == fields[ts_col].c_str()) t0 = 0.0;
        }
        RawTrajectory traj;
        traj.id = (id_col >= 0 && id_col < static_cast<int>(fields.size()) && !fields[id_col].empty())
                      ? fields[id_col]
                      : "row-" + std::to_string(row_no);
        bool ok = true;
        for (std::size_t i = 0; i < poly.size(); ++i) {
            const auto& p = poly[i];
            if (!p.is_array() || p.size() < 2 || !p[0].is_number() || !p[1].is_number()) {
                ok = false;
                break;
            }
            traj.points.push_back({p[0].get<double>(), p[1].get<double>(),
                                   t0 + static_cast<double>(i) * sample_interval_s});
        }
        if (!ok || traj.points.empty()) {
            ++st.skipped;
            continue;
        }
        ++st.parsed;
        out.push_back(std::move(traj));
    }
    if (out.empty()) throw DataError("ingest_porto_csv: zero parseable rows in " + path);
    if (stats) *stats = st;
    return out;
}

std::vector<RawTrajectory> ingest_jsonl(const std::string& path, IngestStats* stats) {
    std::ifstream in(path);
    if (!in) throw DataError("ingest_jsonl: cannot open " + path);
    std::vector<RawTrajectory> out;
    IngestStats st;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("id") || !j.contains("points") ||
            !j["points"].is_array()) {
            ++st.skipped;
            continue;
        }
        RawTrajectory traj;
        traj.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
        bool ok = true;
        for (const auto& p : j["points"]) {
            if (!p.is_array() || p.size() < 3) {
                ok = false;
                break;
            }
            traj.points.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
        }
        if (!ok) {
            ++st.skipped;
            continue;
        }
        ++st.parsed;
        out.push_back(std::move(traj));
    }
    if (stats) *stats = st;
    return out;
}

void save_jsonl(const std::string& path, const std::vector<RawTrajectory>& trajs) {
    std::ofstream out(path);
    if (!out) throw DataError("save_jsonl: cannot open " + path + " for writing");
    for (const auto& traj : trajs) {
        nlohmann::json j;
        j["id"] = traj.id;
        auto& pts = j["points"] = nlohmann::json::array();
        for (const auto& p : traj.points) pts.push_back({p.lon, p.lat, p.t});
        out << j.dump() << '\n';
    }
}

std::vector<RawTrajectory> filter_dataset(const std::vector<RawTrajectory>& trajs,
                                          const geo::Region& region, std::size_t l_min,
                                          std::size_t l_max) {
    if (l_min > l_max) throw ConfigError("filter_dataset: l_min > l_max");
    std::vector<RawTrajectory> out;
    out.reserve(trajs.size());
    for (const auto& traj : trajs) {
        if (traj.length() < l_min || traj.length() > l_max) continue;
        bool inside = true;
        for (const auto& p : traj.points) {
            if (!region.contains(p.lon, p.lat)) {
                inside = false;
                break;
            }
        }
        if (inside) out.push_back(traj);
    }
    return out;
}

DatasetSplit split_dataset(const std::vector<RawTrajectory>& trajs,
                           double train_ratio, double val_ratio, double test_ratio,
                           std::uint64_t seed) {
    if (train_ratio <= 0.0 || val_ratio <= 0.0 || test_ratio <= 0.0 ||
        std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9) {
        throw ConfigError("split_dataset: ratios must be positive and sum to 1");
    }
    if (trajs.size() < 3) throw DataError("split_dataset: need at least 3 trajectories");

    std::vector<std::string> ids;
    ids.reserve(trajs.size());
    for (const auto& t : trajs) ids.push_back(t.id);
    Rng rng(seed_stream(seed, 0x5117));
    rng.shuffle(ids);

    auto partition = [&](const std::vector<std::string>& pool, std::vector<std::string>& tr,
                         std::vector<std::string>& va, std::vector<std::string>& te) {
        std::size_t n = pool.size();
        std::size_t n_train = static_cast<std::size_t>(std::floor(train_ratio * n));
        std::size_t n_val = static_cast<std::size_t>(std::floor(val_ratio * n));
        std::size_t n_test = static_cast<std::size_t>(std::floor(test_ratio * n));
        n_train += n - (n_train + n_val + n_test); // remainder goes to train
        tr.assign(pool.begin(), pool.begin() + n_train);
        va.assign(pool.begin() + n_train, pool.begin() + n_train + n_val);
        te.assign(pool.begin() + n_train + n_val, pool.end());
    };

    DatasetSplit split;
    partition(ids, split.train, split.validation, split.test);
    if (split.test.size() >= 3) {
        partition(split.test, split.finetune_train, split.finetune_validation,
                  split.finetune_test);
    }
    return split;
}

std::vector<RawTrajectory> generate_synthetic(std::size_t n, const geo::Region& region,
                                              std::uint64_t seed, const SyntheticConfig& config) {
    if (n < 1) throw ConfigError("generate_synthetic: n must be >= 1");
    if (!(region.width_m > 0.0) || !(region.height_m > 0.0)) {
        throw ConfigError("generate_synthetic: degenerate region");
    }
    if (config.l_min < 1 || config.l_min > config.l_max) {
        throw ConfigError("generate_synthetic: invalid length range");
    }

    std::vector<RawTrajectory> out(n);
    // headings cycle E, N, W, S in meters space
    static const double kDir[4][2] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};

    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(seed_stream(seed, 0x7147, i));
        std::size_t len = config.l_min + rng.uniform_int(config.l_max - config.l_min + 1);
        double margin_x = region.width_m * config.margin_frac;
        double margin_y = region.height_m * config.margin_frac;
        double x = region.x_min_m + margin_x + rng.uniform() * (region.width_m - 2 * margin_x);
        double y = region.y_min_m + margin_y + rng.uniform() * (region.height_m - 2 * margin_y);
        int heading = static_cast<int>(rng.uniform_int(4));
        double step = config.speed_mps * config.dt_s;

        RawTrajectory traj;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "synth-%06zu", i);
        traj.id = buf;
        traj.points.reserve(len);
        for (std::size_t k = 0; k < len; ++k) {
            double nx = x + config.noise_m * rng.normal();
            double ny = y + config.noise_m * rng.normal();
            double lon, lat;
            geo::mercator_inverse(nx, ny, lon, lat);
            traj.points.push_back({lon, lat, config.dt_s * static_cast<double>(k)});
            if (k + 1 == len) break;

            if (config.turn_prob > 0.0) {
                if (rng.bernoulli(config.turn_prob)) {
                    heading = (heading + (rng.bernoulli(0.5) ? 1 : 3)) % 4;
                }
                // reflect inward when the next step would leave the region
                for (int tries = 0; tries < 4; ++tries) {
                    double px = x + kDir[heading][0] * step;
                    double py = y + kDir[heading][1] * step;
                    bool ok_x = px > region.x_min_m + margin_x &&
                                px < region.x_min_m + region.width_m - margin_x;
                    bool ok_y = py > region.y_min_m + margin_y &&
                                py < region.y_min_m + region.height_m - margin_y;
                    if (ok_x && ok_y) break;
                    heading = (heading + 1) % 4;
                }
            }
            x += kDir[heading][0] * step;
            y += kDir[heading][1] * step;
        }
        out[i] = std::move(traj);
    }
    return out;
}

} // namespace movsem::data
