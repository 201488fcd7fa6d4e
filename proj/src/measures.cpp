#include "movsem/measures.hpp"

#include "movsem/geo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace movsem::dist {

namespace {

double sq(double v) { return v * v; }

double euclid(const Point& p, const Point& q) { return std::sqrt(sq(p.x - q.x) + sq(p.y - q.y)); }

double chebyshev(const Point& p, const Point& q) {
    return std::max(std::abs(p.x - q.x), std::abs(p.y - q.y));
}

} // namespace

PointSeq to_meters(const data::RawTrajectory& traj) {
    PointSeq seq;
    seq.reserve(traj.length());
    for (const auto& p : traj.points) {
        geo::MeterPoint m = geo::mercator(p.lon, p.lat);
        seq.push_back({m.x, m.y});
    }
    return seq;
}

std::size_t edr(const PointSeq& a, const PointSeq& b, double eps_m, PointMetric metric) {
    if (!(eps_m > 0.0)) throw ConfigError("edr: matching threshold must be positive");
    const std::size_t n = a.size(), m = b.size();
    auto within = [&](std::size_t i, std::size_t j) {
        double d = metric == PointMetric::kEuclidean ? euclid(a[i], b[j]) : chebyshev(a[i], b[j]);
        return d <= eps_m;
    };
    // two-row DP over edit counts
    std::vector<std::size_t> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= m; ++j) {
            std::size_t subst = prev[j - 1] + (within(i - 1, j - 1) ? 0 : 1);
            cur[j] = std::min({subst, prev[j] + 1, cur[j - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

double hausdorff(const PointSeq& a, const PointSeq& b) {
    if (a.empty() || b.empty()) throw DataError("hausdorff: empty input");
    auto directed = [](const PointSeq& u, const PointSeq& v) {
        double worst = 0.0;
        for (const auto& p : u) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& q : v) best = std::min(best, euclid(p, q));
            worst = std::max(worst, best);
        }
        return worst;
    };
    return std::max(directed(a, b), directed(b, a));
}

double frechet_discrete(const PointSeq& a, const PointSeq& b) {
    if (a.empty() || b.empty()) throw DataError("frechet_discrete: empty input");
    const std::size_t n = a.size(), m = b.size();
    std::vector<double> prev(m), cur(m);
    for (std::size_t j = 0; j < m; ++j) {
        double d = euclid(a[0], b[j]);
        prev[j] = j == 0 ? d : std::max(prev[j - 1], d);
    }
    for (std::size_t i = 1; i < n; ++i) {
        cur[0] = std::max(prev[0], euclid(a[i], b[0]));
        for (std::size_t j = 1; j < m; ++j) {
            double reach = std::min({prev[j], cur[j - 1], prev[j - 1]});
            cur[j] = std::max(reach, euclid(a[i], b[j]));
        }
        std::swap(prev, cur);
    }
    return prev[m - 1];
}

namespace {

// Projection of point p onto segment (s, e), clamped to the segment.
Point project_onto(const Point& p, const Point& s, const Point& e) {
    double vx = e.x - s.x, vy = e.y - s.y;
    double len2 = vx * vx + vy * vy;
    if (len2 <= 0.0) return s;
    double t = ((p.x - s.x) * vx + (p.y - s.y) * vy) / len2;
    t = std::clamp(t, 0.0, 1.0);
    return {s.x + t * vx, s.y + t * vy};
}

// replacement(e1, e2) * coverage(e1, e2)
double edit_cost(const Point& s1, const Point& e1, const Point& s2, const Point& e2) {
    double replacement = euclid(s1, s2) + euclid(e1, e2);
    double coverage = euclid(s1, e1) + euclid(s2, e2);
    return replacement * coverage;
}

// EDwP state: (i, j) index the current original points; `side` records
// whether one trajectory currently sits at a mid-segment split point (the
// projection of the opposing current point onto segment (idx, idx+1)).
//   side 0: both at original points a_i, b_j
//   side 1: T1 at proj(b_j, a_i->a_{i+1}), T2 at b_j
//   side 2: T1 at a_i, T2 at proj(a_i, b_j->b_{j+1})
struct EdwpDp {
    const PointSeq& a;
    const PointSeq& b;
    std::vector<double> memo;
    std::vector<std::uint8_t> done;
    std::size_t m;

    EdwpDp(const PointSeq& a_, const PointSeq& b_) : a(a_), b(b_), m(b_.size()) {
        memo.assign(a.size() * m * 3, 0.0);
        done.assign(memo.size(), 0);
    }

    double solve(std::size_t i, std::size_t j, int side) {
        std::size_t key = (i * m + j) * 3 + static_cast<std::size_t>(side);
        if (done[key]) return memo[key];
        done[key] = 1;

        const bool a_last = i + 1 == a.size();
        const bool b_last = j + 1 == b.size();
        double best;
        if (side == 0) {
            if (a_last && b_last) {
                best = 0.0;
            } else if (a_last) {
                // zero-length segment at the exhausted trajectory's endpoint
                best = edit_cost(a[i], a[i], b[j], b[j + 1]) + solve(i, j + 1, 0);
            } else if (b_last) {
                best = edit_cost(a[i], a[i + 1], b[j], b[j]) + solve(i + 1, j, 0);
            } else {
                double replace = edit_cost(a[i], a[i + 1], b[j], b[j + 1]) + solve(i + 1, j + 1, 0);
                Point split_a = project_onto(b[j + 1], a[i], a[i + 1]);
                double ins_a = edit_cost(a[i], split_a, b[j], b[j + 1]) + solve(i, j + 1, 1);
                Point split_b = project_onto(a[i + 1], b[j], b[j + 1]);
                double ins_b = edit_cost(a[i], a[i + 1], b[j], split_b) + solve(i + 1, j, 2);
                best = std::min({replace, ins_a, ins_b});
            }
        } else if (side == 1) {
            Point pos = project_onto(b[j], a[i], a[i + 1]);
            if (b_last) {
                best = edit_cost(pos, a[i + 1], b[j], b[j]) + solve(i + 1, j, 0);
            } else {
                double replace = edit_cost(pos, a[i + 1], b[j], b[j + 1]) + solve(i + 1, j + 1, 0);
                Point split_b = project_onto(a[i + 1], b[j], b[j + 1]);
                double ins_b = edit_cost(pos, a[i + 1], b[j], split_b) + solve(i + 1, j, 2);
                best = std::min(replace, ins_b);
            }
        } else {
            Point pos = project_onto(a[i], b[j], b[j + 1]);
            if (a_last) {
                best = edit_cost(a[i], a[i], pos, b[j + 1]) + solve(i, j + 1, 0);
            } else {
                double replace = edit_cost(a[i], a[i + 1], pos, b[j + 1]) + solve(i + 1, j + 1, 0);
                Point split_a = project_onto(b[j + 1], a[i], a[i + 1]);
                double ins_a = edit_cost(a[i], split_a, pos, b[j + 1]) + solve(i, j + 1, 1);
                best = std::min(replace, ins_a);
            }
        }
        memo[key] = best;
        return best;
    }
};

} // namespace

double edwp(const PointSeq& a, const PointSeq& b) {
    if (a.size() < 2 || b.size() < 2) throw DataError("edwp: both inputs need >= 2 points");
    EdwpDp dp(a, b);
    return dp.solve(0, 0, 0);
}

Measure measure_from_name(const std::string& name) {
    if (name == "edr") return Measure::kEdr;
    if (name == "edwp") return Measure::kEdwp;
    if (name == "hausdorff") return Measure::kHausdorff;
    if (name == "frechet") return Measure::kFrechet;
    throw ConfigError("unknown measure: " + name);
}

std::string measure_name(Measure m) {
    switch (m) {
        case Measure::kEdr: return "edr";
        case Measure::kEdwp: return "edwp";
        case Measure::kHausdorff: return "hausdorff";
        case Measure::kFrechet: return "frechet";
    }
    return "?";
}

double evaluate_measure(Measure m, const PointSeq& a, const PointSeq& b,
                        const MeasureParams& params) {
    switch (m) {
        case Measure::kEdr:
            return static_cast<double>(edr(a, b, params.edr_eps_m, params.edr_metric));
        case Measure::kEdwp: return edwp(a, b);
        case Measure::kHausdorff: return hausdorff(a, b);
        case Measure::kFrechet: return frechet_discrete(a, b);
    }
    throw ConfigError("evaluate_measure: bad measure");
}

std::vector<double> pairwise_matrix(const std::vector<PointSeq>& seqs, Measure m,
                                    const MeasureParams& params, unsigned threads) {
    const std::size_t n = seqs.size();
    std::vector<double> matrix(n * n, 0.0);
    // upper triangle only; entry (i, j) is independent of every other entry
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    }
    parallel_for(pairs.size(), threads, [&](std::size_t k) {
        auto [i, j] = pairs[k];
        double value = evaluate_measure(m, seqs[i], seqs[j], params);
        matrix[i * n + j] = value;
        matrix[j * n + i] = value;
    });
    return matrix;
}

} // namespace movsem::dist
