#include "movsem/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace movsem::aug {

namespace {

// wrap a heading difference (thetas live in [-1, 1]) into (-1, 1]
double wrap_heading(double d) {
    d = std::fmod(d + 1.0, 2.0);
    if (d <= 0.0) d += 2.0;
    return d - 1.0;
}

void check_rho(double rho, double hi, const char* op) {
    if (!(rho >= 0.0) || !(rho < hi + 1e-12)) {
        throw ConfigError(std::string(op) + ": rate out of range");
    }
}

// Restore enough dropped points to reach floor_len survivors, preferring the
// order given by `priority` (higher first).
void enforce_floor(std::vector<std::uint8_t>& kept, const std::vector<double>& priority,
                   std::size_t floor_len) {
    std::size_t survivors = std::accumulate(kept.begin(), kept.end(), std::size_t{0});
    if (survivors >= floor_len) return;
    std::vector<std::size_t> dropped;
    for (std::size_t i = 0; i < kept.size(); ++i) {
        if (!kept[i]) dropped.push_back(i);
    }
    std::stable_sort(dropped.begin(), dropped.end(), [&](std::size_t a, std::size_t b) {
        return priority[a] > priority[b];
    });
    for (std::size_t i : dropped) {
        if (survivors >= floor_len) break;
        kept[i] = 1;
        ++survivors;
    }
}

AugmentedView collect(const std::vector<std::uint8_t>& kept) {
    AugmentedView view;
    for (std::size_t i = 0; i < kept.size(); ++i) {
        if (kept[i]) view.kept.push_back(i);
    }
    return view;
}

} // namespace

CurvatureProfile curvature_profile(const feat::NormalizedTrajectory& norm) {
    const std::size_t length = norm.length();
    CurvatureProfile profile;
    profile.kappa.assign(length, 0.0);
    profile.keep_always.assign(length, 0);
    if (length == 0) return profile;
    profile.keep_always.front() = 1;
    profile.keep_always.back() = 1;
    if (length < 3) return profile;

    std::vector<feat::MovementDynamics> dyn = feat::movement_dynamics(norm);
    for (std::size_t i = 1; i + 1 < length; ++i) {
        // theta_i is the heading into point i; the turn at i compares the
        // incoming and outgoing displacement
        double in2 = dyn[i].dx * dyn[i].dx + dyn[i].dy * dyn[i].dy;
        double out2 = dyn[i + 1].dx * dyn[i + 1].dx + dyn[i + 1].dy * dyn[i + 1].dy;
        if (in2 <= feat::kHeadingEps || out2 <= feat::kHeadingEps) continue;
        profile.kappa[i] = std::abs(wrap_heading(dyn[i + 1].theta - dyn[i].theta));
    }
    return profile;
}

std::vector<double> cga_drop_probabilities(const CurvatureProfile& profile, double rho) {
    const std::size_t length = profile.kappa.size();
    std::vector<double> probs(length, 0.0);
    if (rho <= 0.0) return probs;
    double weight_sum = 0.0;
    std::size_t droppable = 0;
    for (std::size_t i = 0; i < length; ++i) {
        if (profile.keep_always[i]) continue;
        weight_sum += 1.0 / (profile.kappa[i] + kCurvatureEps);
        ++droppable;
    }
    if (droppable == 0) return probs;
    double mean_weight = weight_sum / static_cast<double>(droppable);
    for (std::size_t i = 0; i < length; ++i) {
        if (profile.keep_always[i]) continue;
        probs[i] = rho * (1.0 / (profile.kappa[i] + kCurvatureEps)) / mean_weight;
    }
    return probs;
}

AugmentedView cga_view(const CurvatureProfile& profile, double rho, std::uint64_t seed,
                       std::size_t floor_len) {
    check_rho(rho, 1.0 - 1e-9, "cga_view");
    const std::size_t length = profile.kappa.size();
    std::vector<double> probs = cga_drop_probabilities(profile, rho);
    Rng rng(seed_stream(seed, 0xc6a0));
    std::vector<std::uint8_t> kept(length, 1);
    for (std::size_t i = 0; i < length; ++i) {
        if (profile.keep_always[i]) continue;
        if (rng.bernoulli(std::min(probs[i], kMaxDropProb))) kept[i] = 0;
    }
    enforce_floor(kept, profile.kappa, std::max<std::size_t>(2, floor_len));
    return collect(kept);
}

AugmentedView random_point_mask(std::size_t length, double rho, std::uint64_t seed,
                                std::size_t floor_len) {
    check_rho(rho, 1.0 - 1e-9, "random_point_mask");
    Rng rng(seed_stream(seed, 0x9a5d));
    std::vector<std::uint8_t> kept(length, 1);
    for (std::size_t i = 1; i + 1 < length; ++i) {
        if (rng.bernoulli(rho)) kept[i] = 0;
    }
    // restoration priority is a seeded random order
    std::vector<double> priority(length);
    for (auto& p : priority) p = rng.uniform();
    enforce_floor(kept, priority, std::max<std::size_t>(2, floor_len));
    return collect(kept);
}

AugmentedView block_mask(std::size_t length, double rho, std::uint64_t seed,
                         std::size_t floor_len) {
    check_rho(rho, 1.0 - 1e-9, "block_mask");
    Rng rng(seed_stream(seed, 0xb10c));
    std::vector<std::uint8_t> kept(length, 1);
    std::size_t span = static_cast<std::size_t>(std::ceil(rho * static_cast<double>(length)));
    if (span > 0 && length > 2) {
        span = std::min(span, length - 2); // endpoints stay
        std::size_t max_start = length - 1 - span;
        std::size_t start = 1 + rng.uniform_int(max_start);
        for (std::size_t i = start; i < start + span; ++i) kept[i] = 0;
    }
    std::vector<double> priority(length);
    for (auto& p : priority) p = rng.uniform();
    enforce_floor(kept, priority, std::max<std::size_t>(2, floor_len));
    return collect(kept);
}

data::RawTrajectory apply_view(const data::RawTrajectory& traj, const AugmentedView& view) {
    data::RawTrajectory out;
    out.id = traj.id;
    out.points.reserve(view.kept.size());
    for (std::size_t i : view.kept) out.points.push_back(traj.points[i]);
    return out;
}

data::RawTrajectory downsample(const data::RawTrajectory& traj, double rho, std::uint64_t seed) {
    check_rho(rho, 0.5, "downsample");
    Rng rng(seed_stream(seed, 0xd095));
    std::vector<std::uint8_t> kept(traj.length(), 1);
    for (std::size_t i = 0; i < traj.length(); ++i) {
        if (rng.bernoulli(rho)) kept[i] = 0;
    }
    std::size_t survivors = std::accumulate(kept.begin(), kept.end(), std::size_t{0});
    if (survivors < 2 && traj.length() >= 2) {
        kept.front() = 1;
        kept.back() = 1;
    }
    return apply_view(traj, collect(kept));
}

data::RawTrajectory distort(const data::RawTrajectory& traj, double rho, double delta_m,
                            std::uint64_t seed) {
    check_rho(rho, 0.5, "distort");
    Rng rng(seed_stream(seed, 0xd157));
    data::RawTrajectory out = traj;
    std::size_t count =
        static_cast<std::size_t>(std::ceil(rho * static_cast<double>(traj.length())));
    if (count == 0) return out;
    // sample without replacement via partial shuffle
    std::vector<std::size_t> idx(traj.length());
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    for (std::size_t k = 0; k < count && k < idx.size(); ++k) {
        auto& p = out.points[idx[k]];
        geo::MeterPoint m = geo::mercator(p.lon, p.lat);
        m.x += rng.uniform(-delta_m, delta_m);
        m.y += rng.uniform(-delta_m, delta_m);
        geo::mercator_inverse(m.x, m.y, p.lon, p.lat);
    }
    return out;
}

} // namespace movsem::aug
