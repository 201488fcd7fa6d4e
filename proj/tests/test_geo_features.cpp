#include "movsem/features.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace movsem;

TEST_CASE("mercator projection closed forms") {
    auto origin = geo::mercator(0.0, 0.0);
    CHECK(origin.x == doctest::Approx(0.0));
    CHECK(origin.y == doctest::Approx(0.0));

    auto antimeridian = geo::mercator(180.0, 0.0);
    CHECK(antimeridian.x == doctest::Approx(20037508.342789244).epsilon(1e-12));
    CHECK(antimeridian.y == doctest::Approx(0.0));

    // independent route: y = R * atanh(sin(lat)) equals R * ln(tan(pi/4 + lat/2))
    double lon = -8.61, lat = 41.15;
    auto p = geo::mercator(lon, lat);
    double lat_rad = lat * geo::kPi / 180.0;
    CHECK(p.x == doctest::Approx(geo::kEarthRadiusM * lon * geo::kPi / 180.0).epsilon(1e-12));
    CHECK(p.y == doctest::Approx(geo::kEarthRadiusM * std::atanh(std::sin(lat_rad)))
                     .epsilon(1e-12));
}

TEST_CASE("mercator latitude domain") {
    CHECK_THROWS_AS(geo::mercator(0.0, 86.0), DataError);
    CHECK_THROWS_AS(geo::mercator(0.0, -85.1), DataError);
    CHECK_NOTHROW(geo::mercator(0.0, 85.0));
}

TEST_CASE("mercator round trip") {
    double lon = 12.34, lat = -45.6;
    auto p = geo::mercator(lon, lat);
    double lon2, lat2;
    geo::mercator_inverse(p.x, p.y, lon2, lat2);
    CHECK(lon2 == doctest::Approx(lon).epsilon(1e-12));
    CHECK(lat2 == doctest::Approx(lat).epsilon(1e-12));
}

TEST_CASE("normalize maps region corners to the unit square") {
    geo::Region region = test::test_region();
    auto traj = test::make_traj("t", {{region.lon_min, region.lat_min, 0},
                                      {region.lon_max, region.lat_max, 10}});
    feat::NormalizedTrajectory norm = feat::normalize(traj, region);
    CHECK(norm.pts[0][0] == doctest::Approx(0.0));
    CHECK(norm.pts[0][1] == doctest::Approx(0.0));
    CHECK(norm.pts[1][0] == doctest::Approx(1.0));
    CHECK(norm.pts[1][1] == doctest::Approx(1.0));
}

TEST_CASE("normalize midpoint of projected extent is (0.5, 0.5)") {
    geo::Region region = test::test_region();
    double mx = region.x_min_m + region.width_m / 2.0;
    double my = region.y_min_m + region.height_m / 2.0;
    double lon, lat;
    geo::mercator_inverse(mx, my, lon, lat);
    auto norm = feat::normalize(test::make_traj("t", {{lon, lat, 0}}), region);
    CHECK(norm.pts[0][0] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(norm.pts[0][1] == doctest::Approx(0.5).epsilon(1e-9));
}

namespace {

feat::NormalizedTrajectory norm_of(const std::vector<std::array<double, 2>>& pts) {
    feat::NormalizedTrajectory n;
    n.pts = pts;
    return n;
}

} // namespace

TEST_CASE("movement dynamics headings") {
    SUBCASE("first point and stationary points get zero heading") {
        auto dyn = feat::movement_dynamics(norm_of({{0.5, 0.5}, {0.5, 0.5}}));
        CHECK(dyn[0].theta == 0.0);
        CHECK(dyn[1].dx == 0.0);
        CHECK(dyn[1].theta == 0.0); // otherwise-branch, not atan2(0,0)
    }
    SUBCASE("diagonal") {
        auto dyn = feat::movement_dynamics(norm_of({{0.1, 0.1}, {0.11, 0.11}}));
        CHECK(dyn[1].theta == doctest::Approx(0.25));
    }
    SUBCASE("axes") {
        auto north = feat::movement_dynamics(norm_of({{0.1, 0.1}, {0.1, 0.11}}));
        CHECK(north[1].theta == doctest::Approx(0.5));
        auto west = feat::movement_dynamics(norm_of({{0.5, 0.5}, {0.49, 0.5}}));
        CHECK(west[1].theta == doctest::Approx(1.0));
    }
    SUBCASE("sub-threshold displacement uses the zero branch") {
        // squared displacement 2e-7 <= 1e-6
        auto dyn = feat::movement_dynamics(norm_of({{0.1, 0.1}, {0.1 + 3e-4, 0.1 + 3e-4}}));
        CHECK(dyn[1].theta == 0.0);
    }
}

TEST_CASE("movement dynamics properties") {
    Rng rng(31);
    std::vector<std::array<double, 2>> pts(40);
    for (auto& p : pts) p = {rng.uniform(), rng.uniform()};
    auto norm = norm_of(pts);
    auto dyn = feat::movement_dynamics(norm);
    REQUIRE(dyn.size() == pts.size());

    SUBCASE("displacements telescope to the endpoint difference") {
        double sx = 0, sy = 0;
        for (std::size_t i = 1; i < dyn.size(); ++i) {
            sx += dyn[i].dx;
            sy += dyn[i].dy;
        }
        CHECK(sx == doctest::Approx(pts.back()[0] - pts.front()[0]).epsilon(1e-12));
        CHECK(sy == doctest::Approx(pts.back()[1] - pts.front()[1]).epsilon(1e-12));
    }

    SUBCASE("reversed displacement differs by 1 mod 2") {
        for (std::size_t i = 1; i < pts.size(); ++i) {
            double dx = pts[i][0] - pts[i - 1][0];
            double dy = pts[i][1] - pts[i - 1][1];
            if (dx * dx + dy * dy <= feat::kHeadingEps) continue;
            double fwd = dyn[i].theta;
            double rev = std::atan2(-dy, -dx) / geo::kPi;
            double diff = std::fmod(std::abs(fwd - rev), 2.0);
            CHECK(std::min(diff, 2.0 - diff) == doctest::Approx(1.0).epsilon(1e-9));
        }
    }

    SUBCASE("region translation leaves dynamics unchanged") {
        auto shifted = pts;
        for (auto& p : shifted) {
            p[0] += 0.17;
            p[1] -= 0.05;
        }
        auto dyn2 = feat::movement_dynamics(norm_of(shifted));
        for (std::size_t i = 0; i < dyn.size(); ++i) {
            CHECK(dyn2[i].dx == doctest::Approx(dyn[i].dx).epsilon(1e-9));
            CHECK(dyn2[i].dy == doctest::Approx(dyn[i].dy).epsilon(1e-9));
            CHECK(dyn2[i].theta == doctest::Approx(dyn[i].theta).epsilon(1e-9));
        }
    }
}

TEST_CASE("compose features") {
    feat::CellEmbeddingTable table;
    table.dimension = 64;
    table.vectors[5] = std::vector<float>(64, 0.5f);
    std::vector<feat::MovementDynamics> dyn = {{0, 0, 0}, {0.1, 0.2, 0.25}};

    SUBCASE("full mode dimension is 3 + d_se") {
        auto f = feat::compose_features(dyn, {5, 5}, table);
        CHECK(f.dim == 67);
        CHECK(f.length() == 2);
        CHECK(f.row(1)[0] == doctest::Approx(0.1f));
        CHECK(f.row(1)[2] == doctest::Approx(0.25f));
        CHECK(f.row(1)[3] == doctest::Approx(0.5f));
    }
    SUBCASE("unseen cell falls back to the zero vector") {
        auto f = feat::compose_features(dyn, {5, 999}, table);
        for (std::size_t j = 3; j < f.dim; ++j) CHECK(f.row(1)[j] == 0.0f);
        CHECK(f.row(0)[3] == doctest::Approx(0.5f));
    }
    SUBCASE("cell-only mode drops the dynamics") {
        auto f = feat::compose_features(dyn, {5, 5}, table, feat::FeatureMode::kCellOnly);
        CHECK(f.dim == 64);
        CHECK(f.row(0)[0] == doctest::Approx(0.5f));
    }
    SUBCASE("length mismatch is an error") {
        CHECK_THROWS_AS(feat::compose_features(dyn, {5}, table), DataError);
    }
    SUBCASE("output length equals input length") {
        auto f = feat::compose_features(dyn, {5, 7}, table);
        CHECK(f.length() == dyn.size());
    }
}
