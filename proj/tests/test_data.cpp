#include "movsem/data.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

using namespace movsem;

namespace {

std::string write_file(const std::string& name, const std::string& content) {
    std::ofstream out(name);
    out << content;
    return name;
}

} // namespace

TEST_CASE("porto csv ingestion") {
    geo::Region region = geo::Region::from_lonlat(-9.0, -8.0, 41.0, 41.5);

    SUBCASE("row with a 48-point polyline") {
        std::string poly = "[";
        for (int i = 0; i < 48; ++i) {
            if (i) poly += ",";
            poly += "[-8.61" + std::to_string(i % 10) + ",41.15]";
        }
        poly += "]";
        std::string path = write_file(
            "porto_48.csv", "TRIP_ID,TIMESTAMP,POLYLINE\nt1,1372636858,\"" + poly + "\"\n");
        auto trajs = data::ingest_porto_csv(path, region);
        REQUIRE(trajs.size() == 1);
        CHECK(trajs[0].length() == 48);
        CHECK(trajs[0].id == "t1");
        // timestamps synthesized at 15 s from the row start
        CHECK(trajs[0].points[0].t == doctest::Approx(1372636858.0));
        CHECK(trajs[0].points[1].t == doctest::Approx(1372636858.0 + 15.0));
    }

    SUBCASE("empty polylines and malformed rows are skipped with a count") {
        std::string path = write_file("porto_mixed.csv",
                                      "TRIP_ID,TIMESTAMP,POLYLINE\n"
                                      "a,0,\"[[-8.61,41.15],[-8.62,41.16]]\"\n"
                                      "b,0,\"[]\"\n"
                                      "c,0,\"[[-8.63,41.14],[-8.64,41.15]]\"\n"
                                      "d,0,\"not json\"\n"
                                      "e,0,\"[[-8.60,41.13],[-8.61,41.14]]\"\n");
        data::IngestStats stats;
        auto trajs = data::ingest_porto_csv(path, region, &stats);
        CHECK(trajs.size() == 3);
        CHECK(stats.parsed == 3);
        CHECK(stats.skipped == 2);
    }

    SUBCASE("unreadable file is fatal") {
        CHECK_THROWS_AS(data::ingest_porto_csv("does_not_exist.csv", region), DataError);
    }

    SUBCASE("zero parseable rows is fatal") {
        std::string path =
            write_file("porto_bad.csv", "TRIP_ID,TIMESTAMP,POLYLINE\nx,0,\"[]\"\n");
        CHECK_THROWS_AS(data::ingest_porto_csv(path, region), DataError);
    }
}

TEST_CASE("jsonl ingestion") {
    SUBCASE("direct parse") {
        std::string path = write_file(
            "traj_two.jsonl", R"({"id":"a","points":[[0,0,0],[1,1,10]]})" "\n");
        auto trajs = data::ingest_jsonl(path);
        REQUIRE(trajs.size() == 1);
        CHECK(trajs[0].id == "a");
        CHECK(trajs[0].length() == 2);
        CHECK(trajs[0].points[1].t == doctest::Approx(10.0));
    }
    SUBCASE("empty file yields an empty sequence") {
        std::string path = write_file("traj_empty.jsonl", "");
        CHECK(data::ingest_jsonl(path).empty());
    }
    SUBCASE("bad lines are skipped with a warning count") {
        std::string path = write_file("traj_bad.jsonl",
                                      R"({"id":"a","points":[[0,0,0],[1,1,1]]})" "\n"
                                      "{not json}\n"
                                      R"({"points":[[0,0,0]]})" "\n");
        data::IngestStats stats;
        auto trajs = data::ingest_jsonl(path, &stats);
        CHECK(trajs.size() == 1);
        CHECK(stats.skipped == 2);
    }
    SUBCASE("100-line fixture round-trips ids in order") {
        std::vector<data::RawTrajectory> fixture;
        for (int i = 0; i < 100; ++i) {
            fixture.push_back(test::make_traj("id-" + std::to_string(i),
                                              {{0.01, 0.01, 0.0}, {0.02, 0.02, 15.0}}));
        }
        data::save_jsonl("traj_100.jsonl", fixture);
        auto loaded = data::ingest_jsonl("traj_100.jsonl");
        REQUIRE(loaded.size() == 100);
        for (int i = 0; i < 100; ++i) CHECK(loaded[i].id == "id-" + std::to_string(i));
    }
}

namespace {

data::RawTrajectory traj_of_length(const std::string& id, std::size_t n, double lon0 = 0.01) {
    data::RawTrajectory t;
    t.id = id;
    for (std::size_t i = 0; i < n; ++i) {
        t.points.push_back({lon0 + 1e-5 * static_cast<double>(i), 0.01, 15.0 * static_cast<double>(i)});
    }
    return t;
}

} // namespace

TEST_CASE("filter dataset") {
    geo::Region region = test::test_region();

    SUBCASE("length bounds are inclusive") {
        std::vector<data::RawTrajectory> in = {traj_of_length("short", 19),
                                               traj_of_length("lo", 20),
                                               traj_of_length("hi", 200),
                                               traj_of_length("long", 201)};
        auto out = data::filter_dataset(in, region, 20, 200);
        REQUIRE(out.size() == 2);
        CHECK(out[0].id == "lo");
        CHECK(out[1].id == "hi");
    }

    SUBCASE("out-of-region points disqualify the whole trajectory") {
        auto inside = traj_of_length("in", 25);
        auto outside = traj_of_length("out", 25);
        outside.points[10].lon = 5.0; // far outside
        auto out = data::filter_dataset({inside, outside}, region, 20, 200);
        REQUIRE(out.size() == 1);
        CHECK(out[0].id == "in");
    }

    SUBCASE("mixed fixture with 4 violations keeps 6") {
        std::vector<data::RawTrajectory> in;
        for (int i = 0; i < 6; ++i) in.push_back(traj_of_length("ok" + std::to_string(i), 30));
        in.push_back(traj_of_length("v1", 5));
        in.push_back(traj_of_length("v2", 300));
        auto bad_region = traj_of_length("v3", 30);
        bad_region.points[0].lat = -1.0;
        in.push_back(bad_region);
        in.push_back(traj_of_length("v4", 19));
        CHECK(data::filter_dataset(in, region, 20, 200).size() == 6);
    }

    SUBCASE("filtering is idempotent") {
        std::vector<data::RawTrajectory> in;
        for (int i = 0; i < 10; ++i) {
            in.push_back(traj_of_length("t" + std::to_string(i), 15 + 3 * i));
        }
        auto once = data::filter_dataset(in, region, 20, 200);
        auto twice = data::filter_dataset(once, region, 20, 200);
        REQUIRE(once.size() == twice.size());
        for (std::size_t i = 0; i < once.size(); ++i) CHECK(once[i].id == twice[i].id);
    }
}

TEST_CASE("split dataset") {
    std::vector<data::RawTrajectory> trajs;
    for (int i = 0; i < 100; ++i) trajs.push_back(traj_of_length("t" + std::to_string(i), 20));

    SUBCASE("exact ratios on 100") {
        auto split = data::split_dataset(trajs, 0.7, 0.1, 0.2, 5);
        CHECK(split.train.size() == 70);
        CHECK(split.validation.size() == 10);
        CHECK(split.test.size() == 20);
    }
    SUBCASE("exact ratios on 10") {
        std::vector<data::RawTrajectory> ten(trajs.begin(), trajs.begin() + 10);
        auto split = data::split_dataset(ten, 0.7, 0.1, 0.2, 5);
        CHECK(split.train.size() == 7);
        CHECK(split.validation.size() == 1);
        CHECK(split.test.size() == 2);
    }
    SUBCASE("remainder goes to train") {
        std::vector<data::RawTrajectory> eleven(trajs.begin(), trajs.begin() + 11);
        auto split = data::split_dataset(eleven, 0.7, 0.1, 0.2, 5);
        CHECK(split.train.size() == 8); // floor 7 + remainder 1
        CHECK(split.validation.size() == 1);
        CHECK(split.test.size() == 2);
    }
    SUBCASE("same seed reproduces the partition; partitions are disjoint and exhaustive") {
        auto a = data::split_dataset(trajs, 0.7, 0.1, 0.2, 9);
        auto b = data::split_dataset(trajs, 0.7, 0.1, 0.2, 9);
        CHECK(a.train == b.train);
        CHECK(a.validation == b.validation);
        CHECK(a.test == b.test);
        std::set<std::string> all;
        for (const auto& id : a.train) all.insert(id);
        for (const auto& id : a.validation) all.insert(id);
        for (const auto& id : a.test) all.insert(id);
        CHECK(all.size() == trajs.size());
    }
    SUBCASE("finetune subsets re-partition the test split with the same ratios") {
        auto split = data::split_dataset(trajs, 0.7, 0.1, 0.2, 9);
        CHECK(split.finetune_train.size() == 14);
        CHECK(split.finetune_validation.size() == 2);
        CHECK(split.finetune_test.size() == 4);
        std::set<std::string> test_ids(split.test.begin(), split.test.end());
        for (const auto& id : split.finetune_train) CHECK(test_ids.count(id) == 1);
    }
    SUBCASE("bad inputs") {
        std::vector<data::RawTrajectory> two(trajs.begin(), trajs.begin() + 2);
        CHECK_THROWS_AS(data::split_dataset(two, 0.7, 0.1, 0.2, 1), DataError);
        CHECK_THROWS_AS(data::split_dataset(trajs, 0.8, 0.1, 0.2, 1), ConfigError);
    }
}

TEST_CASE("synthetic generation") {
    geo::Region region = test::test_region();

    SUBCASE("pure function of (n, region, seed, config)") {
        auto a = data::generate_synthetic(3, region, 7);
        auto b = data::generate_synthetic(3, region, 7);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            REQUIRE(a[i].length() == b[i].length());
            for (std::size_t j = 0; j < a[i].length(); ++j) {
                CHECK(a[i].points[j].lon == b[i].points[j].lon);
                CHECK(a[i].points[j].lat == b[i].points[j].lat);
            }
        }
        auto c = data::generate_synthetic(3, region, 8);
        CHECK(a[0].points[0].lon != c[0].points[0].lon);
    }

    SUBCASE("lengths stay within the configured range") {
        data::SyntheticConfig cfg;
        cfg.l_min = 20;
        cfg.l_max = 200;
        auto trajs = data::generate_synthetic(200, region, 3, cfg);
        for (const auto& t : trajs) {
            CHECK(t.length() >= 20);
            CHECK(t.length() <= 200);
        }
    }

    SUBCASE("all points inside the region at default settings") {
        auto trajs = data::generate_synthetic(50, region, 11);
        for (const auto& t : trajs) {
            for (const auto& p : t.points) CHECK(region.contains(p.lon, p.lat));
        }
    }

    SUBCASE("zero turn rate produces collinear walks") {
        data::SyntheticConfig cfg;
        cfg.turn_prob = 0.0;
        cfg.noise_m = 0.0;
        cfg.l_min = 5;
        cfg.l_max = 20;
        // region large enough that straight runs cannot leave it
        geo::Region big = geo::Region::from_lonlat(-1.0, 1.0, -1.0, 1.0);
        auto trajs = data::generate_synthetic(20, big, 4, cfg);
        for (const auto& t : trajs) {
            auto norm = feat::normalize(t, big);
            auto dyn = feat::movement_dynamics(norm);
            for (std::size_t i = 2; i < dyn.size(); ++i) {
                double cross = dyn[i - 1].dx * dyn[i].dy - dyn[i - 1].dy * dyn[i].dx;
                CHECK(std::abs(cross) < 1e-12);
            }
        }
    }

    SUBCASE("degenerate region is fatal") {
        geo::Region r = test::test_region();
        r.width_m = 0.0;
        CHECK_THROWS_AS(data::generate_synthetic(1, r, 1), ConfigError);
    }
}
