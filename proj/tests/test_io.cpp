#include "movsem/io.hpp"

#include <doctest.h>

#include <cstdio>
#include <fstream>

using namespace movsem;

TEST_CASE("float block round trip is bitwise identical") {
    io::FloatBlock block;
    block.dimension = 256;
    Rng rng(17);
    for (int i = 0; i < 10; ++i) {
        block.ids.push_back("e" + std::to_string(i));
        for (int j = 0; j < 256; ++j) {
            block.values.push_back(static_cast<float>(rng.uniform(-2.0, 2.0)));
        }
    }
    io::save_float_block("roundtrip_embs", block);
    io::FloatBlock loaded = io::load_float_block("roundtrip_embs");
    CHECK(loaded.dimension == block.dimension);
    CHECK(loaded.ids == block.ids);
    REQUIRE(loaded.values.size() == block.values.size());
    for (std::size_t i = 0; i < block.values.size(); ++i) {
        CHECK(loaded.values[i] == block.values[i]); // exact
    }
}

TEST_CASE("float block with ragged lengths") {
    io::FloatBlock block;
    block.dimension = 4;
    block.ids = {"a", "b"};
    block.lengths = {2, 3};
    block.values.assign(5 * 4, 1.5f);
    io::save_float_block("ragged_block", block);
    io::FloatBlock loaded = io::load_float_block("ragged_block");
    CHECK(loaded.lengths == block.lengths);
    CHECK(loaded.rows() == 5);
}

TEST_CASE("float block corruption is detected") {
    io::FloatBlock block;
    block.dimension = 8;
    block.ids = {"x"};
    block.values.assign(8, 0.0f);
    io::save_float_block("corrupt_block", block);
    // truncate the data file so the manifest count no longer matches
    std::ofstream trunc("corrupt_block.f32", std::ios::binary | std::ios::trunc);
    trunc << "oops";
    trunc.close();
    CHECK_THROWS_AS(io::load_float_block("corrupt_block"), DataError);
}

TEST_CASE("checkpoint round trip and version gate") {
    io::TensorArchive archive;
    archive["w"] = {{2, 3}, {1, 2, 3, 4, 5, 6}};
    archive["b"] = {{3}, {0.5f, -0.5f, 0.25f}};
    io::save_checkpoint("ck_test.ckpt", archive);
    auto loaded = io::load_checkpoint("ck_test.ckpt");
    REQUIRE(loaded.count("w") == 1);
    CHECK(loaded["w"].shape == std::vector<int>{2, 3});
    CHECK(loaded["w"].values == archive["w"].values);
    CHECK(loaded["b"].values == archive["b"].values);

    SUBCASE("future format version fails with an explicit message") {
        io::save_checkpoint("ck_future.ckpt", archive, io::kCheckpointVersion + 1);
        CHECK_THROWS_WITH_AS(io::load_checkpoint("ck_future.ckpt"),
                             doctest::Contains("format version"), DataError);
    }
    SUBCASE("non-checkpoint file is rejected") {
        std::ofstream junk("ck_junk.ckpt", std::ios::binary);
        junk << "JUNKJUNKJUNK";
        junk.close();
        CHECK_THROWS_AS(io::load_checkpoint("ck_junk.ckpt"), DataError);
    }
}

TEST_CASE("csv writer schema") {
    {
        io::CsvWriter out("csv_test.csv", {"a", "b"});
        out.row(std::vector<double>{1.5, 2.0});
        CHECK_THROWS_AS(out.row(std::vector<double>{1.0}), DataError);
    }
    std::ifstream in("csv_test.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "a,b");
    std::getline(in, line);
    CHECK(line == "1.5,2");
}
