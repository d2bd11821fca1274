#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <set>
#include <sstream>

#include "lewis/errors.hpp"
#include "lewis/game.hpp"

using lewis::ConfigError;
using lewis::DatasetSplit;
using lewis::GameConfig;
using lewis::Message;
using lewis::NArray;
using lewis::ObjectInstance;
using lewis::Rng;

TEST_CASE("default config splits 256 objects into 205 train / 51 test") {
    GameConfig cfg;
    const DatasetSplit split = lewis::enumerate_and_split(cfg, Rng::from_seed(1));
    CHECK(split.train.size() == 205);
    CHECK(split.test.size() == 51);
}

TEST_CASE("two-attribute ten-value config splits 80/20") {
    GameConfig cfg;
    cfg.K = 2;
    cfg.V = 10;
    const DatasetSplit split = lewis::enumerate_and_split(cfg, Rng::from_seed(1));
    CHECK(split.train.size() == 80);
    CHECK(split.test.size() == 20);
}

TEST_CASE("split is a disjoint partition of the full space") {
    GameConfig cfg;
    const DatasetSplit split = lewis::enumerate_and_split(cfg, Rng::from_seed(7));
    std::set<ObjectInstance> seen;
    for (const auto& v : split.train) CHECK(seen.insert(v).second);
    for (const auto& v : split.test) CHECK(seen.insert(v).second);
    CHECK(seen.size() == 256);
    for (const auto& v : seen) CHECK(lewis::is_valid_object(v, cfg));
}

TEST_CASE("same seed reproduces the split, another seed shuffles it differently") {
    GameConfig cfg;
    const DatasetSplit a = lewis::enumerate_and_split(cfg, Rng::from_seed(3));
    const DatasetSplit b = lewis::enumerate_and_split(cfg, Rng::from_seed(3));
    const DatasetSplit c = lewis::enumerate_and_split(cfg, Rng::from_seed(4));
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    CHECK(a.train != c.train);
}

TEST_CASE("one-hot encoding") {
    GameConfig cfg;
    cfg.K = 2;
    cfg.V = 2;
    const NArray enc = lewis::one_hot({0, 1}, cfg);
    CHECK(enc.v == std::vector<double>{1.0, 0.0, 0.0, 1.0});

    SUBCASE("every encoding sums to K and round-trips") {
        GameConfig full;
        const DatasetSplit split = lewis::enumerate_and_split(full, Rng::from_seed(2));
        for (const auto* part : {&split.train, &split.test}) {
            for (const ObjectInstance& v : *part) {
                const NArray e = lewis::one_hot(v, full);
                double sum = 0.0;
                for (double x : e.v) sum += x;
                CHECK(sum == static_cast<double>(full.K));
                CHECK(lewis::decode_one_hot(e, full) == v);
            }
        }
    }
    SUBCASE("batched rows match the single encoding") {
        const NArray rows = lewis::one_hot_rows({{0, 1}, {1, 0}}, cfg);
        CHECK(rows.shape == std::vector<int>{2, 4});
        CHECK(rows.v == std::vector<double>{1, 0, 0, 1, 0, 1, 1, 0});
    }
    SUBCASE("invalid objects are rejected") {
        CHECK_THROWS_AS(lewis::one_hot({0, 2}, cfg), ConfigError);
        CHECK_THROWS_AS(lewis::one_hot({0}, cfg), ConfigError);
    }
}

TEST_CASE("message validator") {
    GameConfig cfg;
    Message ok;
    ok.tokens = {0, 9, 3, 2, 7, 10};
    CHECK(lewis::is_valid_message(ok, cfg));

    Message wrong_len;
    wrong_len.tokens = {0, 1, 2, 10};
    CHECK_FALSE(lewis::is_valid_message(wrong_len, cfg));

    Message no_eos;
    no_eos.tokens = {0, 1, 2, 3, 4, 5};
    CHECK_FALSE(lewis::is_valid_message(no_eos, cfg));

    Message early_eos;
    early_eos.tokens = {0, 10, 2, 3, 4, 10};
    CHECK_FALSE(lewis::is_valid_message(early_eos, cfg));

    Message bad_token;
    bad_token.tokens = {0, 1, 2, 3, 11, 10};
    CHECK_FALSE(lewis::is_valid_message(bad_token, cfg));
}

TEST_CASE("config validation and enumeration cap") {
    GameConfig cfg;
    cfg.K = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    GameConfig huge;
    huge.K = 30;
    CHECK_THROWS_AS(lewis::enumerate_and_split(huge, Rng::from_seed(1)), ConfigError);

    GameConfig bad_split;
    bad_split.split_fraction = 1.0;
    CHECK_THROWS_AS(bad_split.validate(), ConfigError);
}

TEST_CASE("csv dump writes one row per object plus header") {
    GameConfig cfg;
    cfg.K = 2;
    cfg.V = 3;
    const DatasetSplit split = lewis::enumerate_and_split(cfg, Rng::from_seed(5));
    std::ostringstream out;
    lewis::dump_dataset_csv(split, cfg, out);
    const std::string text = out.str();
    CHECK(text.substr(0, 12) == "a0,a1,split\n");
    CHECK(std::count(text.begin(), text.end(), '\n') == 10);
    CHECK(text.find(",train\n") != std::string::npos);
    CHECK(text.find(",test\n") != std::string::npos);
}
