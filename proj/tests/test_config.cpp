#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "wsol/config_file.hpp"

using namespace wsol;

namespace {

std::filesystem::path write_config(const std::string& text) {
    const auto path = std::filesystem::temp_directory_path() / "wsol_test_config.txt";
    std::ofstream(path) << text;
    return path;
}

}  // namespace

TEST_CASE("config file parsing") {
    RunConfig config;
    const auto path = write_config(
        "# training\n"
        "learning_rate = 0.01\n"
        "epochs= 7\n"
        "\n"
        "gamma6 = 2.5   # area weight\n"
        "t4 = 0.05\n"
        "bas_detach_classifier = false\n"
        "feature_channels = 12\n"
        "seed = 99\n");
    load_config_file(config, path);
    CHECK(config.train.learning_rate == 0.01);
    CHECK(config.train.epochs == 7);
    CHECK(config.loss.gamma[5] == 2.5);
    CHECK(config.loss.thresholds.t4 == 0.05);
    CHECK_FALSE(config.loss.bas_detach_classifier);
    CHECK(config.model.feature_channels == 12);
    CHECK(config.model.seed == 99);
    CHECK(config.train.seed == 99);
    CHECK(config.dataset.seed == 99);

    // Untouched keys keep their defaults.
    CHECK(config.train.momentum == 0.9);
    CHECK(config.loss.gamma[0] == 0.5);
}

TEST_CASE("num_classes and input_size stay aligned between model and dataset") {
    RunConfig config;
    load_config_file(config, write_config("num_classes = 6\ninput_size = 128\n"));
    CHECK(config.model.num_classes == 6);
    CHECK(config.dataset.num_classes == 6);
    CHECK(config.model.input_size == 128);
    CHECK(config.dataset.image_size == 128);
}

TEST_CASE("config errors carry the file name and line number") {
    RunConfig config;

    SUBCASE("unknown key") {
        try {
            load_config_file(config, write_config("learning_rate = 0.1\nnot_a_key = 3\n"));
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            const std::string msg = e.what();
            CHECK(msg.find(":2:") != std::string::npos);
            CHECK(msg.find("not_a_key") != std::string::npos);
        }
    }
    SUBCASE("line without an equals sign") {
        try {
            load_config_file(config, write_config("epochs 7\n"));
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find(":1:") != std::string::npos);
        }
    }
    SUBCASE("unparseable value") {
        try {
            load_config_file(config, write_config("\n\nepochs = seven\n"));
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find(":3:") != std::string::npos);
        }
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_config_file(config, "/nonexistent/wsol.cfg"), IoError);
    }
}
