#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "smim/config.hpp"

using namespace smim;
namespace fs = std::filesystem;

namespace {

fs::path write_config(const std::string& text) {
    const auto path = fs::temp_directory_path() / "smim_config_test.cfg";
    std::ofstream out(path);
    out << text;
    return path;
}

}  // namespace

TEST_CASE("config parses sections, comments and typed values") {
    const auto path = write_config(
        "# experiment\n"
        "[data]\n"
        "classes = 10   # trailing comment\n"
        "separation = 1.5\n"
        "standardize = true\n"
        "[train]\n"
        "seeds = 1,2,3\n"
        "out = runs/demo\n");
    const Config cfg = Config::from_file(path);
    CHECK(cfg.get_size("classes") == 10);
    CHECK(cfg.get_double("separation", 0.0) == 1.5);
    CHECK(cfg.get_bool("standardize", false));
    CHECK(cfg.get_u64_list("seeds") == std::vector<std::uint64_t>{1, 2, 3});
    CHECK(cfg.get_string("out") == "runs/demo");
    CHECK(cfg.get_size("missing", 9) == 9);
    fs::remove(path);
}

TEST_CASE("config rejects malformed lines") {
    const auto bad = write_config("classes 10\n");
    CHECK_THROWS_AS(Config::from_file(bad), ConfigError);
    fs::remove(bad);
}

TEST_CASE("overrides replace file values") {
    const auto path = write_config("learning_rate = 0.01\n");
    Config cfg = Config::from_file(path);
    cfg.set("learning_rate", "0.05");
    CHECK(cfg.get_double("learning_rate", 0.0) == 0.05);
    fs::remove(path);
}

TEST_CASE("unknown keys are hard errors") {
    Config cfg;
    cfg.set("learning_rate", "0.1");
    cfg.set("learnign_rate", "0.1");  // typo must be caught
    CHECK_THROWS_WITH_AS(cfg.require_known({"learning_rate"}),
                         doctest::Contains("learnign_rate"), ConfigError);
}

TEST_CASE("bad typed values raise config errors") {
    Config cfg;
    cfg.set("batch_size", "lots");
    CHECK_THROWS_AS(cfg.get_size("batch_size"), ConfigError);
    cfg.set("momentum", "fast");
    CHECK_THROWS_AS(cfg.get_double("momentum", 0.0), ConfigError);
    cfg.set("shuffle", "maybe");
    CHECK_THROWS_AS(cfg.get_bool("shuffle", true), ConfigError);
    CHECK_THROWS_AS(cfg.get_string("absent"), ConfigError);
}
