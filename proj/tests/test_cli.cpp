#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mvk/cli.hpp"
#include "mvk/error.hpp"
#include "mvk/io.hpp"

using namespace mvk;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kSmall = R"({
  "model": {"name": "lq_killing", "kappa": 1.0},
  "grid": {"x_min": -4, "x_max": 4, "nx": 41, "y_max": 6, "ny": 16, "nt": 40},
  "particles": {"N": 2000, "batches": 4},
  "sweep": {"n": [1, 4], "g_points": 201},
  "separability_levels": 2,
  "smp_directions": 3
})";

fs::path scratch(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("mvk_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

fs::path write_file(const fs::path& dir, const std::string& text) {
    const fs::path p = dir / "config.json";
    std::ofstream(p) << text;
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

int run_small(const std::string& name, const std::string& experiment, fs::path& out, std::string& err,
              std::optional<std::uint64_t> seed = std::nullopt) {
    const fs::path dir = scratch(name);
    out = dir / "out";
    CliArgs a;
    a.config = write_file(dir, kSmall).string();
    a.experiment = experiment;
    a.out = out.string();
    a.seed = seed;
    std::ostringstream e;
    const int rc = run(a, e);
    err = e.str();
    return rc;
}

}  // namespace

TEST_CASE("solve writes the control, fields and manifest") {
    fs::path out;
    std::string err;
    REQUIRE(run_small("solve", "solve", out, err) == kExitOk);
    for (const char* f : {"g_star.csv", "u.csv", "nu.csv", "cost_trace.csv", "diagnostics.json", "manifest.json"})
        CHECK(fs::exists(out / f));
    const json diag = json::parse(slurp(out / "diagnostics.json"));
    CHECK(diag["picard_iterations"].get<int>() > 0);
    CHECK(diag["converged"].get<bool>());
    const json man = json::parse(slurp(out / "manifest.json"));
    CHECK(man["experiment"] == "solve");
    CHECK(man["config_hash"].get<std::string>().size() == 16);
    CHECK(man["tolerances"]["mu_floor"].get<double>() == 1e-12);
}

TEST_CASE("reruns are bit-identical") {
    fs::path a, b;
    std::string err;
    REQUIRE(run_small("rerun_a", "solve", a, err) == kExitOk);
    REQUIRE(run_small("rerun_b", "solve", b, err) == kExitOk);
    for (const char* f : {"g_star.csv", "u.csv", "nu.csv", "cost_trace.csv", "diagnostics.json"})
        CHECK(slurp(a / f) == slurp(b / f));
}

TEST_CASE("every experiment runs on a small grid") {
    for (const auto& e : experiment_names()) {
        CAPTURE(e);
        fs::path out;
        std::string err;
        CHECK(run_small("exp_" + e, e, out, err, 42) == kExitOk);
        CHECK(fs::exists(out / "manifest.json"));
    }
}

TEST_CASE("separability gap shrinks across refinements") {
    fs::path out;
    std::string err;
    REQUIRE(run_small("sep", "separability-check", out, err) == kExitOk);
    const json diag = json::parse(slurp(out / "diagnostics.json"));
    CHECK(diag["decreasing"].get<bool>());
    CHECK(diag["separability_gap"].size() == 2);
}

TEST_CASE("particles without a seed") {
    fs::path out;
    std::string err;
    CHECK(run_small("noseed", "particles", out, err) == kExitValidation);
    CHECK_FALSE(err.empty());
}

TEST_CASE("unknown experiment") {
    fs::path out;
    std::string err;
    CHECK(run_small("unknown", "warp-drive", out, err) == kExitValidation);
    CHECK(err.find("warp-drive") != std::string::npos);
}

TEST_CASE("malformed config") {
    const fs::path dir = scratch("bad");
    CliArgs a;
    a.config = write_file(dir, "{\"model\": {\"name\": ").string();
    a.out = (dir / "out").string();
    std::ostringstream e;
    CHECK(run(a, e) == kExitValidation);
    CHECK_FALSE(e.str().empty());
}

TEST_CASE("strict config parsing") {
    auto code_of = [](const std::string& text) {
        try {
            (void)parse_config(text);
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::InvalidArgument;
    };
    const std::string grid = R"("grid": {"nx": 41, "ny": 16, "nt": 40})";
    CHECK_NOTHROW(parse_config(R"({"model": {"name": "lq_killing"}, )" + grid + "}"));
    CHECK(code_of(R"({"model": {"name": "lq_killing", "kapa": 1}, )" + grid + "}") == ErrorCode::ConfigParse);
    CHECK(code_of(R"({"model": {"name": "lq_killing", "kappa": "one"}, )" + grid + "}") == ErrorCode::ConfigParse);
    CHECK(code_of(R"({"model": {"name": "other"}, )" + grid + "}") == ErrorCode::ConfigParse);
    CHECK(code_of(R"({"model": {"name": "lq_killing"}, "grid": {"nt": 1}})") == ErrorCode::ConfigParse);
    CHECK(code_of(R"({"model": {"name": "lq_killing"}, "grid": {"extension": 0.5}})") == ErrorCode::ConfigParse);
    CHECK(code_of(R"({"model": {"name": "lq_killing"}, )" + grid + R"(, "solver": {"mu_floor": 1e-10}})") ==
          ErrorCode::ConfigParse);
    CHECK(code_of(R"({"grid": {"nx": 41}})") == ErrorCode::ConfigParse);
    const RunConfig c = parse_config(R"({"model": {"name": "constant_lambda", "kappa": 0.3}, )" + grid +
                                     R"(, "seed": 7, "solver": {"mfg": true}})");
    CHECK(c.lq.kill_everywhere);
    CHECK(*c.seed == 7u);
    CHECK_FALSE(mfc_options(c).backward.nonlocal);
}

TEST_CASE("config hash") {
    CHECK(config_hash("") == "cbf29ce484222325");
    CHECK(config_hash("a") == "af63dc4c8601ec8c");
    CHECK(config_hash("{\"a\":1}") != config_hash("{\"a\":2}"));
}

TEST_CASE("refine override") {
    const fs::path dir = scratch("refine");
    CliArgs a;
    a.config = write_file(dir, kSmall).string();
    a.experiment = "forward";
    a.out = (dir / "out").string();
    a.refine = 1;
    std::ostringstream e;
    REQUIRE(run(a, e) == kExitOk);
    const json man = json::parse(slurp(dir / "out" / "manifest.json"));
    CHECK(man["refine"] == 1);
    CHECK(man["grid"]["nx"] == 81);
}
