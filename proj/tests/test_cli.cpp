#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include <json.hpp>

using nlohmann::json;

namespace {

std::string data(const char* name) { return std::string(NSM_DATA_DIR) + "/" + name; }

int run(const std::string& args) {
    const std::string cmd = std::string(NSM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string write_config(const char* name, const json& cfg) {
    const std::string path = std::string("/tmp/nsm_cli_") + name + ".json";
    std::ofstream(path) << cfg.dump(2);
    return path;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

json tiny_task() {
    return {{"sample_pool", 300}, {"batch_size", 32},  {"max_steps", 20},
            {"grad_threshold", 1e-12}, {"eval_samples", 200}, {"seed", 3},
            {"log_every", 10}};
}

} // namespace

TEST_CASE("overfit runs, saves a checkpoint, and reruns bit-identically") {
    json cfg = {{"mesh", data("quad.obj")},
                {"architecture", {{"depth", 1}, {"width", 8}}},
                {"task", tiny_task()},
                {"output", {{"checkpoint", "/tmp/nsm_cli_quad.nsm"},
                            {"report", "/tmp/nsm_cli_quad_report.json"}}}};
    const auto path = write_config("overfit", cfg);

    CHECK(run("overfit --config " + path) == 0);
    const std::string first = slurp("/tmp/nsm_cli_quad.nsm");
    REQUIRE_FALSE(first.empty());

    CHECK(run("overfit --config " + path) == 0);
    CHECK(slurp("/tmp/nsm_cli_quad.nsm") == first);

    const auto report = json::parse(slurp("/tmp/nsm_cli_quad_report.json"));
    CHECK(report.contains("config"));
    CHECK(report["report"]["steps"] == 20);
    CHECK(report["report"]["termination"] == "max-steps");
    CHECK_FALSE(report["report"].contains("wall_clock_sec"));
}

TEST_CASE("--set overrides are applied and echoed in the report") {
    json cfg = {{"mesh", data("quad.obj")},
                {"architecture", {{"depth", 1}, {"width", 8}}},
                {"task", tiny_task()},
                {"output", {{"report", "/tmp/nsm_cli_set_report.json"}}}};
    const auto path = write_config("set", cfg);
    CHECK(run("overfit --config " + path + " --set task.max_steps=7") == 0);
    const auto report = json::parse(slurp("/tmp/nsm_cli_set_report.json"));
    CHECK(report["config"]["task"]["max_steps"] == 7);
    CHECK(report["report"]["steps"] == 7);
}

TEST_CASE("config errors exit with code 2") {
    SUBCASE("unknown top-level key") {
        json cfg = {{"mesh", data("quad.obj")}, {"meshes", "typo"}, {"task", tiny_task()}};
        CHECK(run("overfit --config " + write_config("unknown", cfg)) == 2);
    }
    SUBCASE("unknown task key") {
        json cfg = {{"mesh", data("quad.obj")}, {"task", {{"learning_rate", 0.1}}}};
        CHECK(run("overfit --config " + write_config("badtask", cfg)) == 2);
    }
    SUBCASE("invalid JSON") {
        std::ofstream("/tmp/nsm_cli_broken.json") << "{ not json";
        CHECK(run("overfit --config /tmp/nsm_cli_broken.json") == 2);
    }
    SUBCASE("bad domain") {
        json cfg = {{"mesh", data("quad.obj")}, {"domain", "annulus"}, {"task", tiny_task()}};
        CHECK(run("overfit --config " + write_config("baddomain", cfg)) == 2);
    }
    SUBCASE("missing required --config") {
        CHECK(run("overfit") == 2);
    }
    SUBCASE("unknown subcommand") {
        CHECK(run("transmogrify --config /tmp/x.json") == 2);
    }
}

TEST_CASE("missing files exit with code 3") {
    CHECK(run("overfit --config /tmp/nsm_cli_does_not_exist.json") == 3);
    json cfg = {{"mesh", "/tmp/nsm_cli_missing_mesh.obj"}, {"task", tiny_task()}};
    CHECK(run("overfit --config " + write_config("missingmesh", cfg)) == 3);
}

TEST_CASE("closed meshes exit with code 4") {
    json cfg = {{"mesh", data("tetra.obj")}, {"task", tiny_task()}};
    CHECK(run("overfit --config " + write_config("tetra", cfg)) == 4);
}

TEST_CASE("corrupt checkpoints exit with code 6") {
    std::ofstream("/tmp/nsm_cli_garbage.nsm") << "not a checkpoint";
    json cfg = {{"surface", {{"checkpoint", "/tmp/nsm_cli_garbage.nsm"}}},
                {"task", tiny_task()}};
    CHECK(run("parameterize --config " + write_config("garbage", cfg)) == 6);
}

TEST_CASE("malformed keypoint files exit with code 6") {
    std::ofstream("/tmp/nsm_cli_bad_keypoints.txt") << "uv 0.5 0.5\n";
    json cfg = {{"source", {{"analytic", {{"kind", "plane"}}}}},
                {"target", {{"analytic", {{"kind", "plane"}}}}},
                {"keypoints", "/tmp/nsm_cli_bad_keypoints.txt"},
                {"task", tiny_task()}};
    CHECK(run("map --config " + write_config("badkp", cfg)) == 6);
}

TEST_CASE("parameterize and eval round-trip deterministically") {
    json pcfg = {{"surface", {{"analytic", {{"kind", "hemisphere"}, {"radius", 1.0}}}}},
                 {"energy", "conformal"},
                 {"architecture", {{"depth", 1}, {"width", 8}}},
                 {"task", tiny_task()},
                 {"output", {{"checkpoint", "/tmp/nsm_cli_param.nsm"}}}};
    CHECK(run("parameterize --config " + write_config("param", pcfg)) == 0);

    json ecfg = {{"kind", "parameterization"},
                 {"surface", {{"analytic", {{"kind", "hemisphere"}, {"radius", 1.0}}}}},
                 {"warp", "/tmp/nsm_cli_param.nsm"},
                 {"energy", "conformal"},
                 {"eval_samples", 500},
                 {"output", {{"report", "/tmp/nsm_cli_eval1.json"}}}};
    const auto epath = write_config("eval", ecfg);
    CHECK(run("eval --config " + epath) == 0);
    const std::string r1 = slurp("/tmp/nsm_cli_eval1.json");
    CHECK(run("eval --config " + epath) == 0);
    CHECK(slurp("/tmp/nsm_cli_eval1.json") == r1);

    const auto stats = json::parse(r1)["stats"];
    CHECK(stats.contains("median_density"));
    CHECK(stats.contains("flip_percent"));
    CHECK(stats["median_density"].get<double>() > 0.0);
}

TEST_CASE("map command trains a warp and exports correspondences") {
    json cfg = {{"source", {{"analytic", {{"kind", "saddle"}, {"a", 1.0}}}}},
                {"target", {{"analytic", {{"kind", "saddle"}, {"a", 1.0}}}}},
                {"energy", "iso"},
                {"architecture", {{"depth", 1}, {"width", 8}}},
                {"task", tiny_task()},
                {"weights", {{"lambda_b", 1e3}}},
                {"grid_n", 8},
                {"output", {{"checkpoint", "/tmp/nsm_cli_warp.nsm"},
                            {"correspondence_prefix", "/tmp/nsm_cli_corr"},
                            {"report", "/tmp/nsm_cli_map_report.json"}}}};
    CHECK(run("map --config " + write_config("map", cfg)) == 0);

    const auto report = json::parse(slurp("/tmp/nsm_cli_map_report.json"));
    CHECK(report["report"].contains("keypoint_residual"));
    CHECK(report["report"].contains("flips"));

    // exported pair shares connectivity: same face count in both files
    const std::string src = slurp("/tmp/nsm_cli_corr_source.obj");
    const std::string tgt = slurp("/tmp/nsm_cli_corr_target.obj");
    REQUIRE_FALSE(src.empty());
    REQUIRE_FALSE(tgt.empty());
    auto count = [](const std::string& text, const char* prefix) {
        std::size_t n = 0, pos = 0;
        while ((pos = text.find(prefix, pos)) != std::string::npos) {
            ++n;
            pos += 2;
        }
        return n;
    };
    CHECK(count(src, "\nf ") == count(tgt, "\nf "));
    CHECK(count(src, "\nf ") == 2 * 8 * 8);
}

TEST_CASE("eval rejects an unknown kind") {
    json cfg = {{"kind", "collection"}};
    CHECK(run("eval --config " + write_config("badkind", cfg)) == 2);
}
