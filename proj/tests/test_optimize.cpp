#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nsm/mesh/plmap.hpp"
#include "nsm/opt/trainer.hpp"

using namespace nsm;
using nlohmann::json;

#ifndef NSM_DATA_DIR
#define NSM_DATA_DIR "data"
#endif

namespace {

std::string data(const char* name) { return std::string(NSM_DATA_DIR) + "/" + name; }

net::NeuralMap swap_net() {
    net::Architecture a;
    a.depth = 1;
    a.width = 2;
    a.out_dim = 2;
    a.residual = false;
    a.identity_skip = false;
    a.activation = net::Activation::relu;
    net::NeuralMap m;
    m.arch = a;
    m.params.assign(18, 0.0);
    m.params[0] = m.params[3] = 1.0; // lift W = I
    m.params[6] = m.params[9] = 1.0; // hidden W = I
    m.params[13] = 1.0;              // proj W swaps the coordinates
    m.params[14] = 1.0;
    return m;
}

net::NeuralMap small_warp(std::uint64_t seed) {
    net::Architecture a;
    a.depth = 2;
    a.width = 12;
    a.out_dim = 2;
    a.identity_skip = true;
    a.final_init_scale = 1e-3;
    return net::build(a, seed);
}

opt::OptimizationTask quick_task() {
    opt::OptimizationTask t;
    t.sample_pool = 2000;
    t.batch_size = 64;
    t.boundary_batch = 64;
    t.max_steps = 60;
    t.grad_threshold = 1e-12; // effectively disabled
    t.rmsprop.base_lr = 1e-3;
    t.schedule.t0 = 100;
    t.eval_samples = 500;
    t.log_every = 20;
    t.seed = 4;
    return t;
}

} // namespace

TEST_CASE("rmsprop step arithmetic") {
    opt::RmsPropConfig cfg;
    cfg.base_lr = 1e-3;
    opt::RmsProp o(1, cfg);

    std::vector<double> p = {1.0};
    std::vector<double> g = {2.0};
    const double lr = 1e-3;
    o.step(p, g, lr);

    double acc = (1.0 - cfg.smoothing) * 4.0;
    double mom = lr * 2.0 / (std::sqrt(acc) + cfg.eps);
    CHECK(p[0] == doctest::Approx(1.0 - mom).epsilon(1e-12));

    g[0] = -1.0;
    o.step(p, g, lr);
    const double acc2 = cfg.smoothing * acc + (1.0 - cfg.smoothing) * 1.0;
    const double mom2 = cfg.momentum * mom + lr * -1.0 / (std::sqrt(acc2) + cfg.eps);
    CHECK(p[0] == doctest::Approx(1.0 - mom - mom2).epsilon(1e-12));

    std::vector<double> wrong = {1.0, 2.0};
    CHECK_THROWS_AS(o.step(wrong, g, lr), ConfigError);
}

TEST_CASE("cosine schedule with warm restarts") {
    opt::CosineRestarts s;
    s.t0 = 100;
    s.t_mult = 2;
    s.eta_min = 1e-6;
    const double base = 1e-3;

    CHECK(s.lr_at(0, base) == doctest::Approx(base));
    CHECK(s.lr_at(50, base) == doctest::Approx(0.5 * (base + s.eta_min)).epsilon(1e-9));
    CHECK(s.lr_at(99, base) < 2e-6 + base * 3e-4);
    // restart boundaries: periods 100, then 200
    CHECK(s.lr_at(100, base) == doctest::Approx(base));
    CHECK(s.lr_at(300, base) == doctest::Approx(base));
    CHECK(s.lr_at(200, base) == doctest::Approx(0.5 * (base + s.eta_min)).epsilon(1e-9));

    SUBCASE("linear warmup precedes the cosine phase") {
        s.warmup = 10;
        CHECK(s.lr_at(0, base) == doctest::Approx(base / 10.0));
        CHECK(s.lr_at(4, base) == doctest::Approx(base / 2.0));
        CHECK(s.lr_at(9, base) == doctest::Approx(base));
        CHECK(s.lr_at(10, base) == doctest::Approx(base)); // cosine t = 0
        CHECK(s.lr_at(110, base) == doctest::Approx(base)); // first restart shifted
    }
}

TEST_CASE("uniform_domain_samples is deterministic and in the unit square") {
    const auto a = opt::uniform_domain_samples(1000, 12);
    const auto b = opt::uniform_domain_samples(1000, 12);
    const auto c = opt::uniform_domain_samples(1000, 13);
    REQUIRE(a.size() == 1000);
    CHECK(a == b);
    CHECK(a != c);
    for (const auto& p : a) {
        CHECK(p[0] >= 0.0);
        CHECK(p[0] <= 1.0);
        CHECK(p[1] >= 0.0);
        CHECK(p[1] <= 1.0);
    }
}

TEST_CASE("count_flips on hand-built warps") {
    net::Architecture a;
    a.depth = 2;
    a.width = 8;
    a.out_dim = 2;
    a.identity_skip = true;
    a.final_init_scale = 1e-4;
    const auto near_id = net::build(a, 3);
    const auto grid_ok = opt::count_flips_grid(near_id, Rotation2::identity(), 32);
    CHECK(grid_ok.flips == 0);
    CHECK(grid_ok.total == 2 * 32 * 32);
    CHECK(grid_ok.percent() == 0.0);

    // coordinate swap reverses orientation everywhere
    const auto swapped = opt::count_flips_grid(swap_net(), Rotation2::identity(), 16);
    CHECK(swapped.flips == swapped.total);
    CHECK(swapped.percent() == doctest::Approx(100.0));

    std::vector<Vec2d> uv = {{0.1, 0.1}, {0.9, 0.1}, {0.5, 0.8}};
    std::vector<std::array<int, 3>> tris = {{0, 1, 2}};
    const auto tri = opt::count_flips(swap_net(), Rotation2::identity(), uv, tris);
    CHECK(tri.total == 1);
    CHECK(tri.flips == 1);
}

TEST_CASE("task validation") {
    opt::OptimizationTask t;
    CHECK_NOTHROW(t.validate());
    t.batch_size = 0;
    CHECK_THROWS_AS(t.validate(), ConfigError);
    t = {};
    t.grad_threshold = 0.0;
    CHECK_THROWS_AS(t.validate(), ConfigError);
    t = {};
    t.weights.epsilon = -1.0;
    CHECK_THROWS_AS(t.validate(), ConfigError);
}

TEST_CASE("short overfit run is deterministic and converging") {
    const auto pl = mesh::tutte_embed(mesh::load_obj(data("quad.obj")));
    net::Architecture a;
    a.depth = 2;
    a.width = 16;
    a.out_dim = 3;

    auto task = quick_task();
    task.max_steps = 250;

    auto m1 = net::build(a, 1);
    const auto r1 = opt::overfit(pl, m1, task);
    auto m2 = net::build(a, 1);
    const auto r2 = opt::overfit(pl, m2, task);

    CHECK(m1.params == m2.params); // bitwise reproducible
    CHECK(r1.final_loss == r2.final_loss);
    CHECK(r1.position_rmse == r2.position_rmse);

    CHECK(r1.steps == 250);
    CHECK(r1.termination == "max-steps");
    CHECK(r1.position_rmse < 0.05);
    CHECK(r1.normal_deviation_deg < 45.0);
    CHECK_FALSE(r1.curve.empty());
    CHECK(r1.curve.back().terms.count("position") == 1);
    CHECK(r1.curve.back().terms.count("normal") == 1);
    CHECK(r1.wall_clock_sec > 0.0);

    // the report serializes without timing for reproducibility
    const auto j = r1.to_json();
    CHECK_FALSE(j.contains("wall_clock_sec"));
    CHECK(j["termination"] == "max-steps");
}

TEST_CASE("overfit writes run logs and periodic checkpoints") {
    const auto pl = mesh::tutte_embed(mesh::load_obj(data("quad.obj")));
    net::Architecture a;
    a.depth = 2;
    a.width = 16;
    a.out_dim = 3;
    auto m = net::build(a, 2);

    auto task = quick_task();
    task.log_path = "/tmp/nsm_opt_log.jsonl";
    task.checkpoint_every = 30;
    task.checkpoint_path = "/tmp/nsm_opt_ckpt";

    (void)opt::overfit(pl, m, task);

    std::ifstream log(task.log_path);
    REQUIRE(log.good());
    std::string line;
    int lines = 0;
    while (std::getline(log, line)) {
        const auto j = json::parse(line);
        CHECK(j.contains("step"));
        CHECK(j.contains("total"));
        CHECK(j.contains("lr"));
        ++lines;
    }
    CHECK(lines >= 3); // log_every = 20, 60 steps

    const auto ck = net::load_checkpoint("/tmp/nsm_opt_ckpt.step30");
    CHECK(ck.arch.width == 16);
    std::remove(task.log_path.c_str());
    std::remove("/tmp/nsm_opt_ckpt.step30");
    std::remove("/tmp/nsm_opt_ckpt.step60");
}

TEST_CASE("overfit diverges gracefully under an absurd learning rate") {
    const auto pl = mesh::tutte_embed(mesh::load_obj(data("quad.obj")));
    net::Architecture a;
    a.depth = 2;
    a.width = 16;
    a.out_dim = 3;
    auto m = net::build(a, 9);

    auto task = quick_task();
    task.max_steps = 500;
    task.rmsprop.base_lr = 1e5;
    const auto r = opt::overfit(pl, m, task);
    CHECK(r.termination == "divergence");
    CHECK(r.steps < 500);
}

TEST_CASE("parameterization optimization reduces hemisphere distortion") {
    const compose::Surface phi = analytic::AnalyticSurface::hemisphere(1.0);
    net::Architecture a;
    a.depth = 2;
    a.width = 12;
    a.out_dim = 2;
    a.identity_skip = true;
    a.final_init_scale = 1e-3;
    auto h = net::build(a, 11);

    auto task = quick_task();
    task.max_steps = 300;
    task.schedule.t0 = 300;
    const auto pool = opt::uniform_domain_samples(4000, 21);
    const auto r = opt::optimize_parameterization(phi, h, opt::DistortionKind::conformal, pool,
                                                  task);
    CHECK(r.initial_median_density > 0.0);
    CHECK(r.final_median_density < r.initial_median_density);
    CHECK(r.steps == 300);

    // the trained h evaluates to finite densities on a fresh sample set
    const auto check = opt::parameterization_densities(
        phi, h, opt::DistortionKind::conformal, opt::uniform_domain_samples(100, 5), 0.01);
    for (double d : check) CHECK(std::isfinite(d));
}

TEST_CASE("surface map optimization on a plane self-map stays near identity") {
    compose::SurfaceMapHandle handle;
    handle.source = analytic::AnalyticSurface::plane();
    handle.target = analytic::AnalyticSurface::plane();
    handle.warp = small_warp(13);
    compose::pin_corners(handle);

    auto task = quick_task();
    task.max_steps = 120;
    task.weights.lambda_b = 1e3;
    task.schedule.warmup = 20;
    const auto pool = opt::uniform_domain_samples(2000, 31);
    const auto r = opt::optimize_surface_map(handle, opt::DistortionKind::iso, pool, task);

    CHECK(r.steps == 120);
    CHECK(r.flip_total > 0);
    CHECK(r.flips == 0);
    CHECK(r.keypoint_residual < 0.05);
    CHECK(r.boundary_residual < 1e-3);
    CHECK(std::isfinite(r.final_median_density));

    // composed densities of the identity-like self map sit near the Dirichlet minimum
    const auto d = opt::composed_densities(handle, opt::DistortionKind::iso,
                                           opt::uniform_domain_samples(200, 41), 0.01);
    const double med = energy::median_of(d);
    CHECK(med == doctest::Approx(2.0 + 2.0 / 1.01).epsilon(0.05));
}

TEST_CASE("surface map optimization validates its inputs") {
    compose::SurfaceMapHandle handle;
    handle.source = analytic::AnalyticSurface::plane();
    handle.target = analytic::AnalyticSurface::plane();
    handle.warp = small_warp(1);
    handle.P = {{0.5, 0.5}};
    auto task = quick_task();
    const auto pool = opt::uniform_domain_samples(100, 1);
    CHECK_THROWS_AS((void)opt::optimize_surface_map(handle, opt::DistortionKind::iso, pool, task),
                    ConfigError);
    handle.P.clear();
    CHECK_THROWS_AS(
        (void)opt::optimize_surface_map(handle, opt::DistortionKind::iso, {}, task),
        ConfigError);
}

TEST_CASE("collection optimization keeps cycle consistency while training") {
    compose::CollectionHandle handle;
    handle.surfaces = {compose::Surface(analytic::AnalyticSurface::plane()),
                       compose::Surface(analytic::AnalyticSurface::saddle(1.0))};
    handle.warps = {small_warp(17), small_warp(18)};
    handle.keypoints = {{{0.5, 0.5}}, {{0.5, 0.5}}};
    handle.targets = {{0.5, 0.5}};
    handle.rots = {Rotation2::identity(), Rotation2::identity()};

    auto task = quick_task();
    task.max_steps = 80;
    task.weights.lambda_b = 1e3;
    task.schedule.warmup = 20;
    const auto pool = opt::uniform_domain_samples(1500, 51);
    const auto r = opt::optimize_collection(handle, opt::DistortionKind::iso, pool, task);

    CHECK(r.steps == 80);
    CHECK(r.extra.count("initial_median_D_0_to_1") == 1);
    CHECK(r.extra.count("final_median_D_1_to_0") == 1);

    // routing through any cycle still lands exactly on the direct image
    const Vec2d p = {0.3, 0.7};
    const std::vector<std::size_t> cycle = {1, 0, 1};
    CHECK(compose::route(handle, cycle, p) == compose::collection_point(handle, 1, p));
}

TEST_CASE("distortion kind names") {
    CHECK(opt::distortion_from_name("iso") == opt::DistortionKind::iso);
    CHECK(opt::distortion_from_name("conformal") == opt::DistortionKind::conformal);
    CHECK(std::string(opt::distortion_name(opt::DistortionKind::iso)) == "iso");
    CHECK_THROWS_AS((void)opt::distortion_from_name("arap"), ConfigError);
}
