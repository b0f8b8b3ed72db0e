// neuralmaps: command-line front end for the neural surface map pipeline.
//
//   neuralmaps {overfit|parameterize|map|collection|eval}
//       --config file.json [--set key=value]... [--threads N] [--seed S]
//
// Configs are JSON; unknown keys are rejected. Exit codes: 0 success,
// 2 config, 3 I/O, 4 topology, 5 numerical, 6 file format.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "nsm/compose/compose.hpp"
#include "nsm/mesh/plmap.hpp"
#include "nsm/opt/trainer.hpp"

using nlohmann::json;
using namespace nsm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitTopology = 4;
constexpr int kExitNumerical = 5;
constexpr int kExitFormat = 6;

json read_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IOError("cannot open config: " + path);
    try {
        return json::parse(f);
    } catch (const json::parse_error& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
}

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, _] : obj.items()) {
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&](const char* a) { return key == a; }) == allowed.end()) {
            throw ConfigError(where + ": unknown key '" + key + "'");
        }
    }
}

// --set a.b.c=value, value parsed as JSON when possible, else kept as string
void apply_override(json& cfg, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got: " + kv);
    const std::string path = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;
    }
    json* node = &cfg;
    std::stringstream ss(path);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    if (parts.empty()) throw ConfigError("--set: empty key");
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
    (*node)[parts.back()] = value;
}

template <class T>
T get_or(const json& obj, const char* key, T def) {
    if (!obj.contains(key)) return def;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
}

Domain parse_domain(const json& cfg) {
    const std::string d = get_or<std::string>(cfg, "domain", "square");
    if (d == "square") return Domain::square;
    if (d == "disk") return Domain::disk;
    throw ConfigError("domain must be 'square' or 'disk', got: " + d);
}

net::Architecture parse_arch(const json& a, int out_dim, bool warp_defaults) {
    check_keys(a, "architecture",
               {"depth", "width", "activation", "residual", "identity_skip", "final_init_scale"});
    net::Architecture arch;
    arch.in_dim = 2;
    arch.out_dim = out_dim;
    arch.depth = get_or<int>(a, "depth", warp_defaults ? 2 : 4);
    arch.width = get_or<int>(a, "width", warp_defaults ? 32 : 64);
    arch.activation = net::activation_from_name(get_or<std::string>(a, "activation", "softplus"));
    arch.residual = get_or<bool>(a, "residual", true);
    arch.identity_skip = get_or<bool>(a, "identity_skip", warp_defaults);
    arch.final_init_scale = get_or<double>(a, "final_init_scale", warp_defaults ? 1e-3 : 1.0);
    net::validate(arch);
    return arch;
}

compose::Surface parse_surface(const json& s, const std::string& where) {
    check_keys(s, where, {"checkpoint", "analytic"});
    if (s.contains("checkpoint") == s.contains("analytic")) {
        throw ConfigError(where + ": give exactly one of 'checkpoint' or 'analytic'");
    }
    if (s.contains("checkpoint")) {
        return net::load_checkpoint(s.at("checkpoint").get<std::string>(), 2, 3);
    }
    const json& a = s.at("analytic");
    check_keys(a, where + ".analytic",
               {"kind", "scale", "radius", "arc", "height", "a", "R", "r", "u_extent", "v_extent"});
    const auto kind = analytic::surface_kind_from_name(a.at("kind").get<std::string>());
    analytic::AnalyticSurface surf;
    switch (kind) {
        case analytic::SurfaceKind::plane:
            surf = analytic::AnalyticSurface::plane();
            break;
        case analytic::SurfaceKind::scaled_plane:
            surf = analytic::AnalyticSurface::scaled_plane(get_or<double>(a, "scale", 2.0));
            break;
        case analytic::SurfaceKind::hemisphere:
            surf = analytic::AnalyticSurface::hemisphere(get_or<double>(a, "radius", 1.0));
            break;
        case analytic::SurfaceKind::cylinder_patch:
            surf = analytic::AnalyticSurface::cylinder_patch(get_or<double>(a, "radius", 1.0),
                                                             get_or<double>(a, "arc", 1.5),
                                                             get_or<double>(a, "height", 1.0));
            break;
        case analytic::SurfaceKind::saddle:
            surf = analytic::AnalyticSurface::saddle(get_or<double>(a, "a", 1.0));
            break;
        case analytic::SurfaceKind::torus_patch:
            surf = analytic::AnalyticSurface::torus_patch(
                get_or<double>(a, "R", 2.0), get_or<double>(a, "r", 0.5),
                get_or<double>(a, "u_extent", 1.5), get_or<double>(a, "v_extent", 1.5));
            break;
    }
    analytic::validate(surf);
    return surf;
}

opt::OptimizationTask parse_task(const json& cfg, std::optional<int> cli_threads,
                                 std::optional<std::uint64_t> cli_seed) {
    opt::OptimizationTask task;
    if (cfg.contains("task")) {
        const json& t = cfg.at("task");
        check_keys(t, "task",
                   {"sample_pool", "batch_size", "boundary_batch", "max_steps", "grad_threshold",
                    "ema_decay", "base_lr", "momentum", "smoothing", "t0", "t_mult", "eta_min",
                    "warmup", "seed", "threads", "eval_samples", "divergence_factor", "log_every",
                    "checkpoint_every"});
        task.sample_pool = get_or<std::size_t>(t, "sample_pool", task.sample_pool);
        task.batch_size = get_or<int>(t, "batch_size", task.batch_size);
        task.boundary_batch = get_or<int>(t, "boundary_batch", task.boundary_batch);
        task.max_steps = get_or<long>(t, "max_steps", task.max_steps);
        task.grad_threshold = get_or<double>(t, "grad_threshold", task.grad_threshold);
        task.ema_decay = get_or<double>(t, "ema_decay", task.ema_decay);
        task.rmsprop.base_lr = get_or<double>(t, "base_lr", task.rmsprop.base_lr);
        task.rmsprop.momentum = get_or<double>(t, "momentum", task.rmsprop.momentum);
        task.rmsprop.smoothing = get_or<double>(t, "smoothing", task.rmsprop.smoothing);
        task.schedule.t0 = get_or<int>(t, "t0", task.schedule.t0);
        task.schedule.t_mult = get_or<int>(t, "t_mult", task.schedule.t_mult);
        task.schedule.eta_min = get_or<double>(t, "eta_min", task.schedule.eta_min);
        task.schedule.warmup = get_or<int>(t, "warmup", task.schedule.warmup);
        task.seed = get_or<std::uint64_t>(t, "seed", task.seed);
        task.threads = get_or<int>(t, "threads", task.threads);
        task.eval_samples = get_or<int>(t, "eval_samples", task.eval_samples);
        task.divergence_factor = get_or<double>(t, "divergence_factor", task.divergence_factor);
        task.log_every = get_or<int>(t, "log_every", task.log_every);
        task.checkpoint_every = get_or<int>(t, "checkpoint_every", task.checkpoint_every);
    }
    if (cfg.contains("weights")) {
        const json& w = cfg.at("weights");
        check_keys(w, "weights", {"lambda_n", "lambda_b", "lambda_inv", "lambda_c", "epsilon"});
        task.weights.lambda_n = get_or<double>(w, "lambda_n", task.weights.lambda_n);
        task.weights.lambda_b = get_or<double>(w, "lambda_b", task.weights.lambda_b);
        task.weights.lambda_inv = get_or<double>(w, "lambda_inv", task.weights.lambda_inv);
        task.weights.lambda_c = get_or<double>(w, "lambda_c", task.weights.lambda_c);
        task.weights.epsilon = get_or<double>(w, "epsilon", task.weights.epsilon);
    }
    if (cfg.contains("output")) {
        const json& o = cfg.at("output");
        task.checkpoint_path = get_or<std::string>(o, "checkpoint", "");
        task.log_path = get_or<std::string>(o, "log", "");
    }
    if (cli_threads) task.threads = *cli_threads;
    if (cli_seed) task.seed = *cli_seed;
    task.validate();
    return task;
}

const json& output_section(const json& cfg) {
    static const json empty = json::object();
    if (!cfg.contains("output")) return empty;
    return cfg.at("output");
}

void write_report(const json& cfg, const std::string& path, const opt::RunReport& report,
                  json extra = json::object()) {
    json j = {{"config", cfg}, {"report", report.to_json()}};
    for (auto& [k, v] : extra.items()) j[k] = v;
    if (path.empty()) return;
    std::ofstream f(path);
    if (!f) throw IOError("cannot write report: " + path);
    f << j.dump(2) << '\n';
}

opt::DistortionKind parse_energy(const json& cfg) {
    return opt::distortion_from_name(get_or<std::string>(cfg, "energy", "iso"));
}

int exit_for(const opt::RunReport& report) {
    if (report.termination == "divergence") {
        std::cerr << "error: optimization diverged after " << report.steps << " steps\n";
        return kExitNumerical;
    }
    return kExitOk;
}

// Keypoint files, one pair per line; blank lines and '#' comments ignored.
//   uv su sv tu tv        direct domain preimages
//   i j                   vertex ids into the source/target meshes
//   x y z  x y z          3D points projected onto the meshes
struct KeypointPairs {
    std::vector<Vec2d> P, Q;
};

KeypointPairs load_keypoints(const std::string& path, const mesh::PLMap* src,
                             const mesh::PLMap* tgt) {
    std::ifstream f(path);
    if (!f) throw IOError("cannot open keypoint file: " + path);
    KeypointPairs out;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ss(line);
        std::string first;
        if (!(ss >> first)) continue;
        const std::string ctx = path + ":" + std::to_string(lineno);
        if (first == "uv") {
            double su, sv, tu, tv;
            if (!(ss >> su >> sv >> tu >> tv)) {
                throw FormatError(ctx + ": 'uv' lines need 4 numbers");
            }
            out.P.push_back({su, sv});
            out.Q.push_back({tu, tv});
            continue;
        }
        std::vector<double> nums;
        try {
            nums.push_back(std::stod(first));
        } catch (const std::exception&) {
            throw FormatError(ctx + ": unrecognized keypoint record '" + first + "'");
        }
        double x;
        while (ss >> x) nums.push_back(x);
        if (nums.size() == 2) {
            if (!src || !tgt) {
                throw ConfigError(ctx + ": vertex-id keypoints need source and target meshes");
            }
            out.P.push_back(src->keypoint_preimage(static_cast<int>(nums[0])));
            out.Q.push_back(tgt->keypoint_preimage(static_cast<int>(nums[1])));
        } else if (nums.size() == 6) {
            if (!src || !tgt) {
                throw ConfigError(ctx + ": 3D-point keypoints need source and target meshes");
            }
            out.P.push_back(src->keypoint_preimage(Vec3d{nums[0], nums[1], nums[2]}));
            out.Q.push_back(tgt->keypoint_preimage(Vec3d{nums[3], nums[4], nums[5]}));
        } else {
            throw FormatError(ctx + ": expected 2 ints, 6 floats, or a 'uv' record");
        }
    }
    return out;
}

// Regular grid over the domain, used for correspondence exports when no
// source mesh is available.
void grid_mesh(int n, std::vector<Vec2d>& uv, std::vector<std::array<int, 3>>& tris) {
    uv.clear();
    tris.clear();
    for (int y = 0; y <= n; ++y) {
        for (int x = 0; x <= n; ++x) {
            uv.push_back({static_cast<double>(x) / n, static_cast<double>(y) / n});
        }
    }
    auto id = [n](int x, int y) { return y * (n + 1) + x; };
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            tris.push_back({id(x, y), id(x + 1, y), id(x + 1, y + 1)});
            tris.push_back({id(x, y), id(x + 1, y + 1), id(x, y + 1)});
        }
    }
}

void write_positions_obj(const std::string& path, const std::vector<Vec3d>& pos,
                         const std::vector<std::array<int, 3>>& tris) {
    mesh::TriMesh m;
    m.vertices = pos;
    m.faces = tris;
    mesh::write_obj(path, m);
}

// Exports a pair of OBJ files sharing connectivity: the source-surface image
// and the mapped target-surface image of the same preimages.
void export_correspondence(const compose::SurfaceMapHandle& h, const std::string& prefix,
                           const mesh::PLMap* src_pl, int grid_n) {
    std::vector<Vec2d> uv;
    std::vector<std::array<int, 3>> tris;
    if (src_pl) {
        uv = src_pl->uv();
        tris = src_pl->mesh().faces;
    } else {
        grid_mesh(grid_n, uv, tris);
    }
    std::vector<Vec3d> src_pos;
    src_pos.reserve(uv.size());
    for (const auto& p : uv) {
        const auto img = compose::eval_surface<double>(h.source, p[0], p[1]);
        src_pos.push_back({img[0], img[1], img[2]});
    }
    const auto pushed = compose::push_mesh_through(h, uv);
    std::vector<Vec3d> tgt_pos;
    tgt_pos.reserve(pushed.size());
    for (const auto& v : pushed) tgt_pos.push_back(v.position);
    write_positions_obj(prefix + "_source.obj", src_pos, tris);
    write_positions_obj(prefix + "_target.obj", tgt_pos, tris);
}

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

int cmd_overfit(const json& cfg, std::optional<int> threads, std::optional<std::uint64_t> seed) {
    check_keys(cfg, "config", {"mesh", "domain", "architecture", "task", "weights", "output"});
    check_keys(output_section(cfg), "output", {"checkpoint", "uv_obj", "report", "log"});
    if (!cfg.contains("mesh")) throw ConfigError("overfit: 'mesh' is required");
    const auto task = parse_task(cfg, threads, seed);

    const auto m = mesh::load_obj(cfg.at("mesh").get<std::string>());
    const auto pl = mesh::tutte_embed(m, parse_domain(cfg));

    const json& out = output_section(cfg);
    const std::string uv_path = get_or<std::string>(out, "uv_obj", "");
    if (!uv_path.empty()) mesh::write_obj(uv_path, pl.mesh(), &pl.uv());

    auto arch = parse_arch(cfg.contains("architecture") ? cfg.at("architecture") : json::object(),
                           3, false);
    auto map = net::build(arch, task.seed);
    const auto report = opt::overfit(pl, map, task);

    const std::string ckpt = get_or<std::string>(out, "checkpoint", "");
    if (!ckpt.empty()) {
        net::save_checkpoint(map, ckpt,
                             {"overfit", "neuralmaps overfit of " + cfg.at("mesh").get<std::string>(),
                              report.final_loss});
    }
    write_report(cfg, get_or<std::string>(out, "report", ""), report);
    std::cout << "overfit: " << report.termination << " after " << report.steps
              << " steps, rmse " << report.position_rmse << ", normal deviation "
              << report.normal_deviation_deg << " deg\n";
    return exit_for(report);
}

int cmd_parameterize(const json& cfg, std::optional<int> threads,
                     std::optional<std::uint64_t> seed) {
    check_keys(cfg, "config",
               {"surface", "mesh", "domain", "energy", "architecture", "task", "weights", "output"});
    check_keys(output_section(cfg), "output", {"checkpoint", "uv_obj", "report", "log"});
    if (!cfg.contains("surface")) throw ConfigError("parameterize: 'surface' is required");
    const auto task = parse_task(cfg, threads, seed);
    const auto energy = parse_energy(cfg);
    const auto phi = parse_surface(cfg.at("surface"), "surface");

    auto arch = parse_arch(cfg.contains("architecture") ? cfg.at("architecture") : json::object(),
                           2, true);
    auto h = net::build(arch, task.seed);
    const auto pool = opt::uniform_domain_samples(task.sample_pool, task.seed);
    const auto report = opt::optimize_parameterization(phi, h, energy, pool, task);

    const json& out = output_section(cfg);
    const std::string ckpt = get_or<std::string>(out, "checkpoint", "");
    if (!ckpt.empty()) {
        net::save_checkpoint(h, ckpt, {"parameterize",
                                       std::string("neuralmaps parameterize, energy ") +
                                           opt::distortion_name(energy),
                                       report.final_loss});
    }
    // flat layout at the source mesh vertices
    const std::string uv_path = get_or<std::string>(out, "uv_obj", "");
    if (!uv_path.empty()) {
        if (!cfg.contains("mesh")) {
            throw ConfigError("parameterize: 'mesh' is required for the uv_obj export");
        }
        const auto m = mesh::load_obj(cfg.at("mesh").get<std::string>());
        const auto pl = mesh::tutte_embed(m, parse_domain(cfg));
        std::vector<Vec2d> flat(pl.uv().size());
        for (std::size_t i = 0; i < flat.size(); ++i) {
            const auto img = net::forward<double>(h, {pl.uv()[i][0], pl.uv()[i][1]});
            flat[i] = {img[0], img[1]};
        }
        mesh::write_obj(uv_path, pl.mesh(), &flat);
    }
    write_report(cfg, get_or<std::string>(out, "report", ""), report);
    std::cout << "parameterize(" << opt::distortion_name(energy) << "): " << report.termination
              << " after " << report.steps << " steps, median density "
              << report.initial_median_density << " -> " << report.final_median_density << "\n";
    return exit_for(report);
}

int cmd_map(const json& cfg, std::optional<int> threads, std::optional<std::uint64_t> seed) {
    check_keys(cfg, "config",
               {"source", "target", "source_mesh", "target_mesh", "domain", "energy", "keypoints",
                "pin_corners", "use_rotation", "architecture", "task", "weights", "output",
                "grid_n"});
    check_keys(output_section(cfg), "output",
               {"checkpoint", "correspondence_prefix", "report", "log"});
    if (!cfg.contains("source") || !cfg.contains("target")) {
        throw ConfigError("map: 'source' and 'target' are required");
    }
    const auto task = parse_task(cfg, threads, seed);
    const auto energy = parse_energy(cfg);

    compose::SurfaceMapHandle handle;
    handle.domain = parse_domain(cfg);
    handle.source = parse_surface(cfg.at("source"), "source");
    handle.target = parse_surface(cfg.at("target"), "target");

    std::optional<mesh::PLMap> src_pl, tgt_pl;
    if (cfg.contains("source_mesh")) {
        src_pl.emplace(mesh::tutte_embed(mesh::load_obj(cfg.at("source_mesh").get<std::string>()),
                                         handle.domain));
    }
    if (cfg.contains("target_mesh")) {
        tgt_pl.emplace(mesh::tutte_embed(mesh::load_obj(cfg.at("target_mesh").get<std::string>()),
                                         handle.domain));
    }
    if (cfg.contains("keypoints")) {
        auto kp = load_keypoints(cfg.at("keypoints").get<std::string>(),
                                 src_pl ? &*src_pl : nullptr, tgt_pl ? &*tgt_pl : nullptr);
        handle.P = std::move(kp.P);
        handle.Q = std::move(kp.Q);
    }
    if (get_or<bool>(cfg, "use_rotation", true) && handle.P.size() >= 2) {
        handle.rot = compose::landmark_rotation(handle.P, handle.Q);
    }
    if (get_or<bool>(cfg, "pin_corners", true) && handle.domain == Domain::square) {
        compose::pin_corners(handle);
    }

    auto arch = parse_arch(cfg.contains("architecture") ? cfg.at("architecture") : json::object(),
                           2, true);
    handle.warp = net::build(arch, task.seed);
    const auto pool = opt::uniform_domain_samples(task.sample_pool, task.seed);
    const auto report =
        opt::optimize_surface_map(handle, energy, pool, task, src_pl ? &*src_pl : nullptr);

    const json& out = output_section(cfg);
    const std::string ckpt = get_or<std::string>(out, "checkpoint", "");
    if (!ckpt.empty()) {
        net::save_checkpoint(handle.warp, ckpt,
                             {"map", std::string("neuralmaps map, energy ") +
                                         opt::distortion_name(energy),
                              report.final_loss});
    }
    const std::string prefix = get_or<std::string>(out, "correspondence_prefix", "");
    if (!prefix.empty()) {
        export_correspondence(handle, prefix, src_pl ? &*src_pl : nullptr,
                              get_or<int>(cfg, "grid_n", 32));
    }
    write_report(cfg, get_or<std::string>(out, "report", ""), report);
    std::cout << "map(" << opt::distortion_name(energy) << "): " << report.termination << " after "
              << report.steps << " steps, median density " << report.initial_median_density
              << " -> " << report.final_median_density << ", keypoint residual "
              << report.keypoint_residual << ", flips " << report.flips << "/" << report.flip_total
              << "\n";
    return exit_for(report);
}

int cmd_collection(const json& cfg, std::optional<int> threads, std::optional<std::uint64_t> seed) {
    check_keys(cfg, "config",
               {"surfaces", "domain", "energy", "keypoints", "targets", "pin_corners",
                "architecture", "task", "weights", "output", "grid_n"});
    check_keys(output_section(cfg), "output",
               {"checkpoint_prefix", "correspondence_prefix", "report", "log"});
    if (!cfg.contains("surfaces") || !cfg.at("surfaces").is_array() ||
        cfg.at("surfaces").size() < 2) {
        throw ConfigError("collection: 'surfaces' must list at least 2 surfaces");
    }
    const auto task = parse_task(cfg, threads, seed);
    const auto energy = parse_energy(cfg);

    compose::CollectionHandle handle;
    handle.domain = parse_domain(cfg);
    const std::size_t k = cfg.at("surfaces").size();
    for (std::size_t i = 0; i < k; ++i) {
        handle.surfaces.push_back(
            parse_surface(cfg.at("surfaces")[i], "surfaces[" + std::to_string(i) + "]"));
    }

    // keypoints: per-surface preimages plus shared domain targets
    if (cfg.contains("keypoints") != cfg.contains("targets")) {
        throw ConfigError("collection: 'keypoints' and 'targets' must be given together");
    }
    handle.keypoints.resize(k);
    if (cfg.contains("keypoints")) {
        const json& kp = cfg.at("keypoints");
        if (!kp.is_array() || kp.size() != k) {
            throw ConfigError("collection: 'keypoints' must have one preimage list per surface");
        }
        for (std::size_t i = 0; i < k; ++i) {
            for (const auto& p : kp[i]) {
                handle.keypoints[i].push_back({p.at(0).get<double>(), p.at(1).get<double>()});
            }
        }
        for (const auto& q : cfg.at("targets")) {
            handle.targets.push_back({q.at(0).get<double>(), q.at(1).get<double>()});
        }
        for (std::size_t i = 0; i < k; ++i) {
            if (handle.keypoints[i].size() != handle.targets.size()) {
                throw ConfigError("collection: keypoint counts must match 'targets'");
            }
        }
    }
    if (get_or<bool>(cfg, "pin_corners", true) && handle.domain == Domain::square) {
        for (const auto& corner : domain_corners(handle.domain)) {
            for (std::size_t i = 0; i < k; ++i) handle.keypoints[i].push_back(corner);
            handle.targets.push_back(corner);
        }
    }

    auto arch = parse_arch(cfg.contains("architecture") ? cfg.at("architecture") : json::object(),
                           2, true);
    for (std::size_t i = 0; i < k; ++i) {
        handle.warps.push_back(net::build(arch, task.seed + i));
        handle.rots.push_back(Rotation2::identity());
    }
    const auto pool = opt::uniform_domain_samples(task.sample_pool, task.seed);
    const auto report = opt::optimize_collection(handle, energy, pool, task);

    const json& out = output_section(cfg);
    const std::string ckpt_prefix = get_or<std::string>(out, "checkpoint_prefix", "");
    if (!ckpt_prefix.empty()) {
        for (std::size_t i = 0; i < k; ++i) {
            net::save_checkpoint(handle.warps[i], ckpt_prefix + std::to_string(i) + ".nsm",
                                 {"collection", "neuralmaps collection warp " + std::to_string(i),
                                  report.final_loss});
        }
    }
    const std::string prefix = get_or<std::string>(out, "correspondence_prefix", "");
    if (!prefix.empty()) {
        const int grid_n = get_or<int>(cfg, "grid_n", 32);
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
                if (i == j) continue;
                std::vector<Vec2d> uv;
                std::vector<std::array<int, 3>> tris;
                grid_mesh(grid_n, uv, tris);
                std::vector<Vec3d> a, b;
                for (const auto& p : uv) {
                    a.push_back(compose::collection_point(handle, i, p));
                    b.push_back(compose::collection_point(handle, j, p));
                }
                const std::string pair =
                    prefix + std::to_string(i) + "_to_" + std::to_string(j);
                write_positions_obj(pair + "_source.obj", a, tris);
                write_positions_obj(pair + "_target.obj", b, tris);
            }
        }
    }
    write_report(cfg, get_or<std::string>(out, "report", ""), report);
    std::cout << "collection(" << opt::distortion_name(energy) << "): " << report.termination
              << " after " << report.steps << " steps, summed pairwise median "
              << report.initial_median_density << " -> " << report.final_median_density << "\n";
    return exit_for(report);
}

int cmd_eval(const json& cfg, std::optional<int> threads, std::optional<std::uint64_t> seed) {
    (void)threads;
    check_keys(cfg, "config",
               {"kind", "surface", "source", "target", "warp", "mesh", "domain", "energy",
                "eval_samples", "seed", "output", "weights"});
    check_keys(output_section(cfg), "output", {"report"});
    const std::string kind = get_or<std::string>(cfg, "kind", "");
    const auto energy = parse_energy(cfg);
    const int n_eval = get_or<int>(cfg, "eval_samples", 10000);
    std::uint64_t s = get_or<std::uint64_t>(cfg, "seed", 0);
    if (seed) s = *seed;
    double eps = 0.01;
    if (cfg.contains("weights")) {
        check_keys(cfg.at("weights"), "weights",
                   {"lambda_n", "lambda_b", "lambda_inv", "lambda_c", "epsilon"});
        eps = get_or<double>(cfg.at("weights"), "epsilon", eps);
    }

    json stats;
    if (kind == "overfit") {
        if (!cfg.contains("mesh") || !cfg.contains("surface")) {
            throw ConfigError("eval overfit: 'mesh' and 'surface' are required");
        }
        const auto pl = mesh::tutte_embed(mesh::load_obj(cfg.at("mesh").get<std::string>()),
                                          parse_domain(cfg));
        const auto surf = parse_surface(cfg.at("surface"), "surface");
        const auto* map = std::get_if<net::NeuralMap>(&surf);
        if (!map) throw ConfigError("eval overfit: 'surface' must be a checkpoint");
        const auto samples = pl.sample(static_cast<std::size_t>(n_eval), s);
        double se = 0.0, ang = 0.0;
        for (const auto& smp : samples) {
            std::array<double, 3> img;
            Mat<double, 3, 2> jac;
            net::forward_with_jacobian(*map, smp.p, img, jac);
            for (int d = 0; d < 3; ++d) se += (img[d] - smp.position[d]) * (img[d] - smp.position[d]);
            const Vec3d nrm = compose::estimate_normal(jac);
            double dp = 0.0;
            for (int d = 0; d < 3; ++d) dp += nrm[d] * smp.normal[d];
            ang += std::acos(std::clamp(dp, -1.0, 1.0)) * 180.0 / M_PI;
        }
        stats["position_rmse"] = std::sqrt(se / static_cast<double>(samples.size()));
        stats["normal_deviation_deg"] = ang / static_cast<double>(samples.size());
    } else if (kind == "parameterization") {
        if (!cfg.contains("surface") || !cfg.contains("warp")) {
            throw ConfigError("eval parameterization: 'surface' and 'warp' are required");
        }
        const auto phi = parse_surface(cfg.at("surface"), "surface");
        const auto h = net::load_checkpoint(cfg.at("warp").get<std::string>(), 2, 2);
        const auto points = opt::uniform_domain_samples(static_cast<std::size_t>(n_eval), s);
        const auto dens = opt::parameterization_densities(phi, h, energy, points, eps);
        const auto est = energy::mc_integrate(dens, true);
        stats["median_density"] = est.median();
        stats["mean_density"] = est.mean;
        const auto fc = opt::count_flips_grid(h, Rotation2::identity());
        stats["flips"] = fc.flips;
        stats["flip_total"] = fc.total;
        stats["flip_percent"] = fc.percent();
    } else if (kind == "map") {
        if (!cfg.contains("source") || !cfg.contains("target") || !cfg.contains("warp")) {
            throw ConfigError("eval map: 'source', 'target' and 'warp' are required");
        }
        compose::SurfaceMapHandle handle;
        handle.domain = parse_domain(cfg);
        handle.source = parse_surface(cfg.at("source"), "source");
        handle.target = parse_surface(cfg.at("target"), "target");
        handle.warp = net::load_checkpoint(cfg.at("warp").get<std::string>(), 2, 2);
        const auto points = opt::uniform_domain_samples(static_cast<std::size_t>(n_eval), s);
        const auto dens = opt::composed_densities(handle, energy, points, eps);
        const auto est = energy::mc_integrate(dens, true);
        stats["median_density"] = est.median();
        stats["mean_density"] = est.mean;
        const auto fc = opt::count_flips_grid(handle.warp, handle.rot);
        stats["flips"] = fc.flips;
        stats["flip_total"] = fc.total;
        stats["flip_percent"] = fc.percent();
    } else {
        throw ConfigError("eval: 'kind' must be overfit, parameterization, or map");
    }

    std::cout << "metric                     value\n";
    std::cout << "-------------------------  ----------\n";
    for (const auto& [key, v] : stats.items()) {
        std::cout << key;
        for (std::size_t i = key.size(); i < 27; ++i) std::cout << ' ';
        std::cout << v.dump() << "\n";
    }
    const std::string rpath = get_or<std::string>(output_section(cfg), "report", "");
    if (!rpath.empty()) {
        std::ofstream f(rpath);
        if (!f) throw IOError("cannot write report: " + rpath);
        f << json{{"config", cfg}, {"stats", stats}}.dump(2) << '\n';
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"neural surface maps pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<int> threads;
    std::optional<std::uint64_t> seed;

    const std::vector<std::string> names = {"overfit", "parameterize", "map", "collection", "eval"};
    for (const auto& n : names) {
        auto* sub = app.add_subcommand(n);
        sub->add_option("--config", config_path, "JSON config file")->required();
        sub->add_option("--set", overrides, "dotted-key config override, key=value");
        sub->add_option("--threads", threads, "worker thread count (1 = bit-deterministic)");
        sub->add_option("--seed", seed, "RNG seed override");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        json cfg = read_config(config_path);
        for (const auto& kv : overrides) apply_override(cfg, kv);
        const std::string cmd = app.get_subcommands().front()->get_name();
        if (cmd == "overfit") return cmd_overfit(cfg, threads, seed);
        if (cmd == "parameterize") return cmd_parameterize(cfg, threads, seed);
        if (cmd == "map") return cmd_map(cfg, threads, seed);
        if (cmd == "collection") return cmd_collection(cfg, threads, seed);
        if (cmd == "eval") return cmd_eval(cfg, threads, seed);
        return kExitConfig;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ProjectionError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const TopologyError& e) {
        std::cerr << "topology error: " << e.what() << "\n";
        return kExitTopology;
    } catch (const CheckpointError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const IOError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const OutOfDomainError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const EvalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
