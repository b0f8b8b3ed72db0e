#include "nsm/opt/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <random>

#include "nsm/util/parallel.hpp"

namespace nsm::opt {

using ad::Tape;
using ad::Var;
using nlohmann::json;

const char* distortion_name(DistortionKind k) {
    return k == DistortionKind::iso ? "iso" : "conformal";
}

DistortionKind distortion_from_name(const std::string& name) {
    if (name == "iso") return DistortionKind::iso;
    if (name == "conformal") return DistortionKind::conformal;
    throw ConfigError("unknown distortion energy: " + name + " (expected iso or conformal)");
}

void OptimizationTask::validate() const {
    weights.validate();
    if (sample_pool < 1 || batch_size < 1 || max_steps < 1) {
        throw ConfigError("task: sample_pool, batch_size and max_steps must be >= 1");
    }
    if (grad_threshold <= 0.0) throw ConfigError("task: grad_threshold must be positive");
}

json RunReport::to_json() const {
    json terms_curve = json::array();
    for (const auto& r : curve) {
        terms_curve.push_back({{"step", r.step},
                               {"total", r.total},
                               {"terms", r.terms},
                               {"grad_norm_ema", r.grad_norm_ema},
                               {"lr", r.lr}});
    }
    json j = {{"termination", termination},
              {"steps", steps},
              {"final_loss", final_loss},
              {"position_rmse", position_rmse},
              {"normal_deviation_deg", normal_deviation_deg},
              {"initial_median_density", initial_median_density},
              {"final_median_density", final_median_density},
              {"initial_mean_density", initial_mean_density},
              {"final_mean_density", final_mean_density},
              {"keypoint_residual", keypoint_residual},
              {"boundary_residual", boundary_residual},
              {"flips", flips},
              {"flip_total", flip_total},
              {"flip_percent", flip_percent},
              {"curve", terms_curve}};
    if (!extra.empty()) j["extra"] = extra;
    return j;
}

namespace {

constexpr int kAux = 6;

struct Workspace {
    std::vector<Tape> tapes;
    std::vector<std::vector<double>> grads;
    std::vector<std::vector<Var>> pvars;
    std::vector<double> losses;
    std::vector<std::array<double, kAux>> aux;
    std::vector<std::exception_ptr> errors;
    int threads;

    Workspace(int nthreads, std::size_t nparams)
        : tapes(static_cast<std::size_t>(std::max(1, nthreads))),
          grads(tapes.size(), std::vector<double>(nparams, 0.0)),
          pvars(tapes.size(), std::vector<Var>(nparams)),
          losses(tapes.size(), 0.0),
          aux(tapes.size()),
          errors(tapes.size()),
          threads(std::max(1, nthreads)) {}
};

// Runs `f(tape, params_as_vars, item, thread)` over `n` items, accumulating
// scale * sum(loss) into loss_out and scale * sum(grad) into grad_out. Chunks
// are merged in thread order, so the reduction is deterministic for a fixed
// thread count and bit-exact when threads == 1.
template <class F>
void accumulate(Workspace& ws, std::span<const double> params, std::size_t n, double scale,
                std::span<double> grad_out, double& loss_out,
                std::array<double, kAux>& aux_out, F&& f) {
    for (std::size_t k = 0; k < ws.tapes.size(); ++k) {
        std::fill(ws.grads[k].begin(), ws.grads[k].end(), 0.0);
        ws.losses[k] = 0.0;
        ws.aux[k].fill(0.0);
        ws.errors[k] = nullptr;
    }
    util::parallel_chunks(n, ws.threads, [&](int k, std::size_t b, std::size_t e) {
        try {
            Tape& tape = ws.tapes[static_cast<std::size_t>(k)];
            auto& pv = ws.pvars[static_cast<std::size_t>(k)];
            for (std::size_t i = b; i < e; ++i) {
                tape.clear();
                for (std::size_t j = 0; j < params.size(); ++j) {
                    pv[j] = ad::make_param(tape, params[j]);
                }
                const Var loss = f(tape, std::span<const Var>(pv), i, k);
                ws.losses[static_cast<std::size_t>(k)] += loss.v;
                if (loss.tape && std::isfinite(loss.v)) {
                    tape.accumulate_gradient(loss.i, ws.grads[static_cast<std::size_t>(k)]);
                }
            }
        } catch (...) {
            ws.errors[static_cast<std::size_t>(k)] = std::current_exception();
        }
    });
    for (auto& e : ws.errors) {
        if (e) std::rethrow_exception(e);
    }
    for (std::size_t k = 0; k < ws.tapes.size(); ++k) {
        loss_out += scale * ws.losses[k];
        for (std::size_t j = 0; j < grad_out.size(); ++j) grad_out[j] += scale * ws.grads[k][j];
        for (int a = 0; a < kAux; ++a) aux_out[a] += scale * ws.aux[k][a];
    }
}

struct LoopState {
    long step = 0;
    double ema = -1.0;
    double initial_loss = std::numeric_limits<double>::quiet_NaN();
    int spike = 0;
    std::string termination;

    // Transient loss spikes are routine right after (re)starts of the
    // schedule; only a non-finite loss or a sustained blow-up counts as
    // divergence.
    bool diverged(double loss, double factor) {
        if (!std::isfinite(loss)) return true;
        if (std::isfinite(initial_loss) && loss > factor * initial_loss) {
            return ++spike >= 5;
        }
        spike = 0;
        return false;
    }
};

class RunLogger {
public:
    RunLogger(const std::string& path, int every) : every_(std::max(1, every)) {
        if (!path.empty()) {
            out_.open(path);
            if (!out_) throw IOError("cannot open run log: " + path);
        }
    }

    bool due(long step) const { return step % every_ == 0; }

    void record(RunReport& report, const LossRecord& r) {
        report.curve.push_back(r);
        if (out_) {
            json j = {{"step", r.step}, {"total", r.total}, {"terms", r.terms},
                      {"grad_norm_ema", r.grad_norm_ema}, {"lr", r.lr}};
            out_ << j.dump() << '\n';
        }
    }

private:
    int every_;
    std::ofstream out_;
};

Mat<double, 2, 2> rotation_matrix(const Rotation2& r) {
    Mat<double, 2, 2> m;
    m(0, 0) = r.c;
    m(0, 1) = -r.s;
    m(1, 0) = r.s;
    m(1, 1) = r.c;
    return m;
}

// h forward at the rotated point, with the Jacobian with respect to the
// un-rotated domain point (chain through R).
void warp_with_jacobian(const net::Architecture& arch, std::span<const Var> pv,
                        const Rotation2& rot, const Vec2d& p, std::array<Var, 2>& w,
                        Mat<Var, 2, 2>& jac_wrt_p) {
    const Vec2d rp = rot.apply(p);
    std::array<Var, 3> img;
    Mat<Var, 3, 2> jh;
    net::forward_with_jacobian<Var, Var>(arch, pv, {Var(rp[0]), Var(rp[1])}, img, jh);
    w = {img[0], img[1]};
    // d h(R p) / d p = Jh * R
    const Mat<double, 2, 2> R = rotation_matrix(rot);
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            jac_wrt_p(i, j) = jh(i, 0) * R(0, j) + jh(i, 1) * R(1, j);
        }
    }
}

template <class S>
S distortion_density(DistortionKind kind, const Mat<S, 2, 2>& M, double eps) {
    return kind == DistortionKind::iso ? energy::dirichlet_density(M, eps)
                                       : energy::conformal_density(M);
}

double finish_wall_clock(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    return seed ^ (salt + 0x9E3779B97F4A7C15ull + (seed << 6) + (seed >> 2));
}

} // namespace

std::vector<Vec2d> uniform_domain_samples(std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Vec2d> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double a = u(rng);
        const double b = u(rng);
        out.push_back({a, b});
    }
    return out;
}

FlipCount count_flips(const net::NeuralMap& warp, const Rotation2& rot,
                      const std::vector<Vec2d>& uv, const std::vector<std::array<int, 3>>& tris) {
    std::vector<Vec2d> w(uv.size());
    for (std::size_t i = 0; i < uv.size(); ++i) w[i] = compose::warp_point(warp, rot, uv[i]);
    FlipCount fc;
    fc.total = static_cast<long>(tris.size());
    auto area = [](const Vec2d& a, const Vec2d& b, const Vec2d& c) {
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    };
    for (const auto& t : tris) {
        const double a0 = area(uv[t[0]], uv[t[1]], uv[t[2]]);
        const double a1 = area(w[t[0]], w[t[1]], w[t[2]]);
        if (a0 * a1 <= 0.0) ++fc.flips;
    }
    return fc;
}

FlipCount count_flips_grid(const net::NeuralMap& warp, const Rotation2& rot, int n) {
    std::vector<Vec2d> uv;
    uv.reserve(static_cast<std::size_t>(n + 1) * (n + 1));
    for (int y = 0; y <= n; ++y) {
        for (int x = 0; x <= n; ++x) {
            uv.push_back({static_cast<double>(x) / n, static_cast<double>(y) / n});
        }
    }
    std::vector<std::array<int, 3>> tris;
    auto id = [n](int x, int y) { return y * (n + 1) + x; };
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            tris.push_back({id(x, y), id(x + 1, y), id(x + 1, y + 1)});
            tris.push_back({id(x, y), id(x + 1, y + 1), id(x, y + 1)});
        }
    }
    return count_flips(warp, rot, uv, tris);
}

std::vector<double> parameterization_densities(const compose::Surface& phi,
                                               const net::NeuralMap& h, DistortionKind energy,
                                               std::span<const Vec2d> points, double eps) {
    std::vector<double> out;
    out.reserve(points.size());
    for (const auto& p : points) {
        std::array<double, 3> img;
        Mat<double, 3, 2> jphi;
        compose::eval_surface_with_jacobian<double>(phi, p[0], p[1], img, jphi);
        std::array<double, 3> himg;
        Mat<double, 3, 2> jh3;
        net::forward_with_jacobian(h, p, himg, jh3);
        Mat<double, 2, 2> jh;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) jh(i, j) = jh3(i, j);
        try {
            const auto jf = compose::jacobian_of_param(jphi, jh);
            out.push_back(distortion_density(energy, pullback_metric(jf), eps));
        } catch (const SingularJacobianError&) {
        }
    }
    return out;
}

std::vector<double> composed_densities(const compose::SurfaceMapHandle& handle,
                                       DistortionKind energy, std::span<const Vec2d> points,
                                       double eps) {
    std::vector<double> out;
    out.reserve(points.size());
    for (const auto& p : points) {
        std::array<double, 3> img;
        Mat<double, 3, 2> jsrc;
        compose::eval_surface_with_jacobian<double>(handle.source, p[0], p[1], img, jsrc);

        const Vec2d rp = handle.rot.apply(p);
        std::array<double, 3> himg;
        Mat<double, 3, 2> jh3;
        net::forward_with_jacobian(handle.warp, rp, himg, jh3);
        const Mat<double, 2, 2> R = rotation_matrix(handle.rot);
        Mat<double, 2, 2> jw;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) jw(i, j) = jh3(i, 0) * R(0, j) + jh3(i, 1) * R(1, j);

        std::array<double, 3> timg;
        Mat<double, 3, 2> jt;
        compose::eval_surface_with_jacobian<double>(handle.target, himg[0], himg[1], timg, jt);
        Mat<double, 3, 2> jcomp;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 2; ++j) jcomp(i, j) = jt(i, 0) * jw(0, j) + jt(i, 1) * jw(1, j);

        try {
            const auto jf = compose::jacobian_of_f(jsrc, jcomp);
            out.push_back(distortion_density(energy, pullback_metric(jf), eps));
        } catch (const SingularJacobianError&) {
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// overfit
// ---------------------------------------------------------------------------

RunReport overfit(const mesh::PLMap& pl, net::NeuralMap& map, const OptimizationTask& task) {
    task.validate();
    if (map.arch.out_dim != 3) throw ConfigError("overfit: map must have out_dim 3");
    const auto t0 = std::chrono::steady_clock::now();

    const auto pool = pl.sample(task.sample_pool, task.seed);
    const auto eval_set = pl.sample(static_cast<std::size_t>(task.eval_samples),
                                    mix_seed(task.seed, 1));

    const std::size_t np = map.params.size();
    Workspace ws(task.threads, np);
    RmsProp optr(np, task.rmsprop);
    RunLogger logger(task.log_path, task.log_every);
    RunReport report;
    LoopState st;

    std::mt19937_64 rng(mix_seed(task.seed, 2));
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::vector<std::size_t> batch(static_cast<std::size_t>(task.batch_size));
    std::vector<double> grad(np, 0.0);
    std::vector<double> prev_params;
    const double lambda_n = task.weights.lambda_n;
    const net::Architecture arch = map.arch;

    auto sample_loss = [&](Tape&, std::span<const Var> pv, std::size_t b, int k) -> Var {
        const mesh::DomainSample& s = pool[batch[b]];
        std::array<Var, 3> img;
        Mat<Var, 3, 2> jac;
        net::forward_with_jacobian<Var, Var>(arch, pv, {Var(s.p[0]), Var(s.p[1])}, img, jac);

        Var pos = (img[0] - s.position[0]) * (img[0] - s.position[0]);
        for (int d = 1; d < 3; ++d) {
            pos += (img[d] - s.position[d]) * (img[d] - s.position[d]);
        }
        const Vec<Var, 3> c0 = column(jac, 0);
        const Vec<Var, 3> c1 = column(jac, 1);
        Vec<Var, 3> n = cross3(c0, c1);
        const Var len = norm(n);
        Var nrm = Var(0.0);
        for (int d = 0; d < 3; ++d) {
            const Var diff = n[d] / len - s.normal[d];
            nrm += diff * diff;
        }
        ws.aux[static_cast<std::size_t>(k)][0] += pos.v;
        ws.aux[static_cast<std::size_t>(k)][1] += lambda_n * nrm.v;
        return pos + Var(lambda_n) * nrm;
    };

    while (st.step < task.max_steps) {
        for (auto& b : batch) b = pick(rng);
        std::fill(grad.begin(), grad.end(), 0.0);
        double loss = 0.0;
        std::array<double, kAux> aux{};
        prev_params = map.params;
        try {
            accumulate(ws, map.params, batch.size(), 1.0 / static_cast<double>(batch.size()),
                       grad, loss, aux, sample_loss);
        } catch (const EvalError&) {
            st.termination = "divergence";
            break;
        } catch (const NumericalError&) {
            st.termination = "divergence";
            break;
        }
        if (st.diverged(loss, task.divergence_factor)) {
            map.params = prev_params;
            st.termination = "divergence";
            break;
        }
        if (!std::isfinite(st.initial_loss)) st.initial_loss = loss;

        const double gnorm = ad::grad_norm(grad);
        st.ema = st.ema < 0.0 ? gnorm : task.ema_decay * st.ema + (1.0 - task.ema_decay) * gnorm;
        const double lr = task.schedule.lr_at(st.step, task.rmsprop.base_lr);
        optr.step(map.params, grad, lr);
        ++st.step;
        report.final_loss = loss;

        if (logger.due(st.step) || st.step == task.max_steps) {
            logger.record(report, {st.step, loss,
                                   {{"position", aux[0]}, {"normal", aux[1]}},
                                   st.ema, lr});
        }
        if (task.checkpoint_every > 0 && st.step % task.checkpoint_every == 0 &&
            !task.checkpoint_path.empty()) {
            net::save_checkpoint(map, task.checkpoint_path + ".step" + std::to_string(st.step),
                                 {"periodic", "overfit step " + std::to_string(st.step), loss});
        }
        if (st.ema < task.grad_threshold) {
            st.termination = "grad-threshold";
            break;
        }
    }
    if (st.termination.empty()) st.termination = "max-steps";

    // held-out evaluation
    double se = 0.0, ang = 0.0;
    for (const auto& s : eval_set) {
        std::array<double, 3> img;
        Mat<double, 3, 2> jac;
        net::forward_with_jacobian(map, s.p, img, jac);
        for (int d = 0; d < 3; ++d) {
            se += (img[d] - s.position[d]) * (img[d] - s.position[d]);
        }
        const Vec3d n = compose::estimate_normal(jac);
        double dp = 0.0;
        for (int d = 0; d < 3; ++d) dp += n[d] * s.normal[d];
        ang += std::acos(std::clamp(dp, -1.0, 1.0)) * 180.0 / M_PI;
    }
    report.position_rmse = std::sqrt(se / static_cast<double>(eval_set.size()));
    report.normal_deviation_deg = ang / static_cast<double>(eval_set.size());
    report.termination = st.termination;
    report.steps = st.step;
    report.wall_clock_sec = finish_wall_clock(t0);
    return report;
}

// ---------------------------------------------------------------------------
// parameterization
// ---------------------------------------------------------------------------

RunReport optimize_parameterization(const compose::Surface& phi, net::NeuralMap& h,
                                    DistortionKind energy, std::span<const Vec2d> pool,
                                    const OptimizationTask& task) {
    task.validate();
    if (h.arch.out_dim != 2) throw ConfigError("optimize_parameterization: h must be a 2->2 map");
    if (pool.empty()) throw ConfigError("optimize_parameterization: empty sample pool");
    const auto t0 = std::chrono::steady_clock::now();

    // Frozen source: precompute the tangent-frame reductions per pool sample.
    std::vector<Mat<double, 2, 2>> reductions(pool.size());
    std::vector<char> valid(pool.size(), 0);
    std::size_t nvalid = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        std::array<double, 3> img;
        Mat<double, 3, 2> j;
        compose::eval_surface_with_jacobian<double>(phi, pool[i][0], pool[i][1], img, j);
        try {
            reductions[i] = compose::source_reduction(j);
            valid[i] = 1;
            ++nvalid;
        } catch (const SingularJacobianError&) {
        }
    }
    if (nvalid == 0) throw NumericalError("optimize_parameterization: source Jacobian singular at every sample");

    const auto eval_points = uniform_domain_samples(static_cast<std::size_t>(task.eval_samples),
                                                    mix_seed(task.seed, 3));
    RunReport report;
    {
        const auto d0 = parameterization_densities(phi, h, energy, eval_points, task.weights.epsilon);
        const auto e0 = energy::mc_integrate(d0);
        report.initial_median_density = e0.median();
        report.initial_mean_density = e0.mean;
    }

    const std::size_t np = h.params.size();
    Workspace ws(task.threads, np);
    RmsProp optr(np, task.rmsprop);
    RunLogger logger(task.log_path, task.log_every);
    LoopState st;

    std::mt19937_64 rng(mix_seed(task.seed, 4));
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::vector<std::size_t> batch(static_cast<std::size_t>(task.batch_size));
    std::vector<double> grad(np, 0.0);
    std::vector<double> prev_params;
    const double eps = task.weights.epsilon;
    const net::Architecture arch = h.arch;

    auto sample_loss = [&](Tape&, std::span<const Var> pv, std::size_t b, int) -> Var {
        const std::size_t i = batch[b];
        const Vec2d& p = pool[i];
        std::array<Var, 3> img;
        Mat<Var, 3, 2> jh3;
        net::forward_with_jacobian<Var, Var>(arch, pv, {Var(p[0]), Var(p[1])}, img, jh3);
        Mat<Var, 2, 2> jf;
        const Mat<double, 2, 2>& A = reductions[i];
        for (int r = 0; r < 2; ++r) {
            for (int c = 0; c < 2; ++c) jf(r, c) = jh3(r, 0) * A(0, c) + jh3(r, 1) * A(1, c);
        }
        return distortion_density(energy, pullback_metric(jf), eps);
    };

    while (st.step < task.max_steps) {
        for (auto& b : batch) {
            b = pick(rng);
            while (!valid[b]) b = (b + 1) % pool.size();
        }
        std::fill(grad.begin(), grad.end(), 0.0);
        double loss = 0.0;
        std::array<double, kAux> aux{};
        prev_params = h.params;
        try {
            accumulate(ws, h.params, batch.size(), 1.0 / static_cast<double>(batch.size()),
                       grad, loss, aux, sample_loss);
        } catch (const EvalError&) {
            st.termination = "divergence";
            break;
        } catch (const NumericalError&) {
            st.termination = "divergence";
            break;
        }
        if (st.diverged(loss, task.divergence_factor)) {
            h.params = prev_params;
            st.termination = "divergence";
            break;
        }
        if (!std::isfinite(st.initial_loss)) st.initial_loss = loss;

        const double gnorm = ad::grad_norm(grad);
        st.ema = st.ema < 0.0 ? gnorm : task.ema_decay * st.ema + (1.0 - task.ema_decay) * gnorm;
        const double lr = task.schedule.lr_at(st.step, task.rmsprop.base_lr);
        optr.step(h.params, grad, lr);
        ++st.step;
        report.final_loss = loss;
        if (logger.due(st.step) || st.step == task.max_steps) {
            logger.record(report, {st.step, loss, {{"distortion", loss}}, st.ema, lr});
        }
        if (task.checkpoint_every > 0 && st.step % task.checkpoint_every == 0 &&
            !task.checkpoint_path.empty()) {
            net::save_checkpoint(h, task.checkpoint_path + ".step" + std::to_string(st.step),
                                 {"periodic", "parameterize step " + std::to_string(st.step), loss});
        }
        if (st.ema < task.grad_threshold) {
            st.termination = "grad-threshold";
            break;
        }
    }
    if (st.termination.empty()) st.termination = "max-steps";

    const auto d1 = parameterization_densities(phi, h, energy, eval_points, eps);
    const auto e1 = energy::mc_integrate(d1);
    report.final_median_density = e1.median();
    report.final_mean_density = e1.mean;
    report.termination = st.termination;
    report.steps = st.step;
    report.wall_clock_sec = finish_wall_clock(t0);
    return report;
}

// ---------------------------------------------------------------------------
// surface-to-surface
// ---------------------------------------------------------------------------

namespace {

struct SurfaceMapEval {
    double keypoint_residual = 0.0;
    double boundary_residual = 0.0;
};

SurfaceMapEval eval_constraints(const compose::SurfaceMapHandle& h,
                                std::span<const Vec2d> boundary_eval) {
    SurfaceMapEval e;
    for (std::size_t i = 0; i < h.P.size(); ++i) {
        const Vec2d w = compose::warp_point(h.warp, h.rot, h.P[i]);
        e.keypoint_residual = std::max(e.keypoint_residual,
                                       std::hypot(w[0] - h.Q[i][0], w[1] - h.Q[i][1]));
    }
    double s = 0.0;
    for (const auto& p : boundary_eval) {
        const Vec2d w = compose::warp_point(h.warp, h.rot, p);
        s += boundary_sigma<double>(h.domain, w[0], w[1]);
    }
    if (!boundary_eval.empty()) e.boundary_residual = s / static_cast<double>(boundary_eval.size());
    return e;
}

} // namespace

RunReport optimize_surface_map(compose::SurfaceMapHandle& handle, DistortionKind energy,
                               std::span<const Vec2d> pool, const OptimizationTask& task,
                               const mesh::PLMap* eval_pl) {
    task.validate();
    if (handle.warp.arch.out_dim != 2) throw ConfigError("optimize_surface_map: warp must be 2->2");
    if (handle.P.size() != handle.Q.size()) throw ConfigError("optimize_surface_map: keypoint size mismatch");
    if (pool.empty()) throw ConfigError("optimize_surface_map: empty sample pool");
    const auto t0 = std::chrono::steady_clock::now();

    std::vector<Mat<double, 2, 2>> reductions(pool.size());
    std::vector<char> valid(pool.size(), 0);
    std::size_t nvalid = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        std::array<double, 3> img;
        Mat<double, 3, 2> j;
        compose::eval_surface_with_jacobian<double>(handle.source, pool[i][0], pool[i][1], img, j);
        try {
            reductions[i] = compose::source_reduction(j);
            valid[i] = 1;
            ++nvalid;
        } catch (const SingularJacobianError&) {
        }
    }
    if (nvalid == 0) throw NumericalError("optimize_surface_map: source Jacobian singular at every sample");

    const auto eval_points = uniform_domain_samples(static_cast<std::size_t>(task.eval_samples),
                                                    mix_seed(task.seed, 5));
    std::mt19937_64 eval_rng(mix_seed(task.seed, 6));
    const auto boundary_eval = sample_boundary(handle.domain, 1024, eval_rng);

    RunReport report;
    {
        const auto d0 = composed_densities(handle, energy, eval_points, task.weights.epsilon);
        const auto e0 = energy::mc_integrate(d0, true);
        report.initial_median_density = e0.median();
        report.initial_mean_density = e0.mean;
    }

    const std::size_t np = handle.warp.params.size();
    Workspace ws(task.threads, np);
    RmsProp optr(np, task.rmsprop);
    RunLogger logger(task.log_path, task.log_every);
    LoopState st;

    std::mt19937_64 rng(mix_seed(task.seed, 7));
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::vector<std::size_t> batch(static_cast<std::size_t>(task.batch_size));
    std::vector<Vec2d> boundary_batch;
    std::vector<double> grad(np, 0.0);
    std::vector<double> prev_params;
    const energy::EnergyWeights& wts = task.weights;
    const net::Architecture arch = handle.warp.arch;
    const Domain domain = handle.domain;

    // distortion + injectivity over interior samples
    auto interior_loss = [&](Tape&, std::span<const Var> pv, std::size_t b, int k) -> Var {
        const std::size_t i = batch[b];
        const Vec2d& p = pool[i];
        std::array<Var, 2> w;
        Mat<Var, 2, 2> jw;
        warp_with_jacobian(arch, pv, handle.rot, p, w, jw);

        std::array<Var, 3> timg;
        Mat<Var, 3, 2> jt;
        compose::eval_surface_with_jacobian<Var>(handle.target, w[0], w[1], timg, jt);
        Mat<Var, 3, 2> jcomp;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 2; ++c) jcomp(r, c) = jt(r, 0) * jw(0, c) + jt(r, 1) * jw(1, c);
        }
        const Mat<double, 2, 2>& A = reductions[i];
        Mat<Var, 3, 2> jf;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 2; ++c) jf(r, c) = jcomp(r, 0) * A(0, c) + jcomp(r, 1) * A(1, c);
        }
        const Var d = distortion_density(energy, pullback_metric(jf), wts.epsilon);
        const Var g = ad::negdet_penalty(det2(jw)) * Var(wts.lambda_inv);
        ws.aux[static_cast<std::size_t>(k)][0] += d.v;
        ws.aux[static_cast<std::size_t>(k)][1] += g.v;
        return d + g;
    };

    auto boundary_loss = [&](Tape&, std::span<const Var> pv, std::size_t b, int) -> Var {
        const Vec2d rp = handle.rot.apply(boundary_batch[b]);
        const auto img = net::forward<Var, Var>(arch, pv, {Var(rp[0]), Var(rp[1])});
        return boundary_sigma<Var>(domain, img[0], img[1]) * Var(wts.lambda_b);
    };

    auto keypoint_loss = [&](Tape&, std::span<const Var> pv, std::size_t i, int) -> Var {
        const Vec2d rp = handle.rot.apply(handle.P[i]);
        const auto img = net::forward<Var, Var>(arch, pv, {Var(rp[0]), Var(rp[1])});
        const Var dx = img[0] - handle.Q[i][0];
        const Var dy = img[1] - handle.Q[i][1];
        return (dx * dx + dy * dy) * Var(wts.lambda_c);
    };

    while (st.step < task.max_steps) {
        for (auto& b : batch) {
            b = pick(rng);
            while (!valid[b]) b = (b + 1) % pool.size();
        }
        boundary_batch = sample_boundary(domain, task.boundary_batch, rng);

        std::fill(grad.begin(), grad.end(), 0.0);
        double loss = 0.0;
        std::array<double, kAux> aux{};
        double dterm = 0.0, gterm = 0.0, bterm = 0.0, cterm = 0.0;
        prev_params = handle.warp.params;
        try {
            accumulate(ws, handle.warp.params, batch.size(),
                       1.0 / static_cast<double>(batch.size()), grad, loss, aux, interior_loss);
            dterm = aux[0];
            gterm = aux[1];
            double bl = 0.0;
            std::array<double, kAux> baux{};
            accumulate(ws, handle.warp.params, boundary_batch.size(),
                       1.0 / static_cast<double>(boundary_batch.size()), grad, bl, baux, boundary_loss);
            bterm = bl;
            loss += bl;
            if (!handle.P.empty()) {
                double cl = 0.0;
                std::array<double, kAux> caux{};
                accumulate(ws, handle.warp.params, handle.P.size(), 1.0, grad, cl, caux, keypoint_loss);
                cterm = cl;
                loss += cl;
            }
        } catch (const EvalError&) {
            st.termination = "divergence";
            break;
        } catch (const NumericalError&) {
            st.termination = "divergence";
            break;
        }
        if (st.diverged(loss, task.divergence_factor)) {
            handle.warp.params = prev_params;
            st.termination = "divergence";
            break;
        }
        if (!std::isfinite(st.initial_loss)) st.initial_loss = loss;

        const double gnorm = ad::grad_norm(grad);
        st.ema = st.ema < 0.0 ? gnorm : task.ema_decay * st.ema + (1.0 - task.ema_decay) * gnorm;
        const double lr = task.schedule.lr_at(st.step, task.rmsprop.base_lr);
        optr.step(handle.warp.params, grad, lr);
        ++st.step;
        report.final_loss = loss;
        if (logger.due(st.step) || st.step == task.max_steps) {
            logger.record(report, {st.step, loss,
                                   {{"distortion", dterm}, {"injectivity", gterm},
                                    {"boundary", bterm}, {"keypoint", cterm}},
                                   st.ema, lr});
        }
        if (task.checkpoint_every > 0 && st.step % task.checkpoint_every == 0 &&
            !task.checkpoint_path.empty()) {
            net::save_checkpoint(handle.warp,
                                 task.checkpoint_path + ".step" + std::to_string(st.step),
                                 {"periodic", "map step " + std::to_string(st.step), loss});
        }
        if (st.ema < task.grad_threshold) {
            st.termination = "grad-threshold";
            break;
        }
    }
    if (st.termination.empty()) st.termination = "max-steps";

    const auto d1 = composed_densities(handle, energy, eval_points, wts.epsilon);
    const auto e1 = energy::mc_integrate(d1, true);
    report.final_median_density = e1.median();
    report.final_mean_density = e1.mean;

    const auto cons = eval_constraints(handle, boundary_eval);
    report.keypoint_residual = cons.keypoint_residual;
    report.boundary_residual = cons.boundary_residual;

    const FlipCount fc = eval_pl
        ? count_flips(handle.warp, handle.rot, eval_pl->uv(), eval_pl->mesh().faces)
        : count_flips_grid(handle.warp, handle.rot);
    report.flips = fc.flips;
    report.flip_total = fc.total;
    report.flip_percent = fc.percent();

    report.termination = st.termination;
    report.steps = st.step;
    report.wall_clock_sec = finish_wall_clock(t0);
    return report;
}

// ---------------------------------------------------------------------------
// collections
// ---------------------------------------------------------------------------

RunReport optimize_collection(compose::CollectionHandle& handle, DistortionKind energy,
                              std::span<const Vec2d> pool, const OptimizationTask& task) {
    task.validate();
    const std::size_t k = handle.surfaces.size();
    if (k < 2) throw ConfigError("optimize_collection: need at least 2 surfaces");
    if (handle.warps.size() != k || handle.rots.size() != k || handle.keypoints.size() != k) {
        throw ConfigError("optimize_collection: inconsistent handle");
    }
    for (const auto& kp : handle.keypoints) {
        if (kp.size() != handle.targets.size()) {
            throw ConfigError("optimize_collection: keypoint/target count mismatch");
        }
    }
    if (pool.empty()) throw ConfigError("optimize_collection: empty sample pool");
    const auto t0 = std::chrono::steady_clock::now();

    // flat parameter vector over all warps
    std::vector<std::size_t> offsets(k + 1, 0);
    for (std::size_t i = 0; i < k; ++i) offsets[i + 1] = offsets[i] + handle.warps[i].params.size();
    const std::size_t np = offsets[k];
    std::vector<double> theta(np);
    auto gather = [&] {
        for (std::size_t i = 0; i < k; ++i) {
            std::copy(handle.warps[i].params.begin(), handle.warps[i].params.end(),
                      theta.begin() + static_cast<std::ptrdiff_t>(offsets[i]));
        }
    };
    auto scatter = [&] {
        for (std::size_t i = 0; i < k; ++i) {
            std::copy(theta.begin() + static_cast<std::ptrdiff_t>(offsets[i]),
                      theta.begin() + static_cast<std::ptrdiff_t>(offsets[i + 1]),
                      handle.warps[i].params.begin());
        }
    };
    gather();

    const auto eval_points = uniform_domain_samples(static_cast<std::size_t>(task.eval_samples),
                                                    mix_seed(task.seed, 8));

    auto pair_medians = [&](RunReport& rep, const char* prefix) {
        double total = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
                if (i == j) continue;
                // directed map i -> j: source = phi_i . h_i, target = phi_j . h_j
                std::vector<double> dens;
                dens.reserve(eval_points.size());
                for (const auto& p : eval_points) {
                    auto jac_of = [&](std::size_t s, Mat<double, 3, 2>& out) {
                        const Vec2d rp = handle.rots[s].apply(p);
                        std::array<double, 3> himg;
                        Mat<double, 3, 2> jh3;
                        net::forward_with_jacobian(handle.warps[s], rp, himg, jh3);
                        const Mat<double, 2, 2> R = rotation_matrix(handle.rots[s]);
                        Mat<double, 2, 2> jw;
                        for (int r = 0; r < 2; ++r)
                            for (int c = 0; c < 2; ++c)
                                jw(r, c) = jh3(r, 0) * R(0, c) + jh3(r, 1) * R(1, c);
                        std::array<double, 3> simg;
                        Mat<double, 3, 2> js;
                        compose::eval_surface_with_jacobian<double>(handle.surfaces[s], himg[0],
                                                                    himg[1], simg, js);
                        for (int r = 0; r < 3; ++r)
                            for (int c = 0; c < 2; ++c)
                                out(r, c) = js(r, 0) * jw(0, c) + js(r, 1) * jw(1, c);
                    };
                    Mat<double, 3, 2> ji, jj;
                    jac_of(i, ji);
                    jac_of(j, jj);
                    try {
                        const auto jf = compose::jacobian_of_f(ji, jj);
                        dens.push_back(distortion_density(energy, pullback_metric(jf),
                                                          task.weights.epsilon));
                    } catch (const SingularJacobianError&) {
                    }
                }
                const double med = energy::median_of(dens);
                rep.extra[std::string(prefix) + "_median_D_" + std::to_string(i) + "_to_" +
                          std::to_string(j)] = med;
                total += med;
            }
        }
        return total;
    };

    RunReport report;
    report.initial_median_density = pair_medians(report, "initial");

    Workspace ws(task.threads, np);
    RmsProp optr(np, task.rmsprop);
    RunLogger logger(task.log_path, task.log_every);
    LoopState st;

    std::mt19937_64 rng(mix_seed(task.seed, 9));
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::vector<std::size_t> batch(static_cast<std::size_t>(task.batch_size));
    std::vector<Vec2d> boundary_batch;
    std::vector<double> grad(np, 0.0);
    std::vector<double> prev_params;
    const energy::EnergyWeights& wts = task.weights;

    auto interior_loss = [&](Tape&, std::span<const Var> pv, std::size_t b, int kk) -> Var {
        const Vec2d& p = pool[batch[b]];
        std::vector<Mat<Var, 3, 2>> jac(k);
        Var loss = Var(0.0);
        double dsum = 0.0, gsum = 0.0;
        for (std::size_t s = 0; s < k; ++s) {
            std::array<Var, 2> w;
            Mat<Var, 2, 2> jw;
            const auto sub = pv.subspan(offsets[s], offsets[s + 1] - offsets[s]);
            warp_with_jacobian(handle.warps[s].arch, sub, handle.rots[s], p, w, jw);
            std::array<Var, 3> img;
            Mat<Var, 3, 2> js;
            compose::eval_surface_with_jacobian<Var>(handle.surfaces[s], w[0], w[1], img, js);
            for (int r = 0; r < 3; ++r) {
                for (int c = 0; c < 2; ++c) {
                    jac[s](r, c) = js(r, 0) * jw(0, c) + js(r, 1) * jw(1, c);
                }
            }
            const Var g = ad::negdet_penalty(det2(jw)) * Var(wts.lambda_inv);
            gsum += g.v;
            loss += g;
        }
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
                if (i == j) continue;
                const auto jf = compose::jacobian_of_f(jac[i], jac[j]);
                const Var d = distortion_density(energy, pullback_metric(jf), wts.epsilon);
                dsum += d.v;
                loss += d;
            }
        }
        ws.aux[static_cast<std::size_t>(kk)][0] += dsum;
        ws.aux[static_cast<std::size_t>(kk)][1] += gsum;
        return loss;
    };

    auto boundary_loss = [&](Tape&, std::span<const Var> pv, std::size_t b, int) -> Var {
        Var sum = Var(0.0);
        for (std::size_t s = 0; s < k; ++s) {
            const Vec2d rp = handle.rots[s].apply(boundary_batch[b]);
            const auto sub = pv.subspan(offsets[s], offsets[s + 1] - offsets[s]);
            const auto img = net::forward<Var, Var>(handle.warps[s].arch, sub, {Var(rp[0]), Var(rp[1])});
            sum += boundary_sigma<Var>(handle.domain, img[0], img[1]);
        }
        return sum * Var(wts.lambda_b);
    };

    auto keypoint_loss = [&](Tape&, std::span<const Var> pv, std::size_t m, int) -> Var {
        Var sum = Var(0.0);
        for (std::size_t s = 0; s < k; ++s) {
            const Vec2d rp = handle.rots[s].apply(handle.keypoints[s][m]);
            const auto sub = pv.subspan(offsets[s], offsets[s + 1] - offsets[s]);
            const auto img = net::forward<Var, Var>(handle.warps[s].arch, sub, {Var(rp[0]), Var(rp[1])});
            const Var dx = img[0] - handle.targets[m][0];
            const Var dy = img[1] - handle.targets[m][1];
            sum += dx * dx + dy * dy;
        }
        return sum * Var(wts.lambda_c);
    };

    while (st.step < task.max_steps) {
        for (auto& b : batch) b = pick(rng);
        boundary_batch = sample_boundary(handle.domain, task.boundary_batch, rng);

        std::fill(grad.begin(), grad.end(), 0.0);
        double loss = 0.0;
        std::array<double, kAux> aux{};
        prev_params = theta;
        double dterm = 0.0, gterm = 0.0, bterm = 0.0, cterm = 0.0;
        try {
            accumulate(ws, theta, batch.size(), 1.0 / static_cast<double>(batch.size()), grad,
                       loss, aux, interior_loss);
            dterm = aux[0];
            gterm = aux[1];
            double bl = 0.0;
            std::array<double, kAux> baux{};
            accumulate(ws, theta, boundary_batch.size(),
                       1.0 / static_cast<double>(boundary_batch.size()), grad, bl, baux, boundary_loss);
            bterm = bl;
            loss += bl;
            if (!handle.targets.empty()) {
                double cl = 0.0;
                std::array<double, kAux> caux{};
                accumulate(ws, theta, handle.targets.size(), 1.0, grad, cl, caux, keypoint_loss);
                cterm = cl;
                loss += cl;
            }
        } catch (const EvalError&) {
            st.termination = "divergence";
            break;
        } catch (const NumericalError&) {
            st.termination = "divergence";
            break;
        }
        if (st.diverged(loss, task.divergence_factor)) {
            theta = prev_params;
            st.termination = "divergence";
            break;
        }
        if (!std::isfinite(st.initial_loss)) st.initial_loss = loss;

        const double gnorm = ad::grad_norm(grad);
        st.ema = st.ema < 0.0 ? gnorm : task.ema_decay * st.ema + (1.0 - task.ema_decay) * gnorm;
        const double lr = task.schedule.lr_at(st.step, task.rmsprop.base_lr);
        optr.step(theta, grad, lr);
        ++st.step;
        report.final_loss = loss;
        if (logger.due(st.step) || st.step == task.max_steps) {
            logger.record(report, {st.step, loss,
                                   {{"distortion", dterm}, {"injectivity", gterm},
                                    {"boundary", bterm}, {"keypoint", cterm}},
                                   st.ema, lr});
        }
        if (st.ema < task.grad_threshold) {
            st.termination = "grad-threshold";
            break;
        }
    }
    if (st.termination.empty()) st.termination = "max-steps";
    scatter();

    report.final_median_density = pair_medians(report, "final");
    report.termination = st.termination;
    report.steps = st.step;
    report.wall_clock_sec = finish_wall_clock(t0);
    return report;
}

} // namespace nsm::opt
