#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "nsm/compose/compose.hpp"
#include "nsm/energy/energies.hpp"
#include "nsm/mesh/plmap.hpp"
#include "nsm/net/neural_map.hpp"
#include "nsm/opt/optimizer.hpp"

namespace nsm::opt {

enum class DistortionKind { iso, conformal };
const char* distortion_name(DistortionKind k);
DistortionKind distortion_from_name(const std::string& name);

// Declarative description of one optimization run. Defaults follow the
// paper-recipe values; tests and configs override the budgets for desk-scale
// runs.
struct OptimizationTask {
    energy::EnergyWeights weights;
    std::size_t sample_pool = 500000;
    int batch_size = 4096;
    int boundary_batch = 4096;
    long max_steps = 20000;
    double grad_threshold = 0.1;
    double ema_decay = 0.99; // smoothing of the batch grad-norm estimator
    RmsPropConfig rmsprop;
    CosineRestarts schedule;
    std::uint64_t seed = 0;
    int threads = 1;
    int eval_samples = 10000;
    double divergence_factor = 1e3;
    int log_every = 100;
    int checkpoint_every = 0;          // 0: no periodic checkpoints
    std::string checkpoint_path;       // prefix for periodic checkpoints
    std::string log_path;              // JSON-lines run log, empty: disabled

    void validate() const;
};

struct LossRecord {
    long step = 0;
    double total = 0.0;
    std::map<std::string, double> terms; // weighted; they sum to total
    double grad_norm_ema = 0.0;
    double lr = 0.0;
};

struct RunReport {
    std::vector<LossRecord> curve;
    std::string termination; // grad-threshold | max-steps | divergence
    long steps = 0;
    double wall_clock_sec = 0.0;
    double final_loss = 0.0;

    // overfit metrics
    double position_rmse = 0.0;
    double normal_deviation_deg = 0.0;

    // distortion metrics on the fixed evaluation set
    double initial_median_density = 0.0;
    double final_median_density = 0.0;
    double initial_mean_density = 0.0;
    double final_mean_density = 0.0;

    // surface-map metrics
    double keypoint_residual = 0.0; // max ||h(R p) - q||
    double boundary_residual = 0.0; // mean sigma, unweighted
    long flips = 0;
    long flip_total = 0;
    double flip_percent = 0.0;

    std::map<std::string, double> extra; // per-pair medians etc.

    // Timing is reported separately so serialized reports stay reproducible.
    nlohmann::json to_json() const;
};

// Overfits `map` (2 -> 3) to the piecewise-linear ground truth.
RunReport overfit(const mesh::PLMap& pl, net::NeuralMap& map, const OptimizationTask& task);

// Minimizes the chosen distortion of the implicit surface-to-plane map
// defined by h(p) over the composed Jacobians; `pool` are the training
// sample positions in the domain.
RunReport optimize_parameterization(const compose::Surface& phi, net::NeuralMap& h,
                                    DistortionKind energy, std::span<const Vec2d> pool,
                                    const OptimizationTask& task);

// Minimizes D(f) + C(h) + B(h) + G(h) over the warp of a surface-to-surface
// handle. `eval_pl` (optional) provides the UV triangulation used for flip
// counting; otherwise a regular grid over the domain is used.
RunReport optimize_surface_map(compose::SurfaceMapHandle& handle, DistortionKind energy,
                               std::span<const Vec2d> pool, const OptimizationTask& task,
                               const mesh::PLMap* eval_pl = nullptr);

// Optimizes all warps of a collection against the summed pairwise distortion
// plus per-warp boundary, injectivity and keypoint terms.
RunReport optimize_collection(compose::CollectionHandle& handle, DistortionKind energy,
                              std::span<const Vec2d> pool, const OptimizationTask& task);

// Flip count of a warp over a UV triangulation.
struct FlipCount {
    long flips = 0;
    long total = 0;
    double percent() const { return total ? 100.0 * static_cast<double>(flips) / static_cast<double>(total) : 0.0; }
};
FlipCount count_flips(const net::NeuralMap& warp, const Rotation2& rot,
                      const std::vector<Vec2d>& uv, const std::vector<std::array<int, 3>>& tris);
FlipCount count_flips_grid(const net::NeuralMap& warp, const Rotation2& rot, int n = 64);

// Fixed uniform evaluation samples over the unit square.
std::vector<Vec2d> uniform_domain_samples(std::size_t count, std::uint64_t seed);

// Median distortion density of the composed source->target map at the given
// domain points (double-precision path, no training).
std::vector<double> composed_densities(const compose::SurfaceMapHandle& handle,
                                       DistortionKind energy, std::span<const Vec2d> points,
                                       double eps);
std::vector<double> parameterization_densities(const compose::Surface& phi,
                                               const net::NeuralMap& h, DistortionKind energy,
                                               std::span<const Vec2d> points, double eps);

} // namespace nsm::opt
