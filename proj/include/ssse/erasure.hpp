#pragma once

#include "ssse/fisher.hpp"
#include "ssse/models.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace ssse {

/// Which summed gradient drives the update.
enum class GradientSource {
  Removed,     // sum over S of grad l_i(theta*)
  Complement,  // -sum over D \ S; equal to the above at an exact optimum
};

enum class HessianSource { Full, LeaveOut };

enum class ErasureMethod { Ssse, InfluenceFull, InfluenceLeaveOut, GradientAscent, DiagScrub };

struct ErasureRequest {
  std::vector<SampleId> removed_ids;
  ErasureMethod method = ErasureMethod::Ssse;
  double epsilon = 1.0;  // Ssse, DiagScrub
  double lr = 0.0;       // GradientAscent
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;
  GradientSource gradient_source = GradientSource::Removed;
};

/// sum_{i in S} grad l_i(theta) (or the negated complement sum).
Vector removed_gradient_sum(const ModelParams& theta, const Dataset& data,
                            std::span<const SampleId> removed_ids, const LossConfig& cfg,
                            GradientSource source = GradientSource::Removed);

/// theta* + eps / (n - k) * F^-1 * sum_S grad l_i(theta*).
///
/// Throws StaleFisher when `finv` was built at different parameters and
/// InvalidArgument when k >= n.
ModelParams ssse_update(const ModelParams& theta_star, const InverseFisher& finv, const Dataset& data,
                        std::span<const SampleId> removed_ids, double epsilon, const LossConfig& cfg,
                        GradientSource source = GradientSource::Removed);

/// theta* + 1 / (n - k) * H^-1 * sum_S grad l_i(theta*), with H the exact
/// Hessian of the loss on D (Full) or D \ S (LeaveOut), solved by Cholesky.
ModelParams influence_update(const ModelParams& theta_star, const Dataset& data,
                             std::span<const SampleId> removed_ids, const LossConfig& cfg,
                             HessianSource source);

/// theta* + lr / k * sum_S grad l_i(theta*).
ModelParams gradient_ascent_step(const ModelParams& theta_star, const Dataset& data,
                                 std::span<const SampleId> removed_ids, const LossConfig& cfg, double lr);

/// Diagonal-Fisher variant of the SSSE step with optional Gaussian noise of
/// per-coordinate std noise_sigma * sqrt(diag_finv_j).
ModelParams diag_scrub_update(const ModelParams& theta_star, const Vector& diag_finv, const Dataset& data,
                              std::span<const SampleId> removed_ids, double epsilon, const LossConfig& cfg,
                              double noise_sigma = 0.0, std::uint64_t noise_seed = 0);

/// Everything the individual updates may need; unused members can stay null.
struct ErasureContext {
  const ModelParams* theta_star = nullptr;
  const Dataset* data = nullptr;
  LossConfig loss;
  const InverseFisher* finv = nullptr;
  const Vector* diag_finv = nullptr;
};

ModelParams apply_erasure(const ErasureContext& ctx, const ErasureRequest& req);

}  // namespace ssse
