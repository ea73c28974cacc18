#include "ssse/erasure.hpp"

#include "ssse/errors.hpp"
#include "ssse/rng.hpp"

#include <cmath>
#include <unordered_set>

namespace ssse {

namespace {

void check_removal(const Dataset& data, std::span<const SampleId> removed_ids) {
  if (removed_ids.empty()) throw InvalidArgument("removal set must be nonempty");
  const std::unordered_set<SampleId> unique(removed_ids.begin(), removed_ids.end());
  if (unique.size() != removed_ids.size()) throw InvalidArgument("removal set contains duplicate ids");
  if (static_cast<Index>(removed_ids.size()) >= data.size())
    throw InvalidArgument("removal set size k=" + std::to_string(removed_ids.size()) +
                          " must be smaller than n=" + std::to_string(data.size()));
}

double leave_out_scale(const Dataset& data, std::span<const SampleId> removed_ids) {
  return 1.0 / static_cast<double>(data.size() - static_cast<Index>(removed_ids.size()));
}

}  // namespace

Vector removed_gradient_sum(const ModelParams& theta, const Dataset& data,
                            std::span<const SampleId> removed_ids, const LossConfig& cfg,
                            GradientSource source) {
  if (source == GradientSource::Removed) {
    const Dataset removed = data.with_ids(removed_ids);
    return mean_grad(theta, removed, cfg) * static_cast<double>(removed.size());
  }
  const Dataset kept = data.without_ids(removed_ids);
  return -mean_grad(theta, kept, cfg) * static_cast<double>(kept.size());
}

ModelParams ssse_update(const ModelParams& theta_star, const InverseFisher& finv, const Dataset& data,
                        std::span<const SampleId> removed_ids, double epsilon, const LossConfig& cfg,
                        GradientSource source) {
  check_removal(data, removed_ids);
  if (finv.params_hash != params_hash(theta_star))
    throw StaleFisher("inverse Fisher was built at different parameters than the model being erased");
  if (!std::isfinite(epsilon)) throw InvalidArgument("epsilon must be finite");
  ModelParams out = theta_star;
  if (epsilon == 0.0) return out;
  const Vector g = removed_gradient_sum(theta_star, data, removed_ids, cfg, source);
  out.values += (epsilon * leave_out_scale(data, removed_ids)) * apply_inverse(finv, g);
  return out;
}

ModelParams influence_update(const ModelParams& theta_star, const Dataset& data,
                             std::span<const SampleId> removed_ids, const LossConfig& cfg,
                             HessianSource source) {
  check_removal(data, removed_ids);
  if (!theta_star.shape.is_linear()) throw Unsupported("influence update needs a linear model");
  const Eigen::MatrixXd h = source == HessianSource::Full
                                ? hessian_dense(theta_star, data, cfg)
                                : hessian_dense(theta_star, data.without_ids(removed_ids), cfg);
  const Eigen::LLT<Eigen::MatrixXd> llt(h);
  if (llt.info() != Eigen::Success)
    throw NumericError("Hessian is not positive definite; use l2_coeff > 0");
  const Vector g = removed_gradient_sum(theta_star, data, removed_ids, cfg);
  const Vector step = llt.solve(g);
  if (!step.allFinite()) throw NumericError("Hessian solve produced non-finite values");
  ModelParams out = theta_star;
  out.values += leave_out_scale(data, removed_ids) * step;
  return out;
}

ModelParams gradient_ascent_step(const ModelParams& theta_star, const Dataset& data,
                                 std::span<const SampleId> removed_ids, const LossConfig& cfg, double lr) {
  if (removed_ids.empty()) throw InvalidArgument("removal set must be nonempty");
  if (!(lr >= 0.0)) throw InvalidArgument("gradient ascent lr must be nonnegative");
  ModelParams out = theta_star;
  if (lr == 0.0) return out;
  const Vector g = removed_gradient_sum(theta_star, data, removed_ids, cfg);
  out.values += (lr / static_cast<double>(removed_ids.size())) * g;
  return out;
}

ModelParams diag_scrub_update(const ModelParams& theta_star, const Vector& diag_finv, const Dataset& data,
                              std::span<const SampleId> removed_ids, double epsilon, const LossConfig& cfg,
                              double noise_sigma, std::uint64_t noise_seed) {
  check_removal(data, removed_ids);
  if (diag_finv.size() != theta_star.size()) throw InvalidArgument("diagonal inverse Fisher length mismatch");
  if (!(noise_sigma >= 0.0)) throw InvalidArgument("noise_sigma must be nonnegative");
  if (!std::isfinite(epsilon)) throw InvalidArgument("epsilon must be finite");
  ModelParams out = theta_star;
  if (epsilon != 0.0) {
    const Vector g = removed_gradient_sum(theta_star, data, removed_ids, cfg);
    out.values += (epsilon * leave_out_scale(data, removed_ids)) * diag_finv.cwiseProduct(g);
  }
  if (noise_sigma > 0.0) {
    Rng rng(noise_seed);
    for (Index j = 0; j < out.values.size(); ++j)
      out.values(j) += noise_sigma * std::sqrt(diag_finv(j)) * rng.normal();
  }
  return out;
}

ModelParams apply_erasure(const ErasureContext& ctx, const ErasureRequest& req) {
  if (ctx.theta_star == nullptr || ctx.data == nullptr)
    throw InvalidArgument("erasure context needs the original model and its training data");
  switch (req.method) {
    case ErasureMethod::Ssse:
      if (ctx.finv == nullptr) throw InvalidArgument("SSSE needs an inverse Fisher");
      return ssse_update(*ctx.theta_star, *ctx.finv, *ctx.data, req.removed_ids, req.epsilon, ctx.loss,
                         req.gradient_source);
    case ErasureMethod::InfluenceFull:
      return influence_update(*ctx.theta_star, *ctx.data, req.removed_ids, ctx.loss, HessianSource::Full);
    case ErasureMethod::InfluenceLeaveOut:
      return influence_update(*ctx.theta_star, *ctx.data, req.removed_ids, ctx.loss, HessianSource::LeaveOut);
    case ErasureMethod::GradientAscent:
      return gradient_ascent_step(*ctx.theta_star, *ctx.data, req.removed_ids, ctx.loss, req.lr);
    case ErasureMethod::DiagScrub:
      if (ctx.diag_finv == nullptr) throw InvalidArgument("diagonal scrub needs a diagonal inverse Fisher");
      return diag_scrub_update(*ctx.theta_star, *ctx.diag_finv, *ctx.data, req.removed_ids, req.epsilon,
                               ctx.loss, req.noise_sigma, req.noise_seed);
  }
  throw InvalidArgument("unknown erasure method");
}

}  // namespace ssse
