#include "ssse/training.hpp"

#include "ssse/errors.hpp"
#include "ssse/io.hpp"
#include "ssse/rng.hpp"

#include <cmath>
#include <numeric>
#include <set>

namespace ssse {

namespace {

constexpr std::string_view kModelMagic{"SSSEMDL\0", 8};
constexpr std::uint8_t kModelVersion = 1;

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw InvalidArgument("train.lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("train.momentum must be in [0, 1)");
  if (epochs < 1) throw InvalidArgument("train.epochs must be positive");
  if (batch_size < 1) throw InvalidArgument("train.batch_size must be positive");
  if (!(grad_tol >= 0.0)) throw InvalidArgument("train.grad_tol must be nonnegative");
  for (std::size_t i = 0; i < lr_schedule.size(); ++i) {
    if (lr_schedule[i].epoch < 0 || !(lr_schedule[i].factor > 0.0))
      throw InvalidArgument("train.lr_schedule entries need epoch >= 0 and factor > 0");
    if (i > 0 && lr_schedule[i].epoch <= lr_schedule[i - 1].epoch)
      throw InvalidArgument("train.lr_schedule epochs must be strictly increasing");
  }
}

double TrainConfig::rate_at(int epoch) const {
  double rate = lr;
  for (const LrStep& step : lr_schedule) {
    if (epoch >= step.epoch) rate *= step.factor;
  }
  return rate;
}

ModelParams init_params(const ModelShape& shape, std::uint64_t seed) {
  Rng rng(seed);
  Vector v(shape.param_count());
  const Index first = shape.kind == ShapeKind::Mlp ? shape.hidden * shape.inputs : v.size();
  const double bound_in = 1.0 / std::sqrt(static_cast<double>(shape.inputs));
  for (Index i = 0; i < first; ++i) v(i) = rng.uniform(-bound_in, bound_in);
  if (shape.kind == ShapeKind::Mlp) {
    const double bound_h = 1.0 / std::sqrt(static_cast<double>(shape.hidden));
    for (Index i = first; i < v.size(); ++i) v(i) = rng.uniform(-bound_h, bound_h);
  }
  return ModelParams(shape, std::move(v), seed);
}

TrainResult train(const Dataset& data, const ModelShape& shape, const LossConfig& loss_cfg,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (!(loss_cfg.l2_coeff >= 0.0)) throw InvalidArgument("l2_coeff must be nonnegative");
  check_compatible(shape, data);

  TrainResult result{init_params(shape, cfg.seed), 0, 0.0, 0.0, {}, {}};
  Vector& theta = result.params.values;
  Vector velocity = Vector::Zero(theta.size());

  // Separate stream for shuffling so initialisation does not depend on n.
  Rng shuffler(cfg.seed ^ 0x5DEECE66DULL);
  const Index n = data.size();
  const Index batch = std::min(cfg.batch_size, n);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double rate = cfg.rate_at(epoch);
    if (batch < n) shuffler.shuffle(std::span(order));
    for (Index lo = 0; lo < n; lo += batch) {
      Vector g;
      if (batch == n) {
        g = mean_grad(result.params, data, loss_cfg);
      } else {
        const Index hi = std::min(n, lo + batch);
        const std::span<const Index> rows(order.data() + lo, static_cast<std::size_t>(hi - lo));
        g = mean_grad(result.params, data.select_rows(rows), loss_cfg);
      }
      velocity = cfg.momentum * velocity + g;
      theta -= rate * velocity;
    }
    if (!theta.allFinite()) throw TrainingError("parameters became non-finite", epoch);
    result.final_loss = loss(result.params, data, loss_cfg);
    if (!std::isfinite(result.final_loss)) throw TrainingError("loss became non-finite", epoch);
    result.epoch_losses.push_back(result.final_loss);
    result.final_grad_norm = mean_grad(result.params, data, loss_cfg).norm();
    result.epochs_run = epoch + 1;
    if (result.final_grad_norm <= cfg.grad_tol) break;
  }
  return result;
}

TrainResult retrain_scratch(const Dataset& data, std::span<const SampleId> removed_ids,
                            const ModelShape& shape, const LossConfig& loss_cfg,
                            const TrainConfig& cfg) {
  if (removed_ids.empty()) return train(data, shape, loss_cfg, cfg);
  const Dataset kept = data.without_ids(removed_ids);
  std::vector<std::string> warnings;
  if (kept.task() == TaskKind::Multinomial) {
    const std::set<int> present(kept.classes().begin(), kept.classes().end());
    for (int c = 0; c < kept.num_outputs(); ++c) {
      if (!present.contains(c)) warnings.push_back("class " + std::to_string(c) + " has no remaining samples");
    }
  } else {
    for (Index a = 0; a < kept.num_outputs(); ++a) {
      if (kept.attributes().col(a).sum() == 0)
        warnings.push_back("attribute " + std::to_string(a) + " has no remaining positive samples");
    }
  }
  TrainResult r = train(kept, shape, loss_cfg, cfg);
  r.warnings.insert(r.warnings.end(), warnings.begin(), warnings.end());
  return r;
}

// ---------------------------------------------------------------- model file

std::vector<std::uint8_t> encode_model(const ModelFile& model) {
  const ModelParams& p = model.params;
  io::ByteWriter w;
  w.bytes(kModelMagic);
  w.u8(kModelVersion);
  w.u8(static_cast<std::uint8_t>(p.shape.kind));
  w.u64(static_cast<std::uint64_t>(p.shape.inputs));
  w.u64(static_cast<std::uint64_t>(p.shape.hidden));
  w.u64(static_cast<std::uint64_t>(p.shape.outputs));
  w.u64(static_cast<std::uint64_t>(p.values.size()));
  for (double v : p.values) w.f64(v);
  w.u64(p.seed);
  w.f64(model.loss.l2_coeff);
  return w.data();
}

ModelFile decode_model(const std::vector<std::uint8_t>& bytes) {
  io::ByteReader r(bytes);
  r.expect(kModelMagic, "model magic");
  std::uint64_t at = r.offset();
  if (r.u8() != kModelVersion) throw ParseError("unsupported model version", at);
  at = r.offset();
  const std::uint8_t kind = r.u8();
  if (kind > static_cast<std::uint8_t>(ShapeKind::Mlp)) throw ParseError("unknown model kind", at);
  ModelShape shape;
  shape.kind = static_cast<ShapeKind>(kind);
  shape.inputs = static_cast<Index>(r.u64());
  shape.hidden = static_cast<Index>(r.u64());
  shape.outputs = static_cast<Index>(r.u64());
  at = r.offset();
  const std::uint64_t d = r.u64();
  if (shape.inputs < 1 || shape.outputs < 1 || (shape.kind == ShapeKind::Mlp && shape.hidden < 1) ||
      d != static_cast<std::uint64_t>(shape.param_count()))
    throw ParseError("parameter count does not match shape", at);
  r.need(d * 8);
  Vector values(static_cast<Index>(d));
  for (Index i = 0; i < values.size(); ++i) values(i) = r.f64();
  const std::uint64_t seed = r.u64();
  const double l2 = r.f64();
  if (r.remaining() != 0) throw ParseError("trailing bytes after model payload", r.offset());
  try {
    return {ModelParams(shape, std::move(values), seed), LossConfig{l2}};
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("invalid model payload: ") + e.what(), at);
  }
}

void save_model(const ModelFile& model, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_model(model));
}

ModelFile load_model(const std::filesystem::path& path) { return decode_model(io::read_file(path)); }

}  // namespace ssse
