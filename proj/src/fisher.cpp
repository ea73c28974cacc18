#include "ssse/fisher.hpp"

#include "ssse/errors.hpp"
#include "ssse/io.hpp"
#include "ssse/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ssse {

namespace {

constexpr std::string_view kFisherMagic{"SSSEFIM\0", 8};
constexpr std::uint8_t kFisherVersion = 1;

void append_chunks(std::vector<BlockRange>& out, Index begin, Index size, Index max_block) {
  for (Index off = 0; off < size; off += max_block)
    out.push_back({begin + off, std::min(max_block, size - off)});
}

void symmetrize(Eigen::MatrixXd& m) {
  const Index n = m.rows();
  for (Index j = 0; j < n; ++j) {
    for (Index i = j + 1; i < n; ++i) {
      const double avg = 0.5 * (m(i, j) + m(j, i));
      m(i, j) = avg;
      m(j, i) = avg;
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- BlockSpec

BlockSpec::BlockSpec(std::vector<BlockRange> ranges, Index max_block)
    : ranges_(std::move(ranges)), max_block_(max_block) {
  if (max_block_ < 1) throw InvalidArgument("max_block must be positive");
  if (ranges_.empty()) throw InvalidArgument("block spec needs at least one range");
  Index expected = 0;
  for (const BlockRange& r : ranges_) {
    if (r.begin != expected) throw InvalidArgument("block ranges must be sorted, disjoint and contiguous");
    if (r.size < 1 || r.size > max_block_)
      throw InvalidArgument("block size " + std::to_string(r.size) + " outside [1, max_block]");
    expected = r.end();
  }
}

BlockSpec BlockSpec::single(Index d) { return BlockSpec({{0, d}}, d); }

BlockSpec BlockSpec::uniform(Index d, Index max_block) {
  if (d < 1 || max_block < 1) throw InvalidArgument("dimension and max_block must be positive");
  std::vector<BlockRange> r;
  append_chunks(r, 0, d, max_block);
  return BlockSpec(std::move(r), max_block);
}

BlockSpec BlockSpec::for_shape(const ModelShape& shape, Index max_block) {
  if (max_block < 1) throw InvalidArgument("max_block must be positive");
  std::vector<BlockRange> r;
  switch (shape.kind) {
    case ShapeKind::MultiAttrLinear:
      for (Index a = 0; a < shape.outputs; ++a) append_chunks(r, a * shape.inputs, shape.inputs, max_block);
      break;
    case ShapeKind::MultinomialLinear:
      append_chunks(r, 0, shape.param_count(), max_block);
      break;
    case ShapeKind::Mlp: {
      const Index first = shape.inputs * shape.hidden;
      append_chunks(r, 0, first, max_block);
      append_chunks(r, first, shape.hidden * shape.outputs, max_block);
      break;
    }
  }
  return BlockSpec(std::move(r), max_block);
}

// ---------------------------------------------------------------- InverseFisher

Eigen::MatrixXd InverseFisher::to_dense() const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dim(), dim());
  for (std::size_t b = 0; b < blocks.size(); ++b)
    out.block(ranges[b].begin, ranges[b].begin, ranges[b].size, ranges[b].size) = blocks[b];
  return out;
}

std::uint64_t params_hash(const ModelParams& params) {
  io::ByteWriter w;
  w.u8(static_cast<std::uint8_t>(params.shape.kind));
  w.u64(static_cast<std::uint64_t>(params.shape.inputs));
  w.u64(static_cast<std::uint64_t>(params.shape.hidden));
  w.u64(static_cast<std::uint64_t>(params.shape.outputs));
  for (double v : params.values) w.f64(v);
  return io::fnv1a(w.data());
}

void sherman_morrison_update(Eigen::MatrixXd& inv, const Eigen::Ref<const Vector>& g, double count,
                             SampleId sample_id) {
  if (g.size() != inv.rows()) throw InvalidArgument("gradient length does not match block size");
  if (!(count >= 1.0)) throw InvalidArgument("sample count must be >= 1");
  const Vector u = inv.selfadjointView<Eigen::Lower>() * g;
  const double denom = count + g.dot(u);
  if (!std::isfinite(denom) || denom <= 0.0) {
    throw NumericError("Sherman-Morrison denominator is " + io::format_double(denom),
                       sample_id >= 0 ? std::optional<SampleId>(sample_id) : std::nullopt);
  }
  inv.noalias() -= (u / denom) * u.transpose();
  symmetrize(inv);
}

Eigen::MatrixXd sherman_morrison_step(const Eigen::MatrixXd& inv, const Vector& g, double count) {
  Eigen::MatrixXd out = inv;
  sherman_morrison_update(out, g, count);
  return out;
}

InverseFisher build_inverse_fisher(const ModelParams& params, const Dataset& data,
                                   const LossConfig& loss_cfg, const FisherConfig& cfg,
                                   const BlockSpec& spec) {
  if (!(cfg.dampening > 0.0)) throw InvalidArgument("dampening must be positive");
  if (cfg.batch_size < 1) throw InvalidArgument("fisher batch_size must be >= 1");
  if (spec.dim() != params.size())
    throw InvalidArgument("block spec covers " + std::to_string(spec.dim()) + " parameters, model has " +
                          std::to_string(params.size()));

  const Matrix grads = per_sample_grads(params, data, loss_cfg);
  const Index n = data.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    return data.ids()[static_cast<std::size_t>(a)] < data.ids()[static_cast<std::size_t>(b)];
  });
  for (Index r : order) {
    if (!grads.row(r).allFinite())
      throw NumericError("non-finite gradient", data.ids()[static_cast<std::size_t>(r)]);
  }

  // Averaged batch gradients in id order; the id reported for a batch is its first sample.
  const Index b = cfg.batch_size;
  const Index num_batches = (n + b - 1) / b;
  Matrix batched(num_batches, params.size());
  std::vector<SampleId> batch_ids(static_cast<std::size_t>(num_batches));
  for (Index k = 0; k < num_batches; ++k) {
    const Index lo = k * b;
    const Index hi = std::min(n, lo + b);
    batched.row(k).setZero();
    for (Index i = lo; i < hi; ++i) batched.row(k) += grads.row(order[static_cast<std::size_t>(i)]);
    batched.row(k) /= static_cast<double>(hi - lo);
    batch_ids[static_cast<std::size_t>(k)] = data.ids()[static_cast<std::size_t>(order[static_cast<std::size_t>(lo)])];
  }

  InverseFisher out;
  out.ranges = spec.ranges();
  out.max_block = spec.max_block();
  out.dampening = cfg.dampening;
  out.n_samples = static_cast<std::uint64_t>(n);
  out.batch_size = static_cast<std::uint64_t>(b);
  out.params_hash = params_hash(params);
  out.blocks.resize(out.ranges.size());

  const double count = static_cast<double>(num_batches);
  parallel_for(out.ranges.size(), [&](std::size_t blk) {
    const BlockRange r = out.ranges[blk];
    Eigen::MatrixXd inv = Eigen::MatrixXd::Identity(r.size, r.size) / cfg.dampening;
    for (Index k = 0; k < num_batches; ++k) {
      sherman_morrison_update(inv, batched.row(k).segment(r.begin, r.size).transpose(), count,
                              batch_ids[static_cast<std::size_t>(k)]);
    }
    out.blocks[blk] = std::move(inv);
  });
  return out;
}

Vector apply_inverse(const InverseFisher& finv, const Vector& v) {
  if (v.size() != finv.dim())
    throw InvalidArgument("vector length " + std::to_string(v.size()) + " does not match Fisher dimension " +
                          std::to_string(finv.dim()));
  Vector out(v.size());
  for (std::size_t b = 0; b < finv.blocks.size(); ++b) {
    const BlockRange r = finv.ranges[b];
    out.segment(r.begin, r.size).noalias() = finv.blocks[b] * v.segment(r.begin, r.size);
  }
  return out;
}

Vector diagonal_inverse_fisher(const ModelParams& params, const Dataset& data,
                               const LossConfig& loss_cfg, double dampening) {
  if (!(dampening > 0.0)) throw InvalidArgument("dampening must be positive");
  const Matrix grads = per_sample_grads(params, data, loss_cfg);
  for (Index r = 0; r < grads.rows(); ++r) {
    if (!grads.row(r).allFinite())
      throw NumericError("non-finite gradient", data.ids()[static_cast<std::size_t>(r)]);
  }
  const Vector second_moment = grads.array().square().colwise().sum().transpose() /
                               static_cast<double>(data.size());
  return (second_moment.array() + dampening).inverse().matrix();
}

// ---------------------------------------------------------------- serialization

std::vector<std::uint8_t> encode_inverse_fisher(const InverseFisher& finv) {
  io::ByteWriter w;
  w.bytes(kFisherMagic);
  w.u8(kFisherVersion);
  w.u64(static_cast<std::uint64_t>(finv.dim()));
  w.u64(static_cast<std::uint64_t>(finv.max_block));
  w.u64(finv.blocks.size());
  for (const BlockRange& r : finv.ranges) {
    w.u64(static_cast<std::uint64_t>(r.begin));
    w.u64(static_cast<std::uint64_t>(r.size));
  }
  for (const Eigen::MatrixXd& blk : finv.blocks) {
    for (Index i = 0; i < blk.rows(); ++i)
      for (Index j = 0; j < blk.cols(); ++j) w.f64(blk(i, j));
  }
  w.f64(finv.dampening);
  w.u64(finv.n_samples);
  w.u64(finv.batch_size);
  w.u64(finv.params_hash);
  return w.data();
}

InverseFisher decode_inverse_fisher(const std::vector<std::uint8_t>& bytes) {
  io::ByteReader r(bytes);
  r.expect(kFisherMagic, "inverse-Fisher magic");
  const std::uint64_t version_at = r.offset();
  if (r.u8() != kFisherVersion) throw ParseError("unsupported inverse-Fisher version", version_at);
  const std::uint64_t d = r.u64();
  const std::uint64_t max_block = r.u64();
  const std::uint64_t num_blocks = r.u64();
  if (num_blocks == 0 || num_blocks > d) throw ParseError("invalid block count", r.offset() - 8);
  r.need(num_blocks * 16);

  InverseFisher out;
  std::uint64_t expected = 0;
  for (std::uint64_t b = 0; b < num_blocks; ++b) {
    const std::uint64_t at = r.offset();
    const std::uint64_t begin = r.u64();
    const std::uint64_t size = r.u64();
    if (begin != expected || size == 0 || size > max_block || size > (1ULL << 26) || begin + size > d)
      throw ParseError("inconsistent block range", at);
    expected = begin + size;
    out.ranges.push_back({static_cast<Index>(begin), static_cast<Index>(size)});
  }
  if (expected != d) throw ParseError("block ranges do not cover the dimension", r.offset());
  for (const BlockRange& range : out.ranges) {
    r.need(static_cast<std::uint64_t>(range.size * range.size) * 8);
    Eigen::MatrixXd blk(range.size, range.size);
    for (Index i = 0; i < range.size; ++i)
      for (Index j = 0; j < range.size; ++j) blk(i, j) = r.f64();
    out.blocks.push_back(std::move(blk));
  }
  out.max_block = static_cast<Index>(max_block);
  out.dampening = r.f64();
  out.n_samples = r.u64();
  out.batch_size = r.u64();
  out.params_hash = r.u64();
  if (r.remaining() != 0) throw ParseError("trailing bytes after inverse-Fisher payload", r.offset());
  return out;
}

void save_inverse_fisher(const InverseFisher& finv, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_inverse_fisher(finv));
}

InverseFisher load_inverse_fisher(const std::filesystem::path& path) {
  return decode_inverse_fisher(io::read_file(path));
}

}  // namespace ssse
