#pragma once

#include "ssse/models.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace ssse {

struct BlockRange {
  Index begin = 0;
  Index size = 0;
  Index end() const { return begin + size; }
  bool operator==(const BlockRange&) const = default;
};

/// Partition of the parameter vector into contiguous diagonal blocks.
class BlockSpec {
 public:
  /// Validates that the ranges are sorted, disjoint, cover [0, d) and respect
  /// `max_block`.
  BlockSpec(std::vector<BlockRange> ranges, Index max_block);

  static BlockSpec single(Index d);
  /// Consecutive chunks of at most `max_block` indices.
  static BlockSpec uniform(Index d, Index max_block);
  /// Shape-aware layout. Multi-attribute models never share a block across
  /// attributes; MLP blocks never span layers; multinomial weights are chunked
  /// contiguously. Each natural unit is split into chunks of at most
  /// `max_block`.
  static BlockSpec for_shape(const ModelShape& shape, Index max_block);

  const std::vector<BlockRange>& ranges() const { return ranges_; }
  Index max_block() const { return max_block_; }
  Index dim() const { return ranges_.empty() ? 0 : ranges_.back().end(); }

 private:
  std::vector<BlockRange> ranges_;
  Index max_block_;
};

struct FisherConfig {
  double dampening = 1e-4;  // lambda, F_0 = lambda I
  Index batch_size = 1;
};

/// Block-diagonal inverse of lambda I + (1/N) sum_b g_b g_b^T.
struct InverseFisher {
  std::vector<Eigen::MatrixXd> blocks;
  std::vector<BlockRange> ranges;
  Index max_block = 0;
  double dampening = 0.0;
  std::uint64_t n_samples = 0;
  std::uint64_t batch_size = 1;
  std::uint64_t params_hash = 0;

  Index dim() const { return ranges.empty() ? 0 : ranges.back().end(); }
  Eigen::MatrixXd to_dense() const;
};

/// FNV-1a digest over the shape descriptor and the raw parameter bytes.
std::uint64_t params_hash(const ModelParams& params);

/// One Sherman-Morrison step: returns (inv^-1 + g g^T / count)^-1.
Eigen::MatrixXd sherman_morrison_step(const Eigen::MatrixXd& inv, const Vector& g, double count);

/// In-place variant used by the builder; `sample_id` is attached to errors.
void sherman_morrison_update(Eigen::MatrixXd& inv, const Eigen::Ref<const Vector>& g, double count,
                             SampleId sample_id = -1);

/// Samples are visited in increasing id order. With batch_size b the
/// gradients of consecutive groups of b samples are averaged (the last group
/// over its actual size) and the recurrence count is ceil(n / b).
InverseFisher build_inverse_fisher(const ModelParams& params, const Dataset& data,
                                   const LossConfig& loss_cfg, const FisherConfig& cfg,
                                   const BlockSpec& blocks);

Vector apply_inverse(const InverseFisher& finv, const Vector& v);

/// Entry j is 1 / (lambda + (1/n) sum_i g_ij^2).
Vector diagonal_inverse_fisher(const ModelParams& params, const Dataset& data,
                               const LossConfig& loss_cfg, double dampening);

void save_inverse_fisher(const InverseFisher& finv, const std::filesystem::path& path);
InverseFisher load_inverse_fisher(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_inverse_fisher(const InverseFisher& finv);
InverseFisher decode_inverse_fisher(const std::vector<std::uint8_t>& bytes);

}  // namespace ssse
