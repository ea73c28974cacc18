#pragma once

#include "ssse/eval.hpp"
#include "ssse/models.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace ssse {

/// 2D Gaussian clusters, one per center, `n_per_class` points each, ids in
/// generation order. Multinomial labels are the center index; a
/// multi-attribute dataset (two centers only) has one attribute equal to it.
Dataset make_blobs(std::uint64_t seed, Index n_per_class, const std::vector<std::array<double, 2>>& centers,
                   double spread, TaskKind task = TaskKind::Multinomial);

/// Isotropic Gaussian classes in R^m with means of norm `separation` in random
/// directions.
Dataset make_gaussian_classes(std::uint64_t seed, Index classes, Index dim, Index n_per_class,
                              double separation, double noise);

/// Multi-attribute data: attribute a is on with probability frequencies[a],
/// independently; x = [1, sum_a y_a mu_a + noise * z] with |mu_a| = signal.
/// The leading constant feature lets bias-free models learn base rates.
Dataset make_multi_attribute(std::uint64_t seed, Index n, Index dim, const std::vector<double>& frequencies,
                             double signal, double noise);

struct SeparableInstance {
  Dataset data;
  ModelParams params;
};

/// Dataset and rank-c linear model where every sample has softmax output
/// p_y = 1 - (c - 1) eps and p_j = eps for j != y: class y lies on the
/// (m - c)-dimensional affine subspace theta x = delta e_y + null(theta).
///
/// With task = MultiAttribute (c must be 2) the model has a single sigmoid
/// attribute and every sample satisfies |p - y| = eps.
SeparableInstance make_separable_subspace(Index classes, Index dim, double eps_margin, Index n_per_class,
                                          std::uint64_t seed, TaskKind task = TaskKind::Multinomial);

/// Features CSV: one row per sample, optional header row. Labels CSV: one
/// 0/1 column per attribute, or a single 0-based class column.
Dataset load_csv(const std::filesystem::path& features_path, const std::filesystem::path& labels_path,
                 TaskKind task, std::optional<int> num_classes = std::nullopt);

void save_csv(const Dataset& data, const std::filesystem::path& features_path,
              const std::filesystem::path& labels_path);

struct TrainTest {
  Dataset train;
  Dataset test;
};

/// Seeded random split; round(test_fraction * n) rows go to the test set.
/// Both parts keep the original ids and row order.
TrainTest split_train_test(const Dataset& data, double test_fraction, std::uint64_t seed);

struct RemovalSpec {
  enum class Target { Attribute, Class };
  Target target = Target::Class;
  int index = 0;
  double fraction = 1.0;  // in (0, 1]
  std::uint64_t seed = 0;
};

/// Removes a seeded uniform sample of ceil(fraction * |matches|) train samples
/// carrying the target; T_a is every matching test sample. Id lists are
/// sorted ascending.
SplitSet build_splits(const Dataset& train, const Dataset& test, const RemovalSpec& spec);

}  // namespace ssse
