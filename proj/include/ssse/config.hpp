#pragma once

#include "ssse/data.hpp"
#include "ssse/eval.hpp"
#include "ssse/fisher.hpp"
#include "ssse/training.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssse {

/// Bad or missing configuration value. `field()` is "section.key" when known.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what, int line = 0);
  const std::string& field() const { return field_; }
  int line() const { return line_; }

 private:
  std::string field_;
  int line_;
};

/// Raw sectioned key=value file.
///
/// Grammar, one construct per line:
///   '#' or ';' at the start of a line begins a comment
///   [section]        section names are [a-z0-9_]+
///   key = value      keys are [a-z0-9_]+; the value runs to end of line with
///                    surrounding blanks trimmed
/// Keys before the first section header, duplicate keys within a section
/// and unknown sections or keys are errors. Lists are comma-separated;
/// point lists (data.centers) separate points with ';'.
class ConfigFile {
 public:
  static ConfigFile parse(const std::string& text);

  std::optional<std::string> take(const std::string& section, const std::string& key);
  /// Throws ConfigError naming the first key that was never taken.
  void reject_unused() const;

  int line_of(const std::string& section, const std::string& key) const;

 private:
  struct Entry {
    std::string value;
    int line = 0;
    bool used = false;
  };
  std::map<std::string, std::map<std::string, Entry>> sections_;
};

/// 10^lo .. 10^hi with `per_decade` points per decade, inclusive.
std::vector<double> log_grid(double lo_exp, double hi_exp, int per_decade);

struct DataConfig {
  std::string source = "blobs";  // blobs | gaussian | multi_attribute | csv
  std::string task = "multinomial";
  std::uint64_t seed = 1;
  double test_fraction = 1.0 / 3.0;
  // blobs
  Index n_per_class = 150;
  std::vector<std::array<double, 2>> centers = {{1.0, 0.6}, {-1.0, -0.4}};
  double spread = 1.0;
  // gaussian
  Index classes = 10;
  Index dim = 50;
  double separation = 4.0;
  double noise = 1.0;
  // multi_attribute (also uses dim, noise)
  Index n = 2000;
  std::vector<double> frequencies;
  double signal = 2.0;
  // csv; test files optional (test_fraction split otherwise)
  std::filesystem::path train_features, train_labels, test_features, test_labels;
  std::optional<int> num_classes;
};

struct ModelConfig {
  std::string kind = "linear";  // linear | mlp
  Index hidden = 16;
};

struct FisherSection {
  std::optional<double> dampening;  // unset: loss.l2 if positive, else 1e-4
  Index max_block = 4096;
  Index batch_size = 1;

  double effective_dampening(const LossConfig& loss) const;
};

struct SweepSection {
  std::vector<double> epsilons = log_grid(-4.0, 4.0, 4);
  std::optional<SweepCriterion> criterion;  // unset: by task
};

struct BaselineSection {
  double ga_lr = 1.0;
  double scrub_noise = 0.0;
  std::uint64_t scrub_seed = 0;
};

struct ExperimentConfig {
  DataConfig data;
  ModelConfig model;
  LossConfig loss{1e-3};
  TrainConfig train;
  FisherSection fisher;
  RemovalSpec removal;
  SweepSection sweep;
  BaselineSection baselines;
  GridSpec demo_grid;
  std::filesystem::path output_dir = "out";
  /// Relative data paths resolve against this; set by from_file, excluded
  /// from canonical().
  std::filesystem::path base_dir;

  /// Parses and validates; every field has a default.
  static ExperimentConfig from_text(const std::string& text);
  static ExperimentConfig from_file(const std::filesystem::path& path);

  /// Sorted `section.key = value` dump of every field, used for digests.
  std::string canonical() const;
  std::uint64_t digest() const;

  /// Throws ConfigError on inconsistent values.
  void validate() const;
};

}  // namespace ssse
