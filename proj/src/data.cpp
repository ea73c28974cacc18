#include "ssse/data.hpp"

#include "ssse/errors.hpp"
#include "ssse/io.hpp"
#include "ssse/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string_view>

namespace ssse {

namespace {

Vector random_direction(Rng& rng, Index dim) {
  Vector v(dim);
  do {
    for (Index j = 0; j < dim; ++j) v(j) = rng.normal();
  } while (v.norm() == 0.0);
  return v.normalized();
}

}  // namespace

Dataset make_blobs(std::uint64_t seed, Index n_per_class, const std::vector<std::array<double, 2>>& centers,
                   double spread, TaskKind task) {
  if (n_per_class < 1) throw InvalidArgument("n_per_class must be positive");
  if (centers.size() < 2) throw InvalidArgument("need at least two centers");
  if (!(spread >= 0.0)) throw InvalidArgument("spread must be nonnegative");
  if (task == TaskKind::MultiAttribute && centers.size() != 2)
    throw InvalidArgument("a single-attribute blob dataset needs exactly two centers");
  Rng rng(seed);
  const Index n = n_per_class * static_cast<Index>(centers.size());
  Matrix x(n, 2);
  std::vector<int> labels;
  for (std::size_t c = 0; c < centers.size(); ++c) {
    for (Index i = 0; i < n_per_class; ++i) {
      const Index row = static_cast<Index>(c) * n_per_class + i;
      const double dx = spread * rng.normal();
      const double dy = spread * rng.normal();
      x(row, 0) = centers[c][0] + dx;
      x(row, 1) = centers[c][1] + dy;
      labels.push_back(static_cast<int>(c));
    }
  }
  if (task == TaskKind::MultiAttribute) {
    Eigen::MatrixXi attr(n, 1);
    for (Index i = 0; i < n; ++i) attr(i, 0) = labels[static_cast<std::size_t>(i)];
    return Dataset::multi_attribute(std::move(x), std::move(attr));
  }
  return Dataset::multinomial(std::move(x), std::move(labels), static_cast<int>(centers.size()));
}

Dataset make_gaussian_classes(std::uint64_t seed, Index classes, Index dim, Index n_per_class,
                              double separation, double noise) {
  if (classes < 2 || dim < 1 || n_per_class < 1) throw InvalidArgument("invalid gaussian class dimensions");
  if (!(noise >= 0.0)) throw InvalidArgument("noise must be nonnegative");
  Rng rng(seed);
  std::vector<Vector> means;
  for (Index c = 0; c < classes; ++c) means.push_back(separation * random_direction(rng, dim));
  Matrix x(classes * n_per_class, dim);
  std::vector<int> labels;
  for (Index c = 0; c < classes; ++c) {
    for (Index i = 0; i < n_per_class; ++i) {
      const Index row = c * n_per_class + i;
      for (Index j = 0; j < dim; ++j) x(row, j) = means[static_cast<std::size_t>(c)](j) + noise * rng.normal();
      labels.push_back(static_cast<int>(c));
    }
  }
  return Dataset::multinomial(std::move(x), std::move(labels), static_cast<int>(classes));
}

Dataset make_multi_attribute(std::uint64_t seed, Index n, Index dim, const std::vector<double>& frequencies,
                             double signal, double noise) {
  if (n < 1 || dim < 2 || frequencies.empty()) throw InvalidArgument("invalid multi-attribute dimensions");
  for (double f : frequencies) {
    if (!(f > 0.0 && f < 1.0)) throw InvalidArgument("attribute frequencies must be in (0, 1)");
  }
  Rng rng(seed);
  const auto attrs = static_cast<Index>(frequencies.size());
  std::vector<Vector> directions;
  for (Index a = 0; a < attrs; ++a) directions.push_back(signal * random_direction(rng, dim - 1));
  Matrix x(n, dim);
  Eigen::MatrixXi y(n, attrs);
  for (Index i = 0; i < n; ++i) {
    Vector v = Vector::Zero(dim - 1);
    for (Index a = 0; a < attrs; ++a) {
      y(i, a) = rng.uniform() < frequencies[static_cast<std::size_t>(a)] ? 1 : 0;
      if (y(i, a) == 1) v += directions[static_cast<std::size_t>(a)];
    }
    for (Index j = 0; j < dim - 1; ++j) v(j) += noise * rng.normal();
    x(i, 0) = 1.0;
    x.row(i).tail(dim - 1) = v.transpose();
  }
  return Dataset::multi_attribute(std::move(x), std::move(y));
}

SeparableInstance make_separable_subspace(Index classes, Index dim, double eps_margin, Index n_per_class,
                                          std::uint64_t seed, TaskKind task) {
  if (n_per_class < 1) throw InvalidArgument("n_per_class must be positive");
  if (classes < 2) throw InvalidArgument("need at least two classes");
  if (dim <= classes) throw InvalidArgument("construction needs m > c");
  if (!(eps_margin > 0.0) || !(1.0 - static_cast<double>(classes - 1) * eps_margin > 0.0))
    throw InvalidArgument("eps_margin must satisfy 0 < eps and 1 - (c - 1) eps > 0");
  if (task == TaskKind::MultiAttribute && classes != 2)
    throw InvalidArgument("the binary construction needs c = 2");

  Rng rng(seed);
  const bool binary = task == TaskKind::MultiAttribute;
  const Index rows = binary ? 1 : classes;
  Matrix theta(rows, dim);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < dim; ++j) theta(i, j) = rng.normal();

  const Eigen::MatrixXd t = theta;
  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(t);
  if (cod.rank() != rows) throw InvalidArgument("random weight matrix is rank deficient; try another seed");
  const Eigen::MatrixXd pinv = cod.pseudoInverse();  // dim x rows
  // Orthonormal basis of null(theta) from a full QR of theta^T.
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(t.transpose());
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dim, dim);
  const Eigen::MatrixXd null_basis = q.rightCols(dim - rows);

  // Logit gap between the true class and every other class.
  const double gap = binary ? std::log((1.0 - eps_margin) / eps_margin)
                            : std::log((1.0 - static_cast<double>(classes - 1) * eps_margin) / eps_margin);

  const Index n = classes * n_per_class;
  Matrix x(n, dim);
  std::vector<int> labels;
  for (Index c = 0; c < classes; ++c) {
    Vector target = Vector::Zero(rows);
    if (binary)
      target(0) = c == 1 ? gap : -gap;
    else
      target(c) = gap;
    const Vector anchor = pinv * target;
    for (Index i = 0; i < n_per_class; ++i) {
      Vector coeffs(dim - rows);
      for (Index j = 0; j < coeffs.size(); ++j) coeffs(j) = rng.normal();
      x.row(c * n_per_class + i) = (anchor + null_basis * coeffs).transpose();
      labels.push_back(static_cast<int>(c));
    }
  }

  const ModelShape shape =
      binary ? ModelShape::multi_attr_linear(1, dim) : ModelShape::multinomial_linear(classes, dim);
  ModelParams params(shape, Eigen::Map<const Vector>(theta.data(), theta.size()), seed);
  if (binary) {
    Eigen::MatrixXi attr(n, 1);
    for (Index i = 0; i < n; ++i) attr(i, 0) = labels[static_cast<std::size_t>(i)];
    return {Dataset::multi_attribute(std::move(x), std::move(attr)), std::move(params)};
  }
  return {Dataset::multinomial(std::move(x), std::move(labels), static_cast<int>(classes)), std::move(params)};
}

// ---------------------------------------------------------------- CSV

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool parse_number(std::string_view cell, double& out) {
  cell = trim(cell);
  if (cell.empty()) return false;
  if (cell.front() == '+') cell.remove_prefix(1);
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), out);
  return res.ec == std::errc() && res.ptr == cell.data() + cell.size();
}

std::vector<std::string_view> split_cells(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

// Numeric table with an optional non-numeric header row.
struct NumericTable {
  std::vector<std::vector<double>> rows;
  std::vector<std::uint64_t> lines;  // 1-based file line of each row
};

NumericTable read_numeric_csv(const std::filesystem::path& path) {
  const std::string text = io::read_text(path);
  NumericTable t;
  std::size_t width = 0;
  std::uint64_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string_view line = trim(std::string_view(text).substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_cells(line);
    std::vector<double> values(cells.size());
    bool numeric = true;
    for (std::size_t i = 0; i < cells.size() && numeric; ++i) numeric = parse_number(cells[i], values[i]);
    if (!numeric) {
      if (line_no == 1) continue;  // header
      throw ParseError(path.string() + ": non-numeric cell", line_no, "row");
    }
    if (t.rows.empty()) width = values.size();
    if (values.size() != width)
      throw ParseError(path.string() + ": expected " + std::to_string(width) + " columns, found " +
                           std::to_string(values.size()),
                       line_no, "row");
    t.rows.push_back(std::move(values));
    t.lines.push_back(line_no);
  }
  if (t.rows.empty()) throw ParseError(path.string() + ": no data rows", line_no, "row");
  return t;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& features_path, const std::filesystem::path& labels_path,
                 TaskKind task, std::optional<int> num_classes) {
  const NumericTable feat = read_numeric_csv(features_path);
  const NumericTable lab = read_numeric_csv(labels_path);
  if (feat.rows.size() != lab.rows.size()) {
    const std::size_t first_missing = std::min(feat.rows.size(), lab.rows.size());
    const auto& longer = feat.rows.size() > lab.rows.size() ? feat : lab;
    throw ParseError("feature rows (" + std::to_string(feat.rows.size()) + ") and label rows (" +
                         std::to_string(lab.rows.size()) + ") differ",
                     longer.lines[first_missing], "row");
  }
  const auto n = static_cast<Index>(feat.rows.size());
  Matrix x(n, static_cast<Index>(feat.rows[0].size()));
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < x.cols(); ++j) x(i, j) = feat.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];

  if (task == TaskKind::MultiAttribute) {
    Eigen::MatrixXi y(n, static_cast<Index>(lab.rows[0].size()));
    for (Index i = 0; i < n; ++i) {
      const auto r = static_cast<std::size_t>(i);
      for (Index a = 0; a < y.cols(); ++a) {
        const double v = lab.rows[r][static_cast<std::size_t>(a)];
        if (v != 0.0 && v != 1.0)
          throw ParseError(labels_path.string() + ": attribute labels must be 0 or 1", lab.lines[r], "row");
        y(i, a) = static_cast<int>(v);
      }
    }
    return Dataset::multi_attribute(std::move(x), std::move(y));
  }
  if (lab.rows[0].size() != 1)
    throw ParseError(labels_path.string() + ": class labels need exactly one column", lab.lines[0], "row");
  std::vector<int> classes;
  int max_class = 0;
  for (std::size_t i = 0; i < lab.rows.size(); ++i) {
    const double v = lab.rows[i][0];
    if (v < 0.0 || v != std::floor(v) || v > 1e9)
      throw ParseError(labels_path.string() + ": class labels must be nonnegative integers", lab.lines[i], "row");
    classes.push_back(static_cast<int>(v));
    max_class = std::max(max_class, classes.back());
  }
  return Dataset::multinomial(std::move(x), std::move(classes), num_classes.value_or(max_class + 1));
}

void save_csv(const Dataset& data, const std::filesystem::path& features_path,
              const std::filesystem::path& labels_path) {
  std::ostringstream f;
  for (Index i = 0; i < data.size(); ++i) {
    for (Index j = 0; j < data.dim(); ++j) f << (j ? "," : "") << io::format_double(data.features()(i, j));
    f << '\n';
  }
  std::ostringstream l;
  for (Index i = 0; i < data.size(); ++i) {
    if (data.task() == TaskKind::MultiAttribute) {
      for (Index a = 0; a < data.num_outputs(); ++a) l << (a ? "," : "") << data.attributes()(i, a);
    } else {
      l << data.classes()[static_cast<std::size_t>(i)];
    }
    l << '\n';
  }
  io::write_file_atomic(features_path, f.str());
  io::write_file_atomic(labels_path, l.str());
}

// ---------------------------------------------------------------- splits

TrainTest split_train_test(const Dataset& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw InvalidArgument("test_fraction must be in (0, 1)");
  const auto n = static_cast<std::size_t>(data.size());
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  if (n_test == 0 || n_test >= n) throw InvalidArgument("test_fraction leaves an empty train or test set");
  std::vector<Index> rows(n);
  std::iota(rows.begin(), rows.end(), Index{0});
  Rng rng(seed);
  rng.shuffle(std::span<Index>(rows));
  std::vector<Index> test_rows(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<Index> train_rows(rows.begin() + static_cast<std::ptrdiff_t>(n_test), rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  std::sort(train_rows.begin(), train_rows.end());
  return {data.select_rows(train_rows), data.select_rows(test_rows)};
}

namespace {

bool matches(const Dataset& d, Index row, const RemovalSpec& spec) {
  if (spec.target == RemovalSpec::Target::Attribute) return d.attributes()(row, spec.index) == 1;
  return d.classes()[static_cast<std::size_t>(row)] == spec.index;
}

}  // namespace

SplitSet build_splits(const Dataset& train, const Dataset& test, const RemovalSpec& spec) {
  if (!(spec.fraction > 0.0 && spec.fraction <= 1.0)) throw InvalidArgument("removal fraction must be in (0, 1]");
  const bool attribute = spec.target == RemovalSpec::Target::Attribute;
  if (attribute != (train.task() == TaskKind::MultiAttribute))
    throw InvalidArgument("removal target does not match the task kind");
  if (spec.index < 0 || spec.index >= train.num_outputs())
    throw InvalidArgument("removal target index " + std::to_string(spec.index) + " out of range");
  if (test.task() != train.task() || test.num_outputs() != train.num_outputs())
    throw InvalidArgument("train and test sets describe different tasks");

  std::vector<SampleId> candidates;
  for (Index i = 0; i < train.size(); ++i) {
    if (matches(train, i, spec)) candidates.push_back(train.ids()[static_cast<std::size_t>(i)]);
  }
  if (candidates.empty()) throw InvalidArgument("no training samples match the removal target");
  std::sort(candidates.begin(), candidates.end());

  // Tolerance keeps e.g. 0.3 * 10 from rounding up to 4.
  const double wanted = spec.fraction * static_cast<double>(candidates.size());
  const auto k = std::min(candidates.size(), static_cast<std::size_t>(std::ceil(wanted - 1e-9)));

  Rng rng(spec.seed);
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(candidates.size() - i));
    std::swap(candidates[i], candidates[j]);
  }
  SplitSet out;
  out.removed.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(out.removed.begin(), out.removed.end());

  for (SampleId id : train.ids()) {
    if (!std::binary_search(out.removed.begin(), out.removed.end(), id)) out.lko_train.push_back(id);
  }
  for (Index i = 0; i < test.size(); ++i) {
    const SampleId id = test.ids()[static_cast<std::size_t>(i)];
    (matches(test, i, spec) ? out.removed_test : out.lko_test).push_back(id);
  }
  std::sort(out.lko_train.begin(), out.lko_train.end());
  std::sort(out.lko_test.begin(), out.lko_test.end());
  std::sort(out.removed_test.begin(), out.removed_test.end());
  return out;
}

}  // namespace ssse
