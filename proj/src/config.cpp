#include "ssse/config.hpp"

#include "ssse/errors.hpp"
#include "ssse/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>
#include <string_view>

namespace ssse {

ConfigError::ConfigError(std::string field, const std::string& what, int line)
    : std::runtime_error((field.empty() ? std::string() : field + ": ") + what +
                         (line > 0 ? " (line " + std::to_string(line) + ")" : std::string())),
      field_(std::move(field)),
      line_(line) {}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool valid_name(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_')) return false;
  }
  return true;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t p = s.find(sep, start);
    out.emplace_back(trim(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start)));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

const std::map<std::string, std::vector<std::string>>& schema() {
  static const std::map<std::string, std::vector<std::string>> keys = {
      {"data",
       {"source", "task", "seed", "test_fraction", "n_per_class", "centers", "spread", "classes", "dim",
        "separation", "noise", "n", "frequencies", "signal", "train_features", "train_labels", "test_features",
        "test_labels", "num_classes"}},
      {"model", {"kind", "hidden"}},
      {"loss", {"l2"}},
      {"train", {"lr", "momentum", "epochs", "batch_size", "seed", "grad_tol", "lr_schedule"}},
      {"fisher", {"dampening", "max_block", "batch_size"}},
      {"removal", {"target", "index", "fraction", "seed"}},
      {"sweep", {"epsilons", "log_min", "log_max", "per_decade", "criterion"}},
      {"baselines", {"ga_lr", "scrub_noise", "scrub_seed"}},
      {"demo", {"x_min", "x_max", "y_min", "y_max", "nx", "ny"}},
      {"output", {"dir"}},
  };
  return keys;
}

// Typed accessors over one section; each error names section.key.
class Reader {
 public:
  Reader(ConfigFile& file, std::string section) : file_(file), section_(std::move(section)) {}

  std::optional<std::string> raw(const std::string& key) { return file_.take(section_, key); }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError(section_ + "." + key, what, file_.line_of(section_, key));
  }

  double to_double(const std::string& key, std::string_view text) const {
    double v = 0.0;
    text = trim(text);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || r.ec != std::errc() || r.ptr != text.data() + text.size() || !std::isfinite(v))
      fail(key, "expected a finite number, got '" + std::string(text) + "'");
    return v;
  }

  std::int64_t to_int(const std::string& key, std::string_view text) const {
    std::int64_t v = 0;
    text = trim(text);
    const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || r.ec != std::errc() || r.ptr != text.data() + text.size())
      fail(key, "expected an integer, got '" + std::string(text) + "'");
    return v;
  }

  void real(const std::string& key, double& out) {
    if (auto v = raw(key)) out = to_double(key, *v);
  }
  void integer(const std::string& key, Index& out) {
    if (auto v = raw(key)) out = static_cast<Index>(to_int(key, *v));
  }
  void integer(const std::string& key, int& out) {
    if (auto v = raw(key)) {
      const auto x = to_int(key, *v);
      if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) fail(key, "out of range");
      out = static_cast<int>(x);
    }
  }
  void seed(const std::string& key, std::uint64_t& out) {
    if (auto v = raw(key)) {
      std::string_view text = trim(*v);
      std::uint64_t x = 0;
      const auto r = std::from_chars(text.data(), text.data() + text.size(), x);
      if (text.empty() || r.ec != std::errc() || r.ptr != text.data() + text.size())
        fail(key, "expected a nonnegative integer seed");
      out = x;
    }
  }
  void text(const std::string& key, std::string& out) {
    if (auto v = raw(key)) out = *v;
  }
  void path(const std::string& key, std::filesystem::path& out) {
    if (auto v = raw(key)) out = *v;
  }
  std::optional<std::vector<double>> reals(const std::string& key) {
    auto v = raw(key);
    if (!v) return std::nullopt;
    std::vector<double> out;
    for (const auto& cell : split(*v, ',')) out.push_back(to_double(key, cell));
    return out;
  }

 private:
  ConfigFile& file_;
  std::string section_;
};

std::string join(const std::vector<double>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) s += (i ? "," : "") + io::format_double(values[i]);
  return s;
}

}  // namespace

// ---------------------------------------------------------------- ConfigFile

ConfigFile ConfigFile::parse(const std::string& text) {
  ConfigFile out;
  std::string section;
  std::istringstream in(text);
  std::string line_buf;
  int line_no = 0;
  while (std::getline(in, line_buf)) {
    ++line_no;
    const std::string_view line = trim(line_buf);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("", "unterminated section header", line_no);
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (!schema().contains(section)) throw ConfigError(section, "unknown section", line_no);
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("", "expected 'key = value'", line_no);
    const std::string key(trim(line.substr(0, eq)));
    if (!valid_name(key)) throw ConfigError("", "invalid key '" + key + "'", line_no);
    if (section.empty()) throw ConfigError(key, "key outside of any section", line_no);
    auto& entries = out.sections_[section];
    if (entries.contains(key)) throw ConfigError(section + "." + key, "duplicate key", line_no);
    entries[key] = Entry{std::string(trim(line.substr(eq + 1))), line_no, false};
  }
  for (const auto& [name, entries] : out.sections_) {
    const auto& allowed = schema().at(name);
    for (const auto& [key, entry] : entries) {
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
        throw ConfigError(name + "." + key, "unknown key", entry.line);
    }
  }
  return out;
}

std::optional<std::string> ConfigFile::take(const std::string& section, const std::string& key) {
  auto s = sections_.find(section);
  if (s == sections_.end()) return std::nullopt;
  auto e = s->second.find(key);
  if (e == s->second.end()) return std::nullopt;
  e->second.used = true;
  return e->second.value;
}

void ConfigFile::reject_unused() const {
  for (const auto& [name, entries] : sections_) {
    for (const auto& [key, entry] : entries) {
      if (!entry.used) throw ConfigError(name + "." + key, "key is not used by this configuration", entry.line);
    }
  }
}

int ConfigFile::line_of(const std::string& section, const std::string& key) const {
  auto s = sections_.find(section);
  if (s == sections_.end()) return 0;
  auto e = s->second.find(key);
  return e == s->second.end() ? 0 : e->second.line;
}

// ---------------------------------------------------------------- ExperimentConfig

double FisherSection::effective_dampening(const LossConfig& loss) const {
  if (dampening) return *dampening;
  return loss.l2_coeff > 0.0 ? loss.l2_coeff : 1e-4;
}

std::vector<double> log_grid(double lo_exp, double hi_exp, int per_decade) {
  if (per_decade < 1 || !(hi_exp >= lo_exp)) throw InvalidArgument("invalid log grid");
  const auto steps = std::llround((hi_exp - lo_exp) * per_decade);
  std::vector<double> g;
  for (long long i = 0; i <= steps; ++i)
    g.push_back(std::pow(10.0, lo_exp + static_cast<double>(i) / static_cast<double>(per_decade)));
  return g;
}

ExperimentConfig ExperimentConfig::from_text(const std::string& text) {
  ConfigFile file = ConfigFile::parse(text);
  ExperimentConfig c;

  Reader data(file, "data");
  data.text("source", c.data.source);
  data.text("task", c.data.task);
  data.seed("seed", c.data.seed);
  data.real("test_fraction", c.data.test_fraction);
  data.integer("n_per_class", c.data.n_per_class);
  if (auto v = data.raw("centers")) {
    c.data.centers.clear();
    for (const auto& point : split(*v, ';')) {
      const auto xy = split(point, ',');
      if (xy.size() != 2) data.fail("centers", "each center needs two coordinates 'x, y'");
      c.data.centers.push_back({data.to_double("centers", xy[0]), data.to_double("centers", xy[1])});
    }
  }
  data.real("spread", c.data.spread);
  data.integer("classes", c.data.classes);
  data.integer("dim", c.data.dim);
  data.real("separation", c.data.separation);
  data.real("noise", c.data.noise);
  data.integer("n", c.data.n);
  if (auto v = data.reals("frequencies")) c.data.frequencies = *v;
  data.real("signal", c.data.signal);
  data.path("train_features", c.data.train_features);
  data.path("train_labels", c.data.train_labels);
  data.path("test_features", c.data.test_features);
  data.path("test_labels", c.data.test_labels);
  if (auto v = data.raw("num_classes")) c.data.num_classes = static_cast<int>(data.to_int("num_classes", *v));

  Reader model(file, "model");
  model.text("kind", c.model.kind);
  model.integer("hidden", c.model.hidden);

  Reader loss(file, "loss");
  loss.real("l2", c.loss.l2_coeff);

  Reader train(file, "train");
  train.real("lr", c.train.lr);
  train.real("momentum", c.train.momentum);
  train.integer("epochs", c.train.epochs);
  if (auto v = train.raw("batch_size")) {
    c.train.batch_size =
        trim(*v) == "full" ? std::numeric_limits<Index>::max() : static_cast<Index>(train.to_int("batch_size", *v));
  }
  train.seed("seed", c.train.seed);
  train.real("grad_tol", c.train.grad_tol);
  if (auto v = train.raw("lr_schedule")) {
    if (!trim(*v).empty()) {
      for (const auto& step : split(*v, ',')) {
        const auto parts = split(step, ':');
        if (parts.size() != 2) train.fail("lr_schedule", "steps are 'epoch:factor'");
        c.train.lr_schedule.push_back(
            {static_cast<int>(train.to_int("lr_schedule", parts[0])), train.to_double("lr_schedule", parts[1])});
      }
    }
  }

  Reader fisher(file, "fisher");
  if (auto v = fisher.raw("dampening")) c.fisher.dampening = fisher.to_double("dampening", *v);
  fisher.integer("max_block", c.fisher.max_block);
  fisher.integer("batch_size", c.fisher.batch_size);

  Reader removal(file, "removal");
  if (auto v = removal.raw("target")) {
    if (*v == "class")
      c.removal.target = RemovalSpec::Target::Class;
    else if (*v == "attribute")
      c.removal.target = RemovalSpec::Target::Attribute;
    else
      removal.fail("target", "expected 'class' or 'attribute'");
  } else {
    c.removal.target = c.data.task == "multi_attribute" ? RemovalSpec::Target::Attribute : RemovalSpec::Target::Class;
  }
  removal.integer("index", c.removal.index);
  removal.real("fraction", c.removal.fraction);
  removal.seed("seed", c.removal.seed);

  Reader sweep(file, "sweep");
  const auto listed = sweep.reals("epsilons");
  double lo = -4.0, hi = 4.0;
  int per = 4;
  sweep.real("log_min", lo);
  sweep.real("log_max", hi);
  sweep.integer("per_decade", per);
  if (listed) {
    c.sweep.epsilons = *listed;
    if (file.line_of("sweep", "log_min") || file.line_of("sweep", "log_max") || file.line_of("sweep", "per_decade"))
      sweep.fail("epsilons", "give either an explicit list or log_min/log_max/per_decade");
  } else {
    if (per < 1) sweep.fail("per_decade", "must be positive");
    if (!(hi >= lo)) sweep.fail("log_max", "must not be below log_min");
    c.sweep.epsilons = log_grid(lo, hi, per);
  }
  if (auto v = sweep.raw("criterion")) {
    try {
      c.sweep.criterion = parse_criterion(*v);
    } catch (const InvalidArgument&) {
      sweep.fail("criterion", "expected 'max_gamma' or 'min_delta'");
    }
  }

  Reader base(file, "baselines");
  base.real("ga_lr", c.baselines.ga_lr);
  base.real("scrub_noise", c.baselines.scrub_noise);
  base.seed("scrub_seed", c.baselines.scrub_seed);

  Reader demo(file, "demo");
  demo.real("x_min", c.demo_grid.x_min);
  demo.real("x_max", c.demo_grid.x_max);
  demo.real("y_min", c.demo_grid.y_min);
  demo.real("y_max", c.demo_grid.y_max);
  demo.integer("nx", c.demo_grid.nx);
  demo.integer("ny", c.demo_grid.ny);

  Reader output(file, "output");
  output.path("dir", c.output_dir);

  file.reject_unused();
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("--config", "file not found: " + path.string());
  ExperimentConfig c = from_text(io::read_text(path));
  c.base_dir = path.parent_path();
  return c;
}

void ExperimentConfig::validate() const {
  const auto& d = data;
  if (d.source != "blobs" && d.source != "gaussian" && d.source != "multi_attribute" && d.source != "csv")
    throw ConfigError("data.source", "expected blobs, gaussian, multi_attribute or csv");
  if (d.task != "multinomial" && d.task != "multi_attribute")
    throw ConfigError("data.task", "expected multinomial or multi_attribute");
  if (d.source == "gaussian" && d.task != "multinomial")
    throw ConfigError("data.task", "gaussian data is multinomial");
  if (d.source == "multi_attribute" && d.task != "multi_attribute")
    throw ConfigError("data.task", "multi_attribute data needs task = multi_attribute");
  if (d.source == "multi_attribute" && d.frequencies.empty())
    throw ConfigError("data.frequencies", "multi_attribute data needs attribute frequencies");
  if (d.source == "csv") {
    if (d.train_features.empty()) throw ConfigError("data.train_features", "required for csv data");
    if (d.train_labels.empty()) throw ConfigError("data.train_labels", "required for csv data");
    if (d.test_features.empty() != d.test_labels.empty())
      throw ConfigError("data.test_features", "test features and labels must be given together");
  }
  if (!(d.test_fraction > 0.0 && d.test_fraction < 1.0)) throw ConfigError("data.test_fraction", "must be in (0, 1)");
  if (model.kind != "linear" && model.kind != "mlp") throw ConfigError("model.kind", "expected linear or mlp");
  if (model.kind == "mlp" && d.task != "multinomial") throw ConfigError("model.kind", "mlp models are multinomial");
  if (model.hidden < 1) throw ConfigError("model.hidden", "must be positive");
  if (!(loss.l2_coeff >= 0.0)) throw ConfigError("loss.l2", "must be nonnegative");
  try {
    train.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError("train", e.what());
  }
  if (fisher.dampening && !(*fisher.dampening > 0.0)) throw ConfigError("fisher.dampening", "must be positive");
  if (fisher.max_block < 1) throw ConfigError("fisher.max_block", "must be positive");
  if (fisher.batch_size < 1) throw ConfigError("fisher.batch_size", "must be positive");
  if ((removal.target == RemovalSpec::Target::Attribute) != (d.task == "multi_attribute"))
    throw ConfigError("removal.target", "class removal needs a multinomial task, attribute removal a multi-attribute one");
  if (removal.index < 0) throw ConfigError("removal.index", "must be nonnegative");
  if (!(removal.fraction > 0.0 && removal.fraction <= 1.0)) throw ConfigError("removal.fraction", "must be in (0, 1]");
  if (sweep.epsilons.empty()) throw ConfigError("sweep.epsilons", "grid must be nonempty");
  if (sweep.epsilons.front() < 0.0) throw ConfigError("sweep.epsilons", "values must be nonnegative");
  for (std::size_t i = 1; i < sweep.epsilons.size(); ++i) {
    if (!(sweep.epsilons[i] > sweep.epsilons[i - 1]))
      throw ConfigError("sweep.epsilons", "grid must be strictly increasing");
  }
  if (sweep.criterion) {
    const bool gamma = *sweep.criterion == SweepCriterion::MaxGamma;
    if (gamma != (d.task == "multi_attribute"))
      throw ConfigError("sweep.criterion", "max_gamma applies to multi-attribute tasks, min_delta to multinomial");
  }
  if (!(baselines.ga_lr >= 0.0)) throw ConfigError("baselines.ga_lr", "must be nonnegative");
  if (!(baselines.scrub_noise >= 0.0)) throw ConfigError("baselines.scrub_noise", "must be nonnegative");
  if (demo_grid.nx < 1 || demo_grid.ny < 1) throw ConfigError("demo.nx", "grid needs at least one point per axis");
  if (!(demo_grid.x_max > demo_grid.x_min) || !(demo_grid.y_max > demo_grid.y_min))
    throw ConfigError("demo.x_max", "grid bounds must be increasing");
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream s;
  const auto f = [](double v) { return io::format_double(v); };
  s << "baselines.ga_lr = " << f(baselines.ga_lr) << '\n'
    << "baselines.scrub_noise = " << f(baselines.scrub_noise) << '\n'
    << "baselines.scrub_seed = " << baselines.scrub_seed << '\n';
  std::string centers;
  for (std::size_t i = 0; i < data.centers.size(); ++i)
    centers += (i ? ";" : "") + f(data.centers[i][0]) + "," + f(data.centers[i][1]);
  s << "data.centers = " << centers << '\n'
    << "data.classes = " << data.classes << '\n'
    << "data.dim = " << data.dim << '\n'
    << "data.frequencies = " << join(data.frequencies) << '\n'
    << "data.n = " << data.n << '\n'
    << "data.n_per_class = " << data.n_per_class << '\n'
    << "data.noise = " << f(data.noise) << '\n'
    << "data.num_classes = " << (data.num_classes ? std::to_string(*data.num_classes) : "auto") << '\n'
    << "data.seed = " << data.seed << '\n'
    << "data.separation = " << f(data.separation) << '\n'
    << "data.signal = " << f(data.signal) << '\n'
    << "data.source = " << data.source << '\n'
    << "data.spread = " << f(data.spread) << '\n'
    << "data.task = " << data.task << '\n'
    << "data.test_features = " << data.test_features.generic_string() << '\n'
    << "data.test_fraction = " << f(data.test_fraction) << '\n'
    << "data.test_labels = " << data.test_labels.generic_string() << '\n'
    << "data.train_features = " << data.train_features.generic_string() << '\n'
    << "data.train_labels = " << data.train_labels.generic_string() << '\n'
    << "demo.nx = " << demo_grid.nx << '\n'
    << "demo.ny = " << demo_grid.ny << '\n'
    << "demo.x_max = " << f(demo_grid.x_max) << '\n'
    << "demo.x_min = " << f(demo_grid.x_min) << '\n'
    << "demo.y_max = " << f(demo_grid.y_max) << '\n'
    << "demo.y_min = " << f(demo_grid.y_min) << '\n'
    << "fisher.batch_size = " << fisher.batch_size << '\n'
    << "fisher.dampening = " << (fisher.dampening ? f(*fisher.dampening) : "auto") << '\n'
    << "fisher.max_block = " << fisher.max_block << '\n'
    << "loss.l2 = " << f(loss.l2_coeff) << '\n'
    << "model.hidden = " << model.hidden << '\n'
    << "model.kind = " << model.kind << '\n'
    << "removal.fraction = " << f(removal.fraction) << '\n'
    << "removal.index = " << removal.index << '\n'
    << "removal.seed = " << removal.seed << '\n'
    << "removal.target = " << (removal.target == RemovalSpec::Target::Class ? "class" : "attribute") << '\n'
    << "sweep.criterion = " << (sweep.criterion ? criterion_name(*sweep.criterion) : "auto") << '\n'
    << "sweep.epsilons = " << join(sweep.epsilons) << '\n'
    << "train.batch_size = " << train.batch_size << '\n'
    << "train.epochs = " << train.epochs << '\n'
    << "train.grad_tol = " << f(train.grad_tol) << '\n'
    << "train.lr = " << f(train.lr) << '\n';
  std::string schedule;
  for (std::size_t i = 0; i < train.lr_schedule.size(); ++i)
    schedule += (i ? "," : "") + std::to_string(train.lr_schedule[i].epoch) + ":" + f(train.lr_schedule[i].factor);
  s << "train.lr_schedule = " << schedule << '\n'
    << "train.momentum = " << f(train.momentum) << '\n'
    << "train.seed = " << train.seed << '\n';
  return s.str();
}

std::uint64_t ExperimentConfig::digest() const { return io::fnv1a(canonical()); }

}  // namespace ssse
