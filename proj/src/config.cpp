#include "dynanet/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <functional>


namespace dynanet {

std::string_view task_name(Task task) {
  switch (task) {
    case Task::Stylize: return "stylize";
    case Task::TwoStyles: return "two-styles";
    case Task::TwoScales: return "two-scales";
    case Task::Regress1d: return "regress1d";
    case Task::FailureCase: return "failure-case";
  }
  return "?";
}

Task parse_task(std::string_view name) {
  for (auto t : {Task::Stylize, Task::TwoStyles, Task::TwoScales, Task::Regress1d, Task::FailureCase}) {
    if (task_name(t) == name) return t;
  }
  throw ConfigError("unknown task '" + std::string(name) + "'");
}

namespace {

std::string_view regress_kind_name(RegressionKind k) {
  return k == RegressionKind::ConstantPair ? "constant-pair" : "sine-pair";
}

RegressionKind parse_regress_kind(std::string_view s) {
  if (s == "constant-pair") return RegressionKind::ConstantPair;
  if (s == "sine-pair") return RegressionKind::SinePair;
  throw ConfigError("unknown regression kind '" + std::string(s) + "'");
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string unquote(std::string_view key, std::string_view v) {
  v = trim(v);
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return std::string(v.substr(1, v.size() - 2));
  if (v.find_first_of("\"[]") != std::string_view::npos) {
    throw ConfigError("key '" + std::string(key) + "': malformed string value");
  }
  return std::string(v);
}

double to_double(std::string_view key, std::string_view v) {
  const std::string s(trim(v));
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || !std::isfinite(d)) {
    throw ConfigError("key '" + std::string(key) + "': expected a finite number, got '" + s + "'");
  }
  return d;
}

std::uint64_t to_uint(std::string_view key, std::string_view v) {
  const auto s = trim(v);
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ConfigError("key '" + std::string(key) + "': expected a non-negative integer, got '" + std::string(s) + "'");
  }
  return out;
}

std::vector<double> to_list(std::string_view key, std::string_view v) {
  v = trim(v);
  if (v.size() < 2 || v.front() != '[' || v.back() != ']') {
    throw ConfigError("key '" + std::string(key) + "': expected a list like [1, 2, 3]");
  }
  v = trim(v.substr(1, v.size() - 2));
  std::vector<double> out;
  if (v.empty()) return out;
  std::size_t pos = 0;
  while (true) {
    const auto comma = v.find(',', pos);
    out.push_back(to_double(key, v.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

// Shortest text that parses back to the same double.
std::string real_string(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string list_string(const std::vector<double>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + real_string(v[i]);
  return out + "]";
}

struct Field {
  ConfigKey key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class T>
Field uint_field(std::string name, std::string doc, T RunConfig::*member) {
  return {{name, std::move(doc)},
          [member, name](RunConfig& c, std::string_view v) { c.*member = static_cast<T>(to_uint(name, v)); },
          [member](const RunConfig& c) { return std::to_string(c.*member); }};
}

Field real_field(std::string name, std::string doc, double RunConfig::*member) {
  return {{name, std::move(doc)},
          [member, name](RunConfig& c, std::string_view v) { c.*member = to_double(name, v); },
          [member](const RunConfig& c) { return real_string(c.*member); }};
}

Field list_field(std::string name, std::string doc, std::vector<double> RunConfig::*member) {
  return {{name, std::move(doc)},
          [member, name](RunConfig& c, std::string_view v) { c.*member = to_list(name, v); },
          [member](const RunConfig& c) { return list_string(c.*member); }};
}

Field string_field(std::string name, std::string doc, std::string RunConfig::*member) {
  return {{name, std::move(doc)},
          [member, name](RunConfig& c, std::string_view v) { c.*member = unquote(name, v); },
          [member](const RunConfig& c) { return "\"" + c.*member + "\""; }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({{"task", "stylize | two-styles | two-scales | regress1d | failure-case"},
                 [](RunConfig& c, std::string_view v) { c.task = parse_task(unquote("task", v)); },
                 [](const RunConfig& c) { return std::string(task_name(c.task)); }});
    f.push_back(uint_field("image_size", "content/style image side in pixels (multiple of 4)", &RunConfig::image_size));
    f.push_back(uint_field("data_seed", "seed for procedural content images", &RunConfig::data_seed));
    f.push_back(uint_field("n_train", "number of training content images", &RunConfig::n_train));
    f.push_back(uint_field("n_val", "number of validation content images", &RunConfig::n_val));
    f.push_back({{"style_kind", "texture of the main style image: stripes | checker | blobs | noise"},
                 [](RunConfig& c, std::string_view v) { c.style_kind = parse_texture_kind(unquote("style_kind", v)); },
                 [](const RunConfig& c) { return std::string(texture_kind_name(c.style_kind)); }});
    f.push_back(uint_field("style_scale", "feature size of the main style texture in pixels", &RunConfig::style_scale));
    f.push_back({{"style2_kind", "texture of the second style image (two-styles)"},
                 [](RunConfig& c, std::string_view v) { c.style2_kind = parse_texture_kind(unquote("style2_kind", v)); },
                 [](const RunConfig& c) { return std::string(texture_kind_name(c.style2_kind)); }});
    f.push_back(uint_field("style2_scale", "feature size of the second style texture; 0 = task default",
                           &RunConfig::style2_scale));
    f.push_back(uint_field("style_seed", "seed for random textures (blobs, noise)", &RunConfig::style_seed));
    f.push_back({{"regress_kind", "constant-pair | sine-pair (regress1d)"},
                 [](RunConfig& c, std::string_view v) { c.regress_kind = parse_regress_kind(unquote("regress_kind", v)); },
                 [](const RunConfig& c) { return std::string(regress_kind_name(c.regress_kind)); }});
    f.push_back(uint_field("regress_points", "grid size of the 1D task", &RunConfig::regress_points));
    f.push_back(real_field("content_weight", "weight of the content term in every objective", &RunConfig::content_weight));
    f.push_back(real_field("lambda0", "style weight of the main objective; -1 = task default", &RunConfig::lambda0));
    f.push_back(real_field("lambda1", "style weight of the tuning objective; -1 = task default", &RunConfig::lambda1));
    f.push_back(real_field("lambda_ref", "lambda of the total_at_lambda CSV column; -1 = lambda0",
                           &RunConfig::lambda_ref));
    f.push_back(uint_field("seed", "model initialization and batch order seed", &RunConfig::seed));
    f.push_back(real_field("learning_rate", "Adam learning rate", &RunConfig::learning_rate));
    f.push_back(real_field("beta1", "Adam beta1", &RunConfig::beta1));
    f.push_back(real_field("beta2", "Adam beta2", &RunConfig::beta2));
    f.push_back(real_field("adam_eps", "Adam epsilon", &RunConfig::adam_eps));
    f.push_back(uint_field("batch_size", "images per training step", &RunConfig::batch_size));
    f.push_back(uint_field("steps_main", "main-network training steps", &RunConfig::steps_main));
    f.push_back(uint_field("steps_tuning", "tuning-block training steps", &RunConfig::steps_tuning));
    f.push_back(list_field("sweep_alphas", "uniform alpha values evaluated by `sweep`", &RunConfig::sweep_alphas));
    f.push_back(list_field("grid_values", "per-block alpha values evaluated by `grid`", &RunConfig::grid_values));
    f.push_back(uint_field("grid_cap", "maximum number of grid combinations", &RunConfig::grid_cap));
    f.push_back(list_field("fixed_lambdas", "lambdas trained by `train-fixed`", &RunConfig::fixed_lambdas));
    f.push_back(uint_field("threads", "worker threads for sweep/grid", &RunConfig::threads));
    f.push_back(string_field("data_dir", "generated data directory", &RunConfig::data_dir));
    f.push_back(string_field("model_dir", "weights and model config directory", &RunConfig::model_dir));
    f.push_back(string_field("out_dir", "CSV / image output directory", &RunConfig::out_dir));
    return f;
  }();
  return table;
}

const Field& field(std::string_view key) {
  for (const auto& f : fields()) {
    if (f.key.name == key) return f;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

void apply_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  field(trim(key)).set(cfg, value);
}

std::string read_config_value(const RunConfig& cfg, std::string_view key) { return field(key).get(cfg); }

RunConfig parse_config(std::string_view text, RunConfig base) {
  std::size_t pos = 0, line_no = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    // '#' starts a comment unless it sits inside a quoted string.
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line = line.substr(0, i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      apply_config_value(base, line.substr(0, eq), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  base.validate();
  return base;
}

std::string dump_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key.name + " = " + f.get(cfg) + "\n";
  return out;
}

double RunConfig::effective_lambda0() const {
  if (lambda0 >= 0.0) return lambda0;
  switch (task) {
    case Task::Stylize: return 1.0;
    case Task::FailureCase: return 100.0;
    case Task::TwoStyles:
    case Task::TwoScales: return 100.0;
    case Task::Regress1d: return 0.0;
  }
  return 1.0;
}

double RunConfig::effective_lambda1() const {
  if (lambda1 >= 0.0) return lambda1;
  switch (task) {
    case Task::Stylize: return 100.0;
    case Task::FailureCase: return 0.0;
    case Task::TwoStyles:
    case Task::TwoScales: return 100.0;
    case Task::Regress1d: return 1.0;
  }
  return 100.0;
}

double RunConfig::effective_lambda_ref() const {
  if (lambda_ref >= 0.0) return lambda_ref;
  return task == Task::Regress1d ? 1.0 : effective_lambda0();
}

Index RunConfig::effective_style2_scale() const {
  if (style2_scale > 0) return style2_scale;
  return task == Task::TwoScales ? 2 * style_scale : style_scale;
}

TrainConfig RunConfig::train_config(std::size_t steps) const {
  TrainConfig t;
  t.learning_rate = learning_rate;
  t.beta1 = beta1;
  t.beta2 = beta2;
  t.eps = adam_eps;
  t.steps = steps;
  t.batch_size = batch_size;
  t.seed = seed;
  return t;
}

void RunConfig::validate() const {
  if (task != Task::Regress1d) {
    if (image_size < 16 || image_size % 4 != 0) throw ConfigError("image_size must be >= 16 and a multiple of 4");
    if (style_scale < 1) throw ConfigError("style_scale must be positive");
  } else if (regress_points < 16) {
    throw ConfigError("regress_points must be >= 16");
  }
  if (n_train == 0 || n_val == 0) throw ConfigError("n_train and n_val must be positive");
  if (content_weight < 0.0) throw ConfigError("content_weight must be non-negative");
  if (sweep_alphas.empty()) throw ConfigError("sweep_alphas must not be empty");
  if (grid_values.empty()) throw ConfigError("grid_values must not be empty");
  if (threads == 0) throw ConfigError("threads must be positive");
  train_config(1).validate();
}

}  // namespace dynanet
