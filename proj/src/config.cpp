#include "lms/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>

#include "json.hpp"

namespace lms {

namespace {

struct TaskToken {
  Task task;
  const char* token;
};

constexpr TaskToken kTaskTokens[] = {
    {Task::Nli, "nli"},
    {Task::Sst, "sst"},
    {Task::Synthetic, "synthetic"},
};

std::string strip(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Setters return an empty string on success, a problem description otherwise.
using Setter = std::function<std::string(RunConfig&, const std::string&)>;

struct KeySpec {
  const char* name;
  Setter set;
};

std::string parse_i64(const std::string& v, int64_t& out) {
  const char* first = v.data();
  const char* last = v.data() + v.size();
  auto [p, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || p != last) return "expected an integer, got '" + v + "'";
  return "";
}

std::string parse_u64(const std::string& v, uint64_t& out) {
  const char* first = v.data();
  const char* last = v.data() + v.size();
  auto [p, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || p != last) return "expected a non-negative integer, got '" + v + "'";
  return "";
}

std::string parse_f64(const std::string& v, double& out) {
  try {
    size_t idx = 0;
    out = std::stod(v, &idx);
    while (idx < v.size() && (v[idx] == ' ' || v[idx] == '\t')) ++idx;
    if (idx != v.size()) return "expected a number, got '" + v + "'";
  } catch (const std::exception&) {
    return "expected a number, got '" + v + "'";
  }
  return "";
}

std::string parse_bool(const std::string& v, bool& out) {
  if (v == "true" || v == "1") {
    out = true;
    return "";
  }
  if (v == "false" || v == "0") {
    out = false;
    return "";
  }
  return "expected true or false, got '" + v + "'";
}

Setter i64_field(int64_t RunConfig::* field) {
  return [field](RunConfig& c, const std::string& v) { return parse_i64(v, c.*field); };
}

Setter f64_field(double RunConfig::* field) {
  return [field](RunConfig& c, const std::string& v) { return parse_f64(v, c.*field); };
}

Setter bool_field(bool RunConfig::* field) {
  return [field](RunConfig& c, const std::string& v) { return parse_bool(v, c.*field); };
}

Setter string_field(std::string RunConfig::* field) {
  return [field](RunConfig& c, const std::string& v) {
    c.*field = v;
    return std::string();
  };
}

const std::vector<KeySpec>& key_table() {
  static const std::vector<KeySpec> table = {
      {"task",
       [](RunConfig& c, const std::string& v) {
         try {
           c.task = task_from(v);
         } catch (const Error& e) {
           return std::string(e.what());
         }
         return std::string();
       }},
      {"composer",
       [](RunConfig& c, const std::string& v) {
         try {
           c.composer = composer_kind_from(v);
         } catch (const Error& e) {
           return std::string(e.what());
         }
         return std::string();
       }},
      {"d", i64_field(&RunConfig::d)},
      {"d_emb", i64_field(&RunConfig::d_emb)},
      {"mlp_hidden", i64_field(&RunConfig::mlp_hidden)},
      {"dropout", f64_field(&RunConfig::dropout)},
      {"embed_dropout", f64_field(&RunConfig::embed_dropout)},
      {"alpha", f64_field(&RunConfig::alpha)},
      {"beta1", f64_field(&RunConfig::beta1)},
      {"beta2", f64_field(&RunConfig::beta2)},
      {"adam_eps", f64_field(&RunConfig::adam_eps)},
      {"lambda", f64_field(&RunConfig::lambda)},
      {"clip_norm", f64_field(&RunConfig::clip_norm)},
      {"batch_size", i64_field(&RunConfig::batch_size)},
      {"epochs", i64_field(&RunConfig::epochs)},
      {"eval_every", i64_field(&RunConfig::eval_every)},
      {"patience", i64_field(&RunConfig::patience)},
      {"parallelism", i64_field(&RunConfig::parallelism)},
      {"seed", [](RunConfig& c, const std::string& v) { return parse_u64(v, c.seed); }},
      {"max_train", i64_field(&RunConfig::max_train)},
      {"train_path", string_field(&RunConfig::train_path)},
      {"dev_path", string_field(&RunConfig::dev_path)},
      {"eval_path", string_field(&RunConfig::eval_path)},
      {"embeddings_path", string_field(&RunConfig::embeddings_path)},
      {"checkpoint_path", string_field(&RunConfig::checkpoint_path)},
      {"metrics_path", string_field(&RunConfig::metrics_path)},
      {"precision", string_field(&RunConfig::precision)},
      {"timing", string_field(&RunConfig::timing)},
      {"fine_tune_embeddings", bool_field(&RunConfig::fine_tune_embeddings)},
      {"cms_per_word", bool_field(&RunConfig::cms_per_word)},
      {"n_examples", i64_field(&RunConfig::n_examples)},
      {"domain_size", i64_field(&RunConfig::domain_size)},
      {"content_words", i64_field(&RunConfig::content_words)},
      {"modifier_words", i64_field(&RunConfig::modifier_words)},
      {"out_path", string_field(&RunConfig::out_path)},
  };
  return table;
}

bool is_perfect_square(int64_t d) {
  if (d <= 0) return false;
  auto m = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(d))));
  return m * m == d;
}

// Range and token checks; appends one line per violation.
void collect_violations(const RunConfig& c, std::vector<std::string>& problems) {
  auto require = [&problems](bool ok, const std::string& msg) {
    if (!ok) problems.push_back(msg);
  };
  ComposerSpec probe;
  probe.kind = c.composer;
  require(c.d > 0, "d must be positive, got " + std::to_string(c.d));
  if (c.d > 0 && probe.matrix_hidden() && !is_perfect_square(c.d))
    problems.push_back("d must be a perfect square for matrix-state composers, got " + std::to_string(c.d));
  require(c.d_emb > 0, "d_emb must be positive, got " + std::to_string(c.d_emb));
  require(c.mlp_hidden > 0, "mlp_hidden must be positive, got " + std::to_string(c.mlp_hidden));
  require(c.dropout >= 0.0 && c.dropout < 1.0, "dropout must be in [0,1), got " + std::to_string(c.dropout));
  require(c.embed_dropout >= 0.0 && c.embed_dropout < 1.0,
          "embed_dropout must be in [0,1), got " + std::to_string(c.embed_dropout));
  require(c.alpha > 0.0, "alpha must be positive");
  require(c.beta1 >= 0.0 && c.beta1 < 1.0, "beta1 must be in [0,1)");
  require(c.beta2 >= 0.0 && c.beta2 < 1.0, "beta2 must be in [0,1)");
  require(c.adam_eps > 0.0, "adam_eps must be positive");
  require(c.lambda >= 0.0, "lambda must be non-negative");
  require(c.clip_norm >= 0.0, "clip_norm must be non-negative");
  require(c.batch_size > 0, "batch_size must be positive, got " + std::to_string(c.batch_size));
  require(c.epochs > 0, "epochs must be positive, got " + std::to_string(c.epochs));
  require(c.eval_every > 0, "eval_every must be positive, got " + std::to_string(c.eval_every));
  require(c.patience > 0, "patience must be positive, got " + std::to_string(c.patience));
  require(c.parallelism > 0, "parallelism must be positive, got " + std::to_string(c.parallelism));
  require(c.max_train >= 0, "max_train must be non-negative, got " + std::to_string(c.max_train));
  require(c.precision == "double" || c.precision == "float",
          "precision must be double or float, got '" + c.precision + "'");
  require(c.timing == "wall" || c.timing == "off", "timing must be wall or off, got '" + c.timing + "'");
  if (c.cms_per_word && c.composer != ComposerKind::Cms)
    problems.push_back("cms_per_word applies only to the cms composer");
  require(c.n_examples > 0, "n_examples must be positive, got " + std::to_string(c.n_examples));
  require(c.domain_size >= 1 && c.domain_size <= 5,
          "domain_size must be in [1,5], got " + std::to_string(c.domain_size));
  require(c.content_words > 0, "content_words must be positive");
  require(c.modifier_words > 0, "modifier_words must be positive");
}

}  // namespace

const char* to_string(Task task) {
  for (const auto& tt : kTaskTokens)
    if (tt.task == task) return tt.token;
  throw_internal("unknown task");
}

Task task_from(const std::string& token) {
  for (const auto& tt : kTaskTokens)
    if (token == tt.token) return tt.task;
  throw_usage("unknown task '" + token + "'; valid tasks: nli, sst, synthetic");
}

int64_t RunConfig::n_classes() const { return task == Task::Sst ? 5 : 3; }

ComposerSpec RunConfig::composer_spec(int64_t vocab_size) const {
  ComposerSpec spec;
  spec.kind = composer;
  spec.d = d;
  spec.d_emb = d_emb;
  spec.vocab_size = vocab_size;
  spec.cms_per_word = cms_per_word;
  return spec;
}

TrainOptions RunConfig::train_options() const {
  TrainOptions opt;
  opt.alpha = alpha;
  opt.beta1 = beta1;
  opt.beta2 = beta2;
  opt.adam_eps = adam_eps;
  opt.lambda = lambda;
  opt.clip_norm = clip_norm;
  opt.batch_size = batch_size;
  opt.eval_every = eval_every;
  opt.patience = patience;
  opt.epochs = epochs;
  opt.parallelism = parallelism;
  opt.seed = seed;
  opt.timing = timing == "wall";
  return opt;
}

std::string RunConfig::echo() const {
  nlohmann::ordered_json j;
  j["task"] = to_string(task);
  j["composer"] = to_string(composer);
  j["d"] = d;
  j["d_emb"] = d_emb;
  j["mlp_hidden"] = mlp_hidden;
  j["dropout"] = dropout;
  j["embed_dropout"] = embed_dropout;
  j["alpha"] = alpha;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["adam_eps"] = adam_eps;
  j["lambda"] = lambda;
  j["clip_norm"] = clip_norm;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["eval_every"] = eval_every;
  j["patience"] = patience;
  j["parallelism"] = parallelism;
  j["seed"] = seed;
  j["max_train"] = max_train;
  j["train_path"] = train_path;
  j["dev_path"] = dev_path;
  j["eval_path"] = eval_path;
  j["embeddings_path"] = embeddings_path;
  j["checkpoint_path"] = checkpoint_path;
  j["metrics_path"] = metrics_path;
  j["precision"] = precision;
  j["timing"] = timing;
  j["fine_tune_embeddings"] = fine_tune_embeddings;
  j["cms_per_word"] = cms_per_word;
  j["n_examples"] = n_examples;
  j["domain_size"] = domain_size;
  j["content_words"] = content_words;
  j["modifier_words"] = modifier_words;
  j["out_path"] = out_path;
  return j.dump();
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& ks : key_table()) out.emplace_back(ks.name);
  return out;
}

std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_usage("cannot open config file " + path);
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = strip(line);
    if (s.empty() || s[0] == '#') continue;
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw_usage(path + " line " + std::to_string(lineno) + ": expected key = value, got '" + s + "'");
    entries.emplace_back(strip(s.substr(0, eq)), strip(s.substr(eq + 1)));
  }
  return entries;
}

std::pair<std::string, std::string> split_override(const std::string& kv) {
  size_t eq = kv.find('=');
  if (eq == std::string::npos || eq == 0)
    throw_usage("override must look like key=value, got '" + kv + "'");
  return {strip(kv.substr(0, eq)), strip(kv.substr(eq + 1))};
}

RunConfig make_run_config(const std::vector<std::pair<std::string, std::string>>& file_entries,
                          const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig config;
  std::vector<std::string> problems;
  auto apply = [&config, &problems](const std::pair<std::string, std::string>& entry) {
    for (const auto& ks : key_table()) {
      if (entry.first != ks.name) continue;
      std::string problem = ks.set(config, entry.second);
      if (!problem.empty()) problems.push_back(entry.first + ": " + problem);
      return;
    }
    problems.push_back("unknown config key '" + entry.first + "'");
  };
  for (const auto& e : file_entries) apply(e);
  for (const auto& e : overrides) apply(e);
  collect_violations(config, problems);
  if (!problems.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw_usage(msg);
  }
  return config;
}

}  // namespace lms
