#include "lms.h"

#include <charconv>
#include <cstdlib>
#include <cstring>
#include <new>
#include <string>
#include <utility>
#include <vector>

#include "lms/commands.hpp"
#include "lms/error.hpp"

// Settings accumulate as raw pairs; validation happens when a command builds
// the RunConfig, so one call reports every problem.
struct lms_config {
  std::vector<std::pair<std::string, std::string>> file_entries;
  std::vector<std::pair<std::string, std::string>> overrides;
};

namespace {

thread_local std::string t_last_error;

lms_status status_of(lms::ErrorKind kind) {
  switch (kind) {
    case lms::ErrorKind::Usage:
      return LMS_ERR_USAGE;
    case lms::ErrorKind::Data:
      return LMS_ERR_DATA;
    case lms::ErrorKind::Verification:
      return LMS_ERR_VERIFY;
    case lms::ErrorKind::Internal:
      return LMS_ERR_INTERNAL;
  }
  return LMS_ERR_INTERNAL;
}

char* copy_out(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (p) std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

template <class Fn>
lms_status guarded(Fn&& fn) {
  try {
    fn();
    t_last_error.clear();
    return LMS_OK;
  } catch (const lms::Error& e) {
    t_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::exception& e) {
    t_last_error = e.what();
    return LMS_ERR_INTERNAL;
  }
}

lms_status null_argument(const char* what) {
  t_last_error = what;
  return LMS_ERR_USAGE;
}

lms::LineSink wrap_sink(lms_line_fn emit, void* user) {
  if (!emit) return [](const std::string&) {};
  return [emit, user](const std::string& line) { emit(line.c_str(), user); };
}

using Command = std::string (*)(const lms::RunConfig&, const lms::LineSink&);

lms_status run_config_command(lms_config* cfg, lms_line_fn emit, void* user, char** summary_out,
                              Command command) {
  if (!cfg) return null_argument("config handle is null");
  return guarded([&] {
    lms::RunConfig rc = lms::make_run_config(cfg->file_entries, cfg->overrides);
    std::string summary = command(rc, wrap_sink(emit, user));
    if (summary_out) *summary_out = copy_out(summary);
  });
}

std::vector<std::string> split_csv(const char* s) {
  std::vector<std::string> out;
  if (!s) return out;
  std::string cur;
  for (const char* p = s;; ++p) {
    if (*p == ',' || *p == '\0') {
      size_t b = cur.find_first_not_of(" \t");
      if (b != std::string::npos) out.push_back(cur.substr(b, cur.find_last_not_of(" \t") - b + 1));
      cur.clear();
      if (*p == '\0') break;
    } else {
      cur.push_back(*p);
    }
  }
  return out;
}

std::vector<int64_t> parse_dims(const char* s) {
  std::vector<int64_t> out;
  for (const std::string& tok : split_csv(s)) {
    int64_t v = 0;
    auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || end != tok.data() + tok.size())
      lms::throw_usage("dims must be integers, got '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace

extern "C" {

const char* lms_version(void) { return "0.1.0"; }

const char* lms_last_error(void) { return t_last_error.c_str(); }

void lms_free(char* s) { std::free(s); }

lms_config* lms_config_new(void) { return new (std::nothrow) lms_config(); }

void lms_config_free(lms_config* cfg) { delete cfg; }

lms_status lms_config_load_file(lms_config* cfg, const char* path) {
  if (!cfg) return null_argument("config handle is null");
  if (!path) return null_argument("config path is null");
  return guarded([&] {
    auto entries = lms::read_config_file(path);
    cfg->file_entries.insert(cfg->file_entries.end(), entries.begin(), entries.end());
  });
}

lms_status lms_config_set(lms_config* cfg, const char* key_equals_value) {
  if (!cfg) return null_argument("config handle is null");
  if (!key_equals_value) return null_argument("override is null");
  return guarded([&] { cfg->overrides.push_back(lms::split_override(key_equals_value)); });
}

lms_status lms_config_echo(lms_config* cfg, char** echo_out) {
  if (!cfg) return null_argument("config handle is null");
  return guarded([&] {
    lms::RunConfig rc = lms::make_run_config(cfg->file_entries, cfg->overrides);
    if (echo_out) *echo_out = copy_out(rc.echo());
  });
}

lms_status lms_gen_data(lms_config* cfg, lms_line_fn emit, void* user, char** summary_out) {
  return run_config_command(cfg, emit, user, summary_out, lms::cmd_gen_data);
}

lms_status lms_train(lms_config* cfg, lms_line_fn emit, void* user, char** summary_out) {
  return run_config_command(cfg, emit, user, summary_out, lms::cmd_train);
}

lms_status lms_eval(lms_config* cfg, lms_line_fn emit, void* user, char** summary_out) {
  return run_config_command(cfg, emit, user, summary_out, lms::cmd_eval);
}

lms_status lms_probe(lms_config* cfg, lms_line_fn emit, void* user, char** summary_out) {
  return run_config_command(cfg, emit, user, summary_out, lms::cmd_probe);
}

lms_status lms_gradcheck(const char* kinds, const char* dims, uint64_t seed, double tolerance,
                         const char* sabotage, lms_line_fn emit, void* user, char** summary_out) {
  return guarded([&] {
    lms::GradCheckRequest req;
    req.kinds = split_csv(kinds);
    if (dims && *dims) req.dims = parse_dims(dims);
    req.seed = seed;
    req.tolerance = tolerance;
    if (sabotage) req.sabotage = sabotage;
    std::string summary = lms::cmd_gradcheck(req, wrap_sink(emit, user));
    if (summary_out) *summary_out = copy_out(summary);
  });
}

lms_status lms_paramcount(const lms_paramcount_args* args, lms_line_fn emit, void* user,
                          char** summary_out) {
  if (!args) return null_argument("paramcount args are null");
  return guarded([&] {
    lms::ParamCountRequest req;
    if (args->kind && *args->kind) req.kind = args->kind;
    req.d = args->d;
    req.d_emb = args->d_emb;
    req.vocab = args->vocab;
    req.cms_per_word = args->cms_per_word != 0;
    req.mlp_hidden = args->mlp_hidden;
    req.n_classes = args->n_classes;
    req.pair_head = args->pair_head != 0;
    std::string summary = lms::cmd_paramcount(req, wrap_sink(emit, user));
    if (summary_out) *summary_out = copy_out(summary);
  });
}

lms_status lms_bench(const char* kinds, const char* dims, int reps, int compositions, uint64_t seed,
                     lms_line_fn emit, void* user, char** summary_out) {
  return guarded([&] {
    lms::BenchRequest req;
    req.kinds = split_csv(kinds);
    if (dims && *dims) req.dims = parse_dims(dims);
    req.reps = reps;
    req.compositions = compositions;
    req.seed = seed;
    std::string summary = lms::cmd_bench(req, wrap_sink(emit, user));
    if (summary_out) *summary_out = copy_out(summary);
  });
}

}  // extern "C"
