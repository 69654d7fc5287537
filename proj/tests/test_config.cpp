#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "lms/config.hpp"

using namespace lms;

namespace {

struct TempFile {
  std::string path;
  TempFile(const std::string& name, const std::string& content) {
    path = (std::filesystem::temp_directory_path() /
            ("lms_cfg_" + std::to_string(static_cast<long long>(::getpid())) + "_" + name))
               .string();
    std::ofstream out(path);
    out << content;
  }
  ~TempFile() { std::remove(path.c_str()); }
};

using Entries = std::vector<std::pair<std::string, std::string>>;

}  // namespace

TEST_CASE("defaults survive an empty build and echo every key") {
  RunConfig c = make_run_config({}, {});
  CHECK(c.task == Task::Synthetic);
  CHECK(c.composer == ComposerKind::TreeRnn);
  CHECK(c.d == 64);
  CHECK(c.parallelism == 1);
  CHECK(c.precision == "double");
  CHECK(c.timing == "wall");

  nlohmann::json echo = nlohmann::json::parse(c.echo());
  for (const std::string& key : config_keys()) CHECK(echo.contains(key));
  CHECK(echo["task"] == "synthetic");
  CHECK(echo["composer"] == "tree_rnn");
  CHECK(echo["seed"] == 0);
  // the echo is canonical: same config, same bytes
  CHECK(c.echo() == make_run_config({}, {}).echo());
}

TEST_CASE("config files parse comments, blanks, and spacing") {
  TempFile f("basic.cfg",
             "# a run\n"
             "\n"
             "task = nli\n"
             "composer=lms_lstm\n"
             "  d = 16\n"
             "train_path = /data/my corpus.jsonl\n");
  Entries entries = read_config_file(f.path);
  REQUIRE(entries.size() == 4);
  CHECK(entries[0] == std::pair<std::string, std::string>{"task", "nli"});
  CHECK(entries[3].second == "/data/my corpus.jsonl");

  RunConfig c = make_run_config(entries, {});
  CHECK(c.task == Task::Nli);
  CHECK(c.composer == ComposerKind::LmsLstm);
  CHECK(c.d == 16);
}

TEST_CASE("flag overrides beat file entries") {
  TempFile f("base.cfg", "d = 16\nseed = 4\n");
  RunConfig c = make_run_config(read_config_file(f.path), {{"d", "25"}, {"alpha", "0.01"}});
  CHECK(c.d == 25);
  CHECK(c.seed == 4);
  CHECK(c.alpha == doctest::Approx(0.01));
}

TEST_CASE("every problem is reported at once") {
  try {
    make_run_config({{"composor", "lms_lstm"}, {"d", "banana"}, {"dropout", "1.5"}},
                    {{"widgets", "3"}});
    FAIL("expected a usage error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Usage);
    std::string msg = e.what();
    CHECK(msg.find("unknown config key 'composor'") != std::string::npos);
    CHECK(msg.find("unknown config key 'widgets'") != std::string::npos);
    CHECK(msg.find("d: expected an integer, got 'banana'") != std::string::npos);
    CHECK(msg.find("dropout must be in [0,1)") != std::string::npos);
  }
}

TEST_CASE("matrix-state composers demand a square d") {
  CHECK_THROWS_WITH_AS(make_run_config({{"composer", "lms_base"}, {"d", "10"}}, {}),
                       doctest::Contains("d must be a perfect square"), Error);
  CHECK_NOTHROW(make_run_config({{"composer", "lms_base"}, {"d", "9"}}, {}));
  CHECK_NOTHROW(make_run_config({{"composer", "tree_lstm"}, {"d", "10"}}, {}));
  // a negative d reports once, not once per rule
  try {
    make_run_config({{"composer", "cms"}, {"d", "-4"}}, {});
    FAIL("expected a usage error");
  } catch (const Error& e) {
    std::string msg = e.what();
    CHECK(msg.find("d must be positive") != std::string::npos);
    CHECK(msg.find("perfect square") == std::string::npos);
  }
}

TEST_CASE("token and range validation") {
  CHECK_THROWS_WITH_AS(make_run_config({{"task", "mt"}}, {}), doctest::Contains("unknown task 'mt'"),
                       Error);
  CHECK_THROWS_WITH_AS(make_run_config({{"composer", "gru"}}, {}), doctest::Contains("gru"), Error);
  CHECK_THROWS_WITH_AS(make_run_config({{"precision", "half"}}, {}),
                       doctest::Contains("precision must be double or float"), Error);
  CHECK_THROWS_WITH_AS(make_run_config({{"timing", "cpu"}}, {}),
                       doctest::Contains("timing must be wall or off"), Error);
  CHECK_THROWS_WITH_AS(make_run_config({{"epochs", "0"}}, {}), doctest::Contains("epochs must be positive"),
                       Error);
  CHECK_THROWS_WITH_AS(make_run_config({{"parallelism", "0"}}, {}),
                       doctest::Contains("parallelism must be positive"), Error);
  CHECK_THROWS_WITH_AS(make_run_config({{"cms_per_word", "true"}}, {}),
                       doctest::Contains("cms_per_word applies only to the cms composer"), Error);
  CHECK_NOTHROW(make_run_config({{"composer", "cms"}, {"cms_per_word", "true"}}, {}));
  CHECK_THROWS_WITH_AS(make_run_config({{"fine_tune_embeddings", "yes"}}, {}),
                       doctest::Contains("expected true or false"), Error);
  CHECK(make_run_config({{"fine_tune_embeddings", "0"}}, {}).fine_tune_embeddings == false);
  CHECK_THROWS_WITH_AS(make_run_config({{"domain_size", "6"}}, {}),
                       doctest::Contains("domain_size must be in [1,5]"), Error);
  // seeds cover the full unsigned range
  CHECK(make_run_config({{"seed", "18446744073709551615"}}, {}).seed == 18446744073709551615ull);
  CHECK_THROWS_AS(make_run_config({{"seed", "-1"}}, {}), Error);
}

TEST_CASE("malformed files and overrides name the offender") {
  TempFile f("bad.cfg", "task = nli\nnonsense line\n");
  CHECK_THROWS_WITH_AS(read_config_file(f.path), doctest::Contains("line 2"), Error);
  CHECK_THROWS_WITH_AS(read_config_file("/nonexistent/x.cfg"), doctest::Contains("cannot open"), Error);
  CHECK_THROWS_WITH_AS(split_override("alpha"), doctest::Contains("key=value"), Error);
  CHECK_THROWS_WITH_AS(split_override("=3"), doctest::Contains("key=value"), Error);
  CHECK(split_override("d=16") == std::pair<std::string, std::string>{"d", "16"});
  CHECK(split_override("out_path=a=b") == std::pair<std::string, std::string>{"out_path", "a=b"});
}

TEST_CASE("derived structures mirror the config") {
  RunConfig c = make_run_config({{"composer", "cms"},
                                 {"cms_per_word", "true"},
                                 {"d", "16"},
                                 {"d_emb", "8"},
                                 {"alpha", "0.003"},
                                 {"timing", "off"},
                                 {"task", "sst"},
                                 {"parallelism", "4"},
                                 {"seed", "11"}},
                                {});
  CHECK(c.n_classes() == 5);
  ComposerSpec spec = c.composer_spec(123);
  CHECK(spec.kind == ComposerKind::Cms);
  CHECK(spec.d == 16);
  CHECK(spec.d_emb == 8);
  CHECK(spec.vocab_size == 123);
  CHECK(spec.cms_per_word);
  TrainOptions opt = c.train_options();
  CHECK(opt.alpha == doctest::Approx(0.003));
  CHECK(opt.timing == false);
  CHECK(opt.parallelism == 4);
  CHECK(opt.seed == 11);
  CHECK(make_run_config({{"task", "nli"}}, {}).n_classes() == 3);
}
