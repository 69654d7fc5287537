#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "lms/checkpoint.hpp"
#include "lms/model.hpp"

using namespace lms;

namespace {

struct TempPath {
  std::string path;
  explicit TempPath(const std::string& name) {
    path = (std::filesystem::temp_directory_path() /
            ("lms_ckpt_" + std::to_string(static_cast<long long>(::getpid())) + "_" + name))
               .string();
  }
  ~TempPath() { std::remove(path.c_str()); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << bytes;
}

}  // namespace

TEST_CASE("crc32 matches the reference polynomial") {
  // the classic check value for "123456789"
  CHECK(crc32("123456789", 9) == 0xCBF43926u);
  CHECK(crc32("", 0) == 0u);
  std::string a = "payload", b = "paxload";
  CHECK(crc32(a.data(), a.size()) != crc32(b.data(), b.size()));
}

TEST_CASE("checkpoint round-trips values bit for bit") {
  ParameterStore<double> store;
  Rng rng(4);
  store.create("a.W", {3, 5}, Init::Xavier, rng);
  store.create("a.b", {3}, Init::UniformSmall, rng, true);
  store.create("frozen", {2, 2}, Init::IdentityNoise, rng, false);

  TempPath f("roundtrip.ckpt");
  save_checkpoint(f.path, store, "{\"kind\": \"tree_rnn\", \"d\": 5}");

  CHECK(checkpoint_precision(f.path) == "double");
  LoadedCheckpoint<double> ck = load_checkpoint<double>(f.path);
  REQUIRE(ck.tensors.size() == 3);
  CHECK(ck.tensors[0].name == "a.W");
  CHECK(ck.tensors[0].shape == Shape({3, 5}));
  CHECK(ck.tensors[0].values == store.get("a.W").value.v);
  CHECK(ck.tensors[2].values == store.get("frozen").value.v);
  CHECK(ck.meta_json.find("tree_rnn") != std::string::npos);

  // loading into a same-layout store reproduces every value exactly
  ParameterStore<double> other;
  Rng rng2(99);
  other.create("a.W", {3, 5}, Init::Zero, rng2);
  other.create("a.b", {3}, Init::Zero, rng2);
  other.create("frozen", {2, 2}, Init::Zero, rng2, false);
  load_into(other, f.path);
  CHECK(other.get("a.W").value.v == store.get("a.W").value.v);
  CHECK(other.get("a.b").value.v == store.get("a.b").value.v);
  CHECK(other.get("frozen").value.v == store.get("frozen").value.v);

  // saving twice is byte-identical
  TempPath g("again.ckpt");
  save_checkpoint(g.path, store, "{\"kind\": \"tree_rnn\", \"d\": 5}");
  CHECK(slurp(f.path) == slurp(g.path));
}

TEST_CASE("float checkpoints carry their own dtype") {
  ParameterStore<float> store;
  Rng rng(1);
  store.create("w", {4}, Init::UniformSmall, rng);
  TempPath f("float.ckpt");
  save_checkpoint(f.path, store, "");
  CHECK(checkpoint_precision(f.path) == "float");
  LoadedCheckpoint<float> ck = load_checkpoint<float>(f.path);
  CHECK(ck.tensors[0].values == store.get("w").value.v);
  CHECK_THROWS_WITH_AS(load_checkpoint<double>(f.path), doctest::Contains("stores float values"), Error);
}

TEST_CASE("corrupt payload bytes fail the checksum as a verification error") {
  ParameterStore<double> store;
  Rng rng(7);
  store.create("w", {8}, Init::Xavier, rng);
  TempPath f("corrupt.ckpt");
  save_checkpoint(f.path, store, "");

  std::string bytes = slurp(f.path);
  bytes[bytes.size() - 3] = static_cast<char>(bytes[bytes.size() - 3] ^ 0x40);
  spit(f.path, bytes);
  try {
    load_checkpoint<double>(f.path);
    FAIL("expected a checksum failure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Verification);
    CHECK(std::string(e.what()).find("failed its checksum") != std::string::npos);
  }
}

TEST_CASE("structural damage is reported as data errors") {
  ParameterStore<double> store;
  Rng rng(7);
  store.create("w", {8}, Init::Xavier, rng);
  TempPath f("struct.ckpt");
  save_checkpoint(f.path, store, "");
  std::string good = slurp(f.path);

  spit(f.path, "LMSNOPE1\n{}\n");
  CHECK_THROWS_WITH_AS(load_checkpoint<double>(f.path), doctest::Contains("not a checkpoint file"), Error);

  spit(f.path, good.substr(0, good.size() - 17));  // truncated payload
  try {
    load_checkpoint<double>(f.path);
    FAIL("expected a truncation error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Data);
    CHECK(std::string(e.what()).find("extends past the payload") != std::string::npos);
  }

  spit(f.path, "LMSCKPT1\n{not json}\n");
  CHECK_THROWS_WITH_AS(load_checkpoint<double>(f.path), doctest::Contains("malformed checkpoint manifest"),
                       Error);
  CHECK_THROWS_AS(load_checkpoint<double>("/nonexistent/x.ckpt"), Error);
}

TEST_CASE("manifest mismatches name every disagreement") {
  ParameterStore<double> store;
  Rng rng(2);
  store.create("embed.table", {6, 3}, Init::UniformSmall, rng);
  store.create("mlp.W1", {4, 4}, Init::Xavier, rng);
  TempPath f("mismatch.ckpt");
  save_checkpoint(f.path, store, "");

  ParameterStore<double> wrong;
  Rng rng2(2);
  wrong.create("embed.table", {6, 3}, Init::Zero, rng2);
  wrong.create("mlp.W1", {4, 5}, Init::Zero, rng2);   // shape differs
  wrong.create("mlp.b1", {4}, Init::Zero, rng2);      // missing from the file
  try {
    load_into(wrong, f.path);
    FAIL("expected a manifest mismatch");
  } catch (const Error& e) {
    std::string msg = e.what();
    CHECK(msg.find("manifest mismatch") != std::string::npos);
    CHECK(msg.find("mlp.W1 has shape [4x4], the model expects [4x5]") != std::string::npos);
    CHECK(msg.find("mlp.b1 is missing from the checkpoint") != std::string::npos);
  }

  ParameterStore<double> partial;
  Rng rng3(2);
  partial.create("embed.table", {6, 3}, Init::Zero, rng3);
  CHECK_THROWS_WITH_AS(load_into(partial, f.path),
                       doctest::Contains("mlp.W1 has no place in the model"), Error);
}

TEST_CASE("a full pair model survives a save and reload") {
  ComposerSpec spec;
  spec.kind = ComposerKind::LmsLstm;
  spec.d = 4;
  spec.d_emb = 3;
  Rng init(6);
  Model<double> model = make_model<double>(spec, 9, 3, 8, true, 0.0, 0.0, true, init);

  Sentence premise{{1, 2}, {Transition::Shift, Transition::Shift, Transition::Reduce}};
  Sentence hypothesis{{3, 4}, {Transition::Shift, Transition::Shift, Transition::Reduce}};
  Tape<double> tape;
  Tensor<double> before = classify_pair(tape, model, premise, hypothesis, nullptr);

  TempPath f("model.ckpt");
  save_checkpoint(f.path, model.store, "{\"task\": \"nli\"}");

  Rng init2(1234);
  Model<double> fresh = make_model<double>(spec, 9, 3, 8, true, 0.0, 0.0, true, init2);
  load_into(fresh.store, f.path);
  Tape<double> tape2;
  Tensor<double> after = classify_pair(tape2, fresh, premise, hypothesis, nullptr);
  REQUIRE(after.v.size() == before.v.size());
  for (size_t i = 0; i < before.v.size(); ++i) CHECK(after.v[i] == before.v[i]);
}
