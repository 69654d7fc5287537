#include "lms/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <type_traits>

#include "json.hpp"

namespace lms {

namespace {

constexpr char kMagic[] = "LMSCKPT1\n";
constexpr size_t kMagicLen = sizeof(kMagic) - 1;

const uint32_t* crc_table() {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  return table.data();
}

template <class T>
constexpr const char* dtype_token() {
  return sizeof(T) == 8 ? "f64" : "f32";
}

template <class T>
constexpr const char* precision_token() {
  return sizeof(T) == 8 ? "double" : "float";
}

template <class T>
void append_le(std::string& out, T x) {
  using Bits = std::conditional_t<sizeof(T) == 8, uint64_t, uint32_t>;
  Bits bits = std::bit_cast<Bits>(x);
  for (size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

template <class T>
T read_le(const char* p) {
  using Bits = std::conditional_t<sizeof(T) == 8, uint64_t, uint32_t>;
  Bits bits = 0;
  for (size_t i = 0; i < sizeof(T); ++i)
    bits |= static_cast<Bits>(static_cast<uint8_t>(p[i])) << (8 * i);
  return std::bit_cast<T>(bits);
}

std::vector<int64_t> shape_extents(const Shape& s) {
  return std::vector<int64_t>(s.dim.begin(), s.dim.begin() + s.rank);
}

struct RawCheckpoint {
  nlohmann::json manifest;
  std::string payload;
};

RawCheckpoint read_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_data("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < kMagicLen || bytes.compare(0, kMagicLen, kMagic) != 0)
    throw_data(path + " is not a checkpoint file");
  size_t eol = bytes.find('\n', kMagicLen);
  if (eol == std::string::npos) throw_data(path + ": checkpoint manifest line is unterminated");
  RawCheckpoint raw;
  try {
    raw.manifest = nlohmann::json::parse(bytes.substr(kMagicLen, eol - kMagicLen));
  } catch (const nlohmann::json::exception& e) {
    throw_data(path + ": malformed checkpoint manifest: " + e.what());
  }
  raw.payload = bytes.substr(eol + 1);
  return raw;
}

}  // namespace

uint32_t crc32(const void* data, size_t n) {
  const uint32_t* table = crc_table();
  const auto* p = static_cast<const uint8_t*>(data);
  uint32_t c = 0xFFFFFFFFu;
  for (size_t i = 0; i < n; ++i) c = table[(c ^ p[i]) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

template <class T>
void save_checkpoint(const std::string& path, const ParameterStore<T>& store, const std::string& meta_json) {
  nlohmann::json meta = nlohmann::json::object();
  if (!meta_json.empty()) {
    try {
      meta = nlohmann::json::parse(meta_json);
    } catch (const nlohmann::json::exception& e) {
      throw_usage(std::string("checkpoint meta is not valid JSON: ") + e.what());
    }
  }

  std::string payload;
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  for (const auto& p : store.items()) {
    size_t offset = payload.size();
    std::string raw;
    raw.reserve(p->value.v.size() * sizeof(T));
    for (T x : p->value.v) append_le(raw, x);
    nlohmann::ordered_json t;
    t["name"] = p->name;
    t["shape"] = shape_extents(p->value.shape);
    t["dtype"] = dtype_token<T>();
    t["offset"] = offset;
    t["crc32"] = crc32(raw.data(), raw.size());
    tensors.push_back(std::move(t));
    payload += raw;
  }

  nlohmann::ordered_json manifest;
  manifest["precision"] = precision_token<T>();
  manifest["meta"] = meta;
  manifest["tensors"] = std::move(tensors);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw_data("cannot write " + path);
  out << kMagic << manifest.dump() << "\n" << payload;
  if (!out) throw_data("write failed for " + path);
}

std::string checkpoint_precision(const std::string& path) {
  RawCheckpoint raw = read_raw(path);
  if (!raw.manifest.contains("precision") || !raw.manifest["precision"].is_string())
    throw_data(path + ": checkpoint manifest lacks a precision field");
  return raw.manifest["precision"].get<std::string>();
}

template <class T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
  RawCheckpoint raw = read_raw(path);
  std::string precision = raw.manifest.value("precision", std::string());
  if (precision != precision_token<T>())
    throw_data(path + ": checkpoint stores " + (precision.empty() ? "unknown" : precision) +
               " values, not " + precision_token<T>());

  LoadedCheckpoint<T> out;
  out.meta_json = raw.manifest.value("meta", nlohmann::json::object()).dump();
  if (!raw.manifest.contains("tensors") || !raw.manifest["tensors"].is_array())
    throw_data(path + ": checkpoint manifest lacks a tensor table");
  for (const auto& t : raw.manifest["tensors"]) {
    SavedTensor<T> st;
    int64_t offset = 0;
    uint32_t want_crc = 0;
    std::vector<int64_t> extents;
    try {
      st.name = t.at("name").get<std::string>();
      extents = t.at("shape").get<std::vector<int64_t>>();
      offset = t.at("offset").get<int64_t>();
      want_crc = t.at("crc32").get<uint32_t>();
      if (t.at("dtype").get<std::string>() != dtype_token<T>())
        throw_data(path + ": tensor " + st.name + " has dtype " + t.at("dtype").get<std::string>() +
                   ", expected " + dtype_token<T>());
    } catch (const nlohmann::json::exception& e) {
      throw_data(path + ": malformed tensor record: " + e.what());
    }
    if (extents.size() > 3) throw_data(path + ": tensor " + st.name + " has rank above 3");
    for (int64_t d : extents) {
      if (d <= 0) throw_data(path + ": tensor " + st.name + " has a non-positive extent");
      st.shape.dim[static_cast<size_t>(st.shape.rank++)] = d;
    }
    int64_t count = st.shape.size();
    size_t nbytes = static_cast<size_t>(count) * sizeof(T);
    if (offset < 0 || static_cast<size_t>(offset) + nbytes > raw.payload.size())
      throw_data(path + ": tensor " + st.name + " extends past the payload");
    const char* base = raw.payload.data() + offset;
    if (crc32(base, nbytes) != want_crc)
      throw_verify(path + ": tensor " + st.name + " failed its checksum");
    st.values.resize(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i)
      st.values[static_cast<size_t>(i)] = read_le<T>(base + static_cast<size_t>(i) * sizeof(T));
    out.tensors.push_back(std::move(st));
  }
  return out;
}

template <class T>
void load_into(ParameterStore<T>& store, const std::string& path) {
  LoadedCheckpoint<T> ck = load_checkpoint<T>(path);
  std::string problems;
  auto complain = [&problems](const std::string& msg) {
    problems += (problems.empty() ? "" : "; ") + msg;
  };

  std::vector<bool> used(ck.tensors.size(), false);
  for (const auto& p : store.items()) {
    const SavedTensor<T>* found = nullptr;
    for (size_t i = 0; i < ck.tensors.size(); ++i) {
      if (ck.tensors[i].name != p->name) continue;
      used[i] = true;
      found = &ck.tensors[i];
      break;
    }
    if (!found) {
      complain("model parameter " + p->name + " is missing from the checkpoint");
      continue;
    }
    if (found->shape != p->value.shape) {
      complain("tensor " + p->name + " has shape " + found->shape.str() + ", the model expects " +
               p->value.shape.str());
    }
  }
  for (size_t i = 0; i < ck.tensors.size(); ++i)
    if (!used[i]) complain("checkpoint tensor " + ck.tensors[i].name + " has no place in the model");
  if (!problems.empty()) throw_data("manifest mismatch: " + problems);

  for (auto& p : store.items())
    for (const auto& t : ck.tensors)
      if (t.name == p->name) p->value.v = t.values;
}

template void save_checkpoint<float>(const std::string&, const ParameterStore<float>&, const std::string&);
template void save_checkpoint<double>(const std::string&, const ParameterStore<double>&, const std::string&);
template LoadedCheckpoint<float> load_checkpoint<float>(const std::string&);
template LoadedCheckpoint<double> load_checkpoint<double>(const std::string&);
template void load_into<float>(ParameterStore<float>&, const std::string&);
template void load_into<double>(ParameterStore<double>&, const std::string&);

}  // namespace lms
