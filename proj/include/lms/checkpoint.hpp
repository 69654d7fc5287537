#pragma once

#include "lms/params.hpp"

namespace lms {

// One file: "LMSCKPT1\n", a single-line JSON manifest, then the raw payload.
// The manifest lists every tensor (name, shape, dtype, payload offset, crc32)
// plus a caller-supplied meta object; the payload is little-endian row-major
// values in store creation order. Corrupt payload bytes surface as
// verification errors; structural problems as data errors.

uint32_t crc32(const void* data, size_t n);

template <class T>
void save_checkpoint(const std::string& path, const ParameterStore<T>& store, const std::string& meta_json);

template <class T>
struct SavedTensor {
  std::string name;
  Shape shape;
  std::vector<T> values;
};

template <class T>
struct LoadedCheckpoint {
  std::string meta_json;  // verbatim echo of the meta object
  std::vector<SavedTensor<T>> tensors;
};

// The checkpoint's stored precision ("float" or "double"), without reading
// the payload. Callers pick the template instantiation from this.
std::string checkpoint_precision(const std::string& path);

template <class T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path);

// Copies values into an existing store. Every store parameter must appear
// with the same shape, and no extra tensors may remain; any disagreement is
// reported as a manifest mismatch.
template <class T>
void load_into(ParameterStore<T>& store, const std::string& path);

}  // namespace lms
