#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "sokorl/diff/tensor.hpp"
#include "sokorl/errors.hpp"

namespace sokorl::diff {

// One named trainable tensor with its gradient slot.
template <typename T>
struct ParamT {
  std::string name;
  TensorT<T> value;
  TensorT<T> grad;

  ParamT(std::string n, TensorT<T> v) : name(std::move(n)), value(std::move(v)) {
    grad = TensorT<T>::zeros(value.shape);
  }
};

// Insertion-ordered collection of parameters. Pointers stay stable for the
// lifetime of the set (layers hold ParamT*), so storage is via unique_ptr.
template <typename T>
class ParameterSetT {
 public:
  ParamT<T>* create(const std::string& name, TensorT<T> init) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    params_.push_back(std::make_unique<ParamT<T>>(name, std::move(init)));
    index_[name] = params_.size() - 1;
    return params_.back().get();
  }

  ParamT<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }
  const ParamT<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }
  ParamT<T>& at(const std::string& name) {
    ParamT<T>* p = find(name);
    if (!p) throw ConfigError("unknown parameter: " + name);
    return *p;
  }

  size_t count() const { return params_.size(); }
  ParamT<T>& operator[](size_t i) { return *params_[i]; }
  const ParamT<T>& operator[](size_t i) const { return *params_[i]; }

  int64_t total_size() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  uint64_t version() const { return version_; }
  void bump_version() { ++version_; }

  void zero_grads() {
    for (auto& p : params_) p->grad.fill(T(0));
  }

  // Copies values (not grads) from another set; shapes and names must agree.
  void copy_values_from(const ParameterSetT& src) {
    if (src.count() != count()) throw ShapeError("parameter-set size mismatch in copy");
    for (size_t i = 0; i < params_.size(); ++i) {
      const ParamT<T>& s = src[i];
      ParamT<T>& d = *params_[i];
      if (s.name != d.name || s.value.shape != d.value.shape)
        throw ShapeError("parameter mismatch in copy: " + d.name);
      d.value.data = s.value.data;
    }
    version_ = src.version_;
  }

  // --- checkpoint IO: self-describing binary, bit-exact round-trip ---

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open for write: " + path);
    const char magic[4] = {'S', 'K', 'R', 'L'};
    f.write(magic, 4);
    write_u32(f, kFormatVersion);
    write_u64(f, version_);
    write_u32(f, static_cast<uint32_t>(params_.size()));
    for (const auto& p : params_) {
      write_u32(f, static_cast<uint32_t>(p->name.size()));
      f.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
      write_u32(f, sizeof(T) == 4 ? 0u : 1u);
      write_u32(f, static_cast<uint32_t>(p->value.shape.size()));
      for (int d : p->value.shape) write_u32(f, static_cast<uint32_t>(d));
      f.write(reinterpret_cast<const char*>(p->value.data.data()),
              static_cast<std::streamsize>(p->value.data.size() * sizeof(T)));
    }
    if (!f) throw CheckpointError("write failed: " + path);
  }

  // Loads values into an already-constructed set (names/shapes must match), or
  // builds the set from scratch when empty.
  void load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open checkpoint: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "SKRL", 4) != 0)
      throw CheckpointError("bad checkpoint magic: " + path);
    const uint32_t fmt = read_u32(f);
    if (fmt != kFormatVersion)
      throw CheckpointError("unsupported checkpoint format version " + std::to_string(fmt));
    const uint64_t ver = read_u64(f);
    const uint32_t n = read_u32(f);
    const bool build = params_.empty();
    if (!build && n != params_.size())
      throw CheckpointError("checkpoint has " + std::to_string(n) + " params, expected " +
                            std::to_string(params_.size()));
    for (uint32_t i = 0; i < n; ++i) {
      const uint32_t len = read_u32(f);
      std::string name(len, '\0');
      f.read(name.data(), len);
      const uint32_t dtype = read_u32(f);
      if (dtype != (sizeof(T) == 4 ? 0u : 1u))
        throw CheckpointError("checkpoint scalar type mismatch for " + name);
      const uint32_t rank = read_u32(f);
      std::vector<int> shape(rank);
      for (uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int>(read_u32(f));
      TensorT<T> val(shape);
      f.read(reinterpret_cast<char*>(val.data.data()),
             static_cast<std::streamsize>(val.data.size() * sizeof(T)));
      if (!f) throw CheckpointError("truncated checkpoint: " + path);
      if (build) {
        create(name, std::move(val));
      } else {
        ParamT<T>& p = *params_[i];
        if (p.name != name || p.value.shape != shape)
          throw CheckpointError("checkpoint entry " + name + " does not match parameter " +
                                p.name);
        p.value = std::move(val);
      }
    }
    version_ = ver;
  }

  static constexpr uint32_t kFormatVersion = 1;

 private:
  static void write_u32(std::ofstream& f, uint32_t v) {
    f.write(reinterpret_cast<const char*>(&v), 4);
  }
  static void write_u64(std::ofstream& f, uint64_t v) {
    f.write(reinterpret_cast<const char*>(&v), 8);
  }
  static uint32_t read_u32(std::ifstream& f) {
    uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
  }
  static uint64_t read_u64(std::ifstream& f) {
    uint64_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 8);
    return v;
  }

  std::vector<std::unique_ptr<ParamT<T>>> params_;
  std::unordered_map<std::string, size_t> index_;
  uint64_t version_ = 0;
};

using ParameterSet = ParameterSetT<float>;
using Param = ParamT<float>;

}  // namespace sokorl::diff
