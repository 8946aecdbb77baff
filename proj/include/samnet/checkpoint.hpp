#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "samnet/io.hpp"

namespace samnet {

// Binary archive of named float32 arrays:
//   "SAMCKPT\0" | u32 version | u32 count | per array: u32 name_len, name, u32 rank,
//   i32 dims[rank], float32 data[prod(dims)]
class Checkpoint {
 public:
  static constexpr std::uint32_t version = 1;

  template <class T>
  void put(const std::string& name, const Tensor<T>& t) {
    arrays_[name] = t.template cast<float>();
  }
  template <class T>
  void put_all(const std::vector<Parameter<T>*>& params) {
    for (auto* p : params) put(p->name, p->value);
  }
  void put_scalar(const std::string& name, double v) { arrays_[name] = Tensor<float>(std::vector<int>{1}, float(v)); }

  bool has(const std::string& name) const { return arrays_.count(name) > 0; }
  const Tensor<float>& get(const std::string& name) const {
    auto it = arrays_.find(name);
    if (it == arrays_.end()) throw IoError("checkpoint has no array '" + name + "'");
    return it->second;
  }
  double scalar(const std::string& name) const { return get(name)[0]; }

  // Copies stored arrays into matching parameters; shapes must agree.
  template <class T>
  void load_into(const std::vector<Parameter<T>*>& params) const {
    for (auto* p : params) {
      const auto& a = get(p->name);
      if (a.shape() != p->value.shape())
        throw ShapeError("checkpoint array '" + p->name + "' has shape " + a.shape_string() + ", expected " +
                         p->value.shape_string());
      p->value = a.template cast<T>();
      p->zero_grad();
    }
  }

  const std::map<std::string, Tensor<float>>& arrays() const noexcept { return arrays_; }

  void save(const fs::path& path) const {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary);
      if (!out) throw IoError("cannot write checkpoint: " + path.string());
      out.write(magic, 8);
      put_u32(out, version);
      put_u32(out, static_cast<std::uint32_t>(arrays_.size()));
      for (const auto& [name, t] : arrays_) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(out, static_cast<std::uint32_t>(t.rank()));
        for (int d : t.shape()) {
          const std::int32_t v = d;
          out.write(reinterpret_cast<const char*>(&v), 4);
        }
        out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * 4));
      }
      if (!out) throw IoError("failed writing checkpoint: " + path.string());
    }
    fs::rename(tmp, path);
  }

  static Checkpoint load(const fs::path& path) {
    require_file(path);
    std::ifstream in(path, std::ios::binary);
    char m[8];
    in.read(m, 8);
    if (!in || std::memcmp(m, magic, 8) != 0) throw IoError("not a checkpoint file: " + path.string());
    const std::uint32_t ver = get_u32(in);
    if (ver != version) throw IoError("unsupported checkpoint version " + std::to_string(ver));
    const std::uint32_t count = get_u32(in);
    Checkpoint ck;
    for (std::uint32_t k = 0; k < count; ++k) {
      const std::uint32_t len = get_u32(in);
      if (len > 4096) throw IoError("corrupt checkpoint: name too long");
      std::string name(len, '\0');
      in.read(name.data(), len);
      const std::uint32_t rank = get_u32(in);
      if (rank < 1 || rank > 4) throw IoError("corrupt checkpoint: bad rank for '" + name + "'");
      std::vector<int> shape(rank);
      for (auto& d : shape) {
        std::int32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), 4);
        if (v < 0 || v > (1 << 24)) throw IoError("corrupt checkpoint: bad dimension");
        d = v;
      }
      Tensor<float> t(shape);
      in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * 4));
      if (!in) throw IoError("truncated checkpoint: " + path.string());
      ck.arrays_[name] = std::move(t);
    }
    return ck;
  }

 private:
  static constexpr char magic[8] = {'S', 'A', 'M', 'C', 'K', 'P', 'T', '\0'};

  static void put_u32(std::ofstream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
  static std::uint32_t get_u32(std::ifstream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) throw IoError("truncated checkpoint header");
    return v;
  }

  std::map<std::string, Tensor<float>> arrays_;
};

}  // namespace samnet
