#pragma once

#include "tricrlad/common.hpp"
#include "tricrlad/diffnet.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace tricrlad {

// Named-tensor container persisted as JSON:
//
//   {"format": "tricrlad-checkpoint", "version": 1,
//    "meta": {"key": "value", ...},
//    "tensors": {"name": {"shape": [rows, cols], "data": [row-major values]}}}
//
// Keys are emitted sorted and doubles in shortest round-trip form, so
// save -> load -> save is byte-stable.
class Checkpoint {
 public:
  static constexpr int kVersion = 1;

  void put(const std::string& name, const Matrix& tensor);
  const Matrix& get(const std::string& name) const;
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }

  void set_meta(const std::string& key, const std::string& value) { meta_[key] = value; }
  const std::string& meta(const std::string& key) const;
  bool has_meta(const std::string& key) const { return meta_.count(key) != 0; }

  const std::map<std::string, Matrix>& tensors() const { return tensors_; }

  std::string serialize() const;
  static Checkpoint parse(const std::string& text);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  std::map<std::string, std::string> meta_;
  std::map<std::string, Matrix> tensors_;
};

// Stores a network as <prefix>.<layer>.weight / .bias plus an architecture
// record in meta.
void put_net(Checkpoint& ckpt, const std::string& prefix, const DenseNet& net);
DenseNet get_net(const Checkpoint& ckpt, const std::string& prefix);

void put_adam(Checkpoint& ckpt, const std::string& prefix, const Adam& adam);
void get_adam(const Checkpoint& ckpt, const std::string& prefix, Adam& adam);

}  // namespace tricrlad
