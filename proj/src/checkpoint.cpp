#include "tricrlad/checkpoint.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace tricrlad {

using nlohmann::json;

void Checkpoint::put(const std::string& name, const Matrix& tensor) { tensors_[name] = tensor; }

const Matrix& Checkpoint::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw DataError("checkpoint: missing tensor '" + name + "'");
  return it->second;
}

const std::string& Checkpoint::meta(const std::string& key) const {
  auto it = meta_.find(key);
  if (it == meta_.end()) throw DataError("checkpoint: missing meta key '" + key + "'");
  return it->second;
}

std::string Checkpoint::serialize() const {
  json doc;
  doc["format"] = "tricrlad-checkpoint";
  doc["version"] = kVersion;
  doc["meta"] = json::object();
  for (const auto& [k, v] : meta_) doc["meta"][k] = v;
  doc["tensors"] = json::object();
  for (const auto& [name, m] : tensors_) {
    json data = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    }
    doc["tensors"][name] = {{"shape", {m.rows(), m.cols()}}, {"data", std::move(data)}};
  }
  return doc.dump() + "\n";
}

Checkpoint Checkpoint::parse(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: malformed JSON: ") + e.what());
  }
  if (doc.value("format", "") != "tricrlad-checkpoint") {
    throw DataError("checkpoint: not a tricrlad checkpoint");
  }
  if (doc.value("version", 0) != kVersion) {
    throw DataError("checkpoint: unsupported version " + doc.value("version", json(0)).dump());
  }
  Checkpoint ckpt;
  try {
    for (const auto& [k, v] : doc.at("meta").items()) ckpt.meta_[k] = v.get<std::string>();
    for (const auto& [name, t] : doc.at("tensors").items()) {
      const auto rows = t.at("shape").at(0).get<Eigen::Index>();
      const auto cols = t.at("shape").at(1).get<Eigen::Index>();
      const auto& data = t.at("data");
      if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
        throw DataError("checkpoint: tensor '" + name + "' has inconsistent size");
      }
      Matrix m(rows, cols);
      std::size_t i = 0;
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[i++].get<double>();
      }
      ckpt.tensors_[name] = std::move(m);
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: malformed content: ") + e.what());
  }
  return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("checkpoint: cannot write '" + path.string() + "'");
  out << serialize();
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void put_net(Checkpoint& ckpt, const std::string& prefix, const DenseNet& net) {
  std::ostringstream arch;
  const auto& layers = net.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i) arch << ';';
    arch << layers[i].weight.rows() << 'x' << layers[i].weight.cols() << ':'
         << to_string(layers[i].activation);
    ckpt.put(prefix + "." + std::to_string(i) + ".weight", layers[i].weight);
    ckpt.put(prefix + "." + std::to_string(i) + ".bias", layers[i].bias);
  }
  ckpt.set_meta(prefix + ".arch", arch.str());
}

DenseNet get_net(const Checkpoint& ckpt, const std::string& prefix) {
  std::istringstream arch(ckpt.meta(prefix + ".arch"));
  std::string spec;
  std::vector<DenseLayer> layers;
  while (std::getline(arch, spec, ';')) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos) throw DataError("checkpoint: bad architecture for " + prefix);
    DenseLayer layer;
    const std::string idx = std::to_string(layers.size());
    layer.weight = ckpt.get(prefix + "." + idx + ".weight");
    layer.bias = ckpt.get(prefix + "." + idx + ".bias");
    layer.activation = parse_activation(spec.substr(colon + 1));
    layers.push_back(std::move(layer));
  }
  try {
    return DenseNet(std::move(layers));
  } catch (const UsageError& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

void put_adam(Checkpoint& ckpt, const std::string& prefix, const Adam& adam) {
  ckpt.set_meta(prefix + ".step", std::to_string(adam.step_count()));
  for (std::size_t i = 0; i < adam.first_moment().size(); ++i) {
    ckpt.put(prefix + ".m." + std::to_string(i), adam.first_moment()[i]);
    ckpt.put(prefix + ".v." + std::to_string(i), adam.second_moment()[i]);
  }
}

void get_adam(const Checkpoint& ckpt, const std::string& prefix, Adam& adam) {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  for (std::size_t i = 0; i < adam.first_moment().size(); ++i) {
    m.push_back(ckpt.get(prefix + ".m." + std::to_string(i)));
    v.push_back(ckpt.get(prefix + ".v." + std::to_string(i)));
  }
  adam.restore(std::stoull(ckpt.meta(prefix + ".step")), std::move(m), std::move(v));
}

}  // namespace tricrlad
