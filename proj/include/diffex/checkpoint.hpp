#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "diffex/classifier.hpp"
#include "diffex/diffusion.hpp"

namespace diffex {

constexpr int kCheckpointFormatVersion = 1;

// Weights travel as raw little-endian 64-bit floats in manifest order;
// the manifest (JSON) carries shapes, activation tags and schedule
// constants. Round-trips must be bit-exact, hence the explicit byte
// packing instead of text formatting.
inline void append_le64(std::string& out, double value) {
  std::uint64_t bits;
  std::memcpy(&bits, &value, sizeof bits);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline double read_le64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  double value;
  std::memcpy(&value, &bits, sizeof value);
  return value;
}

namespace detail {

inline void append_tensor(nlohmann::json& tensors, std::string& blob, const std::string& name,
                          std::vector<std::size_t> shape, const std::vector<double>& data) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  if (n != data.size())
    throw std::runtime_error("checkpoint: shape does not match data for " + name);
  tensors.push_back({{"name", name}, {"shape", shape}});
  blob.reserve(blob.size() + 8 * data.size());
  for (double v : data) append_le64(blob, v);
}

class BlobReader {
 public:
  explicit BlobReader(std::vector<unsigned char> bytes) : bytes_(std::move(bytes)) {}

  std::vector<double> take(std::size_t n, const std::string& name) {
    if (pos_ + 8 * n > bytes_.size())
      throw std::runtime_error("checkpoint: blob truncated at tensor " + name);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = read_le64(&bytes_[pos_ + 8 * i]);
    pos_ += 8 * n;
    return out;
  }

  void finish() const {
    if (pos_ != bytes_.size()) throw std::runtime_error("checkpoint: trailing bytes in blob");
  }

 private:
  std::vector<unsigned char> bytes_;
  std::size_t pos_ = 0;
};

inline void dense_to_manifest(nlohmann::json& node, nlohmann::json& tensors, std::string& blob,
                              const DenseNet& net, const std::string& prefix) {
  nlohmann::json dims = nlohmann::json::array();
  nlohmann::json acts = nlohmann::json::array();
  dims.push_back(net.input_dim());
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const DenseLayer& l = net.layers[li];
    dims.push_back(l.out);
    acts.push_back(activation_name(l.act));
    append_tensor(tensors, blob, prefix + "." + std::to_string(li) + ".w", {l.out, l.in}, l.w);
    append_tensor(tensors, blob, prefix + "." + std::to_string(li) + ".b", {l.out}, l.b);
  }
  node["dims"] = dims;
  node["activations"] = acts;
}

inline DenseNet dense_from_manifest(const nlohmann::json& node, BlobReader& reader,
                                    const std::string& prefix) {
  const auto dims = node.at("dims").get<std::vector<std::size_t>>();
  const auto act_names = node.at("activations").get<std::vector<std::string>>();
  if (dims.size() < 2 || act_names.size() != dims.size() - 1)
    throw std::runtime_error("checkpoint: malformed dense section " + prefix);
  DenseNet net;
  for (std::size_t li = 0; li + 1 < dims.size(); ++li) {
    DenseLayer l;
    l.in = dims[li];
    l.out = dims[li + 1];
    l.act = activation_from_name(act_names[li]);
    l.w = reader.take(l.in * l.out, prefix + ".w");
    l.b = reader.take(l.out, prefix + ".b");
    net.layers.push_back(std::move(l));
  }
  net.validate();
  return net;
}

inline nlohmann::json load_manifest(const std::filesystem::path& dir, const std::string& kind) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint: bad manifest " + path.string() + ": " + e.what());
  }
  if (manifest.value("format_version", -1) != kCheckpointFormatVersion)
    throw std::runtime_error("checkpoint: unsupported format_version in " + path.string());
  if (manifest.value("kind", "") != kind)
    throw std::runtime_error("checkpoint: expected kind '" + kind + "' in " + path.string());
  return manifest;
}

inline BlobReader load_blob(const std::filesystem::path& dir) {
  const auto path = dir / "weights.bin";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return BlobReader(std::move(bytes));
}

inline void write_pair(const std::filesystem::path& dir, const nlohmann::json& manifest,
                       const std::string& blob) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "manifest.json");
    if (!out) throw std::runtime_error("checkpoint: cannot write manifest in " + dir.string());
    out << manifest.dump(2) << "\n";
  }
  std::ofstream out(dir / "weights.bin", std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write blob in " + dir.string());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw std::runtime_error("checkpoint: short write in " + dir.string());
}

}  // namespace detail

inline void save_diffusion_checkpoint(const DiffusionModel& model,
                                      const std::filesystem::path& dir) {
  model.validate();
  nlohmann::json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["kind"] = "ddpm";
  manifest["data_dim"] = model.data_dim;
  manifest["decoder"] =
      model.decoder == DecoderMode::discrete_256 ? "discrete_256" : "continuous";
  manifest["embed"] = {{"dim", model.embed.dim}, {"base", model.embed.base}};
  nlohmann::json tensors = nlohmann::json::array();
  std::string blob;
  detail::append_tensor(tensors, blob, "schedule.beta", {model.schedule.steps},
                        model.schedule.beta);
  manifest["schedule"] = {{"steps", model.schedule.steps}};
  detail::dense_to_manifest(manifest["denoiser"], tensors, blob, model.denoiser, "denoiser");
  manifest["tensors"] = std::move(tensors);
  detail::write_pair(dir, manifest, blob);
}

inline DiffusionModel load_diffusion_checkpoint(const std::filesystem::path& dir) {
  const nlohmann::json manifest = detail::load_manifest(dir, "ddpm");
  detail::BlobReader reader = detail::load_blob(dir);
  DiffusionModel model;
  model.data_dim = manifest.at("data_dim").get<std::size_t>();
  const std::string dec = manifest.at("decoder").get<std::string>();
  if (dec == "discrete_256")
    model.decoder = DecoderMode::discrete_256;
  else if (dec == "continuous")
    model.decoder = DecoderMode::continuous;
  else
    throw std::runtime_error("checkpoint: unknown decoder mode '" + dec + "'");
  model.embed.dim = manifest.at("embed").at("dim").get<std::size_t>();
  model.embed.base = manifest.at("embed").at("base").get<double>();
  const std::size_t steps = manifest.at("schedule").at("steps").get<std::size_t>();
  model.schedule = NoiseSchedule::from_betas(reader.take(steps, "schedule.beta"));
  model.denoiser = detail::dense_from_manifest(manifest.at("denoiser"), reader, "denoiser");
  reader.finish();
  model.validate();
  return model;
}

inline void save_classifier_checkpoint(const Classifier& clf, const std::filesystem::path& dir) {
  clf.validate();
  nlohmann::json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["kind"] = "classifier";
  manifest["num_classes"] = clf.num_classes;
  nlohmann::json tensors = nlohmann::json::array();
  std::string blob;
  if (!clf.conv.layers.empty()) {
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t li = 0; li < clf.conv.layers.size(); ++li) {
      const ConvLayer& l = clf.conv.layers[li];
      layers.push_back({{"in_ch", l.in_ch},
                        {"out_ch", l.out_ch},
                        {"kernel", l.kernel},
                        {"stride", l.stride},
                        {"pad", l.pad},
                        {"activation", activation_name(l.act)}});
      const std::string prefix = "conv." + std::to_string(li);
      detail::append_tensor(tensors, blob, prefix + ".w",
                            {l.out_ch, l.in_ch, l.kernel, l.kernel}, l.w);
      detail::append_tensor(tensors, blob, prefix + ".b", {l.out_ch}, l.b);
    }
    manifest["conv"] = {{"in_ch", clf.conv.in_ch},
                        {"in_h", clf.conv.in_h},
                        {"in_w", clf.conv.in_w},
                        {"layers", std::move(layers)}};
  }
  detail::dense_to_manifest(manifest["head"], tensors, blob, clf.head, "head");
  manifest["tensors"] = std::move(tensors);
  detail::write_pair(dir, manifest, blob);
}

inline Classifier load_classifier_checkpoint(const std::filesystem::path& dir) {
  const nlohmann::json manifest = detail::load_manifest(dir, "classifier");
  detail::BlobReader reader = detail::load_blob(dir);
  Classifier clf;
  clf.num_classes = manifest.at("num_classes").get<std::size_t>();
  if (manifest.contains("conv")) {
    const auto& cv = manifest.at("conv");
    clf.conv.in_ch = cv.at("in_ch").get<std::size_t>();
    clf.conv.in_h = cv.at("in_h").get<std::size_t>();
    clf.conv.in_w = cv.at("in_w").get<std::size_t>();
    std::size_t li = 0;
    for (const auto& lj : cv.at("layers")) {
      ConvLayer l;
      l.in_ch = lj.at("in_ch").get<std::size_t>();
      l.out_ch = lj.at("out_ch").get<std::size_t>();
      l.kernel = lj.at("kernel").get<std::size_t>();
      l.stride = lj.at("stride").get<std::size_t>();
      l.pad = lj.at("pad").get<std::size_t>();
      l.act = activation_from_name(lj.at("activation").get<std::string>());
      const std::string prefix = "conv." + std::to_string(li++);
      l.w = reader.take(l.out_ch * l.in_ch * l.kernel * l.kernel, prefix + ".w");
      l.b = reader.take(l.out_ch, prefix + ".b");
      clf.conv.layers.push_back(std::move(l));
    }
  }
  clf.head = detail::dense_from_manifest(manifest.at("head"), reader, "head");
  reader.finish();
  clf.validate();
  return clf;
}

}  // namespace diffex
