#include "core/meta_net.hpp"

#include <cmath>
#include <fstream>

#include "core/tensor_io.hpp"
#include "json.hpp"

namespace metalora {

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Identity: return "identity";
  }
  throw ArgError("unknown activation");
}

Activation activation_from_name(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  if (name == "identity") return Activation::Identity;
  throw ArgError("unknown activation: " + name);
}

double apply_activation(Activation a, double x) {
  switch (a) {
    case Activation::Tanh: return std::tanh(x);
    case Activation::Relu: return x > 0.0 ? x : 0.0;
    case Activation::Identity: return x;
  }
  throw ArgError("unknown activation");
}

const char* extractor_kind_name(FeatureExtractor::Kind k) {
  return k == FeatureExtractor::Kind::RawFlatten ? "raw_flatten" : "pooled_conv";
}

FeatureExtractor::Kind extractor_kind_from_name(const std::string& name) {
  if (name == "raw_flatten") return FeatureExtractor::Kind::RawFlatten;
  if (name == "pooled_conv") return FeatureExtractor::Kind::PooledConv;
  throw ArgError(strf("unknown extractor kind '", name, "'"));
}

FeatureExtractor FeatureExtractor::raw_flatten() { return FeatureExtractor{}; }

FeatureExtractor FeatureExtractor::pooled_conv(std::size_t kernel, std::size_t in_channels,
                                               std::size_t features, Rng& rng) {
  if (kernel % 2 == 0) throw ArgError("pooled-conv extractor needs an odd kernel for same padding");
  FeatureExtractor fe;
  fe.kind = Kind::PooledConv;
  fe.kernel = DenseTensor({kernel, kernel, in_channels, features});
  const double stddev = 1.0 / std::sqrt(static_cast<double>(kernel * kernel * in_channels));
  for (std::size_t i = 0; i < fe.kernel.size(); ++i) fe.kernel[i] = rng.normal(0.0, stddev);
  return fe;
}

std::size_t FeatureExtractor::feature_dim(std::size_t h, std::size_t w, std::size_t channels) const {
  if (kind == Kind::RawFlatten) return h * w * channels;
  return kernel.extent(3);
}

DenseTensor extract_features(const DenseTensor& x, const FeatureExtractor& fe) {
  if (x.order() != 3) {
    throw ShapeError(strf("extract_features: input must be H x W x I, got ", shape_str(x.shape())));
  }
  if (fe.kind == FeatureExtractor::Kind::RawFlatten) {
    return reshape(x, {x.size()});
  }
  if (fe.kernel.extent(2) != x.extent(2)) {
    throw ShapeError(strf("extract_features: input channels ", x.extent(2),
                          " != extractor channels ", fe.kernel.extent(2)));
  }
  const std::size_t k = fe.kernel.extent(0);
  const DenseTensor y = conv2d_forward(x, fe.kernel, 1, (k - 1) / 2);  // H x W x F
  const std::size_t hw = y.extent(0) * y.extent(1);
  const std::size_t f = y.extent(2);
  DenseTensor out({f});
  for (std::size_t i = 0; i < hw; ++i)
    for (std::size_t c = 0; c < f; ++c) out[c] += y[i * f + c];
  for (std::size_t c = 0; c < f; ++c) out[c] /= static_cast<double>(hw);
  return out;
}

std::size_t MappingNet::input_dim() const {
  if (layers.empty()) throw ArgError("mapping net has no layers");
  return layers.front().W.extent(0);
}

std::size_t MappingNet::output_dim() const {
  if (layers.empty()) throw ArgError("mapping net has no layers");
  return layers.back().W.extent(1);
}

void MappingNet::validate() const {
  if (layers.empty()) throw ArgError("mapping net has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const MappingLayer& l = layers[i];
    if (l.W.order() != 2 || l.b.order() != 1) {
      throw ShapeError(strf("mapping net layer ", i, ": W must be a matrix and b a vector"));
    }
    if (l.b.extent(0) != l.W.extent(1)) {
      throw ShapeError(strf("mapping net layer ", i, ": bias length ", l.b.extent(0),
                            " != output width ", l.W.extent(1)));
    }
    if (i + 1 < layers.size() && layers[i + 1].W.extent(0) != l.W.extent(1)) {
      throw ShapeError(strf("mapping net: layer ", i, " outputs ", l.W.extent(1),
                            " but layer ", i + 1, " expects ", layers[i + 1].W.extent(0)));
    }
  }
  if (layers.back().act != Activation::Identity) {
    throw ArgError("mapping net: final layer activation must be identity");
  }
  if (!seed_shape.empty()) {
    std::size_t n = 1;
    for (std::size_t e : seed_shape) n *= e;
    if (n != output_dim()) {
      throw ShapeError(strf("mapping net: seed shape ", shape_str(seed_shape),
                            " does not match output width ", output_dim()));
    }
  }
}

MappingNet init_mapping_net(std::size_t input_dim, std::size_t output_dim,
                            std::vector<std::size_t> seed_shape, std::size_t hidden_layers,
                            std::size_t hidden_width, Activation hidden_act, Rng& rng) {
  MappingNet net;
  net.seed_shape = std::move(seed_shape);
  std::size_t in = input_dim;
  for (std::size_t i = 0; i < hidden_layers; ++i) {
    MappingLayer l;
    l.W = DenseTensor({in, hidden_width});
    const double stddev = 1.0 / std::sqrt(static_cast<double>(in));
    for (std::size_t j = 0; j < l.W.size(); ++j) l.W[j] = rng.normal(0.0, stddev);
    l.b = DenseTensor::zeros({hidden_width});
    l.act = hidden_act;
    net.layers.push_back(std::move(l));
    in = hidden_width;
  }
  MappingLayer out;
  out.W = DenseTensor({in, output_dim});
  const double stddev = 1.0 / std::sqrt(static_cast<double>(in));
  for (std::size_t j = 0; j < out.W.size(); ++j) out.W[j] = rng.normal(0.0, stddev);
  out.b = DenseTensor::zeros({output_dim});
  out.act = Activation::Identity;
  net.layers.push_back(std::move(out));
  net.validate();
  return net;
}

DenseTensor mapping_forward(const MappingNet& net, const DenseTensor& f) {
  net.validate();
  if (f.order() != 1 || f.extent(0) != net.input_dim()) {
    throw ShapeError(strf("mapping_forward: feature vector of length ", net.input_dim(),
                          " expected, got ", shape_str(f.shape())));
  }
  DenseTensor h = f;
  for (const MappingLayer& l : net.layers) {
    DenseTensor z = add(contract(h, l.W, {{0, 0}}), l.b);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = apply_activation(l.act, z[i]);
    h = std::move(z);
  }
  if (!net.seed_shape.empty()) return reshape(h, net.seed_shape);
  return h;
}

void save_mapping_net(const std::filesystem::path& dir, const MappingNet& net) {
  net.validate();
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "metalora.mapping_net.v1";
  manifest["seed_shape"] = net.seed_shape;
  nlohmann::json layers = nlohmann::json::array();
  for (const MappingLayer& l : net.layers) {
    layers.push_back({{"in", l.W.extent(0)}, {"out", l.W.extent(1)}, {"act", activation_name(l.act)}});
  }
  manifest["layers"] = layers;
  std::ofstream os(dir / "manifest.json");
  if (!os) throw IoError("cannot write mapping net manifest in " + dir.string());
  os << manifest.dump(2) << "\n";
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    save_tensor(dir / ("W" + std::to_string(i)), net.layers[i].W);
    save_tensor(dir / ("b" + std::to_string(i)), net.layers[i].b);
  }
}

MappingNet load_mapping_net(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw IoError("cannot read mapping net manifest in " + dir.string());
  nlohmann::json manifest;
  try {
    is >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(strf("bad mapping net manifest in ", dir.string(), ": ", e.what()));
  }
  if (manifest.value("format", "") != "metalora.mapping_net.v1") {
    throw IoError("unrecognized mapping net manifest format in " + dir.string());
  }
  MappingNet net;
  net.seed_shape = manifest.at("seed_shape").get<std::vector<std::size_t>>();
  const auto& layers = manifest.at("layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    MappingLayer l;
    l.W = load_tensor(dir / ("W" + std::to_string(i)));
    l.b = load_tensor(dir / ("b" + std::to_string(i)));
    l.act = activation_from_name(layers[i].at("act").get<std::string>());
    net.layers.push_back(std::move(l));
  }
  net.validate();
  return net;
}

}  // namespace metalora
