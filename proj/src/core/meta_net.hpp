#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace metalora {

enum class Activation { Tanh, Relu, Identity };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);
double apply_activation(Activation a, double x);

// Frozen per-input feature producer feeding the mapping net.  raw-flatten
// returns the row-major flattening of the input; pooled-conv pushes the
// input through one fixed random conv kernel (stride 1, same padding) and
// global-average-pools to an F-vector.  Never trained.
struct FeatureExtractor {
  enum class Kind { RawFlatten, PooledConv };

  Kind kind = Kind::RawFlatten;
  DenseTensor kernel;  // K x K x I x F, pooled-conv only

  static FeatureExtractor raw_flatten();
  static FeatureExtractor pooled_conv(std::size_t kernel, std::size_t in_channels,
                                      std::size_t features, Rng& rng);

  std::size_t feature_dim(std::size_t h, std::size_t w, std::size_t channels) const;
};

const char* extractor_kind_name(FeatureExtractor::Kind k);
FeatureExtractor::Kind extractor_kind_from_name(const std::string& name);

DenseTensor extract_features(const DenseTensor& x, const FeatureExtractor& fe);

// MLP that maps a feature vector to the parameter seed: a vector of length
// R (CP) or an R x R matrix (TR, reshaped row-major from the final R^2
// outputs).  The final layer activation is always identity.
struct MappingLayer {
  DenseTensor W;  // in x out
  DenseTensor b;  // out
  Activation act = Activation::Identity;
};

struct MappingNet {
  std::vector<MappingLayer> layers;
  // Empty for a vector seed; {R, R} requests the matrix reshape.
  std::vector<std::size_t> seed_shape;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  void validate() const;
};

// Builds the default net: hidden tanh layers of the given width, identity
// output layer, Gaussian(0, 1/sqrt(fan-in)) weights and zero biases.
MappingNet init_mapping_net(std::size_t input_dim, std::size_t output_dim,
                            std::vector<std::size_t> seed_shape, std::size_t hidden_layers,
                            std::size_t hidden_width, Activation hidden_act, Rng& rng);

DenseTensor mapping_forward(const MappingNet& net, const DenseTensor& f);

// Checkpoints reuse the adapter layout: manifest.json plus one MTK1 blob
// per tensor, named "W0","b0","W1","b1",...
void save_mapping_net(const std::filesystem::path& dir, const MappingNet& net);
MappingNet load_mapping_net(const std::filesystem::path& dir);

}  // namespace metalora
