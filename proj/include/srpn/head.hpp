#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "srpn/anchors.hpp"
#include "srpn/losses.hpp"
#include "srpn/sampling.hpp"
#include "srpn/tensor.hpp"

namespace srpn {

// Network shape: a small conv backbone (one 3x3 conv + relu + 2x2 average
// pool per stage) followed by the proposal head. Channel bookkeeping per
// head: regressor 4*A, embedding A*d, classifier A.
struct HeadConfig {
  std::vector<int> backbone_channels{8, 16};  // intermediate stage widths
  int c1 = 32;  // backbone output = shared-feature input channels
  int c2 = 32;  // shared 3x3 conv output channels
  int num_anchor = 9;
  int dim_embedding = 20;
  // The classifier reads the embedding map (the default wiring); switching
  // this on feeds it the shared features instead, for ablation.
  bool classifier_on_shared = false;

  int stages() const { return static_cast<int>(backbone_channels.size()) + 1; }
  int stride() const { return 1 << stages(); }
  int regressor_channels() const { return 4 * num_anchor; }
  int embedding_channels() const { return num_anchor * dim_embedding; }
  int classifier_channels() const { return num_anchor; }

  void validate() const;
  // Total parameter count (weights + biases) implied by the layer shapes.
  long long parameter_count() const;

  friend bool operator==(const HeadConfig&, const HeadConfig&) = default;
};

struct Param {
  std::string name;
  Tensor tensor;
};

struct Model {
  HeadConfig config;
  std::uint64_t seed = 0;
  std::vector<Param> params;

  Tensor& param(const std::string& name);
  const Tensor& param(const std::string& name) const;
  void zero_grads();
};

struct HeadOutput {
  Tensor offsets;     // [4*A, H', W']
  Tensor embeddings;  // [A*d, H', W']
  Tensor scores;      // [A, H', W'], strictly in (0,1)
  int feature_h = 0;
  int feature_w = 0;
};

// Builds the model with weights drawn from N(0, 0.01^2) and zero biases,
// deterministically from the seed.
Model build_model(const HeadConfig& config, std::uint64_t seed);

// Runs the head on a [3,H,W] image whose sides are divisible by the stride.
HeadOutput forward(Tape& tape, const Model& model, const Tensor& image);

// Aligned per-anchor views of the output maps for the given labels, with
// ignore-labeled anchors dropped. Anchor index (row*W'+col)*A + k maps to
// channels [4k,4k+4) / [k*d,(k+1)*d) / [k,k+1) at (row, col); offsets for
// negatives are still sliced (they are gated off in the loss).
struct AnchorViews {
  std::vector<int> anchor_indices;  // into the labeled-anchor list
  EmbeddingSet embeds;
  std::vector<AnchorPrediction> preds;
  std::vector<AnchorTarget> targets;
};

AnchorViews extract_anchor_views(Tape& tape, const HeadOutput& out,
                                 const std::vector<LabeledAnchor>& labels);

// Checkpoint container: magic + version, a JSON header carrying config,
// seed and the tensor directory, then raw little-endian 64-bit floats.
void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);

}  // namespace srpn
