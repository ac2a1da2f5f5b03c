#include "srpn/head.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "srpn/ops.hpp"
#include "srpn/rng.hpp"

namespace srpn {

void HeadConfig::validate() const {
  for (int c : backbone_channels)
    if (c < 1)
      throw std::invalid_argument("HeadConfig: backbone channels must be >= 1");
  if (c1 < 1 || c2 < 1 || num_anchor < 1 || dim_embedding < 1)
    throw std::invalid_argument(
        "HeadConfig: c1, c2, num_anchor and dim_embedding must be >= 1");
}

namespace {

struct LayerShape {
  std::string name;
  int c_out, c_in, k;
};

std::vector<LayerShape> layer_shapes(const HeadConfig& cfg) {
  std::vector<LayerShape> layers;
  int in = 3;
  for (std::size_t i = 0; i < cfg.backbone_channels.size(); ++i) {
    layers.push_back({"backbone." + std::to_string(i), cfg.backbone_channels[i], in, 3});
    in = cfg.backbone_channels[i];
  }
  layers.push_back({"backbone." + std::to_string(cfg.backbone_channels.size()),
                    cfg.c1, in, 3});
  layers.push_back({"conv1", cfg.c2, cfg.c1, 3});
  layers.push_back({"regressor", cfg.regressor_channels(), cfg.c2, 1});
  layers.push_back({"embedding", cfg.embedding_channels(), cfg.c2, 1});
  layers.push_back({"classifier", cfg.classifier_channels(),
                    cfg.classifier_on_shared ? cfg.c2 : cfg.embedding_channels(),
                    1});
  return layers;
}

}  // namespace

long long HeadConfig::parameter_count() const {
  long long n = 0;
  for (const auto& l : layer_shapes(*this))
    n += static_cast<long long>(l.c_out) * l.c_in * l.k * l.k + l.c_out;
  return n;
}

Tensor& Model::param(const std::string& name) {
  for (auto& p : params)
    if (p.name == name) return p.tensor;
  throw std::invalid_argument("Model: no parameter named '" + name + "'");
}

const Tensor& Model::param(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name) return p.tensor;
  throw std::invalid_argument("Model: no parameter named '" + name + "'");
}

void Model::zero_grads() {
  for (auto& p : params) p.tensor.zero_grad();
}

Model build_model(const HeadConfig& config, std::uint64_t seed) {
  config.validate();
  Model model;
  model.config = config;
  model.seed = seed;
  Rng rng(seed);
  for (const auto& l : layer_shapes(config)) {
    std::vector<double> w(static_cast<std::size_t>(l.c_out) * l.c_in * l.k * l.k);
    for (auto& v : w) v = rng.normal(0.0, 0.01);
    model.params.push_back(
        {l.name + ".weight",
         Tensor::from_data({l.c_out, l.c_in, l.k, l.k}, std::move(w), true)});
    model.params.push_back(
        {l.name + ".bias", Tensor::zeros({l.c_out}, true)});
  }
  return model;
}

HeadOutput forward(Tape& tape, const Model& model, const Tensor& image) {
  const auto& cfg = model.config;
  const auto& s = image.shape();
  if (s.size() != 3 || s[0] != 3)
    throw std::invalid_argument("forward: image must be [3,H,W], got " +
                                shape_str(s));
  const int stride = cfg.stride();
  if (s[1] % stride != 0 || s[2] % stride != 0)
    throw std::invalid_argument(
        "forward: image sides must be divisible by the stride " +
        std::to_string(stride) + ", got " + shape_str(s));

  Tensor x = image;
  for (int i = 0; i < cfg.stages(); ++i) {
    const std::string name = "backbone." + std::to_string(i);
    x = conv2d(tape, x, model.param(name + ".weight"),
               model.param(name + ".bias"), 1);
    x = relu(tape, x);
    x = avg_pool2(tape, x);
  }
  Tensor shared = relu(
      tape, conv2d(tape, x, model.param("conv1.weight"),
                   model.param("conv1.bias"), 1));

  HeadOutput out;
  out.offsets = conv2d(tape, shared, model.param("regressor.weight"),
                       model.param("regressor.bias"), 0);
  out.embeddings = conv2d(tape, shared, model.param("embedding.weight"),
                          model.param("embedding.bias"), 0);
  const Tensor& cls_in = cfg.classifier_on_shared ? shared : out.embeddings;
  out.scores = logistic(tape, conv2d(tape, cls_in,
                                     model.param("classifier.weight"),
                                     model.param("classifier.bias"), 0));
  out.feature_h = out.scores.shape()[1];
  out.feature_w = out.scores.shape()[2];
  return out;
}

AnchorViews extract_anchor_views(Tape& tape, const HeadOutput& out,
                                 const std::vector<LabeledAnchor>& labels) {
  const int a = out.scores.shape()[0];
  const int h = out.feature_h, w = out.feature_w;
  const int d = out.embeddings.shape()[0] / a;
  const std::size_t expected = static_cast<std::size_t>(a) * h * w;
  if (labels.size() != expected)
    throw std::invalid_argument(
        "extract_anchor_views: got " + std::to_string(labels.size()) +
        " labels for " + std::to_string(expected) + " anchors");

  AnchorViews views;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].label == AnchorLabel::kIgnore) continue;
    const int k = static_cast<int>(i) % a;
    const int cell = static_cast<int>(i) / a;
    const int row = cell / w;
    const int col = cell % w;

    AnchorPrediction pred;
    pred.offsets =
        channel_slice_at(tape, out.offsets, 4 * k, 4 * k + 4, row, col);
    pred.score = channel_slice_at(tape, out.scores, k, k + 1, row, col);

    AnchorTarget target;
    target.label = labels[i].label == AnchorLabel::kPositive ? 1 : 0;
    if (labels[i].target_offsets) target.offsets = *labels[i].target_offsets;

    views.anchor_indices.push_back(static_cast<int>(i));
    views.embeds.push_back(
        {channel_slice_at(tape, out.embeddings, k * d, (k + 1) * d, row, col),
         target.label});
    views.preds.push_back(std::move(pred));
    views.targets.push_back(target);
  }
  return views;
}

namespace {

constexpr char kMagic[8] = {'S', 'R', 'P', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

nlohmann::json config_to_json(const HeadConfig& cfg) {
  return nlohmann::json{{"backbone_channels", cfg.backbone_channels},
                        {"c1", cfg.c1},
                        {"c2", cfg.c2},
                        {"num_anchor", cfg.num_anchor},
                        {"dim_embedding", cfg.dim_embedding},
                        {"classifier_on_shared", cfg.classifier_on_shared}};
}

HeadConfig config_from_json(const nlohmann::json& j) {
  HeadConfig cfg;
  cfg.backbone_channels = j.at("backbone_channels").get<std::vector<int>>();
  cfg.c1 = j.at("c1").get<int>();
  cfg.c2 = j.at("c2").get<int>();
  cfg.num_anchor = j.at("num_anchor").get<int>();
  cfg.dim_embedding = j.at("dim_embedding").get<int>();
  cfg.classifier_on_shared = j.at("classifier_on_shared").get<bool>();
  return cfg;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model) {
  nlohmann::json header;
  header["format"] = "srpn-checkpoint";
  header["version"] = kVersion;
  header["seed"] = model.seed;
  header["config"] = config_to_json(model.config);
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& p : model.params)
    tensors.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
  header["tensors"] = std::move(tensors);
  const std::string header_str = header.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  f.write(kMagic, sizeof(kMagic));
  std::uint32_t version = kVersion;
  f.write(reinterpret_cast<const char*>(&version), sizeof(version));
  std::uint64_t len = header_str.size();
  f.write(reinterpret_cast<const char*>(&len), sizeof(len));
  f.write(header_str.data(), static_cast<std::streamsize>(len));
  for (const auto& p : model.params)
    f.write(reinterpret_cast<const char*>(p.tensor.data()),
            static_cast<std::streamsize>(sizeof(double) * p.tensor.numel()));
  if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("load_checkpoint: " + path +
                             " is not a checkpoint file");
  std::uint32_t version = 0;
  f.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != kVersion)
    throw std::runtime_error("load_checkpoint: unsupported version " +
                             std::to_string(version));
  std::uint64_t len = 0;
  f.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header_str(len, '\0');
  f.read(header_str.data(), static_cast<std::streamsize>(len));
  if (!f) throw std::runtime_error("load_checkpoint: truncated header");
  nlohmann::json header = nlohmann::json::parse(header_str);

  Model model;
  model.config = config_from_json(header.at("config"));
  model.config.validate();
  model.seed = header.at("seed").get<std::uint64_t>();
  for (const auto& t : header.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    const std::vector<int> shape = t.at("shape").get<std::vector<int>>();
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    std::vector<double> data(n);
    f.read(reinterpret_cast<char*>(data.data()),
           static_cast<std::streamsize>(sizeof(double) * n));
    if (!f)
      throw std::runtime_error("load_checkpoint: truncated tensor '" + name +
                               "'");
    model.params.push_back(
        {name, Tensor::from_data(shape, std::move(data), true)});
  }
  return model;
}

}  // namespace srpn
