#include "srpn/config.hpp"

#include "srpn/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace srpn {

namespace {

struct RawValue {
  std::string text;
  int line = 0;
};

// key = value lines, '#' comments, quoted or bare values.
class KvFile {
 public:
  KvFile(const std::string& text, std::string origin)
      : origin_(std::move(origin)) {
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      const auto strip = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
      };
      line = strip(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        fail(line_no, "expected 'key = value'");
      std::string key = strip(line.substr(0, eq));
      std::string value = strip(line.substr(eq + 1));
      if (key.empty()) fail(line_no, "empty key");
      if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
        value = value.substr(1, value.size() - 2);
      if (values_.count(key))
        fail(line_no, "duplicate key '" + key + "'");
      values_[key] = {value, line_no};
    }
  }

  [[noreturn]] void fail(int line, const std::string& msg) const {
    throw ConfigError(origin_ + ":" + std::to_string(line) + ": " + msg);
  }

  bool take(const std::string& key, RawValue* out) {
    auto it = values_.find(key);
    if (it == values_.end()) return false;
    *out = it->second;
    consumed_.insert(key);
    return true;
  }

  double get_double(const std::string& key, double def) {
    RawValue raw;
    if (!take(key, &raw)) return def;
    try {
      std::size_t used = 0;
      const double v = std::stod(raw.text, &used);
      if (used != raw.text.size()) throw std::invalid_argument("trailing text");
      return v;
    } catch (const std::exception&) {
      fail(raw.line, "key '" + key + "': expected a number, got '" + raw.text + "'");
    }
  }

  int get_int(const std::string& key, int def) {
    RawValue raw;
    if (!take(key, &raw)) return def;
    try {
      std::size_t used = 0;
      const long v = std::stol(raw.text, &used);
      if (used != raw.text.size()) throw std::invalid_argument("trailing text");
      return static_cast<int>(v);
    } catch (const std::exception&) {
      fail(raw.line, "key '" + key + "': expected an integer, got '" + raw.text + "'");
    }
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t def) {
    RawValue raw;
    if (!take(key, &raw)) return def;
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(raw.text, &used);
      if (used != raw.text.size()) throw std::invalid_argument("trailing text");
      return v;
    } catch (const std::exception&) {
      fail(raw.line, "key '" + key + "': expected an unsigned integer, got '" +
                         raw.text + "'");
    }
  }

  bool get_bool(const std::string& key, bool def) {
    RawValue raw;
    if (!take(key, &raw)) return def;
    if (raw.text == "true") return true;
    if (raw.text == "false") return false;
    fail(raw.line, "key '" + key + "': expected true/false, got '" + raw.text + "'");
  }

  std::string get_string(const std::string& key, const std::string& def) {
    RawValue raw;
    if (!take(key, &raw)) return def;
    return raw.text;
  }

  std::vector<double> get_list(const std::string& key,
                               const std::vector<double>& def) {
    RawValue raw;
    if (!take(key, &raw)) return def;
    std::vector<double> out;
    std::istringstream in(raw.text);
    std::string item;
    while (std::getline(in, item, ',')) {
      try {
        out.push_back(std::stod(item));
      } catch (const std::exception&) {
        fail(raw.line, "key '" + key + "': expected comma-separated numbers");
      }
    }
    if (out.empty())
      fail(raw.line, "key '" + key + "': expected a non-empty list");
    return out;
  }

  std::vector<int> get_int_list(const std::string& key,
                                const std::vector<int>& def) {
    RawValue raw;
    if (!take(key, &raw)) return def;
    std::vector<int> out;
    std::istringstream in(raw.text);
    std::string item;
    while (std::getline(in, item, ',')) {
      try {
        out.push_back(std::stoi(item));
      } catch (const std::exception&) {
        fail(raw.line, "key '" + key + "': expected comma-separated integers");
      }
    }
    if (out.empty())
      fail(raw.line, "key '" + key + "': expected a non-empty list");
    return out;
  }

  void reject_unknown() const {
    for (const auto& [key, raw] : values_) {
      if (!consumed_.count(key))
        fail(raw.line, "unknown key '" + key + "'");
    }
  }

 private:
  std::string origin_;
  std::map<std::string, RawValue> values_;
  std::set<std::string> consumed_;
};

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += fmt_double(v[i]);
  }
  return out;
}

std::string fmt_int_list(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

EmbedMode embed_mode_from_string(const std::string& s, KvFile& kv, int line) {
  if (s == "none") return EmbedMode::kNone;
  if (s == "pair") return EmbedMode::kPair;
  if (s == "triplet") return EmbedMode::kTriplet;
  kv.fail(line, "train.embed_mode must be none|pair|triplet, got '" + s + "'");
}

const char* embed_mode_to_string(EmbedMode m) {
  switch (m) {
    case EmbedMode::kNone: return "none";
    case EmbedMode::kPair: return "pair";
    case EmbedMode::kTriplet: return "triplet";
  }
  return "none";
}

}  // namespace

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw MissingFileError("config: cannot open " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return from_string(buf.str(), path);
}

ExperimentConfig ExperimentConfig::from_string(const std::string& text,
                                               const std::string& origin) {
  KvFile kv(text, origin);
  ExperimentConfig c;

  c.seed = kv.get_u64("seed", c.seed);
  c.synth_images = kv.get_int("synth.images", c.synth_images);

  SceneSpec& sc = c.scene;
  sc.image_size = kv.get_int("scene.image_size", sc.image_size);
  sc.object_count_min = kv.get_int("scene.object_count_min", sc.object_count_min);
  sc.object_count_max = kv.get_int("scene.object_count_max", sc.object_count_max);
  sc.radius_min = kv.get_double("scene.radius_min", sc.radius_min);
  sc.radius_max = kv.get_double("scene.radius_max", sc.radius_max);
  sc.eccentricity_min = kv.get_double("scene.eccentricity_min", sc.eccentricity_min);
  sc.eccentricity_max = kv.get_double("scene.eccentricity_max", sc.eccentricity_max);
  sc.overlap_allowance = kv.get_double("scene.overlap_allowance", sc.overlap_allowance);
  sc.fg_color.r = kv.get_double("scene.fg_color_r", sc.fg_color.r);
  sc.fg_color.g = kv.get_double("scene.fg_color_g", sc.fg_color.g);
  sc.fg_color.b = kv.get_double("scene.fg_color_b", sc.fg_color.b);
  sc.bg_color.r = kv.get_double("scene.bg_color_r", sc.bg_color.r);
  sc.bg_color.g = kv.get_double("scene.bg_color_g", sc.bg_color.g);
  sc.bg_color.b = kv.get_double("scene.bg_color_b", sc.bg_color.b);
  sc.fg_color_jitter = kv.get_double("scene.fg_color_jitter", sc.fg_color_jitter);
  sc.bg_noise = kv.get_double("scene.bg_noise", sc.bg_noise);
  sc.clutter_min = kv.get_int("scene.clutter_min", sc.clutter_min);
  sc.clutter_max = kv.get_int("scene.clutter_max", sc.clutter_max);

  HeadConfig& hd = c.head;
  hd.backbone_channels =
      kv.get_int_list("head.backbone_channels", hd.backbone_channels);
  hd.c1 = kv.get_int("head.c1", hd.c1);
  hd.c2 = kv.get_int("head.c2", hd.c2);
  hd.dim_embedding = kv.get_int("head.dim_embedding", hd.dim_embedding);
  hd.classifier_on_shared =
      kv.get_bool("head.classifier_on_shared", hd.classifier_on_shared);

  TrainConfig& tr = c.train;
  tr.anchor_spec.scales = kv.get_list("anchor.scales", tr.anchor_spec.scales);
  tr.anchor_spec.ratios = kv.get_list("anchor.ratios", tr.anchor_spec.ratios);
  tr.learning_rate = kv.get_double("train.learning_rate", tr.learning_rate);
  tr.momentum = kv.get_double("train.momentum", tr.momentum);
  tr.batch_size = kv.get_int("train.batch_size", tr.batch_size);
  tr.iterations = kv.get_int("train.iterations", tr.iterations);
  {
    RawValue raw;
    if (kv.take("train.embed_mode", &raw))
      tr.embed_mode = embed_mode_from_string(raw.text, kv, raw.line);
  }
  tr.margin = kv.get_double("train.margin", tr.margin);
  tr.loss_weights.embed = kv.get_double("train.lambda_embed", tr.loss_weights.embed);
  tr.loss_weights.loc = kv.get_double("train.lambda_loc", tr.loss_weights.loc);
  tr.loss_weights.cls = kv.get_double("train.lambda_cls", tr.loss_weights.cls);
  tr.pos_thresh = kv.get_double("train.pos_thresh", tr.pos_thresh);
  tr.neg_thresh = kv.get_double("train.neg_thresh", tr.neg_thresh);
  tr.best_anchor_fallback =
      kv.get_bool("train.best_anchor_fallback", tr.best_anchor_fallback);
  tr.ohem = kv.get_bool("train.ohem", tr.ohem);
  tr.neg_pos_ratio = kv.get_double("train.neg_pos_ratio", tr.neg_pos_ratio);
  tr.ohem_max_total = kv.get_int("train.ohem_max_total", tr.ohem_max_total);
  {
    RawValue raw;
    if (kv.take("train.cls_loss", &raw)) {
      if (raw.text == "ce")
        tr.cls_loss = ClsLossKind::kCrossEntropy;
      else if (raw.text == "focal")
        tr.cls_loss = ClsLossKind::kFocal;
      else
        kv.fail(raw.line, "train.cls_loss must be ce|focal, got '" + raw.text + "'");
    }
  }
  tr.focal_alpha = kv.get_double("train.focal_alpha", tr.focal_alpha);
  tr.focal_gamma = kv.get_double("train.focal_gamma", tr.focal_gamma);
  tr.augment = kv.get_bool("train.augment", tr.augment);
  tr.normalize_losses = kv.get_bool("train.normalize_losses", tr.normalize_losses);
  tr.embed_samples = kv.get_int("train.embed_samples", tr.embed_samples);

  EvalOptions& ev = c.eval;
  ev.score_threshold = kv.get_double("eval.score_threshold", ev.score_threshold);
  ev.nms_iou = kv.get_double("eval.nms_iou", ev.nms_iou);
  ev.match_iou = kv.get_double("eval.match_iou", ev.match_iou);

  kv.reject_unknown();
  c.finalize();
  return c;
}

void ExperimentConfig::finalize() {
  head.num_anchor = train.anchor_spec.anchors_per_location();
  train.anchor_spec.stride = head.stride();
  train.seed = seed;
  head.validate();
}

AnchorSpec ExperimentConfig::anchors() const {
  AnchorSpec spec = train.anchor_spec;
  spec.stride = head.stride();
  return spec;
}

std::string ExperimentConfig::to_string() const {
  std::ostringstream os;
  os << "# resolved experiment configuration\n";
  os << "seed = " << seed << "\n";
  os << "synth.images = " << synth_images << "\n";
  os << "\n";
  os << "scene.image_size = " << scene.image_size << "\n";
  os << "scene.object_count_min = " << scene.object_count_min << "\n";
  os << "scene.object_count_max = " << scene.object_count_max << "\n";
  os << "scene.radius_min = " << fmt_double(scene.radius_min) << "\n";
  os << "scene.radius_max = " << fmt_double(scene.radius_max) << "\n";
  os << "scene.eccentricity_min = " << fmt_double(scene.eccentricity_min) << "\n";
  os << "scene.eccentricity_max = " << fmt_double(scene.eccentricity_max) << "\n";
  os << "scene.overlap_allowance = " << fmt_double(scene.overlap_allowance) << "\n";
  os << "scene.fg_color_r = " << fmt_double(scene.fg_color.r) << "\n";
  os << "scene.fg_color_g = " << fmt_double(scene.fg_color.g) << "\n";
  os << "scene.fg_color_b = " << fmt_double(scene.fg_color.b) << "\n";
  os << "scene.bg_color_r = " << fmt_double(scene.bg_color.r) << "\n";
  os << "scene.bg_color_g = " << fmt_double(scene.bg_color.g) << "\n";
  os << "scene.bg_color_b = " << fmt_double(scene.bg_color.b) << "\n";
  os << "scene.fg_color_jitter = " << fmt_double(scene.fg_color_jitter) << "\n";
  os << "scene.bg_noise = " << fmt_double(scene.bg_noise) << "\n";
  os << "scene.clutter_min = " << scene.clutter_min << "\n";
  os << "scene.clutter_max = " << scene.clutter_max << "\n";
  os << "\n";
  os << "head.backbone_channels = " << fmt_int_list(head.backbone_channels) << "\n";
  os << "head.c1 = " << head.c1 << "\n";
  os << "head.c2 = " << head.c2 << "\n";
  os << "head.dim_embedding = " << head.dim_embedding << "\n";
  os << "head.classifier_on_shared = "
     << (head.classifier_on_shared ? "true" : "false") << "\n";
  os << "\n";
  os << "anchor.scales = " << fmt_list(train.anchor_spec.scales) << "\n";
  os << "anchor.ratios = " << fmt_list(train.anchor_spec.ratios) << "\n";
  os << "\n";
  os << "train.learning_rate = " << fmt_double(train.learning_rate) << "\n";
  os << "train.momentum = " << fmt_double(train.momentum) << "\n";
  os << "train.batch_size = " << train.batch_size << "\n";
  os << "train.iterations = " << train.iterations << "\n";
  os << "train.embed_mode = " << embed_mode_to_string(train.embed_mode) << "\n";
  os << "train.margin = " << fmt_double(train.margin) << "\n";
  os << "train.lambda_embed = " << fmt_double(train.loss_weights.embed) << "\n";
  os << "train.lambda_loc = " << fmt_double(train.loss_weights.loc) << "\n";
  os << "train.lambda_cls = " << fmt_double(train.loss_weights.cls) << "\n";
  os << "train.pos_thresh = " << fmt_double(train.pos_thresh) << "\n";
  os << "train.neg_thresh = " << fmt_double(train.neg_thresh) << "\n";
  os << "train.best_anchor_fallback = "
     << (train.best_anchor_fallback ? "true" : "false") << "\n";
  os << "train.ohem = " << (train.ohem ? "true" : "false") << "\n";
  os << "train.neg_pos_ratio = " << fmt_double(train.neg_pos_ratio) << "\n";
  os << "train.ohem_max_total = " << train.ohem_max_total << "\n";
  os << "train.cls_loss = "
     << (train.cls_loss == ClsLossKind::kCrossEntropy ? "ce" : "focal") << "\n";
  os << "train.focal_alpha = " << fmt_double(train.focal_alpha) << "\n";
  os << "train.focal_gamma = " << fmt_double(train.focal_gamma) << "\n";
  os << "train.augment = " << (train.augment ? "true" : "false") << "\n";
  os << "train.normalize_losses = "
     << (train.normalize_losses ? "true" : "false") << "\n";
  os << "train.embed_samples = " << train.embed_samples << "\n";
  os << "\n";
  os << "eval.score_threshold = " << fmt_double(eval.score_threshold) << "\n";
  os << "eval.nms_iou = " << fmt_double(eval.nms_iou) << "\n";
  os << "eval.match_iou = " << fmt_double(eval.match_iou) << "\n";
  return os.str();
}

}  // namespace srpn
