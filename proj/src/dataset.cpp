#include "srpn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "srpn/rng.hpp"

namespace srpn {

namespace {

constexpr int kPlacementRetries = 200;

struct Ellipse {
  double cx, cy;      // center
  double a, b;        // semi-axes, a along the rotated x direction
  double theta;       // rotation in radians
  Rgb color;

  // normalized squared radial coordinate; <= 1 inside
  double q(double px, double py) const {
    const double dx = px - cx, dy = py - cy;
    const double c = std::cos(theta), s = std::sin(theta);
    const double u = c * dx + s * dy;
    const double v = -s * dx + c * dy;
    return (u / a) * (u / a) + (v / b) * (v / b);
  }

  BBox bbox() const {
    const double c = std::cos(theta), s = std::sin(theta);
    const double hx = std::sqrt(a * a * c * c + b * b * s * s);
    const double hy = std::sqrt(a * a * s * s + b * b * c * c);
    return BBox{cx - hx, cy - hy, 2.0 * hy, 2.0 * hx};
  }
};

void validate_spec(const SceneSpec& spec) {
  if (spec.image_size < 16)
    throw std::invalid_argument("SceneSpec: image_size must be >= 16");
  if (spec.object_count_min < 0 || spec.object_count_max < spec.object_count_min)
    throw std::invalid_argument("SceneSpec: bad object count range");
  if (spec.clutter_min < 0 || spec.clutter_max < spec.clutter_min)
    throw std::invalid_argument("SceneSpec: bad clutter count range");
  if (spec.radius_min < 1.5 || spec.radius_max < spec.radius_min)
    throw std::invalid_argument("SceneSpec: bad radius range (min 1.5)");
  if (spec.eccentricity_min < 1.0 ||
      spec.eccentricity_max < spec.eccentricity_min)
    throw std::invalid_argument("SceneSpec: bad eccentricity range (min 1.0)");
  if (spec.radius_min < std::sqrt(spec.eccentricity_max))
    throw std::invalid_argument(
        "SceneSpec: radius_min too small for eccentricity_max (boxes could "
        "shrink below 2 pixels)");
  if (spec.overlap_allowance < 0.0 || spec.overlap_allowance > 1.0)
    throw std::invalid_argument("SceneSpec: overlap_allowance must be in [0,1]");
}

Rgb jitter_color(const Rgb& base, double amount, Rng& rng) {
  auto j = [&](double v) {
    return std::clamp(v + rng.uniform(-amount, amount), 0.0, 1.0);
  };
  return Rgb{j(base.r), j(base.g), j(base.b)};
}

// Draws an ellipse with an acceptable box overlap against what is already
// placed, or throws after bounded retries.
Ellipse place_ellipse(const SceneSpec& spec, double radius_lo, double radius_hi,
                      double ecc_lo, double ecc_hi,
                      const std::vector<BBox>& occupied, Rng& rng,
                      const char* what) {
  for (int attempt = 0; attempt < kPlacementRetries; ++attempt) {
    const double r = rng.uniform(radius_lo, radius_hi);
    const double e = rng.uniform(ecc_lo, ecc_hi);
    Ellipse el;
    el.a = r * std::sqrt(e);
    el.b = r / std::sqrt(e);
    el.theta = rng.uniform(0.0, 3.14159265358979323846);
    const double margin = std::max(el.a, el.b) + 1.0;
    if (2.0 * margin >= spec.image_size)
      throw std::invalid_argument(
          std::string("generate_dataset: ") + what +
          " does not fit the image at the configured radius range");
    el.cx = rng.uniform(margin, spec.image_size - margin);
    el.cy = rng.uniform(margin, spec.image_size - margin);
    const BBox box = el.bbox();
    bool ok = true;
    for (const BBox& other : occupied)
      if (iou(box, other) > spec.overlap_allowance) {
        ok = false;
        break;
      }
    if (ok) return el;
  }
  throw std::runtime_error(
      std::string("generate_dataset: infeasible overlap constraint placing ") +
      what);
}

void fill_background(Tensor& image, const SceneSpec& spec, Rng& rng) {
  const int h = image.shape()[1], w = image.shape()[2];
  double* d = image.data();
  const double base[3] = {spec.bg_color.r, spec.bg_color.g, spec.bg_color.b};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double n = rng.uniform(-spec.bg_noise, spec.bg_noise);
      for (int c = 0; c < 3; ++c)
        d[(static_cast<std::size_t>(c) * h + y) * w + x] =
            std::clamp(base[c] + n, 0.0, 1.0);
    }
  }
}

void paint(Tensor& image, int y, int x, const Rgb& color, double shade) {
  const int h = image.shape()[1], w = image.shape()[2];
  double* d = image.data();
  d[(static_cast<std::size_t>(0) * h + y) * w + x] = std::clamp(color.r * shade, 0.0, 1.0);
  d[(static_cast<std::size_t>(1) * h + y) * w + x] = std::clamp(color.g * shade, 0.0, 1.0);
  d[(static_cast<std::size_t>(2) * h + y) * w + x] = std::clamp(color.b * shade, 0.0, 1.0);
}

// q_lo = 0 fills the ellipse; q_lo > 0 leaves the interior untouched,
// producing a ring.
void render_ellipse(Tensor& image, const Ellipse& el, double q_lo, Rng& rng,
                    double texture_noise) {
  const int h = image.shape()[1], w = image.shape()[2];
  const BBox box = el.bbox();
  const int y0 = std::max(0, static_cast<int>(std::floor(box.y)));
  const int y1 = std::min(h - 1, static_cast<int>(std::ceil(box.y + box.h)));
  const int x0 = std::max(0, static_cast<int>(std::floor(box.x)));
  const int x1 = std::min(w - 1, static_cast<int>(std::ceil(box.x + box.w)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double q = el.q(x + 0.5, y + 0.5);
      if (q > 1.0 || q < q_lo) continue;
      const double shade =
          (1.0 - 0.2 * q) + rng.uniform(-texture_noise, texture_noise);
      paint(image, y, x, el.color, shade);
    }
  }
}

AnnotatedImage generate_image(const SceneSpec& spec, std::uint64_t image_seed,
                              const std::string& id) {
  Rng rng(image_seed);
  AnnotatedImage out;
  out.id = id;
  out.image = Tensor::zeros({3, spec.image_size, spec.image_size});
  fill_background(out.image, spec, rng);

  const int n_objects =
      spec.object_count_min +
      (spec.object_count_max > spec.object_count_min
           ? rng.uniform_int(spec.object_count_max - spec.object_count_min + 1)
           : 0);
  const int n_clutter =
      spec.clutter_min +
      (spec.clutter_max > spec.clutter_min
           ? rng.uniform_int(spec.clutter_max - spec.clutter_min + 1)
           : 0);

  std::vector<BBox> occupied;

  // distractor clutter first so targets may partially occlude it
  for (int i = 0; i < n_clutter; ++i) {
    const bool ring = rng.bernoulli(0.5);
    Ellipse el;
    if (ring) {
      el = place_ellipse(spec, spec.radius_min, spec.radius_max,
                         spec.eccentricity_min, spec.eccentricity_max,
                         occupied, rng, "clutter");
      el.color = jitter_color(spec.fg_color, spec.fg_color_jitter, rng);
      occupied.push_back(el.bbox());
      render_ellipse(out.image, el, 0.45, rng, 0.02);
    } else {
      // streak: thin, elongated, color between foreground and background;
      // the base radius shrinks so the long axis stays nucleus-sized
      el = place_ellipse(spec, 0.55 * spec.radius_min, 0.85 * spec.radius_min,
                         8.0, 14.0, occupied, rng, "clutter");
      const Rgb mix{0.5 * (spec.fg_color.r + spec.bg_color.r),
                    0.5 * (spec.fg_color.g + spec.bg_color.g),
                    0.5 * (spec.fg_color.b + spec.bg_color.b)};
      el.color = jitter_color(mix, spec.fg_color_jitter, rng);
      occupied.push_back(el.bbox());
      render_ellipse(out.image, el, 0.0, rng, 0.02);
    }
  }

  for (int i = 0; i < n_objects; ++i) {
    Ellipse el = place_ellipse(spec, spec.radius_min, spec.radius_max,
                               spec.eccentricity_min, spec.eccentricity_max,
                               occupied, rng, "target");
    el.color = jitter_color(spec.fg_color, spec.fg_color_jitter, rng);
    occupied.push_back(el.bbox());
    render_ellipse(out.image, el, 0.0, rng, 0.02);
    const auto clipped = clip_to_image(el.bbox(), spec.image_size, spec.image_size);
    out.boxes.push_back(*clipped);
  }
  return out;
}

}  // namespace

std::vector<AnnotatedImage> generate_dataset(const SceneSpec& spec,
                                             int n_images,
                                             std::uint64_t seed) {
  validate_spec(spec);
  if (n_images < 0)
    throw std::invalid_argument("generate_dataset: n_images must be >= 0");
  std::vector<AnnotatedImage> images;
  images.reserve(static_cast<std::size_t>(n_images));
  for (int i = 0; i < n_images; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "img_%05d", i);
    images.push_back(generate_image(spec, mix_seed(seed, static_cast<std::uint64_t>(i)), id));
  }
  return images;
}

AnnotatedImage flip_horizontal(const AnnotatedImage& img) {
  const int h = img.image.shape()[1], w = img.image.shape()[2];
  AnnotatedImage out;
  out.id = img.id;
  out.image = Tensor::zeros({3, h, w});
  const double* src = img.image.data();
  double* dst = out.image.data();
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        dst[(static_cast<std::size_t>(c) * h + y) * w + x] =
            src[(static_cast<std::size_t>(c) * h + y) * w + (w - 1 - x)];
  for (const BBox& b : img.boxes)
    out.boxes.push_back(BBox{w - b.x - b.w, b.y, b.h, b.w});
  return out;
}

AnnotatedImage flip_vertical(const AnnotatedImage& img) {
  const int h = img.image.shape()[1], w = img.image.shape()[2];
  AnnotatedImage out;
  out.id = img.id;
  out.image = Tensor::zeros({3, h, w});
  const double* src = img.image.data();
  double* dst = out.image.data();
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        dst[(static_cast<std::size_t>(c) * h + y) * w + x] =
            src[(static_cast<std::size_t>(c) * h + (h - 1 - y)) * w + x];
  for (const BBox& b : img.boxes)
    out.boxes.push_back(BBox{b.x, h - b.y - b.h, b.h, b.w});
  return out;
}

namespace {

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double cmax = std::max({r, g, b});
  const double cmin = std::min({r, g, b});
  const double delta = cmax - cmin;
  v = cmax;
  s = cmax > 0.0 ? delta / cmax : 0.0;
  if (delta <= 0.0) {
    h = 0.0;
    return;
  }
  if (cmax == r)
    h = (g - b) / delta;
  else if (cmax == g)
    h = (b - r) / delta + 2.0;
  else
    h = (r - g) / delta + 4.0;
  h /= 6.0;
  if (h < 0.0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double hh = (h - std::floor(h)) * 6.0;
  const int i = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (i) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

}  // namespace

AnnotatedImage color_jitter(const AnnotatedImage& img, double d_hue,
                            double d_saturation, double d_brightness,
                            double d_contrast) {
  const int h = img.image.shape()[1], w = img.image.shape()[2];
  AnnotatedImage out;
  out.id = img.id;
  out.boxes = img.boxes;
  out.image = Tensor::zeros({3, h, w});
  const double* src = img.image.data();
  double* dst = out.image.data();
  const std::size_t plane = static_cast<std::size_t>(h) * w;

  double mean = 0.0;
  for (std::size_t i = 0; i < 3 * plane; ++i) mean += src[i];
  mean /= static_cast<double>(3 * plane);

  for (std::size_t i = 0; i < plane; ++i) {
    double hh, ss, vv;
    rgb_to_hsv(src[i], src[plane + i], src[2 * plane + i], hh, ss, vv);
    hh += d_hue;
    ss = std::clamp(ss * (1.0 + d_saturation), 0.0, 1.0);
    double r, g, b;
    hsv_to_rgb(hh, ss, vv, r, g, b);
    const double rgb[3] = {r, g, b};
    for (int c = 0; c < 3; ++c) {
      double v = rgb[c] * (1.0 + d_brightness);
      v = (v - mean) * (1.0 + d_contrast) + mean;
      dst[c * plane + i] = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

AnnotatedImage augment(const AnnotatedImage& img, std::uint64_t seed) {
  Rng rng(seed);
  AnnotatedImage out = img;
  if (rng.bernoulli(0.5)) out = flip_horizontal(out);
  if (rng.bernoulli(0.5)) out = flip_vertical(out);
  if (rng.bernoulli(0.5)) {
    const double d_hue = rng.uniform(-0.05, 0.05);
    const double d_sat = rng.uniform(-0.2, 0.2);
    const double d_bright = rng.uniform(-0.2, 0.2);
    const double d_contrast = rng.uniform(-0.2, 0.2);
    out = color_jitter(out, d_hue, d_sat, d_bright, d_contrast);
  }
  return out;
}

void save_annotations(const std::string& path,
                      const std::vector<AnnotationRecord>& records) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_annotations: cannot open " + path);
  for (const auto& rec : records) {
    nlohmann::json boxes = nlohmann::json::array();
    for (const BBox& b : rec.boxes)
      boxes.push_back(nlohmann::json::array({b.x, b.y, b.h, b.w}));
    nlohmann::json line{{"image", rec.image_path}, {"boxes", boxes}};
    f << line.dump() << "\n";
  }
  if (!f) throw std::runtime_error("save_annotations: write failed for " + path);
}

std::vector<AnnotationRecord> load_annotations(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_annotations: cannot open " + path);
  std::vector<AnnotationRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error(where + ": malformed record: " + e.what());
    }
    if (!j.is_object())
      throw std::runtime_error(where + ": record must be a JSON object");
    AnnotationRecord rec;
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.key() == "image") {
        if (!it.value().is_string())
          throw std::runtime_error(where + ": \"image\" must be a string");
        rec.image_path = it.value().get<std::string>();
      } else if (it.key() == "boxes") {
        if (!it.value().is_array())
          throw std::runtime_error(where + ": \"boxes\" must be an array");
        for (const auto& bj : it.value()) {
          if (!bj.is_array() || bj.size() != 4)
            throw std::runtime_error(where +
                                     ": each box must be [x,y,h,w]");
          rec.boxes.push_back(BBox{bj[0].get<double>(), bj[1].get<double>(),
                                   bj[2].get<double>(), bj[3].get<double>()});
        }
      } else {
        throw std::runtime_error(where + ": unknown field \"" + it.key() +
                                 "\"");
      }
    }
    if (!j.contains("image") || !j.contains("boxes"))
      throw std::runtime_error(where + ": record needs \"image\" and \"boxes\"");
    records.push_back(std::move(rec));
  }
  return records;
}

void save_dataset(const std::string& dir,
                  const std::vector<AnnotatedImage>& images) {
  std::filesystem::create_directories(dir);
  std::vector<AnnotationRecord> records;
  for (const auto& img : images) {
    const std::string name = img.id + ".png";
    write_png((std::filesystem::path(dir) / name).string(), img.image);
    records.push_back({name, img.boxes});
  }
  save_annotations((std::filesystem::path(dir) / "annotations.jsonl").string(),
                   records);
}

std::vector<AnnotatedImage> load_dataset(const std::string& dir) {
  const auto ann = std::filesystem::path(dir) / "annotations.jsonl";
  if (!std::filesystem::exists(ann))
    throw std::runtime_error("load_dataset: missing " + ann.string());
  std::vector<AnnotatedImage> images;
  for (const auto& rec : load_annotations(ann.string())) {
    AnnotatedImage img;
    img.image = read_png((std::filesystem::path(dir) / rec.image_path).string());
    img.boxes = rec.boxes;
    img.id = std::filesystem::path(rec.image_path).stem().string();
    images.push_back(std::move(img));
  }
  return images;
}

}  // namespace srpn
