#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "srpn/box.hpp"
#include "srpn/image_io.hpp"
#include "srpn/tensor.hpp"

namespace srpn {

// Synthetic "nuclei-blob" scene: filled ellipses are the annotated targets;
// rings and streaks are unannotated distractor clutter that shares the
// targets' color statistics, giving the classifier hard negatives.
struct SceneSpec {
  int image_size = 64;
  int object_count_min = 2;
  int object_count_max = 6;
  double radius_min = 4.0;  // base radius; axes are r*sqrt(e), r/sqrt(e)
  double radius_max = 9.0;
  double eccentricity_min = 1.0;  // major/minor axis ratio
  double eccentricity_max = 2.0;
  double overlap_allowance = 0.10;  // max pairwise IoU between object boxes
  Rgb fg_color{0.35, 0.25, 0.55};
  Rgb bg_color{0.85, 0.78, 0.82};
  double fg_color_jitter = 0.08;  // per-object color perturbation
  double bg_noise = 0.03;         // per-pixel background noise
  int clutter_min = 2;
  int clutter_max = 6;
};

struct AnnotatedImage {
  Tensor image;  // [3,H,W] in [0,1]
  std::vector<BBox> boxes;
  std::string id;
};

// Seed-deterministic scene generation; image i uses mix_seed(seed, i), so
// per-image generation is order-independent. Throws when the overlap
// constraint cannot be met after bounded retries.
std::vector<AnnotatedImage> generate_dataset(const SceneSpec& spec,
                                             int n_images, std::uint64_t seed);

// Paper-style training augmentation: horizontal flip, vertical flip and HSV
// color jitter, each applied with probability 0.5. Flips transform the
// boxes; color jitter touches pixels only.
AnnotatedImage augment(const AnnotatedImage& img, std::uint64_t seed);

// Deterministic pieces of augment(), exposed for direct use.
AnnotatedImage flip_horizontal(const AnnotatedImage& img);
AnnotatedImage flip_vertical(const AnnotatedImage& img);
AnnotatedImage color_jitter(const AnnotatedImage& img, double d_hue,
                            double d_saturation, double d_brightness,
                            double d_contrast);

// Annotation records: one JSON object per line,
// {"image": "<relative path>", "boxes": [[x,y,h,w], ...]}.
struct AnnotationRecord {
  std::string image_path;
  std::vector<BBox> boxes;
};

void save_annotations(const std::string& path,
                      const std::vector<AnnotationRecord>& records);
std::vector<AnnotationRecord> load_annotations(const std::string& path);

// Dataset directory layout: <dir>/annotations.jsonl plus one PNG per image.
void save_dataset(const std::string& dir,
                  const std::vector<AnnotatedImage>& images);
std::vector<AnnotatedImage> load_dataset(const std::string& dir);

}  // namespace srpn
