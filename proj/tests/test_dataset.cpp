#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "srpn/dataset.hpp"
#include "srpn/rng.hpp"

using namespace srpn;

namespace fs = std::filesystem;

TEST_CASE("generate_dataset basics") {
  const SceneSpec spec;
  CHECK(generate_dataset(spec, 0, 1).empty());

  const auto images = generate_dataset(spec, 3, 42);
  REQUIRE(images.size() == 3);
  for (const auto& img : images) {
    CHECK(img.image.shape() == std::vector<int>{3, 64, 64});
    CHECK(static_cast<int>(img.boxes.size()) >= spec.object_count_min);
    CHECK(static_cast<int>(img.boxes.size()) <= spec.object_count_max);
    for (const auto& b : img.boxes) {
      CHECK(b.h >= 2.0);
      CHECK(b.w >= 2.0);
      CHECK(b.x >= 0.0);
      CHECK(b.y >= 0.0);
      CHECK(b.x + b.w <= 64.0);
      CHECK(b.y + b.h <= 64.0);
    }
    for (int i = 0; i < img.image.numel(); ++i) {
      CHECK(img.image.at(i) >= 0.0);
      CHECK(img.image.at(i) <= 1.0);
    }
  }
}

TEST_CASE("generate_dataset is bitwise deterministic in the seed") {
  const SceneSpec spec;
  const auto a = generate_dataset(spec, 4, 7);
  const auto b = generate_dataset(spec, 4, 7);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image.data_vec() == b[i].image.data_vec());
    CHECK(a[i].boxes == b[i].boxes);
    CHECK(a[i].id == b[i].id);
  }
  const auto c = generate_dataset(spec, 4, 8);
  CHECK(a[0].image.data_vec() != c[0].image.data_vec());
}

TEST_CASE("object boxes tightly contain their rendered blobs") {
  // foreground-colored pixels well clear of the background must lie inside
  // some annotation box (targets are fg-colored; so is ring clutter, which
  // is why clutter is disabled here)
  SceneSpec spec;
  spec.clutter_min = spec.clutter_max = 0;
  spec.bg_noise = 0.0;
  spec.fg_color_jitter = 0.0;
  const auto images = generate_dataset(spec, 5, 99);
  for (const auto& img : images) {
    const int size = spec.image_size;
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double dr = img.image.at(0, y, x) - spec.bg_color.r;
        const double dg = img.image.at(1, y, x) - spec.bg_color.g;
        const double db = img.image.at(2, y, x) - spec.bg_color.b;
        if (dr * dr + dg * dg + db * db < 0.02) continue;  // background
        const double px = x + 0.5, py = y + 0.5;
        bool inside = false;
        for (const auto& b : img.boxes)
          inside |= px >= b.x && px <= b.x + b.w && py >= b.y && py <= b.y + b.h;
        CHECK(inside);
      }
    }
  }
}

TEST_CASE("infeasible overlap constraints are reported") {
  SceneSpec spec;
  spec.image_size = 32;
  spec.object_count_min = spec.object_count_max = 30;
  spec.clutter_min = spec.clutter_max = 0;
  spec.overlap_allowance = 0.0;
  spec.radius_min = 6.0;
  spec.radius_max = 8.0;
  CHECK_THROWS_WITH_AS(generate_dataset(spec, 1, 3),
                       doctest::Contains("infeasible"), std::runtime_error);
}

TEST_CASE("horizontal flip maps boxes correctly and is an involution") {
  const auto images = generate_dataset(SceneSpec{}, 1, 5);
  const AnnotatedImage& img = images[0];
  const AnnotatedImage flipped = flip_horizontal(img);

  const int w = img.image.shape()[2];
  for (std::size_t i = 0; i < img.boxes.size(); ++i) {
    CHECK(flipped.boxes[i].x ==
          doctest::Approx(w - img.boxes[i].x - img.boxes[i].w).epsilon(1e-12));
    CHECK(flipped.boxes[i].y == img.boxes[i].y);
    CHECK(flipped.boxes[i].h == img.boxes[i].h);
    CHECK(flipped.boxes[i].w == img.boxes[i].w);
  }

  const AnnotatedImage twice = flip_horizontal(flipped);
  CHECK(twice.image.data_vec() == img.image.data_vec());
  for (std::size_t i = 0; i < img.boxes.size(); ++i) {
    CHECK(std::abs(twice.boxes[i].x - img.boxes[i].x) < 1e-9);
    CHECK(std::abs(twice.boxes[i].y - img.boxes[i].y) < 1e-9);
  }

  const AnnotatedImage vtwice = flip_vertical(flip_vertical(img));
  CHECK(vtwice.image.data_vec() == img.image.data_vec());
}

TEST_CASE("color jitter changes pixels, never boxes") {
  const auto images = generate_dataset(SceneSpec{}, 1, 6);
  const AnnotatedImage& img = images[0];
  const AnnotatedImage jittered = color_jitter(img, 0.03, 0.1, -0.1, 0.15);
  CHECK(jittered.boxes == img.boxes);
  CHECK(jittered.image.data_vec() != img.image.data_vec());
  for (int i = 0; i < jittered.image.numel(); ++i) {
    CHECK(jittered.image.at(i) >= 0.0);
    CHECK(jittered.image.at(i) <= 1.0);
  }

  const AnnotatedImage identity = color_jitter(img, 0.0, 0.0, 0.0, 0.0);
  for (int i = 0; i < img.image.numel(); ++i)
    CHECK(identity.image.at(i) == doctest::Approx(img.image.at(i)).epsilon(1e-9));
}

TEST_CASE("augment is seed-deterministic and keeps boxes valid") {
  const auto images = generate_dataset(SceneSpec{}, 1, 10);
  const AnnotatedImage& img = images[0];
  for (std::uint64_t seed = 0; seed < 24; ++seed) {
    const AnnotatedImage a = augment(img, seed);
    const AnnotatedImage b = augment(img, seed);
    CHECK(a.image.data_vec() == b.image.data_vec());
    CHECK(a.boxes == b.boxes);
    CHECK(a.boxes.size() == img.boxes.size());
    for (const auto& box : a.boxes) {
      CHECK(box.h > 0.0);
      CHECK(box.w > 0.0);
      CHECK(box.x >= -1e-9);
      CHECK(box.y >= -1e-9);
      CHECK(box.x + box.w <= 64.0 + 1e-9);
      CHECK(box.y + box.h <= 64.0 + 1e-9);
    }
  }
}

TEST_CASE("annotations round-trip exactly") {
  const auto path = fs::temp_directory_path() / "srpn_ann_test.jsonl";
  std::vector<AnnotationRecord> records;
  records.push_back({"img_a.png", {}});
  records.push_back({"img_b.png",
                     {BBox{1.25, 2.5, 3.75, 4.125},
                      BBox{0.1, 0.2, 0.3, 0.4},
                      BBox{10.0, 20.0, 30.0, 40.0}}});
  save_annotations(path.string(), records);

  const auto loaded = load_annotations(path.string());
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].image_path == "img_a.png");
  CHECK(loaded[0].boxes.empty());
  CHECK(loaded[1].boxes == records[1].boxes);  // bitwise double round-trip
  fs::remove(path);
}

TEST_CASE("annotation parser rejects malformed input with line numbers") {
  const auto path = fs::temp_directory_path() / "srpn_bad_ann.jsonl";

  {
    std::ofstream f(path);
    f << R"({"image": "a.png", "boxes": []})" << "\n";
    f << R"({"image": "b.png", "boxes": [], "extra": 1})" << "\n";
  }
  CHECK_THROWS_WITH_AS(load_annotations(path.string()),
                       doctest::Contains("unknown field \"extra\""),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(load_annotations(path.string()), doctest::Contains(":2"),
                       std::runtime_error);

  {
    std::ofstream f(path);
    f << R"({"image": "a.png", "boxes": []})" << "\n";
    f << "this is not json\n";
  }
  CHECK_THROWS_WITH_AS(load_annotations(path.string()),
                       doctest::Contains(":2"), std::runtime_error);

  {
    std::ofstream f(path);
    f << R"({"image": "a.png", "boxes": [[1, 2, 3]]})" << "\n";
  }
  CHECK_THROWS_AS(load_annotations(path.string()), std::runtime_error);

  {
    std::ofstream f(path);
    f << R"({"boxes": []})" << "\n";
  }
  CHECK_THROWS_AS(load_annotations(path.string()), std::runtime_error);
  fs::remove(path);
}

TEST_CASE("png round-trip preserves 8-bit data") {
  const auto path = fs::temp_directory_path() / "srpn_png_test.png";
  Tensor img = Tensor::zeros({3, 5, 7});
  Rng rng(3);
  // values on the exact 8-bit grid survive the round trip bit-for-bit
  for (int i = 0; i < img.numel(); ++i)
    img.data()[i] = rng.uniform_int(256) / 255.0;
  write_png(path.string(), img);
  const Tensor back = read_png(path.string());
  REQUIRE(back.shape() == img.shape());
  for (int i = 0; i < img.numel(); ++i)
    CHECK(back.at(i) == doctest::Approx(img.at(i)).epsilon(1e-12));
  fs::remove(path);

  CHECK_THROWS_AS(read_png("/nonexistent/image.png"), std::runtime_error);
}

TEST_CASE("save_dataset / load_dataset round-trip") {
  const auto dir = fs::temp_directory_path() / "srpn_ds_test";
  fs::remove_all(dir);
  const auto images = generate_dataset(SceneSpec{}, 3, 20);
  save_dataset(dir.string(), images);
  CHECK(fs::exists(dir / "annotations.jsonl"));
  CHECK(fs::exists(dir / "img_00000.png"));

  const auto loaded = load_dataset(dir.string());
  REQUIRE(loaded.size() == images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    CHECK(loaded[i].boxes == images[i].boxes);
    CHECK(loaded[i].id == images[i].id);
    // pixels only through 8-bit quantization
    for (int j = 0; j < images[i].image.numel(); ++j)
      CHECK(std::abs(loaded[i].image.at(j) - images[i].image.at(j)) <
            0.5 / 255.0 + 1e-12);
  }
  fs::remove_all(dir);
}
