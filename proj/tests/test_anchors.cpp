#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "srpn/anchors.hpp"
#include "srpn/rng.hpp"

using namespace srpn;

TEST_CASE("generate: single centered anchor") {
  const AnchorSpec spec{{16.0}, {1.0}, 16.0};
  const auto anchors = generate(spec, 1, 1);
  REQUIRE(anchors.size() == 1);
  CHECK(anchors[0] == BBox{0.0, 0.0, 16.0, 16.0});
}

TEST_CASE("generate: counting and ordering") {
  const AnchorSpec spec{{8.0, 16.0, 32.0}, {0.5, 1.0, 2.0}, 8.0};
  const auto anchors = generate(spec, 2, 2);
  CHECK(anchors.size() == 36);  // 2*2 cells x 9 per location

  // index layout: (row*W + col)*A + k
  const auto single = generate(spec, 1, 1);
  for (int cell = 0; cell < 4; ++cell) {
    const int row = cell / 2, col = cell % 2;
    for (int k = 0; k < 9; ++k) {
      const BBox& got = anchors[static_cast<std::size_t>(cell * 9 + k)];
      const BBox& base = single[static_cast<std::size_t>(k)];
      CHECK(got.x == doctest::Approx(base.x + col * 8.0));
      CHECK(got.y == doctest::Approx(base.y + row * 8.0));
      CHECK(got.h == base.h);
      CHECK(got.w == base.w);
    }
  }
}

TEST_CASE("generate: aspect ratio preserves area") {
  const AnchorSpec spec{{16.0}, {4.0}, 16.0};
  const auto anchors = generate(spec, 1, 1);
  REQUIRE(anchors.size() == 1);
  CHECK(anchors[0].h == doctest::Approx(32.0));
  CHECK(anchors[0].w == doctest::Approx(8.0));
  CHECK(anchors[0].area() == doctest::Approx(256.0));
}

TEST_CASE("generate: precondition errors") {
  CHECK_THROWS_AS(generate(AnchorSpec{{}, {1.0}, 8.0}, 2, 2),
                  std::invalid_argument);
  CHECK_THROWS_AS(generate(AnchorSpec{{16.0}, {}, 8.0}, 2, 2),
                  std::invalid_argument);
  CHECK_THROWS_AS(generate(AnchorSpec{{16.0}, {1.0}, 8.0}, 0, 2),
                  std::invalid_argument);
}

TEST_CASE("label_anchors: identity, disjoint, in-between") {
  const std::vector<BBox> anchors = {
      BBox{0, 0, 10, 10},    // identical to gt 0 -> positive
      BBox{40, 40, 10, 10},  // disjoint -> negative
      BBox{0, 0, 10, 20},    // IoU 0.5 with gt 0, not best -> ignore
  };
  const std::vector<BBox> gt = {BBox{0, 0, 10, 10}};
  const auto labeled = label_anchors(anchors, gt);
  REQUIRE(labeled.size() == 3);

  CHECK(labeled[0].label == AnchorLabel::kPositive);
  REQUIRE(labeled[0].matched_gt.has_value());
  CHECK(*labeled[0].matched_gt == 0);
  REQUIRE(labeled[0].target_offsets.has_value());
  CHECK(labeled[0].target_offsets->tx == 0.0);
  CHECK(labeled[0].target_offsets->ty == 0.0);
  CHECK(labeled[0].target_offsets->th == 0.0);
  CHECK(labeled[0].target_offsets->tw == 0.0);

  CHECK(labeled[1].label == AnchorLabel::kNegative);
  CHECK(!labeled[1].matched_gt.has_value());
  CHECK(!labeled[1].target_offsets.has_value());

  CHECK(labeled[2].label == AnchorLabel::kIgnore);
}

TEST_CASE("label_anchors: empty ground truth makes everything negative") {
  const AnchorSpec spec{{8.0, 16.0}, {0.5, 1.0}, 8.0};
  const auto anchors = generate(spec, 3, 3);
  for (const auto& la : label_anchors(anchors, {}))
    CHECK(la.label == AnchorLabel::kNegative);
}

TEST_CASE("label_anchors: best-anchor fallback rescues low-IoU objects") {
  // a small object no anchor reaches 0.7 IoU with
  const std::vector<BBox> gt = {BBox{3, 3, 4, 4}};
  const AnchorSpec spec{{16.0}, {1.0}, 8.0};
  const auto anchors = generate(spec, 2, 2);

  int positives = 0;
  for (const auto& la : label_anchors(anchors, gt))
    positives += la.label == AnchorLabel::kPositive;
  CHECK(positives >= 1);

  int strict_positives = 0;
  for (const auto& la : label_anchors(anchors, gt, 0.7, 0.3, false))
    strict_positives += la.label == AnchorLabel::kPositive;
  CHECK(strict_positives == 0);  // strict-paper mode has no rescue
}

TEST_CASE("label_anchors: partition, coverage, monotonicity") {
  Rng rng(42);
  const AnchorSpec spec{{8.0, 14.0}, {0.5, 1.0, 2.0}, 8.0};
  const auto anchors = generate(spec, 6, 6);

  for (int trial = 0; trial < 50; ++trial) {
    std::vector<BBox> gt;
    const int n_gt = 1 + rng.uniform_int(4);
    for (int i = 0; i < n_gt; ++i)
      gt.push_back(BBox{rng.uniform(0.0, 38.0), rng.uniform(0.0, 38.0),
                        rng.uniform(3.0, 14.0), rng.uniform(3.0, 14.0)});

    const auto labeled = label_anchors(anchors, gt);

    // exactly one label per anchor, offsets present iff positive
    for (const auto& la : labeled) {
      const bool pos = la.label == AnchorLabel::kPositive;
      CHECK(la.target_offsets.has_value() == pos);
      CHECK(la.matched_gt.has_value() == pos);
    }

    // the best anchor of every reachable ground truth is positive
    for (std::size_t j = 0; j < gt.size(); ++j) {
      int best = -1;
      double best_iou = 0.0;
      for (std::size_t i = 0; i < anchors.size(); ++i) {
        const double v = iou(anchors[i], gt[j]);
        if (v > best_iou) {
          best_iou = v;
          best = static_cast<int>(i);
        }
      }
      if (best < 0) continue;  // unreachable object
      CHECK(labeled[static_cast<std::size_t>(best)].label ==
            AnchorLabel::kPositive);
    }

    // raising pos_thresh cannot increase the positive count
    int prev = -1;
    for (double pos_thresh : {0.5, 0.6, 0.7, 0.8}) {
      int count = 0;
      for (const auto& la : label_anchors(anchors, gt, pos_thresh, 0.3))
        count += la.label == AnchorLabel::kPositive;
      if (prev >= 0) CHECK(count <= prev);
      prev = count;
    }
  }
}

TEST_CASE("label_anchors: threshold preconditions") {
  const auto anchors = generate(AnchorSpec{{8.0}, {1.0}, 8.0}, 2, 2);
  CHECK_THROWS_AS(label_anchors(anchors, {}, 0.3, 0.7), std::invalid_argument);
  CHECK_THROWS_AS(label_anchors(anchors, {}, 1.2, 0.3), std::invalid_argument);
}
