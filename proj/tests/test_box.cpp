#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "srpn/box.hpp"
#include "srpn/rng.hpp"

using namespace srpn;

namespace {

// Rasterization oracle: IoU of integer-coordinate boxes by counting unit
// cells, independent of the analytic intersection arithmetic.
double iou_rasterized(const BBox& a, const BBox& b) {
  const int x0 = static_cast<int>(std::min(a.x, b.x));
  const int y0 = static_cast<int>(std::min(a.y, b.y));
  const int x1 = static_cast<int>(std::max(a.x + a.w, b.x + b.w));
  const int y1 = static_cast<int>(std::max(a.y + a.h, b.y + b.h));
  long long inter = 0, uni = 0;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const bool in_a = x >= a.x && x < a.x + a.w && y >= a.y && y < a.y + a.h;
      const bool in_b = x >= b.x && x < b.x + b.w && y >= b.y && y < b.y + b.h;
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Independent greedy-NMS reference, written directly from the definition.
std::vector<ScoredBox> nms_reference(std::vector<ScoredBox> dets,
                                     double threshold) {
  std::vector<ScoredBox> kept;
  std::vector<char> alive(dets.size(), 1);
  for (;;) {
    int best = -1;
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (!alive[i]) continue;
      if (best < 0 || scored_box_before(dets[i], dets[static_cast<std::size_t>(best)]))
        best = static_cast<int>(i);
    }
    if (best < 0) break;
    alive[static_cast<std::size_t>(best)] = 0;
    kept.push_back(dets[static_cast<std::size_t>(best)]);
    for (std::size_t i = 0; i < dets.size(); ++i)
      if (alive[i] &&
          iou(dets[static_cast<std::size_t>(best)].box, dets[i].box) > threshold)
        alive[i] = 0;
  }
  return kept;
}

BBox random_box(Rng& rng, double span, double min_side, double max_side) {
  return BBox{rng.uniform(0.0, span), rng.uniform(0.0, span),
              rng.uniform(min_side, max_side), rng.uniform(min_side, max_side)};
}

}  // namespace

TEST_CASE("iou identities") {
  const BBox a{0, 0, 10, 10};
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, BBox{20, 20, 5, 5}) == 0.0);
  CHECK(iou(a, BBox{10, 0, 10, 10}) == 0.0);  // touching edges do not overlap
  CHECK(iou(BBox{0, 0, 10, 10}, BBox{5, 5, 10, 10}) ==
        doctest::Approx(25.0 / 175.0).epsilon(1e-12));
}

TEST_CASE("iou matches the rasterization oracle on integer boxes") {
  Rng rng(101);
  for (int trial = 0; trial < 500; ++trial) {
    const BBox a{static_cast<double>(rng.uniform_int(20)),
                 static_cast<double>(rng.uniform_int(20)),
                 static_cast<double>(1 + rng.uniform_int(15)),
                 static_cast<double>(1 + rng.uniform_int(15))};
    const BBox b{static_cast<double>(rng.uniform_int(20)),
                 static_cast<double>(rng.uniform_int(20)),
                 static_cast<double>(1 + rng.uniform_int(15)),
                 static_cast<double>(1 + rng.uniform_int(15))};
    CHECK(iou(a, b) == doctest::Approx(iou_rasterized(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("iou symmetry and range") {
  Rng rng(102);
  for (int trial = 0; trial < 500; ++trial) {
    const BBox a = random_box(rng, 50.0, 0.5, 30.0);
    const BBox b = random_box(rng, 50.0, 0.5, 30.0);
    const double v = iou(a, b);
    CHECK(v == iou(b, a));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(iou(a, a) == 1.0);
  }
}

TEST_CASE("encode hand example") {
  const BBox anchor{10, 10, 20, 20};
  const BBox box{12, 14, 40, 10};
  const OffsetTuple t = encode(box, anchor);
  CHECK(t.tx == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(t.ty == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(t.th == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(t.tw == doctest::Approx(std::log(0.5)).epsilon(1e-12));

  const OffsetTuple zero = encode(anchor, anchor);
  CHECK(zero.tx == 0.0);
  CHECK(zero.ty == 0.0);
  CHECK(zero.th == 0.0);
  CHECK(zero.tw == 0.0);

  CHECK_THROWS_AS(encode(BBox{0, 0, -1, 5}, anchor), std::invalid_argument);
  CHECK_THROWS_AS(encode(box, BBox{0, 0, 0, 5}), std::invalid_argument);
}

TEST_CASE("decode hand example and identity") {
  const BBox anchor{10, 10, 20, 20};
  const BBox b = decode(OffsetTuple{0.1, 0.2, std::log(2.0), std::log(0.5)}, anchor);
  CHECK(b.x == doctest::Approx(12.0).epsilon(1e-12));
  CHECK(b.y == doctest::Approx(14.0).epsilon(1e-12));
  CHECK(b.h == doctest::Approx(40.0).epsilon(1e-12));
  CHECK(b.w == doctest::Approx(10.0).epsilon(1e-12));

  const BBox same = decode(OffsetTuple{}, anchor);
  CHECK(same == anchor);
}

TEST_CASE("decode clamps extreme log-ratios and counts them") {
  reset_decode_clamp_count();
  const BBox anchor{0, 0, 2, 2};
  const BBox b = decode(OffsetTuple{0, 0, 125.0, -125.0}, anchor);
  CHECK(std::isfinite(b.h));
  CHECK(std::isfinite(b.w));
  CHECK(b.h == doctest::Approx(2.0 * std::exp(20.0)));
  CHECK(decode_clamp_count() == 1);
  decode(OffsetTuple{0, 0, 0.5, 0.5}, anchor);
  CHECK(decode_clamp_count() == 1);
  reset_decode_clamp_count();
}

TEST_CASE("encode/decode are mutual inverses") {
  Rng rng(103);
  for (int trial = 0; trial < 10000; ++trial) {
    const BBox anchor{rng.uniform(-100.0, 100.0), rng.uniform(-100.0, 100.0),
                      rng.uniform(1.0, 1000.0), rng.uniform(1.0, 1000.0)};
    const BBox box{rng.uniform(-100.0, 100.0), rng.uniform(-100.0, 100.0),
                   rng.uniform(1.0, 1000.0), rng.uniform(1.0, 1000.0)};
    const BBox round = decode(encode(box, anchor), anchor);
    CHECK(std::abs(round.x - box.x) < 1e-9);
    CHECK(std::abs(round.y - box.y) < 1e-9);
    CHECK(std::abs(round.h - box.h) < 1e-9);
    CHECK(std::abs(round.w - box.w) < 1e-9);

    const OffsetTuple t{rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0),
                        rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
    const OffsetTuple t2 = encode(decode(t, anchor), anchor);
    CHECK(std::abs(t2.tx - t.tx) < 1e-9);
    CHECK(std::abs(t2.ty - t.ty) < 1e-9);
    CHECK(std::abs(t2.th - t.th) < 1e-9);
    CHECK(std::abs(t2.tw - t.tw) < 1e-9);
  }
}

TEST_CASE("nms basics") {
  CHECK(nms({}, 0.3).empty());

  const std::vector<ScoredBox> one = {{BBox{0, 0, 5, 5}, 0.4}};
  CHECK(nms(one, 0.3).size() == 1);

  const std::vector<ScoredBox> twins = {{BBox{0, 0, 5, 5}, 0.8},
                                        {BBox{0, 0, 5, 5}, 0.9}};
  const auto kept = nms(twins, 0.3);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].score == 0.9);
}

TEST_CASE("nms agrees with the brute-force reference on random scenes") {
  Rng rng(104);
  for (int scene = 0; scene < 200; ++scene) {
    std::vector<ScoredBox> dets;
    const int n = 1 + rng.uniform_int(50);
    for (int i = 0; i < n; ++i)
      dets.push_back({random_box(rng, 40.0, 2.0, 20.0), rng.uniform(0.0, 1.0)});
    const double thr = rng.uniform(0.1, 0.7);

    const auto ours = nms(dets, thr);
    const auto ref = nms_reference(dets, thr);
    REQUIRE(ours.size() == ref.size());
    for (std::size_t i = 0; i < ours.size(); ++i) {
      CHECK(ours[i].box == ref[i].box);
      CHECK(ours[i].score == ref[i].score);
    }

    // idempotence, ordering, and pairwise-IoU contracts
    const auto twice = nms(ours, thr);
    CHECK(twice.size() == ours.size());
    for (std::size_t i = 0; i + 1 < ours.size(); ++i) {
      CHECK(ours[i].score >= ours[i + 1].score);
      for (std::size_t j = i + 1; j < ours.size(); ++j)
        CHECK(iou(ours[i].box, ours[j].box) <= thr);
    }
  }
}

TEST_CASE("clip_to_image") {
  CHECK(clip_to_image(BBox{-2, -2, 6, 6}, 10, 10) == BBox{0, 0, 4, 4});
  CHECK(clip_to_image(BBox{8, 8, 6, 6}, 10, 10) == BBox{8, 8, 2, 2});
  CHECK(!clip_to_image(BBox{12, 0, 5, 5}, 10, 10).has_value());
  CHECK(!clip_to_image(BBox{-5, 0, 5, 5}, 10, 10).has_value());
}
