#include "srpn/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "srpn/rng.hpp"

namespace srpn {

std::vector<int> ohem_select(const std::vector<LabeledAnchor>& anchors,
                             const std::vector<double>& per_anchor_cls_loss,
                             double neg_pos_ratio, int max_total) {
  if (anchors.size() != per_anchor_cls_loss.size())
    throw std::invalid_argument(
        "ohem_select: loss list not aligned with anchors (" +
        std::to_string(anchors.size()) + " anchors, " +
        std::to_string(per_anchor_cls_loss.size()) + " losses)");
  if (neg_pos_ratio < 0.0 || max_total < 0)
    throw std::invalid_argument(
        "ohem_select: ratio and max_total must be non-negative");

  std::vector<int> pos, neg;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    switch (anchors[i].label) {
      case AnchorLabel::kPositive:
        pos.push_back(static_cast<int>(i));
        break;
      case AnchorLabel::kNegative:
        neg.push_back(static_cast<int>(i));
        break;
      case AnchorLabel::kIgnore:
        throw std::invalid_argument(
            "ohem_select: ignore-labeled anchors must be excluded upstream");
    }
  }

  auto harder_first = [&](int a, int b) {
    return per_anchor_cls_loss[static_cast<std::size_t>(a)] >
           per_anchor_cls_loss[static_cast<std::size_t>(b)];
  };
  std::stable_sort(pos.begin(), pos.end(), harder_first);
  std::stable_sort(neg.begin(), neg.end(), harder_first);

  std::vector<int> selected;
  if (pos.empty()) {
    const int n_neg = std::min<int>(static_cast<int>(neg.size()), max_total);
    selected.assign(neg.begin(), neg.begin() + n_neg);
  } else {
    const int pos_cap = static_cast<int>(
        std::floor(static_cast<double>(max_total) / (1.0 + neg_pos_ratio)));
    const int n_pos = std::min<int>(static_cast<int>(pos.size()), pos_cap);
    const int n_neg = std::min<int>(
        {static_cast<int>(neg.size()),
         static_cast<int>(std::floor(neg_pos_ratio * n_pos)),
         max_total - n_pos});
    selected.assign(pos.begin(), pos.begin() + n_pos);
    selected.insert(selected.end(), neg.begin(), neg.begin() + std::max(0, n_neg));
  }
  std::sort(selected.begin(), selected.end());
  return selected;
}

namespace {

void check_embedding_dims(const EmbeddingSet& embeddings, const char* op) {
  for (const auto& e : embeddings) {
    if (!e.epsilon.defined() || e.epsilon.shape().size() != 1)
      throw std::invalid_argument(std::string(op) +
                                  ": embeddings must be 1-D tensors");
    if (e.epsilon.shape() != embeddings.front().epsilon.shape())
      throw std::invalid_argument(std::string(op) +
                                  ": embeddings must share one dimension");
    if (e.label != 0 && e.label != 1)
      throw std::invalid_argument(std::string(op) +
                                  ": labels must be 0 or 1");
  }
}

}  // namespace

PairSet make_pairs(const EmbeddingSet& embeddings, int n_pairs,
                   std::uint64_t rng_seed) {
  if (n_pairs < 1)
    throw std::invalid_argument("make_pairs: n_pairs must be >= 1");
  check_embedding_dims(embeddings, "make_pairs");

  std::vector<int> by_label[2];
  for (std::size_t i = 0; i < embeddings.size(); ++i)
    by_label[embeddings[i].label].push_back(static_cast<int>(i));

  std::vector<int> sim_classes;  // labels able to produce a similar pair
  for (int c : {0, 1})
    if (by_label[c].size() >= 2) sim_classes.push_back(c);
  const bool can_sim = !sim_classes.empty();
  const bool can_dis = !by_label[0].empty() && !by_label[1].empty();

  PairSet out;
  if (!can_sim && !can_dis) {
    out.degenerate = true;  // zero or one embedding
    return out;
  }

  int want_sim = (n_pairs + 1) / 2;
  int want_dis = n_pairs / 2;
  if (!can_dis) {
    want_sim = n_pairs;
    want_dis = 0;
    out.degenerate = true;
  } else if (!can_sim) {
    want_sim = 0;
    want_dis = n_pairs;
    out.degenerate = true;
  }

  Rng rng(rng_seed);
  // members eligible as the first element of a similar pair
  std::vector<int> sim_pool;
  for (int c : sim_classes)
    sim_pool.insert(sim_pool.end(), by_label[c].begin(), by_label[c].end());

  out.pairs.reserve(static_cast<std::size_t>(n_pairs));
  for (int k = 0; k < want_sim; ++k) {
    const int a = sim_pool[static_cast<std::size_t>(rng.uniform_int(
        static_cast<int>(sim_pool.size())))];
    const auto& cls = by_label[embeddings[static_cast<std::size_t>(a)].label];
    int b = a;
    while (b == a)
      b = cls[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(cls.size())))];
    out.pairs.push_back({embeddings[static_cast<std::size_t>(a)].epsilon,
                         embeddings[static_cast<std::size_t>(b)].epsilon, 1});
  }
  for (int k = 0; k < want_dis; ++k) {
    const int a = by_label[1][static_cast<std::size_t>(
        rng.uniform_int(static_cast<int>(by_label[1].size())))];
    const int b = by_label[0][static_cast<std::size_t>(
        rng.uniform_int(static_cast<int>(by_label[0].size())))];
    out.pairs.push_back({embeddings[static_cast<std::size_t>(a)].epsilon,
                         embeddings[static_cast<std::size_t>(b)].epsilon, 0});
  }
  return out;
}

TripletSet make_triplets(const EmbeddingSet& embeddings, int n_triplets,
                         std::uint64_t rng_seed) {
  if (n_triplets < 1)
    throw std::invalid_argument("make_triplets: n_triplets must be >= 1");
  check_embedding_dims(embeddings, "make_triplets");

  std::vector<int> by_label[2];
  for (std::size_t i = 0; i < embeddings.size(); ++i)
    by_label[embeddings[i].label].push_back(static_cast<int>(i));

  auto can_anchor = [&](int c) {
    return by_label[c].size() >= 2 && !by_label[1 - c].empty();
  };
  if (!can_anchor(0) && !can_anchor(1)) {
    if (by_label[1].empty() && by_label[0].empty())
      throw std::invalid_argument("make_triplets: empty embedding set");
    if (by_label[0].empty())
      throw std::invalid_argument(
          "make_triplets: negative (label 0) class is empty");
    if (by_label[1].empty())
      throw std::invalid_argument(
          "make_triplets: positive (label 1) class is empty");
    throw std::invalid_argument(
        "make_triplets: no class has two embeddings to form (anchor, "
        "positive)");
  }

  Rng rng(rng_seed);
  TripletSet out;
  out.reserve(static_cast<std::size_t>(n_triplets));
  for (int k = 0; k < n_triplets; ++k) {
    int c = (k % 2 == 0) ? 1 : 0;  // foreground-anchored first
    if (!can_anchor(c)) c = 1 - c;
    const auto& same = by_label[c];
    const auto& other = by_label[1 - c];
    const int a = same[static_cast<std::size_t>(
        rng.uniform_int(static_cast<int>(same.size())))];
    int p = a;
    while (p == a)
      p = same[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(same.size())))];
    const int n = other[static_cast<std::size_t>(
        rng.uniform_int(static_cast<int>(other.size())))];
    out.push_back({embeddings[static_cast<std::size_t>(a)].epsilon,
                   embeddings[static_cast<std::size_t>(p)].epsilon,
                   embeddings[static_cast<std::size_t>(n)].epsilon});
  }
  return out;
}

}  // namespace srpn
