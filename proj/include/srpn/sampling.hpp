#pragma once

#include <cstdint>
#include <vector>

#include "srpn/anchors.hpp"
#include "srpn/tensor.hpp"

namespace srpn {

// A labeled embedding: the vector for one anchor plus its anchor label
// (1 foreground, 0 background).
struct Embedding {
  Tensor epsilon;
  int label = 0;
};

using EmbeddingSet = std::vector<Embedding>;

struct EmbeddingPair {
  Tensor first;
  Tensor second;
  int similar = 0;  // 1 iff the two source labels were equal
};

struct PairSet {
  std::vector<EmbeddingPair> pairs;
  // Set when the requested balance was impossible (only one label present,
  // or no label class has two members).
  bool degenerate = false;
};

struct EmbeddingTriplet {
  Tensor anchor;
  Tensor positive;  // same class as anchor, different element
  Tensor negative;  // the other class
};

using TripletSet = std::vector<EmbeddingTriplet>;

// Online hard example mining. Keeps the hardest positives up to
// max_total/(1+ratio), then the negatives with the highest classification
// loss, capped at ratio x kept positives and at the remaining budget. With
// no positives at all, keeps min(available, max_total) hardest negatives.
// Ties are broken by lower index. Returns selected indices in ascending
// order. The anchor list must not contain ignore-labeled anchors.
std::vector<int> ohem_select(const std::vector<LabeledAnchor>& anchors,
                             const std::vector<double>& per_anchor_cls_loss,
                             double neg_pos_ratio = 3.0, int max_total = 256);

// phi: draws n_pairs pairs from E with similar/dissimilar counts differing
// by at most one (the extra pair, for odd n_pairs, is similar). Members of
// a pair are distinct elements; s = 1 iff labels are equal. When dissimilar
// pairs are impossible (single label) or similar pairs are impossible (no
// class has two members), emits only the feasible kind and sets the
// degenerate flag; an empty or single-element E yields no pairs.
PairSet make_pairs(const EmbeddingSet& embeddings, int n_pairs,
                   std::uint64_t rng_seed);

// psi: draws n_triplets (anchor, positive, negative) triplets, anchor and
// positive from one class, negative from the other. Anchors alternate
// between foreground- and background-anchored triplets when both classes
// can anchor (a class anchors if it has >= 2 members and the other class is
// non-empty), starting with foreground. Throws when no class can anchor,
// naming the deficiency.
TripletSet make_triplets(const EmbeddingSet& embeddings, int n_triplets,
                         std::uint64_t rng_seed);

}  // namespace srpn
