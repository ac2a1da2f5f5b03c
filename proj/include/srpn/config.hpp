#pragma once

#include <cstdint>
#include <string>

#include "srpn/dataset.hpp"
#include "srpn/evaluator.hpp"
#include "srpn/head.hpp"
#include "srpn/trainer.hpp"

namespace srpn {

// One flat key = value experiment file covering scene, head, training and
// evaluation settings. Unknown keys are rejected; omitted keys keep their
// defaults; serialization emits every key, so the echoed file next to a
// run's outputs fully reproduces it.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  int synth_images = 200;
  SceneSpec scene;
  HeadConfig head;
  TrainConfig train;
  EvalOptions eval;

  static ExperimentConfig from_file(const std::string& path);
  static ExperimentConfig from_string(const std::string& text,
                                      const std::string& origin = "<string>");
  std::string to_string() const;

  // Anchor spec with the stride pinned to the model stride.
  AnchorSpec anchors() const;
  // Re-derives coupled fields (anchor count, stride, seeds) after parsing.
  void finalize();
};

}  // namespace srpn
