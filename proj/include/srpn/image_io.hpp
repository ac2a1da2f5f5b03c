#pragma once

#include <string>

#include "srpn/box.hpp"
#include "srpn/tensor.hpp"

namespace srpn {

struct Rgb {
  double r = 0.0, g = 0.0, b = 0.0;
};

// 8-bit RGB PNG I/O for [3,H,W] tensors with values in [0,1]; writing
// quantizes with round(v*255).
void write_png(const std::string& path, const Tensor& image);
Tensor read_png(const std::string& path);

// 1-pixel rectangle outline, clipped to the image.
void draw_box_outline(Tensor& image, const BBox& box, const Rgb& color);

}  // namespace srpn
