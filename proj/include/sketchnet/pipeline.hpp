#pragma once

#include <cstring>
#include <vector>

#include "sketchnet/augment.hpp"
#include "sketchnet/blur.hpp"
#include "sketchnet/raster.hpp"
#include "sketchnet/rng.hpp"
#include "sketchnet/sketch.hpp"

namespace sketchnet {

/// Full-size (256x256) network input for one sketch at one blur scale.
inline RasterImage prepare_image(const StrokeSketch& s, std::size_t channels, int scale) {
  return blur_scale(render_channels(s, channels), scale);
}

/// One randomly augmented 225x225 training view: a grid draw supplies the
/// reflection, rotation and shift, then the blurred raster is cropped at a
/// random position.
inline RasterImage training_view(const StrokeSketch& s, std::size_t channels, int scale, Rng& rng,
                                 bool augmentation = true) {
  if (!augmentation) return crop(prepare_image(s, channels, scale), CropPosition::Center, false);
  const AugmentParams a = sample_augment(rng);
  RasterImage img = render_channels(augment(s, a), channels);
  img = shift_raster(img, shift_displacement(a.shift_x), shift_displacement(a.shift_y));
  img = blur_scale(img, scale);
  const std::size_t room = kRasterSize - kCropSize + 1;
  const std::size_t x0 = rng.below(room), y0 = rng.below(room);
  return crop_at(img, x0, y0, false);
}

/// The ten evaluation crops of a sketch at a blur scale.
inline std::vector<RasterImage> eval_views(const StrokeSketch& s, std::size_t channels, int scale) {
  return ten_crops(prepare_image(s, channels, scale));
}

/// Stacks equally sized rasters into an [N, C, H, W] batch.
inline Tensor<float> stack(const std::vector<RasterImage>& views) {
  if (views.empty()) throw ShapeError("cannot stack an empty view list");
  const Shape one = views[0].tensor().shape();
  Tensor<float> batch({views.size(), one[0], one[1], one[2]});
  const std::size_t per = shape_volume(one);
  for (std::size_t i = 0; i < views.size(); ++i) {
    require_same_shape(views[i].tensor().shape(), one, "stack");
    std::memcpy(batch.raw() + i * per, views[i].tensor().raw(), per * sizeof(float));
  }
  return batch;
}

}  // namespace sketchnet
