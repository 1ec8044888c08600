#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace metalora {

// Synthetic multi-task image set.  Every sample is one oriented anisotropic
// Gaussian blob; the class decides the blob's orientation and its channel
// color weights, and each task shifts both by its own transform.  Both
// signals survive global average pooling (color directly, orientation via
// conv features), which the evaluation embeddings rely on.
struct TaskTransform {
  double rotation = 0.0;     // radians added to every blob angle
  double color_phase = 0.0;  // radians rotating the channel color weights
};

// Distance between two transforms: Euclidean over the wrapped angle deltas.
double transform_distance(const TaskTransform& a, const TaskTransform& b);

enum class Split : unsigned char { Train, Test };
const char* split_name(Split s);
Split split_from_name(const std::string& name);

struct TaskSetSpec {
  std::size_t tasks = 4;
  std::size_t classes_per_task = 2;
  std::size_t train_per_class = 25;
  std::size_t test_per_class = 25;
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t channels = 3;
  // Task t's transform: offset + t * step on each coordinate.
  double rotation_offset = 0.0;
  double rotation_step = 0.7853981633974483;  // pi/4
  double color_offset = 0.0;
  double color_step = 1.5707963267948966;  // pi/2
  double margin = 0.5;   // minimum pairwise transform distance
  double jitter = 0.5;   // blob center jitter, pixels
  double angle_noise = 0.08;
  double pixel_noise = 0.05;
  std::uint64_t rng_seed = 1;

  void validate() const;
  TaskTransform transform(std::size_t task) const;
  std::size_t per_class(Split s) const;
  std::size_t per_task(Split s) const { return classes_per_task * per_class(s); }
  std::size_t total(Split s) const { return tasks * per_task(s); }
  std::size_t global_classes() const { return tasks * classes_per_task; }
};

struct Sample {
  DenseTensor x;      // H x W x I
  std::size_t cls;    // class within the task
  std::size_t task;
  std::size_t label;  // global label: task * classes_per_task + cls
};

// Deterministic in (spec.rng_seed, task, split, index); the class is fixed
// by index arithmetic (class-major blocks), so per-class counts are exact.
Sample make_sample(const TaskSetSpec& spec, std::size_t task, Split split, std::size_t index);

// All tasks' samples for a split, task-major then index order.
std::vector<Sample> make_split(const TaskSetSpec& spec, Split split);

}  // namespace metalora
