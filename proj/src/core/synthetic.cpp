#include "core/synthetic.hpp"

#include <cmath>

namespace metalora {
namespace {

constexpr double kPi = 3.14159265358979323846;

double wrap_angle(double a) { return std::remainder(a, 2.0 * kPi); }

}  // namespace

double transform_distance(const TaskTransform& a, const TaskTransform& b) {
  return std::hypot(wrap_angle(a.rotation - b.rotation), wrap_angle(a.color_phase - b.color_phase));
}

const char* split_name(Split s) { return s == Split::Train ? "train" : "test"; }

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "test") return Split::Test;
  throw ArgError(strf("unknown split '", name, "'"));
}

void TaskSetSpec::validate() const {
  if (tasks == 0 || classes_per_task == 0) throw ConfigError("task set needs tasks and classes");
  if (train_per_class == 0 || test_per_class == 0) {
    throw ConfigError("task set needs nonempty train and test splits");
  }
  if (height < 3 || width < 3 || channels == 0) {
    throw ConfigError(strf("degenerate image geometry ", height, " x ", width, " x ", channels));
  }
  if (jitter < 0 || angle_noise < 0 || pixel_noise < 0 || margin < 0) {
    throw ConfigError("noise, jitter and margin must be nonnegative");
  }
  for (std::size_t a = 0; a < tasks; ++a) {
    for (std::size_t b = a + 1; b < tasks; ++b) {
      const double d = transform_distance(transform(a), transform(b));
      if (d < margin) {
        throw ConfigError(strf("tasks ", a, " and ", b, " are only ", d,
                               " apart in transform space, margin is ", margin));
      }
    }
  }
}

TaskTransform TaskSetSpec::transform(std::size_t task) const {
  if (task >= tasks) throw ArgError(strf("task ", task, " out of range"));
  return {rotation_offset + static_cast<double>(task) * rotation_step,
          color_offset + static_cast<double>(task) * color_step};
}

std::size_t TaskSetSpec::per_class(Split s) const {
  return s == Split::Train ? train_per_class : test_per_class;
}

Sample make_sample(const TaskSetSpec& spec, std::size_t task, Split split, std::size_t index) {
  if (index >= spec.per_task(split)) {
    throw ArgError(strf("sample index ", index, " out of range for split ", split_name(split)));
  }
  const TaskTransform tr = spec.transform(task);
  const std::size_t cls = index / spec.per_class(split);
  Rng rng(derive_seed(spec.rng_seed, split_name(split), task, index));

  const double cx = 0.5 * static_cast<double>(spec.width - 1) + spec.jitter * rng.uniform(-1.0, 1.0);
  const double cy = 0.5 * static_cast<double>(spec.height - 1) + spec.jitter * rng.uniform(-1.0, 1.0);
  // Orientation separates classes mod pi (the blob is symmetric), the color
  // phase mod 2*pi; the task transform shifts both.
  const double angle = tr.rotation +
                       static_cast<double>(cls) * kPi / static_cast<double>(spec.classes_per_task) +
                       spec.angle_noise * rng.normal();
  const double color_angle =
      tr.color_phase + static_cast<double>(cls) * 2.0 * kPi / static_cast<double>(spec.classes_per_task);

  std::vector<double> color(spec.channels);
  for (std::size_t c = 0; c < spec.channels; ++c) {
    color[c] = 0.55 + 0.45 * std::cos(color_angle +
                                      2.0 * kPi * static_cast<double>(c) /
                                          static_cast<double>(spec.channels));
  }

  const double side = static_cast<double>(std::min(spec.height, spec.width));
  const double sigma_long = 0.30 * side;
  const double sigma_short = 0.10 * side;
  const double ca = std::cos(angle), sa = std::sin(angle);

  Sample s;
  s.cls = cls;
  s.task = task;
  s.label = task * spec.classes_per_task + cls;
  s.x = DenseTensor({spec.height, spec.width, spec.channels});
  std::size_t flat = 0;
  for (std::size_t y = 0; y < spec.height; ++y) {
    for (std::size_t x = 0; x < spec.width; ++x) {
      const double dx = static_cast<double>(x) - cx;
      const double dy = static_cast<double>(y) - cy;
      const double u = dx * ca + dy * sa;
      const double v = -dx * sa + dy * ca;
      const double g = std::exp(-0.5 * (u * u / (sigma_long * sigma_long) +
                                        v * v / (sigma_short * sigma_short)));
      for (std::size_t c = 0; c < spec.channels; ++c, ++flat) {
        s.x[flat] = g * color[c] + spec.pixel_noise * rng.normal();
      }
    }
  }
  return s;
}

std::vector<Sample> make_split(const TaskSetSpec& spec, Split split) {
  spec.validate();
  std::vector<Sample> out;
  out.reserve(spec.total(split));
  for (std::size_t t = 0; t < spec.tasks; ++t) {
    for (std::size_t i = 0; i < spec.per_task(split); ++i) {
      out.push_back(make_sample(spec, t, split, i));
    }
  }
  return out;
}

}  // namespace metalora
