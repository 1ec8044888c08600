#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "core/synthetic.hpp"

using namespace metalora;

namespace {

TaskSetSpec tiny_spec() {
  TaskSetSpec s;
  s.tasks = 2;
  s.classes_per_task = 2;
  s.train_per_class = 10;
  s.test_per_class = 5;
  s.height = 6;
  s.width = 6;
  s.channels = 2;
  s.rng_seed = 77;
  return s;
}

}  // namespace

TEST_CASE("counts and label layout") {
  const TaskSetSpec s = tiny_spec();
  CHECK(s.per_class(Split::Train) == 10);
  CHECK(s.per_class(Split::Test) == 5);
  CHECK(s.per_task(Split::Train) == 20);
  CHECK(s.total(Split::Train) == 40);
  CHECK(s.total(Split::Test) == 20);
  CHECK(s.global_classes() == 4);

  const std::vector<Sample> train = make_split(s, Split::Train);
  REQUIRE(train.size() == 40);
  // Task-major, class-major blocks inside a task.
  for (std::size_t i = 0; i < train.size(); ++i) {
    const std::size_t task = i / 20;
    const std::size_t cls = (i % 20) / 10;
    CHECK(train[i].task == task);
    CHECK(train[i].cls == cls);
    CHECK(train[i].label == task * 2 + cls);
    CHECK(train[i].x.shape() == std::vector<std::size_t>{6, 6, 2});
  }
}

TEST_CASE("samples are deterministic and split-disjoint") {
  const TaskSetSpec s = tiny_spec();
  const Sample a = make_sample(s, 1, Split::Train, 3);
  const Sample b = make_sample(s, 1, Split::Train, 3);
  CHECK(a.x.values() == b.x.values());
  CHECK(a.label == b.label);

  // Different index, task, or split must decorrelate the pixels.
  const Sample c = make_sample(s, 1, Split::Train, 4);
  const Sample d = make_sample(s, 0, Split::Train, 3);
  const Sample e = make_sample(s, 1, Split::Test, 3);
  CHECK(a.x.values() != c.x.values());
  CHECK(a.x.values() != d.x.values());
  CHECK(a.x.values() != e.x.values());

  TaskSetSpec s2 = s;
  s2.rng_seed = 78;
  const Sample f = make_sample(s2, 1, Split::Train, 3);
  CHECK(a.x.values() != f.x.values());
}

TEST_CASE("transforms walk offset plus task times step") {
  TaskSetSpec s = tiny_spec();
  s.tasks = 3;
  s.rotation_offset = 0.1;
  s.rotation_step = 0.6;
  s.color_offset = -0.2;
  s.color_step = 1.1;
  const TaskTransform t0 = s.transform(0);
  const TaskTransform t2 = s.transform(2);
  CHECK(t0.rotation == doctest::Approx(0.1));
  CHECK(t0.color_phase == doctest::Approx(-0.2));
  CHECK(t2.rotation == doctest::Approx(0.1 + 1.2));
  CHECK(t2.color_phase == doctest::Approx(-0.2 + 2.2));
}

TEST_CASE("transform distance wraps the circle") {
  const double two_pi = 8.0 * std::atan(1.0);
  CHECK(transform_distance({0.0, 0.0}, {0.0, 0.0}) == doctest::Approx(0.0));
  CHECK(transform_distance({0.0, 0.0}, {two_pi, 0.0}) == doctest::Approx(0.0).epsilon(1e-12));
  // A step just past pi is shorter the other way round.
  const double d = transform_distance({0.0, 0.0}, {3.5, 0.0});
  CHECK(d == doctest::Approx(two_pi - 3.5));
  // Euclidean over both coordinates.
  const double e = transform_distance({0.3, 0.0}, {0.0, 0.4});
  CHECK(e == doctest::Approx(0.5));
}

TEST_CASE("margin validation rejects colliding tasks") {
  TaskSetSpec s = tiny_spec();
  CHECK_NOTHROW(s.validate());

  TaskSetSpec bad = s;
  bad.rotation_step = 0.0;
  bad.color_step = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  TaskSetSpec degenerate = s;
  degenerate.tasks = 0;
  CHECK_THROWS_AS(degenerate.validate(), ConfigError);

  TaskSetSpec flat = s;
  flat.height = 0;
  CHECK_THROWS_AS(flat.validate(), ConfigError);
}

TEST_CASE("pixel values stay finite and informative") {
  const TaskSetSpec s = tiny_spec();
  const std::vector<Sample> train = make_split(s, Split::Train);
  double lo = 1e300, hi = -1e300;
  for (const Sample& smp : train)
    for (std::size_t i = 0; i < smp.x.size(); ++i) {
      REQUIRE(std::isfinite(smp.x[i]));
      lo = std::min(lo, smp.x[i]);
      hi = std::max(hi, smp.x[i]);
    }
  CHECK(hi > lo);  // not a constant image set
}
