#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "core/model.hpp"
#include "oracles.hpp"

using namespace metalora;

namespace {

BaseNet small_net(Rng& rng) { return init_base_net(3, 1, 4, 3, rng); }

double xent(const DenseTensor& z, std::size_t label) {
  double m = z[0];
  for (std::size_t i = 0; i < z.size(); ++i) m = std::max(m, z[i]);
  double sum = 0;
  for (std::size_t i = 0; i < z.size(); ++i) sum += std::exp(z[i] - m);
  return std::log(sum) + m - z[label];
}

}  // namespace

TEST_CASE("init_base_net: shapes, determinism, validation") {
  Rng r1(4), r2(4);
  const BaseNet a = small_net(r1);
  const BaseNet b = small_net(r2);
  CHECK(a.conv_w.shape() == std::vector<std::size_t>{3, 3, 1, 4});
  CHECK(a.head_w.shape() == std::vector<std::size_t>{4, 3});
  CHECK(a.head_b.shape() == std::vector<std::size_t>{3});
  CHECK(a.conv_w.values() == b.conv_w.values());
  CHECK(a.padding() == 1);
  CHECK_THROWS_AS(init_base_net(4, 1, 2, 2, r1), ArgError);  // even kernel

  BaseNet bad = a;
  bad.head_b = DenseTensor({5});
  CHECK_THROWS_AS(bad.validate(), ShapeError);
}

TEST_CASE("base_forward equals the hand-assembled op chain") {
  Rng rng(11);
  const BaseNet net = small_net(rng);
  const DenseTensor x = testutil::rand_tensor(rng, {5, 5, 1});

  const DenseTensor conv = conv2d_forward(x, net.conv_w, 1, net.padding());
  DenseTensor act = conv;
  for (std::size_t i = 0; i < act.size(); ++i) act[i] = apply_activation(net.act, act[i]);
  DenseTensor emb({net.conv_channels()});
  for (std::size_t c = 0; c < net.conv_channels(); ++c) {
    double s = 0;
    for (std::size_t h = 0; h < act.extent(0); ++h)
      for (std::size_t w = 0; w < act.extent(1); ++w) s += act.at({h, w, c});
    emb[c] = s / static_cast<double>(act.extent(0) * act.extent(1));
  }
  DenseTensor logits = contract(emb, net.head_w, {{0, 0}});
  for (std::size_t i = 0; i < logits.size(); ++i) logits[i] += net.head_b[i];

  const ForwardOut out = base_forward(net, x);
  CHECK(testutil::max_abs_diff(out.embedding, emb) < 1e-12);
  CHECK(testutil::max_abs_diff(out.logits, logits) < 1e-12);
}

TEST_CASE("make_arm geometry per kind") {
  Rng rng(6);
  const BaseNet net = small_net(rng);

  ArmSpec orig;
  orig.kind = ArmKind::Original;
  const Arm o = make_arm(orig, net, 5, 5, rng);
  REQUIRE(o.sets.size() == 1);
  CHECK(!o.sets[0].conv);
  CHECK(!o.sets[0].head);
  CHECK(o.adapter_param_count() == 0);

  ArmSpec lora;
  lora.kind = ArmKind::Lora;
  lora.rank = 2;
  const Arm l = make_arm(lora, net, 5, 5, rng);
  REQUIRE(l.sets.size() == 1);
  REQUIRE(l.sets[0].conv);
  REQUIRE(l.sets[0].head);
  CHECK(l.sets[0].conv->kind == AdapterKind::ConvLora);
  CHECK(l.sets[0].head->kind == AdapterKind::MatrixLora);
  CHECK(l.set_for_task(3) == 0);

  ArmSpec multi = lora;
  multi.kind = ArmKind::MultiLora;
  multi.tasks = 3;
  const Arm m = make_arm(multi, net, 5, 5, rng);
  REQUIRE(m.sets.size() == 3);
  CHECK(m.set_for_task(2) == 2);
  CHECK_THROWS_AS(m.set_for_task(3), ArgError);
  CHECK(m.adapter_param_count() == 3 * l.adapter_param_count());

  ArmSpec cp;
  cp.kind = ArmKind::MetaCP;
  cp.rank = 2;
  cp.extractor = FeatureExtractor::Kind::RawFlatten;
  const Arm c = make_arm(cp, net, 5, 5, rng);
  REQUIRE(c.conv_map);
  REQUIRE(c.head_map);
  CHECK(c.conv_map->input_dim() == 25);  // 5*5*1 flattened
  CHECK(c.conv_map->output_dim() == 2);
  CHECK(c.conv_map->seed_shape.empty());
  CHECK(c.sets[0].conv->kind == AdapterKind::ConvMetaCP);

  ArmSpec tr = cp;
  tr.kind = ArmKind::MetaTR;
  tr.extractor = FeatureExtractor::Kind::PooledConv;
  tr.extractor_features = 3;
  const Arm t = make_arm(tr, net, 5, 5, rng);
  CHECK(t.conv_map->input_dim() == 3);
  CHECK(t.conv_map->output_dim() == 4);  // rank^2
  CHECK(t.conv_map->seed_shape == std::vector<std::size_t>{2, 2});
  CHECK(t.sets[0].head->kind == AdapterKind::MetaTR);

  ArmSpec zero = lora;
  zero.rank = 0;
  CHECK_THROWS_AS(make_arm(zero, net, 5, 5, rng), ArgError);
}

TEST_CASE("collect_params: canonical names and coverage") {
  Rng rng(8);
  const BaseNet net = small_net(rng);

  ArmSpec lora;
  lora.kind = ArmKind::Lora;
  Arm l = make_arm(lora, net, 5, 5, rng);
  const ParamSet lp = collect_params(l);
  REQUIRE(lp.entries.size() == 4);
  CHECK(lp.entries[0].first == "conv.A");
  CHECK(lp.entries[1].first == "conv.B");
  CHECK(lp.entries[2].first == "head.A");
  CHECK(lp.entries[3].first == "head.B");
  CHECK(lp.find("head.B") == &l.sets[0].head->B);
  CHECK(lp.find("nope") == nullptr);
  CHECK(lp.total_size() == l.trainable_param_count());
  CHECK(lp.total_size() == l.adapter_param_count());

  ArmSpec multi = lora;
  multi.kind = ArmKind::MultiLora;
  multi.tasks = 2;
  Arm m = make_arm(multi, net, 5, 5, rng);
  const ParamSet mp = collect_params(m);
  REQUIRE(mp.entries.size() == 8);
  CHECK(mp.entries[0].first == "task0.conv.A");
  CHECK(mp.entries[4].first == "task1.conv.A");

  ArmSpec cp;
  cp.kind = ArmKind::MetaCP;
  cp.rank = 2;
  Arm c = make_arm(cp, net, 5, 5, rng);
  const ParamSet cpp = collect_params(c);
  CHECK(cpp.find("conv_map.W0") != nullptr);
  CHECK(cpp.find("head_map.b1") != nullptr);
  CHECK(cpp.total_size() == c.trainable_param_count());
  CHECK(c.trainable_param_count() > c.adapter_param_count());

  ArmSpec orig;
  orig.kind = ArmKind::Original;
  Arm o = make_arm(orig, net, 5, 5, rng);
  CHECK(collect_params(o).entries.empty());
}

TEST_CASE("arm validation rejects cross-kind contamination") {
  Rng rng(9);
  const BaseNet net = small_net(rng);

  ArmSpec lora;
  lora.kind = ArmKind::Lora;
  Arm bad = make_arm(lora, net, 5, 5, rng);
  bad.conv_map = MappingNet{};
  CHECK_THROWS_AS(bad.validate(net, 5, 5), ArgError);

  Arm orig = make_arm(ArmSpec{}, net, 5, 5, rng);
  Arm donor = make_arm(lora, net, 5, 5, rng);
  orig.sets[0].conv = donor.sets[0].conv;
  CHECK_THROWS_AS(orig.validate(net, 5, 5), ArgError);
}

TEST_CASE("forward_adapted: lora equals the base with materialized weights") {
  Rng rng(15);
  const BaseNet net = small_net(rng);
  ArmSpec lora;
  lora.kind = ArmKind::Lora;
  lora.rank = 2;
  Arm arm = make_arm(lora, net, 5, 5, rng);
  // Perturb B so the deltas are nonzero.
  ParamSet ps = collect_params(arm);
  for (auto& [name, t] : ps.entries)
    for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = rng.uniform(-0.5, 0.5);

  BaseNet merged = net;
  const DenseTensor dconv = arm.sets[0].conv->delta(nullptr);
  const DenseTensor dhead = arm.sets[0].head->delta(nullptr);
  for (std::size_t i = 0; i < merged.conv_w.size(); ++i) merged.conv_w[i] += dconv[i];
  for (std::size_t i = 0; i < merged.head_w.size(); ++i) merged.head_w[i] += dhead[i];

  const DenseTensor x = testutil::rand_tensor(rng, {5, 5, 1});
  const ForwardOut got = forward_adapted(net, arm, x, 0);
  const ForwardOut want = base_forward(merged, x);
  CHECK(testutil::max_abs_diff(got.logits, want.logits) < 1e-12);
  CHECK(testutil::max_abs_diff(got.embedding, want.embedding) < 1e-12);
}

TEST_CASE("forward_adapted: original arm is bitwise the base forward") {
  Rng rng(16);
  const BaseNet net = small_net(rng);
  const Arm arm = make_arm(ArmSpec{}, net, 5, 5, rng);
  const DenseTensor x = testutil::rand_tensor(rng, {5, 5, 1});
  const ForwardOut got = forward_adapted(net, arm, x, 0);
  const ForwardOut want = base_forward(net, x);
  CHECK(got.logits.values() == want.logits.values());
  CHECK(got.embedding.values() == want.embedding.values());
}

TEST_CASE("build_batch_loss: leaves mirror the param set, loss is the batch mean") {
  Rng rng(23);
  const BaseNet net = small_net(rng);
  ArmSpec lora;
  lora.kind = ArmKind::Lora;
  Arm arm = make_arm(lora, net, 5, 5, rng);
  ParamSet ps = collect_params(arm);
  for (auto& [name, t] : ps.entries)
    for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = rng.uniform(-0.5, 0.5);

  std::vector<DenseTensor> xs;
  std::vector<std::size_t> labels = {0, 2, 1};
  std::vector<std::size_t> tasks = {0, 0, 0};
  for (std::size_t i = 0; i < 3; ++i) xs.push_back(testutil::rand_tensor(rng, {5, 5, 1}));

  TapedBatch tb = build_batch_loss(net, arm, xs, labels, tasks);
  REQUIRE(tb.leaf_ids.size() == ps.entries.size());
  REQUIRE(tb.logits.size() == 3);

  double want = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const ForwardOut f = forward_adapted(net, arm, xs[i], tasks[i]);
    CHECK(testutil::max_abs_diff(tb.tape.value(tb.logits[i]), f.logits) < 1e-12);
    want += xent(f.logits, labels[i]);
  }
  CHECK(tb.tape.value(tb.loss)[0] == doctest::Approx(want / 3).epsilon(1e-12));

  tb.tape.backward(tb.loss);
  bool any_nonzero = false;
  for (const auto id : tb.leaf_ids) {
    const DenseTensor g = tb.tape.grad(id);
    for (std::size_t i = 0; i < g.size(); ++i) any_nonzero = any_nonzero || g[i] != 0.0;
  }
  CHECK(any_nonzero);
}

TEST_CASE("collect_base_params names the pretraining leaves") {
  Rng rng(3);
  BaseNet net = small_net(rng);
  const ParamSet ps = collect_base_params(net);
  REQUIRE(ps.entries.size() == 3);
  CHECK(ps.entries[0].first == "conv_w");
  CHECK(ps.entries[1].first == "head_w");
  CHECK(ps.entries[2].first == "head_b");
  CHECK(ps.find("conv_w") == &net.conv_w);
}
