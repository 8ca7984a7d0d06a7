#include <algorithm>
#include <set>
#include <vector>

#include "test_util.hpp"
#include "vord/harness.hpp"

using namespace vord;

namespace {

// Small world so the suite stays fast.
WorldConfig small_world() {
  WorldConfig w;
  w.image_size = 64;
  return w;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("catalog invariants") {
  const auto world = small_world();
  const auto cat = make_catalog(world);
  CHECK(cat.num_objects == 16);
  double total = 0.0;
  for (double f : cat.frequency) total += f;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  for (int a = 0; a < 16; ++a) {
    CHECK(cat.cooc(a, a) == 0.0);
    int sum = 0;
    for (double s : cat.signatures[a]) sum += static_cast<int>(s);
    CHECK(sum == 0);
    for (int b = 0; b < 16; ++b) CHECK(cat.cooc(a, b) == cat.cooc(b, a));
  }
  CHECK(make_catalog(world).cooccurrence == cat.cooccurrence);
}

TEST_CASE("random split is balanced") {
  const auto world = small_world();
  const auto cat = make_catalog(world);
  const auto split = generate_benchmark(world, cat, 100, PopeSetting::kRandom, Rng(1));
  CHECK(split.scenes.size() == 100);
  const auto yes = std::count_if(split.queries.begin(), split.queries.end(),
                                 [](const auto& q) { return q.label == Answer::kYes; });
  CHECK(yes == 100);
  CHECK(split.queries.size() == 200);
  for (const auto& q : split.queries) {
    const auto& present = split.scenes[q.scene].present;
    const bool in = std::find(present.begin(), present.end(), q.object) != present.end();
    CHECK(in == (q.label == Answer::kYes));
  }
}

TEST_CASE("adversarial negatives maximize co-occurrence with the scene") {
  const auto world = small_world();
  const auto cat = make_catalog(world);
  const auto split = generate_benchmark(world, cat, 100, PopeSetting::kAdversarial, Rng(2));
  for (const auto& q : split.queries) {
    if (q.label != Answer::kNo) continue;
    const auto& present = split.scenes[q.scene].present;
    const std::set<int> in(present.begin(), present.end());
    auto score = [&](int o) {
      double s = 0.0;
      for (int p : present) s += cat.cooc(p, o);
      return s;
    };
    for (int o = 0; o < cat.num_objects; ++o) {
      if (!in.contains(o)) CHECK(score(o) <= score(q.object));
    }
  }
}

TEST_CASE("benchmark generation is deterministic") {
  const auto world = small_world();
  const auto cat = make_catalog(world);
  const auto a = generate_benchmark(world, cat, 20, PopeSetting::kPopular, Rng(3));
  const auto b = generate_benchmark(world, cat, 20, PopeSetting::kPopular, Rng(3));
  REQUIRE(a.queries.size() == b.queries.size());
  for (std::size_t i = 0; i < a.queries.size(); ++i) {
    CHECK(a.queries[i].object == b.queries[i].object);
    CHECK(a.queries[i].label == b.queries[i].label);
  }
  for (std::size_t s = 0; s < a.scenes.size(); ++s) CHECK(a.scenes[s].image == b.scenes[s].image);
}

TEST_CASE("uniform model answers at chance") {
  const ToyWorld world(small_world());
  const auto model = ToyLVLM::zeros(world);
  const auto split =
      generate_benchmark(world.config(), world.catalog(), 200, PopeSetting::kRandom, Rng(4));
  PopeOptions opts;
  const auto res = run_pope_experiment(model, world.encoder(), split, {regular_decoding()}, opts,
                                       Rng(5));
  CHECK(res[0].metrics.accuracy >= 0.45);
  CHECK(res[0].metrics.accuracy <= 0.55);
}

TEST_CASE("experiments are deterministic and parallel runs agree") {
  const ToyWorld world(small_world());
  const auto model = ToyLVLM::biased(world);
  const auto split =
      generate_benchmark(world.config(), world.catalog(), 60, PopeSetting::kAdversarial, Rng(6));
  PopeOptions opts;
  const std::vector<DecodeConfig> configs{regular_decoding(), vord_decoding()};
  const auto a = run_pope_experiment(model, world.encoder(), split, configs, opts, Rng(7));
  opts.jobs = 3;
  const auto b = run_pope_experiment(model, world.encoder(), split, configs, opts, Rng(7));
  for (std::size_t i = 0; i < configs.size(); ++i) {
    CHECK(a[i].metrics.accuracy == b[i].metrics.accuracy);
    CHECK(a[i].calibration.ece == b[i].calibration.ece);
    CHECK(a[i].mean_margin == b[i].mean_margin);
  }
}

TEST_CASE("margin ablation rows") {
  const ToyWorld world(small_world());
  const auto model = ToyLVLM::biased(world);
  const auto split =
      generate_benchmark(world.config(), world.catalog(), 40, PopeSetting::kAdversarial, Rng(8));
  const auto rows = run_margin_ablation(model, world.encoder(), split, {0.0, 0.5}, vord_decoding(),
                                        PopeOptions{}, Rng(9));
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].label == "regular");
  CHECK(rows[1].label == "0.00");
  CHECK(rows[2].label == "0.50");
  CHECK(rows[3].label == "adaptive");
  CHECK(rows[3].margin >= 0.0);
  CHECK(rows[3].margin <= 1.0);
}

TEST_CASE("corruption ablation margins are in range") {
  const ToyWorld world(small_world());
  const auto model = ToyLVLM::biased(world);
  const auto split =
      generate_benchmark(world.config(), world.catalog(), 30, PopeSetting::kRandom, Rng(10));
  CorruptionSpec mix, bright;
  bright.kind = CorruptionKind::kBrightness;
  bright.severity = 0.05;
  const auto rows = run_corruption_ablation(model, world.encoder(), split, {mix, bright},
                                            vord_decoding(), PopeOptions{}, Rng(11));
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(r.mean_margin >= 0.0);
    CHECK(r.mean_margin <= 1.0);
  }
  CHECK(rows[0].mean_margin > rows[1].mean_margin);
}

TEST_CASE("toy model modes") {
  const ToyWorld world(small_world());
  const auto model = ToyLVLM::biased(world);
  const auto& vocab = model.vocabulary();
  CHECK(vocab.size == 20);
  CHECK(vocab.label(ToyVocab::kYes) == "yes");
  CHECK(vocab.label(ToyVocab::object_token(3)) == "obj3");
  CHECK(model.num_parameters() == ToyLVLM::parameter_count(16));

  Rng rng(12);
  const auto scene = sample_scene(world.config(), world.catalog(), rng);
  const auto visual = world.encoder().encode(scene.image);
  const TokenSequence prompt{ToyVocab::object_token(scene.present[0])};
  const TokenSequence after{ToyVocab::kBos, ToyVocab::kYes};
  const auto end = softmax(model.next_token_logits(visual, prompt, after));
  CHECK(end.argmax() == static_cast<std::size_t>(ToyVocab::kEos));

  const auto ans = softmax(model.next_token_logits(visual, prompt, TokenSequence{ToyVocab::kBos}));
  CHECK(ans[ToyVocab::kYes] > ans[ToyVocab::kNo]);
}

TEST_CASE("model VJP agrees with finite differences of the logits") {
  const ToyWorld world(small_world());
  Rng rng(13);
  std::vector<double> theta(ToyLVLM::parameter_count(16));
  for (double& v : theta) v = 0.3 * rng.normal();
  ToyLVLM model(world, theta);
  const auto scene = sample_scene(world.config(), world.catalog(), rng);
  const auto visual = world.encoder().encode(scene.image);
  const TokenSequence prompt{ToyVocab::object_token(2)}, prefix{ToyVocab::kBos};
  std::vector<double> w(20);
  for (double& v : w) v = rng.normal();
  std::vector<double> grad(theta.size(), 0.0);
  model.accumulate_logit_vjp(visual, prompt, prefix, w, grad);
  auto objective = [&](const std::vector<double>& t) {
    ToyLVLM m(world, t);
    const auto l = m.next_token_logits(visual, prompt, prefix);
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * l.values[i];
    return s;
  };
  for (int k = 0; k < 200; ++k) {
    const std::size_t i = rng.below(theta.size());
    auto up = theta, down = theta;
    up[i] += 1e-5;
    down[i] -= 1e-5;
    const double fd = (objective(up) - objective(down)) / 2e-5;
    CHECK(std::abs(fd - grad[i]) <= 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("world config validation") {
  WorldConfig w;
  w.num_objects = 0;
  CHECK_THROWS_AS(w.validate(), VordError);
  CHECK_VORD_CODE(pope_setting_from_string("hard"), "invalid-config");
}

}  // TEST_SUITE
