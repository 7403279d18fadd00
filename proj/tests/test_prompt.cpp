#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "vgpl/errors.hpp"
#include "vgpl/prompt.hpp"
#include "vgpl/rng.hpp"

using namespace vgpl;

namespace {

void check_close(double got, double want, double tol = 1e-12) {
  CHECK(std::abs(got - want) <= tol);
}

PromptState sample_state(uint64_t seed = 40) {
  return PromptState::init(3, 4, 5, 6, {"ant", "bee", "cow"}, seed);
}

}  // namespace

TEST_CASE("prompt construction shapes and trainability") {
  PromptState st = sample_state();
  CHECK(st.ctx.values.size() == 12);
  CHECK(st.ctx.trainable);
  CHECK(st.ctx.grad_sink() != nullptr);
  CHECK_FALSE(st.stub.trainable);
  CHECK(st.stub.grad_sink() == nullptr);
  CHECK(st.stub.values.size() == mlp2_param_count(16, 6, 5));
  CHECK(st.stub_input_width() == 16);
  CHECK(st.class_embeds.size() == 3);
  for (const Vec& e : st.class_embeds) CHECK(e.size() == 4);

  // contexts start near zero but not at zero
  double max_abs = 0.0;
  for (double v : st.ctx.values) max_abs = std::max(max_abs, std::abs(v));
  CHECK(max_abs > 0.0);
  CHECK(max_abs < 0.2);

  CHECK_THROWS_AS((void)PromptState::init(0, 4, 5, 6, {"a"}, 1), validation_error);
  CHECK_THROWS_AS((void)PromptState::init(3, 0, 5, 6, {"a"}, 1), validation_error);
  CHECK_THROWS_AS((void)PromptState::init(3, 4, 0, 6, {"a"}, 1), validation_error);
  CHECK_THROWS_AS((void)PromptState::init(3, 4, 5, 0, {"a"}, 1), validation_error);
}

TEST_CASE("prompt construction is deterministic in the seed") {
  PromptState a = sample_state(40);
  PromptState b = sample_state(40);
  CHECK(a.ctx.values == b.ctx.values);
  CHECK(a.stub.values == b.stub.values);
  CHECK(a.embed_seed == b.embed_seed);
  PromptState c = sample_state(41);
  CHECK(c.ctx.values != a.ctx.values);
  CHECK(c.stub.values != a.stub.values);
}

TEST_CASE("class embeddings depend only on seed and name") {
  PromptState st = sample_state();
  CHECK(st.class_embeds[0] == class_embedding(st.embed_seed, "ant", 4));
  CHECK(st.class_embeds[1] == class_embedding(st.embed_seed, "bee", 4));
  CHECK(class_embedding(7, "ant", 4) == class_embedding(7, "ant", 4));
  CHECK(class_embedding(7, "ant", 4) != class_embedding(7, "bee", 4));
  CHECK(class_embedding(7, "ant", 4) != class_embedding(8, "ant", 4));
  CHECK_THROWS_AS((void)class_embedding(7, "ant", 0), validation_error);
}

TEST_CASE("prompted encoding agrees across overloads and evaluation modes") {
  PromptState st = sample_state();
  Vec by_embed = encode_prompted(st, st.class_embeds[1]);
  Vec by_id = encode_prompted(st, 1);
  CHECK(by_embed == by_id);
  REQUIRE(by_embed.size() == 5);

  ag::Tape tape;
  ag::Var ctx_leaf = tape.leaf(st.ctx.values);
  ag::Var stub_leaf = tape.leaf(st.stub.values);
  Vec taped = tape.value(encode_prompted(tape, ctx_leaf, stub_leaf, st, st.class_embeds[1]));
  REQUIRE(taped.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) check_close(taped[i], by_embed[i]);

  // a class never seen at construction time can still be prompted
  Vec unseen = encode_prompted(st, class_embedding(st.embed_seed, "yak", 4));
  CHECK(unseen.size() == 5);
  CHECK(unseen != by_embed);

  CHECK_THROWS_AS((void)encode_prompted(st, 3), validation_error);
  CHECK_THROWS_AS((void)encode_prompted(st, -1), validation_error);
  CHECK_THROWS_AS((void)encode_prompted(st, Vec{1.0}), validation_error);
}

TEST_CASE("cosine values and validation") {
  check_close(cosine({1.0, 0.0}, {1.0, 1.0}), 1.0 / std::sqrt(2.0));
  check_close(cosine({1.0, 2.0}, {2.0, 4.0}), 1.0);
  check_close(cosine({1.0, 0.0}, {-3.0, 0.0}), -1.0);
  check_close(cosine({1.0, 0.0}, {0.0, 2.0}), 0.0);
  CHECK_THROWS_AS((void)cosine({1.0}, {1.0, 2.0}), validation_error);
  CHECK_THROWS_AS((void)cosine({0.0, 0.0}, {1.0, 2.0}), validation_error);
  CHECK_THROWS_AS((void)cosine({1.0, 2.0}, {0.0, 0.0}), validation_error);
}

TEST_CASE("classification picks the most aligned prompt") {
  std::vector<Vec> prompted = {{1.0, 0.0}, {0.0, 1.0}, {-1.0, 0.0}};
  CHECK(classify({2.0, 0.1}, prompted) == 0);
  CHECK(classify({0.1, 5.0}, prompted) == 1);
  CHECK(classify({-3.0, -0.1}, prompted) == 2);
  CHECK_THROWS_AS((void)classify({1.0, 0.0}, {}), validation_error);

  // exact tie (duplicate prompt) resolves to the smaller index
  std::vector<Vec> dup = {{0.0, 1.0}, {3.0, 0.0}, {6.0, 0.0}};
  CHECK(classify({1.0, 0.0}, dup) == 1);
}
