#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vgpl/disentangle.hpp"
#include "vgpl/errors.hpp"
#include "vgpl/rng.hpp"

using namespace vgpl;

namespace {

void check_close(double got, double want, double tol = 1e-12) {
  CHECK(std::abs(got - want) <= tol);
}

}  // namespace

TEST_CASE("encoder construction is deterministic per name and seed") {
  Encoder a = Encoder::init("enc_shared", 4, 6, 10);
  CHECK(a.params.name == "enc_shared");
  CHECK(a.params.values.size() == mlp2_param_count(4, 6, 4));

  Encoder same = Encoder::init("enc_shared", 4, 6, 10);
  CHECK(same.params.values == a.params.values);
  Encoder other_seed = Encoder::init("enc_shared", 4, 6, 11);
  CHECK(other_seed.params.values != a.params.values);
  Encoder other_name = Encoder::init("enc_indiv", 4, 6, 10);
  CHECK(other_name.params.values != a.params.values);

  CHECK_THROWS_AS((void)Encoder::init("e", 0, 6, 10), validation_error);
  CHECK_THROWS_AS((void)Encoder::init("e", 4, 0, 10), validation_error);
}

TEST_CASE("encoder output width equals input width") {
  Encoder e = Encoder::init("e", 5, 3, 2);
  Rng rng(8);
  Vec x = rng.normals(5);
  CHECK(e.apply(x).size() == 5);
}

TEST_CASE("encoder plain and taped evaluation agree") {
  Encoder e = Encoder::init("e", 4, 7, 3);
  Rng rng(5);
  Vec x = rng.normals(4);
  Vec plain = e.apply(x);
  ag::Tape tape;
  ag::Var leaf = tape.leaf(e.params.values);
  Vec taped = tape.value(e.apply(tape, leaf, tape.constant(x)));
  REQUIRE(taped.size() == plain.size());
  for (std::size_t i = 0; i < plain.size(); ++i) check_close(taped[i], plain[i]);
}

TEST_CASE("disentangling runs both encoders on the same input") {
  Encoder shared = Encoder::init("enc_shared", 4, 5, 1);
  Encoder indiv = Encoder::init("enc_indiv", 4, 5, 1);
  Rng rng(2);
  Vec x = rng.normals(4);

  AttributePair pair = disentangle(x, shared, indiv, 3);
  CHECK(pair.class_id == 3);
  CHECK(pair.shared_rep == shared.apply(x));
  CHECK(pair.indiv_rep == indiv.apply(x));
  CHECK(pair.shared_rep != pair.indiv_rep);
  CHECK(disentangle(x, shared, indiv).class_id == -1);

  ag::Tape tape;
  ag::Var sl = tape.leaf(shared.params.values);
  ag::Var il = tape.leaf(indiv.params.values);
  PairVars pv = disentangle(tape, sl, il, tape.constant(x), shared, indiv);
  Vec taped_shared = tape.value(pv.shared_rep);
  Vec taped_indiv = tape.value(pv.indiv_rep);
  for (std::size_t i = 0; i < 4; ++i) {
    check_close(taped_shared[i], pair.shared_rep[i]);
    check_close(taped_indiv[i], pair.indiv_rep[i]);
  }
}

TEST_CASE("variant names round-trip") {
  CHECK(parse_variant("standard") == BridgeVariant::standard);
  CHECK(parse_variant("swapped") == BridgeVariant::swapped);
  CHECK(variant_name(BridgeVariant::standard) == std::string("standard"));
  CHECK(variant_name(BridgeVariant::swapped) == std::string("swapped"));
  CHECK(parse_variant(variant_name(BridgeVariant::swapped)) == BridgeVariant::swapped);
  CHECK_THROWS_AS((void)parse_variant("Standard"), validation_error);
  CHECK_THROWS_AS((void)parse_variant(""), validation_error);
}

TEST_CASE("restoration loss composes embed, restore and compare") {
  const int dim = 4;
  Encoder shared = Encoder::init("enc_shared", dim, 6, 4);
  Encoder indiv = Encoder::init("enc_indiv", dim, 6, 4);
  TransferModel model = TransferModel::init(dim, 8, 4, 4);
  BridgeSchedule sched = make_schedule(5);
  Rng rng(19);
  Vec x = rng.normals(dim);
  Vec noise = rng.normals(dim);
  AttributePair pair = disentangle(x, shared, indiv);

  for (int t = 1; t <= 5; ++t) {
    double got = stage_a_loss(x, pair, t, noise, model, sched, BridgeVariant::standard);
    Vec z_t = forward_sample(x, pair.shared_rep, t, noise, sched);
    Vec restored = restore_z0(z_t, pair.shared_rep, pair.indiv_rep, t, model);
    check_close(got, restoration_loss(restored, x), 1e-9);

    double swapped = stage_a_loss(x, pair, t, noise, model, sched, BridgeVariant::swapped);
    Vec z_t2 = forward_sample(x, pair.indiv_rep, t, noise, sched);
    Vec restored2 = restore_z0(z_t2, pair.indiv_rep, pair.shared_rep, t, model);
    check_close(swapped, restoration_loss(restored2, x), 1e-9);
    CHECK(got != swapped);
  }
}

TEST_CASE("restoration loss agrees between plain and taped paths") {
  const int dim = 3;
  Encoder shared = Encoder::init("enc_shared", dim, 4, 6);
  Encoder indiv = Encoder::init("enc_indiv", dim, 4, 6);
  TransferModel model = TransferModel::init(dim, 6, 2, 6);
  BridgeSchedule sched = make_schedule(4);
  Rng rng(23);
  Vec x = rng.normals(dim);
  Vec noise = rng.normals(dim);
  AttributePair pair = disentangle(x, shared, indiv);

  double plain = stage_a_loss(x, pair, 2, noise, model, sched, BridgeVariant::standard);

  ag::Tape tape;
  ag::Var sl = tape.leaf(shared.params.values);
  ag::Var il = tape.leaf(indiv.params.values);
  ag::Var tl = tape.leaf(model.params.values);
  ag::Var xv = tape.constant(x);
  PairVars pv = disentangle(tape, sl, il, xv, shared, indiv);
  ag::Var loss = stage_a_loss(tape, tl, xv, pv, 2, noise, model, sched, BridgeVariant::standard);
  check_close(tape.scalar(loss), plain, 1e-9);
}
