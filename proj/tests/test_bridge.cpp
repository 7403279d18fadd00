#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "vgpl/bridge.hpp"
#include "vgpl/errors.hpp"
#include "vgpl/nets.hpp"
#include "vgpl/rng.hpp"

using namespace vgpl;

namespace {

void check_close(double got, double want, double tol = 1e-12) {
  CHECK(std::abs(got - want) <= tol);
}

Vec random_vec(Rng& rng, int n) { return rng.normals(n); }

}  // namespace

TEST_CASE("schedule endpoints and symmetry hold exactly") {
  for (int T : {2, 4, 64, 1000}) {
    BridgeSchedule s = make_schedule(T);
    CHECK(s.steps == T);
    CHECK(s.m.size() == static_cast<std::size_t>(T) + 1);
    CHECK(s.m[0] == 0.0);
    CHECK(s.m[static_cast<std::size_t>(T)] == 1.0);
    CHECK(s.delta[0] == 0.0);
    CHECK(s.delta[static_cast<std::size_t>(T)] == 0.0);
    CHECK(s.sigma2[0] == 0.0);
    CHECK(s.sigma2[1] == 0.0);
    for (int t = 0; t <= T; ++t) {
      // bit-exact mirror, not just approximate
      CHECK(s.delta[static_cast<std::size_t>(t)] == s.delta[static_cast<std::size_t>(T - t)]);
      CHECK(s.delta[static_cast<std::size_t>(t)] >= 0.0);
    }
    for (int t = 1; t <= T; ++t) {
      CHECK(s.sigma2[static_cast<std::size_t>(t)] == posterior_sigma2(t, s));
      // the recurrence collapses to 2 (t - 1) / (t T)
      double closed = 2.0 * (t - 1) / (static_cast<double>(t) * T);
      check_close(s.sigma2[static_cast<std::size_t>(t)], closed, 1e-12);
    }
    CHECK(s.sigma2[static_cast<std::size_t>(T)] == s.delta[static_cast<std::size_t>(T - 1)]);
  }
}

TEST_CASE("schedule anchor values") {
  BridgeSchedule s = make_schedule(4);
  CHECK(s.delta[1] == 0.375);
  CHECK(s.delta[2] == 0.5);
  check_close(posterior_sigma2(2, s), 0.25, 1e-12);
}

TEST_CASE("schedule and step validation") {
  CHECK_THROWS_AS((void)make_schedule(1), validation_error);
  CHECK_THROWS_AS((void)make_schedule(0), validation_error);
  CHECK_THROWS_AS((void)make_schedule(-3), validation_error);
  BridgeSchedule s = make_schedule(4);
  CHECK_THROWS_AS((void)posterior_sigma2(0, s), validation_error);
  CHECK_THROWS_AS((void)posterior_sigma2(5, s), validation_error);
}

TEST_CASE("forward sampling pins both endpoints") {
  BridgeSchedule s = make_schedule(4);
  Vec z0 = {1.5, -2.0, 0.25};
  Vec zT = {-0.5, 3.0, 1.0};
  Vec noise = {0.7, -1.1, 0.3};
  CHECK(forward_sample(z0, zT, 0, noise, s) == z0);
  CHECK(forward_sample(z0, zT, 4, noise, s) == zT);
}

TEST_CASE("forward sampling midpoint value") {
  BridgeSchedule s = make_schedule(2);
  Vec z0 = {1.0, 0.0};
  Vec zT = {0.0, 1.0};
  Vec noise = {1.0, 1.0};
  Vec z1 = forward_sample(z0, zT, 1, noise, s);
  double want = 0.5 + std::sqrt(0.5);
  check_close(z1[0], want, 1e-15);
  check_close(z1[1], want, 1e-15);
}

TEST_CASE("forward sampling matches between plain and taped evaluation") {
  BridgeSchedule s = make_schedule(6);
  Rng rng(41);
  Vec z0 = random_vec(rng, 5);
  Vec zT = random_vec(rng, 5);
  for (int t = 0; t <= 6; ++t) {
    Vec noise = random_vec(rng, 5);
    Vec plain = forward_sample(z0, zT, t, noise, s);
    ag::Tape tape;
    ag::Var a = tape.constant(z0);
    ag::Var b = tape.constant(zT);
    Vec taped = tape.value(forward_sample(tape, a, b, t, noise, s));
    REQUIRE(taped.size() == plain.size());
    for (std::size_t i = 0; i < plain.size(); ++i) check_close(taped[i], plain[i], 1e-15);
  }
}

TEST_CASE("forward sampling validation") {
  BridgeSchedule s = make_schedule(4);
  Vec z0 = {1.0, 2.0};
  Vec zT = {0.0, 1.0};
  Vec noise = {0.0, 0.0};
  CHECK_THROWS_AS((void)forward_sample(z0, zT, -1, noise, s), validation_error);
  CHECK_THROWS_AS((void)forward_sample(z0, zT, 5, noise, s), validation_error);
  CHECK_THROWS_AS((void)forward_sample(z0, Vec{1.0}, 2, noise, s), validation_error);
  CHECK_THROWS_AS((void)forward_sample(z0, zT, 2, Vec{1.0}, s), validation_error);
}

TEST_CASE("transfer model construction") {
  TransferModel m = TransferModel::init(3, 4, 2, 5);
  CHECK(m.input_width() == 11);
  CHECK(m.params.values.size() == mlp3_param_count(11, 4, 3));

  TransferModel again = TransferModel::init(3, 4, 2, 5);
  CHECK(again.params.values == m.params.values);
  TransferModel other = TransferModel::init(3, 4, 2, 6);
  CHECK(other.params.values != m.params.values);

  CHECK_THROWS_AS((void)TransferModel::init(0, 4, 2, 5), validation_error);
  CHECK_THROWS_AS((void)TransferModel::init(3, 0, 2, 5), validation_error);
  CHECK_THROWS_AS((void)TransferModel::init(3, 4, 3, 5), validation_error);
  CHECK_THROWS_AS((void)TransferModel::init(3, 4, 0, 5), validation_error);
}

TEST_CASE("difference prediction and restoration agree between plain and taped paths") {
  TransferModel m = TransferModel::init(4, 6, 4, 11);
  Rng rng(12);
  Vec z_t = random_vec(rng, 4);
  Vec z_T = random_vec(rng, 4);
  Vec cond = random_vec(rng, 4);

  Vec plain_delta = m.predict_delta(z_t, z_T, cond, 3);
  Vec plain_restored = restore_z0(z_t, z_T, cond, 3, m);

  ag::Tape tape;
  ag::Var pl = tape.leaf(m.params.values);
  ag::Var a = tape.constant(z_t);
  ag::Var b = tape.constant(z_T);
  ag::Var c = tape.constant(cond);
  Vec taped_delta = tape.value(m.predict_delta(tape, pl, a, b, c, 3));
  Vec taped_restored = tape.value(restore_z0(tape, pl, a, b, c, 3, m));

  REQUIRE(taped_delta.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    check_close(taped_delta[i], plain_delta[i], 1e-12);
    check_close(taped_restored[i], plain_restored[i], 1e-12);
    check_close(plain_restored[i], z_T[i] - plain_delta[i], 1e-15);
  }

  CHECK_THROWS_AS((void)restore_z0(z_t, z_T, cond, 0, m), validation_error);
  CHECK_THROWS_AS((void)m.predict_delta(Vec{1.0}, z_T, cond, 2), validation_error);
}

TEST_CASE("restoration loss is the squared distance") {
  CHECK(restoration_loss({1.0, 2.0}, {0.0, 0.0}) == 5.0);
  CHECK(restoration_loss({1.0, 2.0}, {1.0, 2.0}) == 0.0);
  ag::Tape tape;
  ag::Var a = tape.constant({1.0, 2.0});
  ag::Var b = tape.constant({3.0, -1.0});
  CHECK(tape.value(restoration_loss(tape, a, b))[0] == 13.0);
  CHECK_THROWS_AS((void)restoration_loss({1.0}, {1.0, 2.0}), validation_error);
}

TEST_CASE("reverse chain matches a hand-unrolled two-step bridge") {
  BridgeSchedule s = make_schedule(2);
  TransferModel m = TransferModel::init(2, 5, 2, 3);
  Rng rng(7);
  Vec zT = random_vec(rng, 2);
  Vec cond = random_vec(rng, 2);
  std::vector<Vec> noise = {random_vec(rng, 2), random_vec(rng, 2)};

  std::vector<ReverseStep> trace;
  Vec out = reverse_sample(zT, cond, m, s, noise, &trace);

  REQUIRE(trace.size() == 2);
  CHECK(trace[0].t == 2);
  CHECK(trace[1].t == 1);
  CHECK(trace[0].sigma2 == 0.5);  // delta[T-1] for T = 2
  CHECK(trace[1].sigma2 == 0.0);

  // step t = 2: mean = 0.5 restored + 0.5 zT, sd = sqrt(0.5)
  Vec restored2 = restore_z0(zT, zT, cond, 2, m);
  Vec z1(2);
  for (int i = 0; i < 2; ++i) {
    double mean = 0.5 * restored2[static_cast<std::size_t>(i)] + 0.5 * zT[static_cast<std::size_t>(i)];
    check_close(trace[0].mean[static_cast<std::size_t>(i)], mean, 1e-12);
    z1[static_cast<std::size_t>(i)] = mean + std::sqrt(0.5) * noise[0][static_cast<std::size_t>(i)];
  }
  // step t = 1: sigma = 0, so the output is exactly the restored value
  Vec restored1 = restore_z0(z1, zT, cond, 1, m);
  for (int i = 0; i < 2; ++i) {
    check_close(trace[1].restored[static_cast<std::size_t>(i)], restored1[static_cast<std::size_t>(i)], 1e-9);
    check_close(out[static_cast<std::size_t>(i)], restored1[static_cast<std::size_t>(i)], 1e-9);
    check_close(out[static_cast<std::size_t>(i)], trace[1].mean[static_cast<std::size_t>(i)], 1e-15);
  }
}

TEST_CASE("reverse chain noise bookkeeping") {
  BridgeSchedule s = make_schedule(3);
  TransferModel m = TransferModel::init(2, 4, 2, 9);
  Rng rng(21);
  Vec zT = random_vec(rng, 2);
  Vec cond = random_vec(rng, 2);

  std::vector<Vec> short_noise = {random_vec(rng, 2), random_vec(rng, 2)};
  CHECK_THROWS_AS((void)reverse_sample(zT, cond, m, s, short_noise, nullptr), validation_error);

  std::vector<Vec> noise;
  for (int i = 0; i < 3; ++i) noise.push_back(random_vec(rng, 2));
  Vec exact = reverse_sample(zT, cond, m, s, noise, nullptr);

  // extra draws beyond T never change the result
  std::vector<Vec> padded = noise;
  padded.push_back({1000.0, -1000.0});
  padded.push_back({42.0, 42.0});
  CHECK(reverse_sample(zT, cond, m, s, padded, nullptr) == exact);

  // perturbing a consumed draw does (index 0 feeds t = T where sigma > 0)
  std::vector<Vec> bumped = noise;
  bumped[0][0] += 1.0;
  CHECK(reverse_sample(zT, cond, m, s, bumped, nullptr) != exact);

  std::vector<Vec> ragged = noise;
  ragged[1] = {1.0};
  CHECK_THROWS_AS((void)reverse_sample(zT, cond, m, s, ragged, nullptr), validation_error);
  CHECK_THROWS_AS((void)reverse_sample(zT, Vec{0.0}, m, s, noise, nullptr), validation_error);
}

TEST_CASE("time embedding layout") {
  CHECK_THROWS_AS((void)time_embedding(0, 3), validation_error);
  CHECK_THROWS_AS((void)time_embedding(0, 0), validation_error);
  Vec e0 = time_embedding(0, 6);
  REQUIRE(e0.size() == 6);
  for (int i = 0; i < 3; ++i) {
    CHECK(e0[static_cast<std::size_t>(2 * i)] == 0.0);
    CHECK(e0[static_cast<std::size_t>(2 * i + 1)] == 1.0);
  }
  Vec e3 = time_embedding(3, 2);
  check_close(e3[0], std::sin(3.0), 1e-15);
  check_close(e3[1], std::cos(3.0), 1e-15);
}
