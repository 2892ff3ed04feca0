#include <cmath>
#include <filesystem>

#include <doctest.h>

#include "gyro/array.hpp"
#include "gyro/checkpoint.hpp"
#include "gyro/error.hpp"
#include "gyro/graph.hpp"
#include "gyro/optim.hpp"
#include "gyro/rng.hpp"
#include "test_util.hpp"

using namespace gyro;

TEST_CASE("array basics") {
  Array a = Array::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(a.rows() == 2);
  CHECK(a.cols() == 3);
  CHECK(a.at(1, 2) == 6);
  CHECK_THROWS_AS(Array({2, 2}, {1.0}), Error);
  Array s = Array::scalar(3.5);
  CHECK(s.scalar_value() == 3.5);
  CHECK(Array::full({2, 2}, 1.0).all_finite());
}

TEST_CASE("gradient of sum is ones") {
  ParameterStore store;
  Parameter& p = store.create("p", Array::vector({1.0, 2.0, 3.0}));
  Graph g;
  Value loss = g.sum_all(g.param(p));
  CHECK(g.backward(loss) == doctest::Approx(6.0));
  for (int i = 0; i < 3; ++i) CHECK(p.grad[i] == 1.0);
}

TEST_CASE("gradient of sum of squares") {
  ParameterStore store;
  Parameter& p = store.create("p", Array::vector({1.0, -2.0}));
  Graph g;
  Value loss = g.sum_all(g.square(g.param(p)));
  CHECK(g.backward(loss) == doctest::Approx(5.0));
  CHECK(p.grad[0] == doctest::Approx(2.0));
  CHECK(p.grad[1] == doctest::Approx(-4.0));
}

TEST_CASE("stop_gradient blocks the edge exactly") {
  ParameterStore store;
  Parameter& p = store.create("p", Array::vector({1.5}));
  Graph g;
  Value x = g.param(p);
  Value loss = g.sum_all(g.add(g.mul(x, x), g.stop_gradient(g.mul(x, x))));
  g.backward(loss);
  CHECK(p.grad[0] == doctest::Approx(3.0));  // only the live x*x contributes

  Graph g2;
  Value y = g2.param(p);
  Value loss2 = g2.sum_all(g2.stop_gradient(g2.square(y)));
  g2.backward(loss2);
  CHECK(p.grad[0] == 0.0);
}

TEST_CASE("two layer mlp gradients match finite differences") {
  Rng rng(7);
  ParameterStore store;
  auto init = [&](Shape shape) {
    Array a(shape);
    rng.fill_normal(a, 0.0, 0.4);
    return a;
  };
  Parameter& w1 = store.create("w1", init({4, 8}));
  Parameter& b1 = store.create("b1", init({8}));
  Parameter& w2 = store.create("w2", init({8, 3}));
  Parameter& b2 = store.create("b2", init({3}));
  Array inputs({5, 4});
  rng.fill_normal(inputs);
  Array targets({5, 3});
  rng.fill_normal(targets);

  auto build = [&](Graph& g) {
    Value x = g.constant(inputs);
    Value h = g.tanh(g.add(g.matmul(x, g.param(w1)), g.param(b1)));
    Value out = g.add(g.matmul(h, g.param(w2)), g.param(b2));
    return g.mean_all(g.square(g.sub(out, g.constant(targets))));
  };
  auto params = store.all();
  auto report = gyro::testing::check_gradients(build, params, 1e-5, 1e-6);
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("op zoo gradients match finite differences") {
  Rng rng(11);
  ParameterStore store;
  Array init({3, 4});
  rng.fill_normal(init, 0.1, 0.7);
  Parameter& p = store.create("p", init);
  Array q_init({4});
  rng.fill_normal(q_init, 0.0, 0.5);
  Parameter& q = store.create("q", q_init);

  auto check = [&](const std::function<Value(Graph&, Value, Value)>& body, double tol = 1e-5) {
    auto build = [&](Graph& g) { return body(g, g.param(p), g.param(q)); };
    auto params = store.all();
    gyro::testing::check_gradients(build, params, 1e-6, tol);
  };

  check([](Graph& g, Value x, Value y) { return g.sum_all(g.add(x, y)); });
  check([](Graph& g, Value x, Value y) { return g.sum_all(g.mul(x, y)); });
  check([](Graph& g, Value x, Value y) {
    return g.sum_all(g.div(x, g.add(g.square(y), g.constant(1.0))));
  });
  check([](Graph& g, Value x, Value y) { return g.sum_all(g.exp(g.mul(x, g.constant(0.3)))); });
  check([](Graph& g, Value x, Value y) {
    return g.sum_all(g.log(g.add(g.square(x), g.constant(0.5))));
  });
  check([](Graph& g, Value x, Value y) { return g.sum_all(g.tanh(x)); });
  check([](Graph& g, Value x, Value y) {
    // weighted so the loss is not the constant row count
    Array w({3, 4});
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = 0.2 * static_cast<double>(i) - 1.0;
    return g.sum_all(g.mul(g.softmax(x), g.constant(w)));
  });
  check([](Graph& g, Value x, Value y) { return g.mean_all(g.log_softmax(x)); });
  check([](Graph& g, Value x, Value y) { return g.sum_all(g.sum_rows(g.square(x))); });
  check([](Graph& g, Value x, Value y) { return g.sum_all(g.sum_cols(x)); });
  check([](Graph& g, Value x, Value y) {
    return g.sum_all(g.minimum(x, g.broadcast_cols(y, 3)));
  });
  check([](Graph& g, Value x, Value y) {
    return g.sum_all(g.maximum(x, g.broadcast_cols(y, 3)));
  });
  check([](Graph& g, Value x, Value y) { return g.sum_all(g.concat_cols(x, g.square(x))); });
  check([](Graph& g, Value x, Value y) { return g.sum_all(g.slice_cols(x, 1, 3)); });
  check([](Graph& g, Value x, Value y) { return g.sum_all(g.gather_rows(x, {2, 0, 2})); });
  check([](Graph& g, Value x, Value y) { return g.sum_all(g.clip(x, -0.5, 0.5)); });
  check([](Graph& g, Value x, Value y) { return g.sum_all(g.matmul(x, x, true, false)); });
  check([](Graph& g, Value x, Value y) { return g.sum_all(g.matmul(x, x, false, true)); });
  check([](Graph& g, Value x, Value y) { return g.mean_all(g.relu(x)); }, 2e-4);
}

TEST_CASE("double backward computes hessian vector products") {
  // f(p) = sum(p^3): H = diag(6 p), so Hv is computable in closed form.
  ParameterStore store;
  Parameter& p = store.create("p", Array::vector({1.0, 2.0, -1.5}));
  Array v = Array::vector({0.5, -1.0, 2.0});

  Graph g;
  Value x = g.param(p);
  Value loss = g.sum_all(g.mul(x, g.square(x)));
  Value leaves[] = {x};
  auto grads = g.gradients(loss, leaves);
  Value gv = g.dot(grads[0], g.constant(v));
  auto hv = g.gradients(gv, leaves);
  const Array& result = hv[0].array();
  for (int i = 0; i < 3; ++i) CHECK(result[i] == doctest::Approx(6.0 * p.value[i] * v[i]));
}

TEST_CASE("shape mismatch is rejected at construction") {
  Graph g;
  Value a = g.constant(Array::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  Value b = g.constant(Array::vector({1.0, 2.0}));
  CHECK_THROWS_AS(g.add(a, b), Error);
  CHECK_THROWS_AS(g.matmul(a, a), Error);
}

TEST_CASE("non-finite loss names the offending op") {
  ParameterStore store;
  Parameter& p = store.create("p", Array::vector({-1.0}));
  Graph g;
  Value loss = g.sum_all(g.log(g.param(p)));
  try {
    g.backward(loss);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("log") != std::string::npos);
  }
}

TEST_CASE("adam zero gradient leaves parameters unchanged") {
  ParameterStore store;
  Parameter& p = store.create("p", Array::vector({1.0, -3.0}));
  Adam adam(1e-3);
  adam.step(store.all());
  CHECK(adam.step_count() == 1);
  CHECK(p.value[0] == 1.0);
  CHECK(p.value[1] == -3.0);
}

TEST_CASE("adam asymptotic step magnitude approaches learning rate") {
  ParameterStore store;
  Parameter& p = store.create("p", Array::vector({0.0}));
  Adam adam(1e-2);
  double previous = 0.0;
  for (int i = 0; i < 2000; ++i) {
    previous = p.value[0];
    p.grad[0] = 2.5;  // constant positive gradient
    adam.step(store.all());
  }
  CHECK(previous - p.value[0] == doctest::Approx(1e-2).epsilon(1e-3));
}

TEST_CASE("gradient clipping rescales to the requested global norm") {
  ParameterStore store;
  Parameter& a = store.create("a", Array::vector({0.0}));
  Parameter& b = store.create("b", Array::vector({0.0}));
  a.grad[0] = 24.0;
  b.grad[0] = 32.0;  // global norm 40
  auto params = store.all();
  clip_global_grad_norm(params, 1.0);
  CHECK(global_grad_norm(params) == doctest::Approx(1.0));
  CHECK(a.grad[0] == doctest::Approx(0.6));
  CHECK(b.grad[0] == doctest::Approx(0.8));
}

TEST_CASE("adam is bit deterministic") {
  auto run = [] {
    ParameterStore store;
    Parameter& p = store.create("p", Array::vector({0.3, -0.7, 1.1}));
    Adam adam(3e-4);
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
      for (int j = 0; j < 3; ++j) p.grad[j] = rng.normal();
      adam.step(store.all());
    }
    return p.value.values();
  };
  auto first = run();
  auto second = run();
  CHECK(first == second);
}

TEST_CASE("soft update blends and converges geometrically") {
  ParameterStore store;
  Parameter& online = store.create("actor/w", Array::vector({1.0}));
  Parameter& target = store.create("target_actor/w", Array::vector({0.0}));
  Parameter* targets[] = {&target};
  Parameter* onlines[] = {&online};

  soft_update(targets, onlines, 0.005);
  CHECK(target.value[0] == doctest::Approx(0.005));

  target.value[0] = 0.0;
  int steps = 100;
  for (int i = 0; i < steps; ++i) soft_update(targets, onlines, 0.005);
  CHECK(1.0 - target.value[0] == doctest::Approx(std::pow(0.995, steps)).epsilon(1e-12));

  hard_update(targets, onlines);
  CHECK(target.value[0] == 1.0);
}

TEST_CASE("soft update rejects mismatched names and shapes") {
  ParameterStore store;
  Parameter& online = store.create("actor/w", Array::vector({1.0}));
  Parameter& wrong_name = store.create("target_actor/b", Array::vector({0.0}));
  Parameter& wrong_shape = store.create("target_actor/w", Array::vector({0.0, 0.0}));
  Parameter* onlines[] = {&online};
  Parameter* bad_names[] = {&wrong_name};
  Parameter* bad_shapes[] = {&wrong_shape};
  CHECK_THROWS_AS(soft_update(bad_names, onlines, 0.5), Error);
  CHECK_THROWS_AS(soft_update(bad_shapes, onlines, 0.5), Error);
}

TEST_CASE("checkpoint round trip") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "gyro_ckpt_test";
  fs::create_directories(dir);
  fs::path file = dir / "step_10";

  std::map<std::string, Array> records;
  records.emplace("actor/w", Array::matrix(2, 2, {1.0, -2.0, 0.5, 1e-17}));
  records.emplace("obs_normalizer/mean", Array::vector({0.25, -0.125}));
  save_checkpoint(file, records);

  auto loaded = load_checkpoint(file);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded.at("actor/w").values() == records.at("actor/w").values());
  CHECK(loaded.at("obs_normalizer/mean").shape() == Shape{2});
  CHECK_THROWS_AS(load_checkpoint(dir / "missing"), Error);
  fs::remove_all(dir);
}

TEST_CASE("rng streams are deterministic and independent") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(Rng::mix(1, "train") != Rng::mix(1, "test"));
  CHECK(Rng::mix(1, "train") == Rng::mix(1, "train"));

  Rng c(7);
  double mean = 0.0;
  int n = 200000;
  for (int i = 0; i < n; ++i) mean += c.normal();
  mean /= n;
  CHECK(std::abs(mean) < 0.01);
}
