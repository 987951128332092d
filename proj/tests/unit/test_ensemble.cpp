#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "feddti/dataset.hpp"
#include "feddti/ensemble.hpp"
#include "feddti/federation.hpp"
#include "feddti/partitioner.hpp"
#include "feddti/random.hpp"

using namespace feddti;

namespace {

ModelConfig linear1() { return {ModelKind::linear, 1, 1, 1, 1}; }

// Linear model with a zero embedding that predicts the constant `c`.
ParameterVector constant(double c) { return ParameterVector::from_tensors(model_layout(linear1()), {{0}, {0}, {c}}); }

EnsembleModel random_ensemble(std::uint64_t seed, const ModelConfig& mcfg) {
  KeyedStream rng(seed);
  EnsembleModel e;
  e.mcfg = mcfg;
  const auto n = 1 + rng.below(6);
  for (std::size_t k = 0; k < n; ++k) {
    auto p = init_model(mcfg, rng.next());
    for (auto& v : p.values()) v += 0.5 * rng.normal();
    e.members.push_back(std::move(p));
  }
  return e;
}

}  // namespace

TEST_CASE("predict_ensemble is the member mean") {
  EnsembleModel e{{constant(1.0), constant(3.0)}, linear1(), {}};
  CHECK(predict_ensemble(e, 0, 0) == 2.0);
  e.members = {constant(0.0), constant(0.0), constant(3.0)};
  CHECK(predict_ensemble(e, 0, 0) == 1.0);
  e.members = {constant(-0.75)};
  CHECK(predict_ensemble(e, 0, 0) == -0.75);
}

TEST_CASE("evaluate_ensemble") {
  const auto ds = generate_synthetic({15, 10, 300, 3, 0.2, 1});
  const ModelConfig mcfg{ModelKind::two_tower_mlp, 4, 5, ds.drugs().size(), ds.proteins().size()};

  SUBCASE("perfect members") {
    EnsembleModel e{{constant(2.0), constant(2.0)}, linear1(), {}};
    const std::vector<Sample> data = {{0, 0, 2.0}, {0, 0, 2.0}};
    CHECK(evaluate_ensemble(e, data) == 0.0);
  }
  SUBCASE("single member delegates to evaluate_mse") {
    const EnsembleModel e{{init_model(mcfg, 4)}, mcfg, {0}};
    CHECK(evaluate_ensemble(e, ds) == evaluate_mse(e.members[0], mcfg, ds));
  }
  SUBCASE("Jensen bound on randomized ensembles") {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto e = random_ensemble(s, mcfg);
      double mean_member = 0.0;
      for (const auto& m : e.members) mean_member += evaluate_mse(m, mcfg, ds);
      mean_member /= static_cast<double>(e.members.size());
      CHECK(evaluate_ensemble(e, ds) <= mean_member * (1.0 + 1e-12));
    }
  }
  SUBCASE("member order does not matter") {
    auto e = random_ensemble(3, mcfg);
    const double before = evaluate_ensemble(e, ds);
    std::reverse(e.members.begin(), e.members.end());
    CHECK(evaluate_ensemble(e, ds) == before);
    std::rotate(e.members.begin(), e.members.begin() + 1, e.members.end());
    CHECK(evaluate_ensemble(e, ds) == before);
  }
  CHECK_THROWS_AS(evaluate_ensemble(random_ensemble(1, mcfg), std::span<const Sample>{}), std::invalid_argument);
}

TEST_CASE("train_bagging") {
  const auto ds = generate_synthetic({20, 10, 600, 3, 0.1, 2});
  const auto split = split_train_test(ds, 0.2, 3);
  const ModelConfig mcfg{ModelKind::two_tower_mlp, 4, 6, ds.drugs().size(), ds.proteins().size()};
  const TrainConfig t{2, 0.05, 16, 11, 0};

  SUBCASE("one client equals centralized training and the one-client federation") {
    const auto part = partition_iid(split.train, 1, 0);
    const auto e = train_bagging(split, part, mcfg, t, 6, 21);
    REQUIRE(e.members.size() == 1);
    TrainConfig central = t;
    central.epochs = 6;
    central.seed = client_stream_seed(t.seed, 0);
    const auto gathered = split.train.gather(part.assignments[0]);
    CHECK(e.members[0] == sgd_train(init_model(mcfg, 21), mcfg, central, gathered));
    const auto fed = run_federation(split, part, mcfg, t, 3, 21);
    CHECK(e.members[0] == fed.final_params);
    CHECK(evaluate_ensemble(e, split.test) == fed.history.back().global_mse);
  }
  SUBCASE("empty clients produce no member") {
    Partition part = partition_iid(split.train, 2, 0);
    part.assignments.insert(part.assignments.begin() + 1, std::vector<std::size_t>{});
    const auto e = train_bagging(split, part, mcfg, t, 1, 0);
    CHECK(e.members.size() == 2);
    CHECK(e.member_clients == std::vector<std::size_t>{0, 2});
  }
  SUBCASE("identical data and seeds give duplicate members") {
    const auto data = split.train.samples();
    const auto a = train_member(mcfg, t, 2, 5, 1, data);
    const auto b = train_member(mcfg, t, 2, 5, 1, data);
    CHECK(a == b);
    const EnsembleModel e{{a, b}, mcfg, {0, 1}};
    for (std::size_t d = 0; d < 5; ++d) CHECK(predict_ensemble(e, d, 0) == doctest::Approx(predict(a, mcfg, d, 0)).epsilon(1e-15));
  }
  SUBCASE("worker count does not change members") {
    const auto part = partition_iid(split.train, 5, 2);
    const auto serial = train_bagging(split, part, mcfg, t, 2, 4, 1);
    const auto parallel = train_bagging(split, part, mcfg, t, 2, 4, 3);
    CHECK(serial.members == parallel.members);
  }
  SUBCASE("errors") {
    Partition empty;
    empty.source_size = split.train.size();
    empty.assignments.resize(2);
    CHECK_THROWS_AS(train_bagging(split, empty, mcfg, t, 1, 0), std::invalid_argument);
    CHECK_THROWS_AS(train_bagging(split, partition_iid(split.train, 2, 0), mcfg, t, 0, 0), std::invalid_argument);
  }
}

TEST_CASE("ensemble checkpoint round-trip") {
  const auto ds = generate_synthetic({8, 5, 100, 2, 0.1, 2});
  const ModelConfig mcfg{ModelKind::two_tower_mlp, 3, 4, ds.drugs().size(), ds.proteins().size()};
  auto e = random_ensemble(9, mcfg);
  for (std::size_t k = 0; k < e.members.size(); ++k) e.member_clients.push_back(2 * k);
  const auto dir = std::filesystem::temp_directory_path() / "feddti_ensemble_test";
  std::filesystem::remove_all(dir);
  save_ensemble(e, dir);
  const auto back = load_ensemble(dir);
  CHECK(back.members == e.members);
  CHECK(back.mcfg == e.mcfg);
  CHECK(back.member_clients == e.member_clients);
  std::filesystem::remove_all(dir);
}
