#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <numeric>

#include "feddti/dataset.hpp"
#include "feddti/error.hpp"
#include "feddti/partitioner.hpp"

using namespace feddti;

namespace {

// Dataset whose protein `p<k>` owns counts[k] records, each with a distinct drug.
Dataset with_protein_counts(const std::vector<std::size_t>& counts) {
  std::vector<InteractionRecord> recs;
  std::size_t drug = 0;
  for (std::size_t p = 0; p < counts.size(); ++p) {
    for (std::size_t i = 0; i < counts[p]; ++i) {
      recs.push_back({"d" + std::to_string(drug++), "p" + std::to_string(p), 0.0});
    }
  }
  return Dataset::from_records(std::move(recs));
}

std::vector<std::size_t> sorted_sizes(const Partition& p) {
  auto s = p.client_sizes();
  std::sort(s.begin(), s.end());
  return s;
}

// Client owning each record, or -1 if withheld.
std::vector<long> owners(const Partition& p) {
  std::vector<long> o(p.source_size, -1);
  for (std::size_t c = 0; c < p.n_clients(); ++c) {
    for (auto i : p.assignments[c]) o[i] = static_cast<long>(c);
  }
  return o;
}

void check_entity_exclusive(const Dataset& ds, const Partition& p, EntityDim dim) {
  std::map<std::int32_t, std::set<long>> holders;
  const auto o = owners(p);
  for (std::size_t i = 0; i < ds.size(); ++i) holders[ds.entity_of(i, dim)].insert(o[i]);
  for (const auto& [entity, clients] : holders) CHECK(clients.size() == 1);
}

}  // namespace

TEST_CASE("partition_iid") {
  SUBCASE("divisible") {
    const auto ds = generate_synthetic({4, 4, 8, 2, 0.1, 1});
    const auto p = partition_iid(ds, 4, 3);
    CHECK(p.client_sizes() == std::vector<std::size_t>{2, 2, 2, 2});
    validate_partition(p);
  }
  SUBCASE("remainder") {
    const auto ds = generate_synthetic({4, 4, 7, 2, 0.1, 1});
    const auto p = partition_iid(ds, 4, 3);
    CHECK(sorted_sizes(p) == std::vector<std::size_t>{1, 2, 2, 2});
    validate_partition(p);
  }
  SUBCASE("determinism") {
    const auto ds = generate_synthetic({10, 10, 1000, 2, 0.1, 1});
    CHECK(partition_iid(ds, 8, 5).assignments == partition_iid(ds, 8, 5).assignments);
    CHECK(partition_iid(ds, 8, 5).assignments != partition_iid(ds, 8, 6).assignments);
  }
  CHECK_THROWS_AS(partition_iid(generate_synthetic({2, 2, 4, 2, 0.1, 1}), 0, 1), std::invalid_argument);
}

TEST_CASE("partition_entity") {
  SUBCASE("symmetric: one protein per client") {
    const auto ds = with_protein_counts({5, 5, 5, 5});
    const auto p = partition_entity(ds, 4, EntityDim::protein, 0);
    CHECK(p.client_sizes() == std::vector<std::size_t>{5, 5, 5, 5});
    check_entity_exclusive(ds, p, EntityDim::protein);
  }
  SUBCASE("greedy on counts {6,5,4,3}, K=2") {
    // 6 -> c0; 5 -> c1; 4 -> c1 (5 < 6); 3 -> c0 (6 < 9).
    const auto ds = with_protein_counts({6, 5, 4, 3});
    const auto p = partition_entity(ds, 2, EntityDim::protein, 0);
    CHECK(p.client_sizes() == std::vector<std::size_t>{9, 9});
    const auto o = owners(p);
    CHECK(o[0] == 0);   // protein p0 (6 records)
    CHECK(o[6] == 1);   // p1
    CHECK(o[11] == 1);  // p2
    CHECK(o[15] == 0);  // p3
  }
  SUBCASE("ties broken by entity id then client id") {
    const auto ds = with_protein_counts({2, 2, 2});
    const auto p = partition_entity(ds, 2, EntityDim::protein, 0);
    CHECK(p.client_sizes() == std::vector<std::size_t>{4, 2});
    const auto o = owners(p);
    CHECK(o[0] == 0);
    CHECK(o[2] == 1);
    CHECK(o[4] == 0);
  }
  SUBCASE("exclusivity and greedy balance on random data") {
    const auto ds = generate_synthetic({60, 25, 3000, 2, 0.1, 17});
    for (auto dim : {EntityDim::protein, EntityDim::drug}) {
      for (std::size_t k : {1u, 2u, 5u, 8u, 16u}) {
        const auto p = partition_entity(ds, k, dim, 0);
        validate_partition(p);
        check_entity_exclusive(ds, p, dim);
        std::map<std::int32_t, std::size_t> counts;
        for (std::size_t i = 0; i < ds.size(); ++i) ++counts[ds.entity_of(i, dim)];
        std::size_t max_entity = 0;
        for (const auto& [_, c] : counts) max_entity = std::max(max_entity, c);
        const auto sizes = sorted_sizes(p);
        CHECK(sizes.back() - sizes.front() <= max_entity);
      }
    }
  }
  CHECK_THROWS_AS(partition_entity(with_protein_counts({3, 3}), 3, EntityDim::protein, 0), std::invalid_argument);
}

TEST_CASE("apply_gaussian_mixing") {
  const auto ds = generate_synthetic({50, 20, 4000, 2, 0.1, 2});
  const auto base = partition_entity(ds, 6, EntityDim::protein, 0);

  SUBCASE("level 0 is the identity") {
    const auto mixed = apply_gaussian_mixing(base, {0.0, 1.5, 9});
    CHECK(mixed.assignments == base.assignments);
    CHECK(mixed.provenance.params.contains("mixing"));
  }
  SUBCASE("K=3: both neighbours equally likely") {
    const auto ds3 = generate_synthetic({50, 20, 60000, 2, 0.1, 2});
    const auto p3 = partition_iid(ds3, 3, 1);
    const auto mixed = apply_gaussian_mixing(p3, {1.0, 0.7, 4});
    const auto before = owners(p3), after = owners(mixed);
    // Among records leaving client 0, the share landing on client 1 is 1/2.
    std::size_t to1 = 0, moved = 0;
    for (std::size_t i = 0; i < ds3.size(); ++i) {
      if (before[i] != 0) continue;
      ++moved;
      CHECK(after[i] != 0);
      if (after[i] == 1) ++to1;
    }
    const double frac = static_cast<double>(to1) / static_cast<double>(moved);
    CHECK(std::abs(frac - 0.5) < 3.0 * std::sqrt(0.25 / static_cast<double>(moved)));
  }
  SUBCASE("nearer neighbours receive more") {
    const auto ds8 = generate_synthetic({50, 20, 40000, 2, 0.1, 2});
    const auto p8 = partition_iid(ds8, 8, 1);
    const auto mixed = apply_gaussian_mixing(p8, {1.0, 2.0, 4});
    const auto before = owners(p8), after = owners(mixed);
    std::vector<std::size_t> by_distance(5, 0);
    for (std::size_t i = 0; i < ds8.size(); ++i) {
      ++by_distance[ring_distance(static_cast<std::size_t>(before[i]), static_cast<std::size_t>(after[i]), 8)];
    }
    CHECK(by_distance[0] == 0);
    CHECK(by_distance[1] > by_distance[2]);
    CHECK(by_distance[2] > by_distance[3]);
    CHECK(by_distance[3] > by_distance[4]);
  }
  SUBCASE("conservation and determinism") {
    const auto a = apply_gaussian_mixing(base, {0.4, 1.5, 9});
    validate_partition(a);
    CHECK(a.assignments == apply_gaussian_mixing(base, {0.4, 1.5, 9}).assignments);
  }
  SUBCASE("errors") {
    const auto single = partition_iid(ds, 1, 0);
    CHECK_THROWS_AS(apply_gaussian_mixing(single, {0.5, 1.0, 0}), std::invalid_argument);
    CHECK_NOTHROW(apply_gaussian_mixing(single, {0.0, 1.0, 0}));
    CHECK_THROWS_AS(apply_gaussian_mixing(base, {1.5, 1.0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(apply_gaussian_mixing(base, {0.5, 0.0, 0}), std::invalid_argument);
  }
}

TEST_CASE("mixing off-owner fraction tracks the level") {
  const auto ds = generate_synthetic({200, 50, 20000, 2, 0.1, 21});
  const auto base = partition_iid(ds, 8, 0);
  const auto before = owners(base);
  const double n = static_cast<double>(ds.size());
  double previous = -1.0;
  for (double level : mixing_level_grid()) {
    const auto after = owners(apply_gaussian_mixing(base, {level, 2.0, 31}));
    std::size_t moved = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) moved += before[i] != after[i];
    const double frac = static_cast<double>(moved) / n;
    CHECK(std::abs(frac - level) <= 3.0 * std::sqrt(level * (1.0 - level) / n) + 1e-12);
    CHECK(frac >= previous);
    previous = frac;
  }
}

TEST_CASE("partition_combined") {
  const auto ds = generate_synthetic({80, 30, 5000, 2, 0.1, 4});
  SUBCASE("level 0 keeps halves on their own client groups") {
    const auto p = partition_combined(ds, 4, {0.0, 1.0, 3}, 8);
    validate_partition(p);
    const auto o = owners(p);
    const auto& prov = p.provenance.params;
    CHECK(prov.at("half_a").at("size").get<std::size_t>() + prov.at("half_b").at("size").get<std::size_t>() ==
          ds.size());
    // Proteins never straddle clients 0-1, drugs never straddle clients 2-3.
    std::map<std::int32_t, std::set<long>> protein_holders, drug_holders;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (o[i] < 2) protein_holders[ds.entity_of(i, EntityDim::protein)].insert(o[i]);
      else drug_holders[ds.entity_of(i, EntityDim::drug)].insert(o[i]);
    }
    for (const auto& [_, c] : protein_holders) CHECK(c.size() == 1);
    for (const auto& [_, c] : drug_holders) CHECK(c.size() == 1);
    CHECK(p.assignments[0].size() + p.assignments[1].size() == ds.size() / 2);
  }
  SUBCASE("conservation across seeds and determinism") {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const auto p = partition_combined(ds, 6, {0.5, 1.5, seed}, seed);
      validate_partition(p);
      CHECK(p.assigned_count() == ds.size());
    }
    CHECK(partition_combined(ds, 4, {0.3, 1.0, 1}, 2).assignments ==
          partition_combined(ds, 4, {0.3, 1.0, 1}, 2).assignments);
  }
  CHECK_THROWS_AS(partition_combined(ds, 3, {0.0, 1.0, 0}, 0), std::invalid_argument);
  CHECK_THROWS_AS(partition_combined(ds, 0, {0.0, 1.0, 0}, 0), std::invalid_argument);
}

TEST_CASE("largest_remainder") {
  const std::vector<double> w = {1.0, 1.0, 1.0};
  CHECK(largest_remainder(10, w) == std::vector<std::size_t>{4, 3, 3});
  CHECK(largest_remainder(0, w) == std::vector<std::size_t>{0, 0, 0});
  const std::vector<double> skew = {3.0, 1.0};
  CHECK(largest_remainder(9, skew) == std::vector<std::size_t>{7, 2});  // 6.75, 2.25
}

TEST_CASE("partition_quantity_skew") {
  SUBCASE("K=2, share 0.6, N=10") {
    const auto ds = generate_synthetic({5, 5, 10, 2, 0.1, 1});
    CHECK(partition_quantity_skew(ds, 2, 0.6, 0.25, 0).client_sizes() == std::vector<std::size_t>{6, 4});
  }
  SUBCASE("K=4, share 0.6, N=100, sigma 0.75") {
    // Remainder 40 over weights exp(0), exp(-1/1.125), exp(-4/1.125):
    // quotas 27.784, 11.422, 0.794 -> floors 27, 11, 0; the two leftovers go to
    // remainders .794 (client 3) and .784 (client 1).
    const auto ds = generate_synthetic({10, 10, 100, 2, 0.1, 1});
    const auto p = partition_quantity_skew(ds, 4, 0.6, 0.75, 5);
    CHECK(p.client_sizes() == std::vector<std::size_t>{60, 28, 11, 1});
    validate_partition(p);
  }
  SUBCASE("conservation") {
    const auto ds = generate_synthetic({10, 10, 997, 2, 0.1, 1});
    for (std::size_t k : {2u, 3u, 8u, 32u}) {
      for (double s : {0.3, 0.45, 0.6, 0.75, 0.9, 1.0}) {
        const auto p = partition_quantity_skew(ds, k, s, default_quantity_sigma(k) + 0.01, 7);
        validate_partition(p);
        CHECK(p.assignments[0].size() == share_count(s, 997));
      }
    }
  }
  const auto ds = generate_synthetic({5, 5, 10, 2, 0.1, 1});
  CHECK_THROWS_AS(partition_quantity_skew(ds, 2, 0.0, 1.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(partition_quantity_skew(ds, 2, 1.2, 1.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(partition_quantity_skew(ds, 1, 0.5, 1.0, 0), std::invalid_argument);
}

TEST_CASE("partition_addition") {
  const auto ds = generate_synthetic({10, 10, 100, 2, 0.1, 1});
  SUBCASE("reference plan: dominant client alone") {
    const auto p = partition_addition(ds, {0.6, 0.0, 0}, 3);
    CHECK(p.client_sizes() == std::vector<std::size_t>{60});
    CHECK(p.withheld.size() == 40);
    validate_partition(p);
  }
  SUBCASE("(0.6, 0.4, 4)") {
    CHECK(partition_addition(ds, {0.6, 0.4, 4}, 3).client_sizes() == std::vector<std::size_t>{60, 10, 10, 10, 10});
  }
  SUBCASE("(0.6, 0.3, 2)") {
    const auto p = partition_addition(ds, {0.6, 0.3, 2}, 3);
    CHECK(p.client_sizes() == std::vector<std::size_t>{60, 15, 15});
    CHECK(p.withheld.size() == 10);
    validate_partition(p);
  }
  SUBCASE("(0.6, 0.4, 1)") {
    CHECK(partition_addition(ds, {0.6, 0.4, 1}, 3).client_sizes() == std::vector<std::size_t>{60, 40});
  }
  SUBCASE("(0.6, 0.1, 3) uses largest remainder") {
    CHECK(partition_addition(ds, {0.6, 0.1, 3}, 3).client_sizes() == std::vector<std::size_t>{60, 4, 3, 3});
  }
  CHECK_THROWS_AS(partition_addition(ds, {0.7, 0.4, 2}, 0), std::invalid_argument);
  CHECK_THROWS_AS(partition_addition(ds, {0.6, 0.2, 0}, 0), std::invalid_argument);
}

TEST_CASE("manifest round-trip and hash") {
  const auto ds = generate_synthetic({30, 10, 500, 2, 0.1, 1});
  const auto p = partition_addition(ds, {0.6, 0.3, 3}, 12);
  const auto dir = std::filesystem::temp_directory_path() / "feddti_manifest_test";
  std::filesystem::create_directories(dir);
  write_partition_manifest(p, dir / "partition.csv", dir / "partition.json");
  const auto back = read_partition_manifest(dir / "partition.csv", dir / "partition.json");
  CHECK(back.assignments == p.assignments);
  CHECK(back.withheld == p.withheld);
  CHECK(partition_hash(back) == partition_hash(p));
  CHECK(partition_hash(p) != partition_hash(partition_addition(ds, {0.6, 0.3, 3}, 13)));
  std::filesystem::remove_all(dir);
}
