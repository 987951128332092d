#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "feddti/dataset.hpp"

namespace feddti {

/// The (strategy, parameters, seed) tuple that makes a split reproducible.
struct Provenance {
  std::string strategy;
  nlohmann::json params = nlohmann::json::object();
  std::uint64_t seed = 0;
};

/// Assignment of record indices to clients.
///
/// Client lists are sorted ascending and pairwise disjoint. Together with
/// `withheld` they cover exactly 0..source_size-1.
struct Partition {
  std::vector<std::vector<std::size_t>> assignments;
  std::vector<std::size_t> withheld;
  std::size_t source_size = 0;
  Provenance provenance;

  std::size_t n_clients() const noexcept { return assignments.size(); }
  std::size_t assigned_count() const noexcept;
  std::vector<std::size_t> client_sizes() const;
};

// Throws feddti::Error if the partition breaks disjointness or conservation.
void validate_partition(const Partition& p);

// Hash over assignments, withheld set and provenance.
std::uint64_t partition_hash(const Partition& p);

struct MixingConfig {
  double level = 0.0;
  double sigma = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Kernel width used when a config does not name one.
inline double default_mixing_sigma(std::size_t n_clients) noexcept {
  return static_cast<double>(n_clients) / 4.0;
}
inline double default_quantity_sigma(std::size_t n_clients) noexcept {
  return static_cast<double>(n_clients - 1) / 4.0;
}

// The nine-point continuum {0, 1/8, ..., 1}.
std::vector<double> mixing_level_grid();

struct AdditionPlan {
  double dominant_share = 0.6;
  double extra_share = 0.0;
  std::size_t n_extra_clients = 0;

  void validate() const;
};

std::size_t ring_distance(std::size_t i, std::size_t j, std::size_t n_clients) noexcept;

// floor(share * n), tolerant of products like 0.29 * 100 = 28.999999999999996.
std::size_t share_count(double share, std::size_t n) noexcept;

// Integer apportionment of `total` proportional to `weights`. Leftover units go
// to the largest fractional remainders; ties favour the lower index.
std::vector<std::size_t> largest_remainder(std::size_t total, std::span<const double> weights);

Partition partition_iid(const Dataset& ds, std::size_t n_clients, std::uint64_t seed);

Partition partition_entity(const Dataset& ds, std::size_t n_clients, EntityDim dim, std::uint64_t seed);

Partition apply_gaussian_mixing(const Partition& p, const MixingConfig& cfg);

Partition partition_combined(const Dataset& ds, std::size_t n_clients, const MixingConfig& cfg,
                             std::uint64_t seed);

Partition partition_quantity_skew(const Dataset& ds, std::size_t n_clients, double dominant_share,
                                  double sigma_q, std::uint64_t seed);

Partition partition_addition(const Dataset& ds, const AdditionPlan& plan, std::uint64_t seed);

// Manifest: CSV `record_index,client_id` plus a JSON provenance sidecar.
void write_partition_manifest(const Partition& p, const std::filesystem::path& csv_path,
                              const std::filesystem::path& json_path);
Partition read_partition_manifest(const std::filesystem::path& csv_path,
                                  const std::filesystem::path& json_path);

}  // namespace feddti
