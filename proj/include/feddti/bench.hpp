#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "feddti/dataset.hpp"
#include "feddti/learner.hpp"
#include "feddti/partitioner.hpp"

namespace feddti {

enum class Strategy { iid, entity_protein, entity_drug, combined, quantity, addition };

std::string_view to_string(Strategy s) noexcept;
Strategy parse_strategy(std::string_view s);

struct ModelSpec {
  ModelKind kind = ModelKind::two_tower_mlp;
  std::size_t embedding_dim = 16;
  std::size_t hidden_dim = 32;
};

struct AdditionGridSpec {
  double dominant_share = 0.6;
  std::vector<double> extra_shares = {0.1, 0.2, 0.3, 0.4};
  std::vector<std::size_t> extra_clients = {1, 2, 3, 4};
};

/// One benchmark description. Serialised field-for-field as the JSON config.
struct ExperimentConfig {
  std::optional<std::filesystem::path> dataset_path;  // otherwise `synthetic`
  SyntheticSpec synthetic;
  double test_fraction = 0.2;
  std::optional<std::uint64_t> split_seed;  // defaults to base_seed
  std::vector<std::size_t> client_counts = {2, 4, 8, 16, 32};
  Strategy strategy = Strategy::iid;
  Strategy noniid_strategy = Strategy::entity_protein;  // non-IID rows of `compare`
  std::vector<double> mixing_levels = mixing_level_grid();
  std::optional<double> mixing_sigma;    // defaults to K/4
  std::vector<double> dominant_shares = {0.9, 0.75, 0.6, 0.45, 0.3};
  std::optional<double> quantity_sigma;  // defaults to (K-1)/4
  AdditionGridSpec addition;
  ModelSpec model;
  TrainConfig train;  // seed and first_epoch are ignored; cells derive their own
  std::size_t rounds = 30;
  std::size_t repeats = 10;
  std::uint64_t base_seed = 0;

  void validate() const;
  std::uint64_t effective_split_seed() const noexcept { return split_seed.value_or(base_seed); }
};

// Unknown keys and type mismatches raise ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Loaded dataset, the shared train/test split and the model sized for it.
struct PreparedData {
  Dataset source;
  SplitPair split;
  ModelConfig mcfg;
};

PreparedData prepare_data(const ExperimentConfig& cfg);

// Per-cell seed: FNV-1a over (base_seed, strategy tag, row key, column key, repeat).
std::uint64_t cell_seed(std::uint64_t base_seed, std::string_view strategy_tag, std::string_view row_key,
                        std::string_view col_key, std::size_t repeat) noexcept;

struct CellSeeds {
  std::uint64_t cell = 0;
  std::uint64_t partition = 0;
  std::uint64_t mixing = 0;
  std::uint64_t init = 0;
  std::uint64_t train = 0;

  static CellSeeds from(std::uint64_t cell) noexcept;
};

// Builds the partition of `train` that one grid or comparison cell uses.
// `column` is the mixing level, dominant share or ignored, by strategy.
Partition build_partition(const ExperimentConfig& cfg, const Dataset& train, Strategy strategy,
                          std::size_t n_clients, double column, const CellSeeds& seeds);

std::string format_key(double v);
std::string format_key(std::size_t v);

// ---------------------------------------------------------------- reports

struct GridCell {
  std::string row_key;
  std::string col_key;
  std::size_t repeats = 0;
  double mean_mse = 0.0;
  double std_mse = 0.0;
  double pct_change = 0.0;
};

struct RepeatRecord {
  std::string row_key;
  std::string col_key;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  double final_mse = 0.0;
};

struct GridReport {
  std::string setup;
  std::vector<std::string> row_keys;
  std::vector<std::string> col_keys;
  std::string reference_row;
  std::string reference_col;
  std::vector<GridCell> cells;
  std::vector<RepeatRecord> runs;  // sorted by (row, col, repeat)
  nlohmann::json provenance = nlohmann::json::object();

  const GridCell* find(std::string_view row, std::string_view col) const noexcept;
};

/// Groups per-repeat runs into cells (row-major in the given key order; key
/// pairs with no runs are skipped) and normalises every cell against the
/// reference cell's mean.
GridReport assemble_grid(std::string setup, std::vector<std::string> row_keys, std::vector<std::string> col_keys,
                         std::string reference_row, std::string reference_col, std::vector<RepeatRecord> runs,
                         nlohmann::json provenance = nlohmann::json::object());

struct ComparisonRow {
  std::string distribution;  // "iid" | "noniid"
  std::size_t client_count = 0;
  double ensemble_mse = 0.0;
  double federated_mse = 0.0;
  double pct_difference = 0.0;
  std::uint64_t federated_partition_hash = 0;
  std::uint64_t ensemble_partition_hash = 0;
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;
  nlohmann::json provenance = nlohmann::json::object();
};

// 100 * (fed - ens) / ens.
double pct_difference(double federated_mse, double ensemble_mse);

ComparisonReport run_comparison(const ExperimentConfig& cfg, std::size_t workers = 1);

GridReport run_iidness_grid(const ExperimentConfig& cfg, std::size_t workers = 1);
GridReport run_quantity_grid(const ExperimentConfig& cfg, std::size_t workers = 1);
GridReport run_addition_grid(const ExperimentConfig& cfg, std::size_t workers = 1);
// Client-count sweep with IID partitions: one column, keyed "iid".
GridReport run_client_count_grid(const ExperimentConfig& cfg, std::size_t workers = 1);
// Dispatches on cfg.strategy.
GridReport run_grid(const ExperimentConfig& cfg, std::size_t workers = 1);

// grid.csv, cells.csv and grid.json.
std::vector<std::filesystem::path> write_reports(const GridReport& report, const std::filesystem::path& out_dir);
// compare.csv and compare.json.
std::vector<std::filesystem::path> write_reports(const ComparisonReport& report, const std::filesystem::path& out_dir);

void write_grid_csv(const GridReport& report, std::ostream& out);
void write_cells_csv(const GridReport& report, std::ostream& out);
void write_compare_csv(const ComparisonReport& report, std::ostream& out);

std::vector<RepeatRecord> read_cells_csv(const std::filesystem::path& path);
std::vector<ComparisonRow> read_compare_csv(const std::filesystem::path& path);
// Rebuilds a report from cells.csv and the grid.json written next to it.
GridReport read_grid_report(const std::filesystem::path& dir);

}  // namespace feddti
