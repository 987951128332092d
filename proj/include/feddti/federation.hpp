#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "feddti/dataset.hpp"
#include "feddti/learner.hpp"
#include "feddti/partitioner.hpp"

namespace feddti {

struct ClientUpdate {
  ParameterVector params;
  std::size_t n_samples = 0;
  std::size_t client_id = 0;
};

struct RoundRecord {
  std::size_t round = 0;
  double global_mse = 0.0;
};

struct FedResult {
  ParameterVector final_params;
  std::vector<RoundRecord> history;
  nlohmann::json config_echo;
};

// Shuffle-stream seed used by client `client_id`. Round r of local training
// continues this stream at epoch r * epochs, so R rounds of E epochs on one
// client replay exactly one sgd_train call of R * E epochs.
std::uint64_t client_stream_seed(std::uint64_t train_seed, std::size_t client_id) noexcept;

TrainConfig local_train_config(const TrainConfig& tcfg, std::size_t round, std::size_t client_id);

ClientUpdate local_update(const ParameterVector& global, std::span<const Sample> client_data,
                          const ModelConfig& mcfg, const TrainConfig& tcfg, std::size_t round,
                          std::size_t client_id);

/// Sample-weighted FedAvg. Zero-sample updates are skipped; summation runs in
/// ascending client_id order.
ParameterVector fedavg_aggregate(std::span<const ClientUpdate> updates);

FedResult run_federation(const SplitPair& split, const Partition& partition, const ModelConfig& mcfg,
                         const TrainConfig& tcfg, std::size_t rounds, std::uint64_t seed,
                         std::size_t workers = 1);

// history.csv: `round,global_mse`.
void write_history_csv(std::span<const RoundRecord> history, const std::filesystem::path& path);

}  // namespace feddti
