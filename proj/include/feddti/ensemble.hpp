#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "feddti/dataset.hpp"
#include "feddti/learner.hpp"
#include "feddti/partitioner.hpp"

namespace feddti {

/// Bagging baseline: independently trained members combined by mean prediction.
struct EnsembleModel {
  std::vector<ParameterVector> members;
  ModelConfig mcfg;
  std::vector<std::size_t> member_clients;  // client id each member was trained on
};

// Member k starts from init_model(seed ^ member_key(k)); member_key(0) == 0, so
// a one-client ensemble starts exactly where the federated model does.
std::uint64_t member_key(std::size_t k) noexcept;

// Trains one member on `data` for `total_epochs`, shuffling with the same
// per-client stream a federated client `client_id` would use.
ParameterVector train_member(const ModelConfig& mcfg, const TrainConfig& tcfg, std::size_t total_epochs,
                             std::uint64_t init_seed, std::size_t client_id, std::span<const Sample> data);

EnsembleModel train_bagging(const SplitPair& split, const Partition& partition, const ModelConfig& mcfg,
                            const TrainConfig& tcfg, std::size_t total_epochs, std::uint64_t seed,
                            std::size_t workers = 1);

double predict_ensemble(const EnsembleModel& e, std::size_t drug, std::size_t protein);

double evaluate_ensemble(const EnsembleModel& e, std::span<const Sample> data);
double evaluate_ensemble(const EnsembleModel& e, const Dataset& data);

// Directory layout: manifest.json plus member_<k>.params.
void save_ensemble(const EnsembleModel& e, const std::filesystem::path& dir);
EnsembleModel load_ensemble(const std::filesystem::path& dir);

}  // namespace feddti
