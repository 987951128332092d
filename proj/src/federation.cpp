#include "feddti/federation.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "feddti/error.hpp"
#include "feddti/parallel.hpp"
#include "feddti/random.hpp"
#include "text.hpp"

namespace feddti {

std::uint64_t client_stream_seed(std::uint64_t train_seed, std::size_t client_id) noexcept {
  return derive_key(train_seed, "client", client_id);
}

TrainConfig local_train_config(const TrainConfig& tcfg, std::size_t round, std::size_t client_id) {
  TrainConfig local = tcfg;
  local.seed = client_stream_seed(tcfg.seed, client_id);
  local.first_epoch = tcfg.first_epoch + round * tcfg.epochs;
  return local;
}

ClientUpdate local_update(const ParameterVector& global, std::span<const Sample> client_data,
                          const ModelConfig& mcfg, const TrainConfig& tcfg, std::size_t round,
                          std::size_t client_id) {
  if (client_data.empty()) return {global, 0, client_id};
  return {sgd_train(global, mcfg, local_train_config(tcfg, round, client_id), client_data), client_data.size(),
          client_id};
}

ParameterVector fedavg_aggregate(std::span<const ClientUpdate> updates) {
  std::vector<const ClientUpdate*> live;
  for (const auto& u : updates) {
    if (u.n_samples > 0) live.push_back(&u);
  }
  if (live.empty()) throw std::invalid_argument("fedavg_aggregate: every update has zero samples");
  std::stable_sort(live.begin(), live.end(),
                   [](const ClientUpdate* a, const ClientUpdate* b) { return a->client_id < b->client_id; });
  for (const auto* u : live) {
    if (!u->params.same_layout(live.front()->params)) {
      throw std::invalid_argument("fedavg_aggregate: parameter layouts differ");
    }
  }

  std::size_t total = 0;
  for (const auto* u : live) total += u->n_samples;

  // Accumulate offsets from the first update: identical inputs then average
  // to themselves exactly, and a single update passes through unchanged.
  ParameterVector out = live.front()->params;
  auto acc = out.values();
  const auto base = live.front()->params.values();
  for (std::size_t k = 1; k < live.size(); ++k) {
    const double weight = static_cast<double>(live[k]->n_samples) / static_cast<double>(total);
    const auto x = live[k]->params.values();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += weight * (x[i] - base[i]);
  }
  if (live.size() > 1) {
    // Rounding may leave a coordinate an ulp outside the hull of the inputs.
    for (std::size_t i = 0; i < acc.size(); ++i) {
      double lo = base[i], hi = base[i];
      for (const auto* u : live) {
        lo = std::min(lo, u->params.values()[i]);
        hi = std::max(hi, u->params.values()[i]);
      }
      acc[i] = std::clamp(acc[i], lo, hi);
    }
  }
  return out;
}

FedResult run_federation(const SplitPair& split, const Partition& partition, const ModelConfig& mcfg,
                         const TrainConfig& tcfg, std::size_t rounds, std::uint64_t seed, std::size_t workers) {
  if (split.train.empty()) throw std::invalid_argument("run_federation: empty train set");
  if (partition.source_size != split.train.size()) {
    throw std::invalid_argument("run_federation: partition does not index the train set");
  }
  if (rounds > 0 && split.test.empty()) throw std::invalid_argument("run_federation: empty test set");
  tcfg.validate();

  std::vector<std::vector<Sample>> client_data;
  client_data.reserve(partition.n_clients());
  for (const auto& idx : partition.assignments) client_data.push_back(split.train.gather(idx));
  if (std::all_of(client_data.begin(), client_data.end(), [](const auto& c) { return c.empty(); })) {
    throw std::invalid_argument("run_federation: every client is empty");
  }

  FedResult result;
  result.final_params = init_model(mcfg, seed);
  result.config_echo = {
      {"model", {{"kind", to_string(mcfg.kind)},
                 {"embedding_dim", mcfg.embedding_dim},
                 {"hidden_dim", mcfg.hidden_dim},
                 {"n_drugs", mcfg.n_drugs},
                 {"n_proteins", mcfg.n_proteins}}},
      {"train", {{"epochs", tcfg.epochs},
                 {"learning_rate", tcfg.learning_rate},
                 {"batch_size", tcfg.batch_size},
                 {"seed", tcfg.seed}}},
      {"rounds", rounds},
      {"init_seed", seed},
      {"n_clients", partition.n_clients()},
      {"partition_hash", partition_hash(partition)},
      {"partition_strategy", partition.provenance.strategy},
  };

  std::vector<ClientUpdate> updates(client_data.size());
  for (std::size_t r = 0; r < rounds; ++r) {
    const ParameterVector& global = result.final_params;
    parallel_for(client_data.size(), workers, [&](std::size_t k) {
      updates[k] = local_update(global, client_data[k], mcfg, tcfg, r, k);
    });
    result.final_params = fedavg_aggregate(updates);
    if (!result.final_params.all_finite()) {
      throw Error("run_federation: parameters diverged in round " + std::to_string(r + 1));
    }
    result.history.push_back({r + 1, evaluate_mse(result.final_params, mcfg, split.test)});
  }
  return result;
}

void write_history_csv(std::span<const RoundRecord> history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "round,global_mse\n";
  for (const auto& h : history) out << h.round << ',' << text::format_shortest(h.global_mse) << '\n';
}

}  // namespace feddti
