#include "feddti/ensemble.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "feddti/error.hpp"
#include "feddti/federation.hpp"
#include "feddti/parallel.hpp"

namespace feddti {

std::uint64_t member_key(std::size_t k) noexcept {
  return static_cast<std::uint64_t>(k) * 0x9E3779B97F4A7C15ULL;
}

ParameterVector train_member(const ModelConfig& mcfg, const TrainConfig& tcfg, std::size_t total_epochs,
                             std::uint64_t init_seed, std::size_t client_id, std::span<const Sample> data) {
  TrainConfig member = tcfg;
  member.epochs = total_epochs;
  member.seed = client_stream_seed(tcfg.seed, client_id);
  return sgd_train(init_model(mcfg, init_seed), mcfg, member, data);
}

EnsembleModel train_bagging(const SplitPair& split, const Partition& partition, const ModelConfig& mcfg,
                            const TrainConfig& tcfg, std::size_t total_epochs, std::uint64_t seed,
                            std::size_t workers) {
  if (partition.source_size != split.train.size()) {
    throw std::invalid_argument("train_bagging: partition does not index the train set");
  }
  if (total_epochs == 0) throw std::invalid_argument("train_bagging: total_epochs must be positive");

  EnsembleModel e;
  e.mcfg = mcfg;
  for (std::size_t k = 0; k < partition.n_clients(); ++k) {
    if (!partition.assignments[k].empty()) e.member_clients.push_back(k);
  }
  if (e.member_clients.empty()) throw std::invalid_argument("train_bagging: every client is empty");

  e.members.resize(e.member_clients.size());
  parallel_for(e.members.size(), workers, [&](std::size_t m) {
    const auto k = e.member_clients[m];
    const auto data = split.train.gather(partition.assignments[k]);
    e.members[m] = train_member(mcfg, tcfg, total_epochs, seed ^ member_key(k), k, data);
  });
  return e;
}

namespace {

// Mean of member predictions summed in ascending order, so member order
// cannot change the result.
double mean_sorted(std::vector<double>& preds) {
  std::sort(preds.begin(), preds.end());
  double sum = 0.0;
  for (double p : preds) sum += p;
  return sum / static_cast<double>(preds.size());
}

}  // namespace

double predict_ensemble(const EnsembleModel& e, std::size_t drug, std::size_t protein) {
  if (e.members.empty()) throw std::invalid_argument("predict_ensemble: no members");
  std::vector<double> preds;
  preds.reserve(e.members.size());
  for (const auto& m : e.members) preds.push_back(predict(m, e.mcfg, drug, protein));
  return mean_sorted(preds);
}

double evaluate_ensemble(const EnsembleModel& e, std::span<const Sample> data) {
  if (data.empty()) throw std::invalid_argument("evaluate_ensemble: empty data");
  double sum = 0.0;
  for (const auto& s : data) {
    const double err = predict_ensemble(e, static_cast<std::size_t>(s.drug), static_cast<std::size_t>(s.protein)) - s.label;
    sum += err * err;
  }
  return sum / static_cast<double>(data.size());
}

double evaluate_ensemble(const EnsembleModel& e, const Dataset& data) { return evaluate_ensemble(e, data.samples()); }

void save_ensemble(const EnsembleModel& e, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest = {
      {"format", "feddti-ensemble"},
      {"version", 1},
      {"model", {{"kind", to_string(e.mcfg.kind)},
                 {"embedding_dim", e.mcfg.embedding_dim},
                 {"hidden_dim", e.mcfg.hidden_dim},
                 {"n_drugs", e.mcfg.n_drugs},
                 {"n_proteins", e.mcfg.n_proteins}}},
      {"members", nlohmann::json::array()},
  };
  for (std::size_t m = 0; m < e.members.size(); ++m) {
    char name[32];
    std::snprintf(name, sizeof name, "member_%03zu.params", m);
    save_parameters(e.members[m], dir / name);
    const auto client = m < e.member_clients.size() ? e.member_clients[m] : m;
    manifest["members"].push_back({{"file", name}, {"client_id", client}});
  }
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw Error("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

EnsembleModel load_ensemble(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json", std::ios::binary);
  if (!in) throw InputError("cannot open " + (dir / "manifest.json").string());
  EnsembleModel e;
  try {
    const auto manifest = nlohmann::json::parse(in);
    const auto& m = manifest.at("model");
    e.mcfg.kind = parse_model_kind(m.at("kind").get<std::string>());
    e.mcfg.embedding_dim = m.at("embedding_dim").get<std::size_t>();
    e.mcfg.hidden_dim = m.at("hidden_dim").get<std::size_t>();
    e.mcfg.n_drugs = m.at("n_drugs").get<std::size_t>();
    e.mcfg.n_proteins = m.at("n_proteins").get<std::size_t>();
    for (const auto& member : manifest.at("members")) {
      e.members.push_back(load_parameters(dir / member.at("file").get<std::string>()));
      e.member_clients.push_back(member.at("client_id").get<std::size_t>());
    }
  } catch (const nlohmann::json::exception& ex) {
    throw InputError((dir / "manifest.json").string() + ": " + ex.what());
  }
  const auto expected = model_layout(e.mcfg);
  for (const auto& p : e.members) {
    if (p.layout() != expected) throw InputError("ensemble member does not match the manifest's model");
  }
  return e;
}

}  // namespace feddti
