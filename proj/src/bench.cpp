#include "feddti/bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "feddti/ensemble.hpp"
#include "feddti/error.hpp"
#include "feddti/federation.hpp"
#include "feddti/parallel.hpp"
#include "feddti/random.hpp"
#include "text.hpp"

namespace feddti {

using nlohmann::json;

std::string_view to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::iid: return "iid";
    case Strategy::entity_protein: return "entity_protein";
    case Strategy::entity_drug: return "entity_drug";
    case Strategy::combined: return "combined";
    case Strategy::quantity: return "quantity";
    case Strategy::addition: return "addition";
  }
  return "?";
}

Strategy parse_strategy(std::string_view s) {
  for (auto v : {Strategy::iid, Strategy::entity_protein, Strategy::entity_drug, Strategy::combined,
                 Strategy::quantity, Strategy::addition}) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown strategy `" + std::string(s) + "`");
}

// ------------------------------------------------------------------ config

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError(where + ": unknown key `" + key + "`");
    }
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <class T>
void read_optional(const json& j, const char* key, std::optional<T>& out, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  T v{};
  read(j, key, v, where);
  out = v;
}

// Rejects negative or fractional numbers where a count or seed is expected;
// nlohmann would otherwise wrap or truncate them silently.
void check_unsigned(const json& j, const std::string& where) {
  if (j.is_array()) {
    for (const auto& v : j) check_unsigned(v, where);
    return;
  }
  if (!j.is_number_unsigned()) throw ConfigError(where + ": expected a non-negative integer");
}

template <class T>
void read_unsigned(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  check_unsigned(j.at(key), where + "." + key);
  read(j, key, out, where);
}

}  // namespace

void ExperimentConfig::validate() const {
  if (repeats == 0) throw ConfigError("repeats must be >= 1");
  if (client_counts.empty()) throw ConfigError("client_counts must be non-empty");
  if (std::find(client_counts.begin(), client_counts.end(), 0u) != client_counts.end()) {
    throw ConfigError("client_counts entries must be positive");
  }
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
  if (mixing_levels.empty()) throw ConfigError("mixing_levels must be non-empty");
  for (double l : mixing_levels) {
    if (!(l >= 0.0 && l <= 1.0)) throw ConfigError("mixing_levels entries must lie in [0, 1]");
  }
  if (mixing_sigma && !(*mixing_sigma > 0.0)) throw ConfigError("mixing_sigma must be positive");
  if (dominant_shares.empty()) throw ConfigError("dominant_shares must be non-empty");
  for (double s : dominant_shares) {
    if (!(s > 0.0 && s <= 1.0)) throw ConfigError("dominant_shares entries must lie in (0, 1]");
  }
  if (quantity_sigma && !(*quantity_sigma > 0.0)) throw ConfigError("quantity_sigma must be positive");
  if (addition.extra_shares.empty() || addition.extra_clients.empty()) {
    throw ConfigError("addition grids must be non-empty");
  }
  for (double e : addition.extra_shares) {
    AdditionPlan{addition.dominant_share, e, 1}.validate();
  }
  if (std::find(addition.extra_clients.begin(), addition.extra_clients.end(), 0u) != addition.extra_clients.end()) {
    throw ConfigError("addition.extra_clients entries must be positive");
  }
  if (noniid_strategy != Strategy::entity_protein && noniid_strategy != Strategy::entity_drug &&
      noniid_strategy != Strategy::combined) {
    throw ConfigError("noniid_strategy must be entity_protein, entity_drug or combined");
  }
  if (model.embedding_dim == 0 || (model.kind == ModelKind::two_tower_mlp && model.hidden_dim == 0)) {
    throw ConfigError("model dimensions must be positive");
  }
  try {
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!dataset_path && (synthetic.n_records == 0 || synthetic.n_drugs == 0 || synthetic.n_proteins == 0 ||
                        synthetic.latent_dim == 0)) {
    throw ConfigError("synthetic dataset needs positive sizes");
  }
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  const std::string root = "config";
  check_keys(j,
             {"dataset", "test_fraction", "split_seed", "client_counts", "strategy", "noniid_strategy",
              "mixing_levels", "mixing_sigma", "dominant_shares", "quantity_sigma", "addition", "model", "train",
              "rounds", "repeats", "base_seed"},
             root);

  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    check_keys(d, {"path", "synthetic"}, root + ".dataset");
    if (d.contains("path") && d.contains("synthetic")) {
      throw ConfigError("config.dataset: give either `path` or `synthetic`, not both");
    }
    if (d.contains("path")) {
      std::string p;
      read(d, "path", p, root + ".dataset");
      cfg.dataset_path = p;
    }
    if (d.contains("synthetic")) {
      const auto& s = d.at("synthetic");
      const std::string where = root + ".dataset.synthetic";
      check_keys(s, {"n_drugs", "n_proteins", "n_records", "latent_dim", "noise_sd", "seed"}, where);
      read_unsigned(s, "n_drugs", cfg.synthetic.n_drugs, where);
      read_unsigned(s, "n_proteins", cfg.synthetic.n_proteins, where);
      read_unsigned(s, "n_records", cfg.synthetic.n_records, where);
      read_unsigned(s, "latent_dim", cfg.synthetic.latent_dim, where);
      read(s, "noise_sd", cfg.synthetic.noise_sd, where);
      read_unsigned(s, "seed", cfg.synthetic.seed, where);
    }
  }
  read(j, "test_fraction", cfg.test_fraction, root);
  if (j.contains("split_seed") && !j.at("split_seed").is_null()) check_unsigned(j.at("split_seed"), root + ".split_seed");
  read_optional(j, "split_seed", cfg.split_seed, root);
  read_unsigned(j, "client_counts", cfg.client_counts, root);
  if (j.contains("strategy")) {
    std::string s;
    read(j, "strategy", s, root);
    cfg.strategy = parse_strategy(s);
  }
  if (j.contains("noniid_strategy")) {
    std::string s;
    read(j, "noniid_strategy", s, root);
    cfg.noniid_strategy = parse_strategy(s);
  }
  read(j, "mixing_levels", cfg.mixing_levels, root);
  read_optional(j, "mixing_sigma", cfg.mixing_sigma, root);
  read(j, "dominant_shares", cfg.dominant_shares, root);
  read_optional(j, "quantity_sigma", cfg.quantity_sigma, root);
  if (j.contains("addition")) {
    const auto& a = j.at("addition");
    const std::string where = root + ".addition";
    check_keys(a, {"dominant_share", "extra_shares", "extra_clients"}, where);
    read(a, "dominant_share", cfg.addition.dominant_share, where);
    read(a, "extra_shares", cfg.addition.extra_shares, where);
    read_unsigned(a, "extra_clients", cfg.addition.extra_clients, where);
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    const std::string where = root + ".model";
    check_keys(m, {"kind", "embedding_dim", "hidden_dim"}, where);
    if (m.contains("kind")) {
      std::string k;
      read(m, "kind", k, where);
      cfg.model.kind = parse_model_kind(k);
    }
    read_unsigned(m, "embedding_dim", cfg.model.embedding_dim, where);
    read_unsigned(m, "hidden_dim", cfg.model.hidden_dim, where);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    const std::string where = root + ".train";
    check_keys(t, {"epochs", "learning_rate", "batch_size"}, where);
    read_unsigned(t, "epochs", cfg.train.epochs, where);
    read(t, "learning_rate", cfg.train.learning_rate, where);
    read_unsigned(t, "batch_size", cfg.train.batch_size, where);
  }
  read_unsigned(j, "rounds", cfg.rounds, root);
  read_unsigned(j, "repeats", cfg.repeats, root);
  read_unsigned(j, "base_seed", cfg.base_seed, root);
  cfg.validate();
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json dataset;
  if (cfg.dataset_path) {
    dataset["path"] = cfg.dataset_path->string();
  } else {
    dataset["synthetic"] = {{"n_drugs", cfg.synthetic.n_drugs},       {"n_proteins", cfg.synthetic.n_proteins},
                            {"n_records", cfg.synthetic.n_records},   {"latent_dim", cfg.synthetic.latent_dim},
                            {"noise_sd", cfg.synthetic.noise_sd},     {"seed", cfg.synthetic.seed}};
  }
  return {
      {"dataset", dataset},
      {"test_fraction", cfg.test_fraction},
      {"split_seed", cfg.split_seed ? json(*cfg.split_seed) : json(nullptr)},
      {"client_counts", cfg.client_counts},
      {"strategy", to_string(cfg.strategy)},
      {"noniid_strategy", to_string(cfg.noniid_strategy)},
      {"mixing_levels", cfg.mixing_levels},
      {"mixing_sigma", cfg.mixing_sigma ? json(*cfg.mixing_sigma) : json(nullptr)},
      {"dominant_shares", cfg.dominant_shares},
      {"quantity_sigma", cfg.quantity_sigma ? json(*cfg.quantity_sigma) : json(nullptr)},
      {"addition", {{"dominant_share", cfg.addition.dominant_share},
                    {"extra_shares", cfg.addition.extra_shares},
                    {"extra_clients", cfg.addition.extra_clients}}},
      {"model", {{"kind", to_string(cfg.model.kind)},
                 {"embedding_dim", cfg.model.embedding_dim},
                 {"hidden_dim", cfg.model.hidden_dim}}},
      {"train", {{"epochs", cfg.train.epochs},
                 {"learning_rate", cfg.train.learning_rate},
                 {"batch_size", cfg.train.batch_size}}},
      {"rounds", cfg.rounds},
      {"repeats", cfg.repeats},
      {"base_seed", cfg.base_seed},
  };
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

// ------------------------------------------------------------ preparation

PreparedData prepare_data(const ExperimentConfig& cfg) {
  PreparedData d;
  d.source = cfg.dataset_path ? load_csv(*cfg.dataset_path) : generate_synthetic(cfg.synthetic);
  if (d.source.empty()) throw ConfigError("dataset is empty");
  d.split = split_train_test(d.source, cfg.test_fraction, cfg.effective_split_seed());
  if (d.split.train.empty() || d.split.test.empty()) {
    throw ConfigError("test_fraction leaves the train or test set empty");
  }
  d.mcfg.kind = cfg.model.kind;
  d.mcfg.embedding_dim = cfg.model.embedding_dim;
  d.mcfg.hidden_dim = cfg.model.hidden_dim;
  d.mcfg.n_drugs = d.source.drugs().size();
  d.mcfg.n_proteins = d.source.proteins().size();
  return d;
}

std::uint64_t cell_seed(std::uint64_t base_seed, std::string_view strategy_tag, std::string_view row_key,
                        std::string_view col_key, std::size_t repeat) noexcept {
  return Fnv1a().u64(base_seed).str(strategy_tag).str(row_key).str(col_key).u64(repeat).digest();
}

CellSeeds CellSeeds::from(std::uint64_t cell) noexcept {
  return {cell, derive_key(cell, "partition"), derive_key(cell, "mixing"), derive_key(cell, "init"),
          derive_key(cell, "train")};
}

std::string format_key(double v) { return text::format_shortest(v); }
std::string format_key(std::size_t v) { return std::to_string(v); }

Partition build_partition(const ExperimentConfig& cfg, const Dataset& train, Strategy strategy,
                          std::size_t n_clients, double column, const CellSeeds& seeds) {
  const auto mixing = [&] {
    return MixingConfig{column, cfg.mixing_sigma.value_or(default_mixing_sigma(n_clients)), seeds.mixing};
  };
  switch (strategy) {
    case Strategy::iid:
      return partition_iid(train, n_clients, seeds.partition);
    case Strategy::entity_protein:
    case Strategy::entity_drug: {
      const auto dim = strategy == Strategy::entity_drug ? EntityDim::drug : EntityDim::protein;
      auto p = partition_entity(train, n_clients, dim, seeds.partition);
      if (n_clients == 1 && column == 0.0) return p;
      return apply_gaussian_mixing(p, mixing());
    }
    case Strategy::combined:
      return partition_combined(train, n_clients, mixing(), seeds.partition);
    case Strategy::quantity:
      return partition_quantity_skew(train, n_clients, column,
                                     cfg.quantity_sigma.value_or(default_quantity_sigma(n_clients)),
                                     seeds.partition);
    case Strategy::addition:
      return partition_addition(train, {cfg.addition.dominant_share, column, n_clients}, seeds.partition);
  }
  throw std::logic_error("unhandled strategy");
}

// ------------------------------------------------------------------ runners

namespace {

TrainConfig cell_train_config(const ExperimentConfig& cfg, const CellSeeds& seeds) {
  TrainConfig t = cfg.train;
  t.seed = seeds.train;
  t.first_epoch = 0;
  return t;
}

struct GridJob {
  std::size_t row;
  std::size_t col;
  std::size_t repeat;
};

// A grid sweep: every (row, col, repeat) job runs one federation. `make` maps
// a job to (n_clients, column value) for build_partition.
struct Sweep {
  std::string setup;
  Strategy strategy;
  std::vector<std::string> row_keys;
  std::vector<std::string> col_keys;
  std::vector<std::pair<std::size_t, double>> shapes;  // per (row, col), row-major
  std::vector<bool> active;                            // per (row, col)
  std::string reference_row;
  std::string reference_col;
};

GridReport run_sweep(const ExperimentConfig& cfg, const Sweep& sweep, std::size_t workers) {
  const auto data = prepare_data(cfg);
  const std::size_t n_cols = sweep.col_keys.size();

  std::vector<GridJob> jobs;
  for (std::size_t r = 0; r < sweep.row_keys.size(); ++r) {
    for (std::size_t c = 0; c < n_cols; ++c) {
      if (!sweep.active[r * n_cols + c]) continue;
      for (std::size_t k = 0; k < cfg.repeats; ++k) jobs.push_back({r, c, k});
    }
  }

  const auto tag = std::string(to_string(sweep.strategy));
  std::vector<RepeatRecord> runs(jobs.size());
  std::vector<std::uint64_t> hashes(jobs.size());
  parallel_for(jobs.size(), workers, [&](std::size_t i) {
    const auto& job = jobs[i];
    const auto& rk = sweep.row_keys[job.row];
    const auto& ck = sweep.col_keys[job.col];
    const auto seed = cell_seed(cfg.base_seed, tag, rk, ck, job.repeat);
    const auto seeds = CellSeeds::from(seed);
    const auto [n_clients, column] = sweep.shapes[job.row * n_cols + job.col];
    const auto partition = build_partition(cfg, data.split.train, sweep.strategy, n_clients, column, seeds);
    const auto fed = run_federation(data.split, partition, data.mcfg, cell_train_config(cfg, seeds), cfg.rounds,
                                    seeds.init, 1);
    runs[i] = {rk, ck, job.repeat, seed, evaluate_mse(fed.final_params, data.mcfg, data.split.test)};
    hashes[i] = partition_hash(partition);
  });

  json partitions = json::array();
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    partitions.push_back({{"row_key", runs[i].row_key},
                          {"col_key", runs[i].col_key},
                          {"repeat", runs[i].repeat},
                          {"partition_hash", hashes[i]}});
  }
  json provenance = {
      {"config", config_to_json(cfg)},
      {"strategy", tag},
      {"n_train", data.split.train.size()},
      {"n_test", data.split.test.size()},
      {"split_seed", cfg.effective_split_seed()},
      {"partitions", partitions},
  };
  return assemble_grid(sweep.setup, sweep.row_keys, sweep.col_keys, sweep.reference_row, sweep.reference_col,
                       std::move(runs), std::move(provenance));
}

std::vector<std::size_t> sorted_unique(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

GridReport run_iidness_grid(const ExperimentConfig& cfg, std::size_t workers) {
  cfg.validate();
  if (cfg.strategy != Strategy::entity_protein && cfg.strategy != Strategy::entity_drug &&
      cfg.strategy != Strategy::combined) {
    throw ConfigError("IID-ness grid needs strategy entity_protein, entity_drug or combined");
  }
  Sweep s;
  s.setup = "iidness_" + std::string(to_string(cfg.strategy));
  s.strategy = cfg.strategy;
  const auto counts = sorted_unique(cfg.client_counts);
  auto levels = cfg.mixing_levels;
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  for (auto k : counts) s.row_keys.push_back(format_key(k));
  for (auto l : levels) s.col_keys.push_back(format_key(l));
  for (auto k : counts) {
    for (auto l : levels) {
      s.shapes.emplace_back(k, l);
      s.active.push_back(true);
    }
  }
  // Smallest client count, most concentrated (lowest mixing) column.
  s.reference_row = s.row_keys.front();
  s.reference_col = s.col_keys.front();
  return run_sweep(cfg, s, workers);
}

GridReport run_quantity_grid(const ExperimentConfig& cfg, std::size_t workers) {
  cfg.validate();
  if (cfg.strategy != Strategy::quantity) throw ConfigError("quantity grid needs strategy quantity");
  Sweep s;
  s.setup = "quantity";
  s.strategy = Strategy::quantity;
  const auto counts = sorted_unique(cfg.client_counts);
  auto shares = cfg.dominant_shares;
  std::sort(shares.begin(), shares.end(), std::greater<>());
  shares.erase(std::unique(shares.begin(), shares.end()), shares.end());
  for (auto k : counts) {
    if (k < 2) throw ConfigError("quantity grid needs client counts >= 2");
    s.row_keys.push_back(format_key(k));
  }
  for (auto v : shares) s.col_keys.push_back(format_key(v));
  for (auto k : counts) {
    for (auto v : shares) {
      s.shapes.emplace_back(k, v);
      s.active.push_back(true);
    }
  }
  s.reference_row = s.row_keys.front();
  s.reference_col = s.col_keys.front();  // highest dominant share
  return run_sweep(cfg, s, workers);
}

GridReport run_addition_grid(const ExperimentConfig& cfg, std::size_t workers) {
  cfg.validate();
  if (cfg.strategy != Strategy::addition) throw ConfigError("addition grid needs strategy addition");
  Sweep s;
  s.setup = "addition";
  s.strategy = Strategy::addition;
  const auto clients = sorted_unique(cfg.addition.extra_clients);
  auto extras = cfg.addition.extra_shares;
  std::sort(extras.begin(), extras.end());
  extras.erase(std::unique(extras.begin(), extras.end()), extras.end());

  // Row/column 0 hold only the reference run: the dominant client alone.
  s.row_keys.push_back("0");
  for (auto k : clients) s.row_keys.push_back(format_key(k));
  s.col_keys.push_back("0");
  for (auto e : extras) s.col_keys.push_back(format_key(e));
  for (std::size_t r = 0; r < s.row_keys.size(); ++r) {
    for (std::size_t c = 0; c < s.col_keys.size(); ++c) {
      const bool reference = r == 0 && c == 0;
      const bool grid_cell = r > 0 && c > 0;
      s.shapes.emplace_back(r == 0 ? 0 : clients[r - 1], c == 0 ? 0.0 : extras[c - 1]);
      s.active.push_back(reference || grid_cell);
    }
  }
  s.reference_row = "0";
  s.reference_col = "0";
  return run_sweep(cfg, s, workers);
}

GridReport run_client_count_grid(const ExperimentConfig& cfg, std::size_t workers) {
  cfg.validate();
  Sweep s;
  s.setup = "clients_iid";
  s.strategy = Strategy::iid;
  const auto counts = sorted_unique(cfg.client_counts);
  for (auto k : counts) {
    s.row_keys.push_back(format_key(k));
    s.shapes.emplace_back(k, 0.0);
    s.active.push_back(true);
  }
  s.col_keys = {"iid"};
  s.reference_row = s.row_keys.front();
  s.reference_col = "iid";
  return run_sweep(cfg, s, workers);
}

GridReport run_grid(const ExperimentConfig& cfg, std::size_t workers) {
  switch (cfg.strategy) {
    case Strategy::iid: return run_client_count_grid(cfg, workers);
    case Strategy::entity_protein:
    case Strategy::entity_drug:
    case Strategy::combined: return run_iidness_grid(cfg, workers);
    case Strategy::quantity: return run_quantity_grid(cfg, workers);
    case Strategy::addition: return run_addition_grid(cfg, workers);
  }
  throw std::logic_error("unhandled strategy");
}

double pct_difference(double federated_mse, double ensemble_mse) {
  if (ensemble_mse == 0.0) throw std::invalid_argument("pct_difference: ensemble MSE is zero");
  return 100.0 * (federated_mse - ensemble_mse) / ensemble_mse;
}

ComparisonReport run_comparison(const ExperimentConfig& cfg, std::size_t workers) {
  cfg.validate();
  if (cfg.strategy != Strategy::iid && cfg.strategy != Strategy::entity_protein &&
      cfg.strategy != Strategy::entity_drug) {
    throw ConfigError("compare needs strategy iid, entity_protein or entity_drug");
  }
  // An entity strategy names the non-IID split directly; with `iid` the
  // noniid_strategy field decides.
  const Strategy noniid = cfg.strategy == Strategy::iid ? cfg.noniid_strategy : cfg.strategy;
  const auto data = prepare_data(cfg);
  const auto counts = sorted_unique(cfg.client_counts);
  const std::size_t total_epochs = std::max<std::size_t>(1, cfg.rounds * cfg.train.epochs);

  struct Row {
    std::string distribution;
    Strategy strategy;
    std::size_t n_clients;
    Partition partition;
  };
  std::vector<Row> rows;
  for (const auto* dist : {"iid", "noniid"}) {
    const Strategy strat = std::string_view(dist) == "iid" ? Strategy::iid : noniid;
    const std::string tag = std::string("compare/") + dist;
    for (auto k : counts) {
      const auto seeds = CellSeeds::from(cell_seed(cfg.base_seed, tag, format_key(k), "partition", 0));
      rows.push_back({dist, strat, k, build_partition(cfg, data.split.train, strat, k, 0.0, seeds)});
    }
  }

  struct Outcome {
    double fed = 0.0;
    double ens = 0.0;
    std::uint64_t fed_hash = 0;
    std::uint64_t ens_hash = 0;
  };
  std::vector<Outcome> outcomes(rows.size() * cfg.repeats);
  parallel_for(outcomes.size(), workers, [&](std::size_t i) {
    const auto& row = rows[i / cfg.repeats];
    const auto repeat = i % cfg.repeats;
    const auto seeds = CellSeeds::from(
        cell_seed(cfg.base_seed, "compare/" + row.distribution, format_key(row.n_clients), "run", repeat));
    const auto tcfg = cell_train_config(cfg, seeds);
    const auto fed = run_federation(data.split, row.partition, data.mcfg, tcfg, cfg.rounds, seeds.init, 1);
    const auto ens = train_bagging(data.split, row.partition, data.mcfg, tcfg, total_epochs, seeds.init, 1);
    outcomes[i] = {evaluate_mse(fed.final_params, data.mcfg, data.split.test), evaluate_ensemble(ens, data.split.test),
                   fed.config_echo.at("partition_hash").get<std::uint64_t>(), partition_hash(row.partition)};
  });

  ComparisonReport report;
  json partitions = json::array();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    ComparisonRow out;
    out.distribution = rows[r].distribution;
    out.client_count = rows[r].n_clients;
    double fed_sum = 0.0, ens_sum = 0.0;
    for (std::size_t k = 0; k < cfg.repeats; ++k) {
      const auto& o = outcomes[r * cfg.repeats + k];
      fed_sum += o.fed;
      ens_sum += o.ens;
      out.federated_partition_hash = o.fed_hash;
      out.ensemble_partition_hash = o.ens_hash;
    }
    out.federated_mse = fed_sum / static_cast<double>(cfg.repeats);
    out.ensemble_mse = ens_sum / static_cast<double>(cfg.repeats);
    out.pct_difference = pct_difference(out.federated_mse, out.ensemble_mse);
    partitions.push_back({{"distribution", out.distribution},
                          {"client_count", out.client_count},
                          {"strategy", to_string(rows[r].strategy)},
                          {"federated_partition_hash", out.federated_partition_hash},
                          {"ensemble_partition_hash", out.ensemble_partition_hash}});
    report.rows.push_back(std::move(out));
  }
  report.provenance = {
      {"config", config_to_json(cfg)},
      {"noniid_strategy", to_string(noniid)},
      {"ensemble_total_epochs", total_epochs},
      {"budget_rule", "ensemble members train rounds x local epochs"},
      {"n_train", data.split.train.size()},
      {"n_test", data.split.test.size()},
      {"split_seed", cfg.effective_split_seed()},
      {"partitions", partitions},
  };
  return report;
}

}  // namespace feddti
