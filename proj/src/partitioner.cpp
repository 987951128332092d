#include "feddti/partitioner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "feddti/error.hpp"
#include "feddti/random.hpp"
#include "text.hpp"

namespace feddti {

namespace {

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

void sort_clients(Partition& p) {
  for (auto& c : p.assignments) std::sort(c.begin(), c.end());
  std::sort(p.withheld.begin(), p.withheld.end());
}

// Greedy entity assignment over the records listed in `indices`: heaviest
// entity first, onto the least-loaded client.
std::vector<std::vector<std::size_t>> assign_entities(const Dataset& ds,
                                                      std::span<const std::size_t> indices,
                                                      std::size_t n_clients, EntityDim dim) {
  const auto& index = ds.entities(dim);
  std::vector<std::vector<std::size_t>> records_of(index.size());
  for (auto i : indices) records_of[static_cast<std::size_t>(ds.entity_of(i, dim))].push_back(i);

  std::vector<std::int32_t> present;
  for (std::size_t e = 0; e < records_of.size(); ++e) {
    if (!records_of[e].empty()) present.push_back(static_cast<std::int32_t>(e));
  }
  if (present.size() < n_clients) {
    throw std::invalid_argument("partition_entity: " + std::to_string(present.size()) + " distinct " +
                                std::string(to_string(dim)) + " entities for " +
                                std::to_string(n_clients) + " clients");
  }
  std::sort(present.begin(), present.end(), [&](std::int32_t a, std::int32_t b) {
    const auto na = records_of[static_cast<std::size_t>(a)].size();
    const auto nb = records_of[static_cast<std::size_t>(b)].size();
    if (na != nb) return na > nb;
    return index.name(a) < index.name(b);
  });

  std::vector<std::vector<std::size_t>> clients(n_clients);
  std::vector<std::size_t> load(n_clients, 0);
  for (auto e : present) {
    // min_element returns the first minimum, i.e. the lowest client id on ties.
    const auto target = static_cast<std::size_t>(std::min_element(load.begin(), load.end()) - load.begin());
    const auto& recs = records_of[static_cast<std::size_t>(e)];
    clients[target].insert(clients[target].end(), recs.begin(), recs.end());
    load[target] += recs.size();
  }
  return clients;
}

void require_clients(std::size_t n_clients, const char* op) {
  if (n_clients == 0) throw std::invalid_argument(std::string(op) + ": n_clients must be positive");
}

}  // namespace

std::size_t Partition::assigned_count() const noexcept {
  std::size_t n = 0;
  for (const auto& c : assignments) n += c.size();
  return n;
}

std::vector<std::size_t> Partition::client_sizes() const {
  std::vector<std::size_t> out;
  out.reserve(assignments.size());
  for (const auto& c : assignments) out.push_back(c.size());
  return out;
}

void validate_partition(const Partition& p) {
  std::vector<unsigned char> seen(p.source_size, 0);
  auto mark = [&](std::size_t i) {
    if (i >= p.source_size) throw Error("partition: record index " + std::to_string(i) + " out of range");
    if (seen[i]) throw Error("partition: record index " + std::to_string(i) + " assigned twice");
    seen[i] = 1;
  };
  for (const auto& c : p.assignments) std::for_each(c.begin(), c.end(), mark);
  std::for_each(p.withheld.begin(), p.withheld.end(), mark);
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw Error("partition: some record indices are neither assigned nor withheld");
  }
}

std::uint64_t partition_hash(const Partition& p) {
  Fnv1a h;
  h.u64(p.source_size).u64(p.assignments.size());
  for (const auto& c : p.assignments) {
    h.u64(c.size());
    for (auto i : c) h.u64(i);
  }
  h.u64(p.withheld.size());
  for (auto i : p.withheld) h.u64(i);
  h.str(p.provenance.strategy).str(p.provenance.params.dump()).u64(p.provenance.seed);
  return h.digest();
}

void MixingConfig::validate() const {
  if (!(level >= 0.0 && level <= 1.0)) throw std::invalid_argument("mixing level must lie in [0, 1]");
  if (!(sigma > 0.0)) throw std::invalid_argument("mixing sigma must be positive");
}

std::vector<double> mixing_level_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 8; ++i) g.push_back(i / 8.0);
  return g;
}

void AdditionPlan::validate() const {
  if (!(dominant_share > 0.0 && dominant_share <= 1.0)) {
    throw std::invalid_argument("addition plan: dominant_share must lie in (0, 1]");
  }
  if (!(extra_share >= 0.0)) throw std::invalid_argument("addition plan: extra_share must be >= 0");
  if (dominant_share + extra_share > 1.0 + 1e-9) {
    throw std::invalid_argument("addition plan: shares exceed 1");
  }
  if (extra_share > 0.0 && n_extra_clients == 0) {
    throw std::invalid_argument("addition plan: extra data needs at least one extra client");
  }
}

std::size_t ring_distance(std::size_t i, std::size_t j, std::size_t n_clients) noexcept {
  const std::size_t d = i > j ? i - j : j - i;
  return std::min(d, n_clients - d);
}

std::size_t share_count(double share, std::size_t n) noexcept {
  const double x = share * static_cast<double>(n);
  return static_cast<std::size_t>(std::floor(x + 1e-9 * std::max(1.0, x)));
}

std::vector<std::size_t> largest_remainder(std::size_t total, std::span<const double> weights) {
  if (weights.empty()) {
    if (total != 0) throw std::invalid_argument("largest_remainder: no bins for a positive total");
    return {};
  }
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(sum > 0.0)) throw std::invalid_argument("largest_remainder: weights must have a positive sum");

  std::vector<std::size_t> counts(weights.size());
  std::vector<double> frac(weights.size());
  std::size_t assigned = 0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    const double quota = static_cast<double>(total) * weights[j] / sum;
    counts[j] = static_cast<std::size_t>(std::floor(quota));
    frac[j] = quota - std::floor(quota);
    assigned += counts[j];
  }
  // Quotas can overshoot by rounding; trim from the smallest remainders.
  while (assigned > total) {
    std::size_t j = 0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
      if (counts[k] > 0 && (counts[j] == 0 || frac[k] < frac[j])) j = k;
    }
    --counts[j];
    --assigned;
  }
  std::vector<std::size_t> order = iota_indices(weights.size());
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < total; k = (k + 1) % order.size()) {
    ++counts[order[k]];
    ++assigned;
  }
  return counts;
}

Partition partition_iid(const Dataset& ds, std::size_t n_clients, std::uint64_t seed) {
  require_clients(n_clients, "partition_iid");
  auto order = iota_indices(ds.size());
  KeyedStream rng(derive_key(seed, "partition/iid"));
  rng.shuffle(std::span(order));

  Partition p;
  p.source_size = ds.size();
  p.assignments.resize(n_clients);
  for (std::size_t k = 0; k < order.size(); ++k) p.assignments[k % n_clients].push_back(order[k]);
  p.provenance = {"iid", {{"n_clients", n_clients}}, seed};
  sort_clients(p);
  return p;
}

Partition partition_entity(const Dataset& ds, std::size_t n_clients, EntityDim dim, std::uint64_t seed) {
  require_clients(n_clients, "partition_entity");
  const auto all = iota_indices(ds.size());
  Partition p;
  p.source_size = ds.size();
  p.assignments = assign_entities(ds, all, n_clients, dim);
  p.provenance = {"entity_" + std::string(to_string(dim)), {{"n_clients", n_clients}}, seed};
  sort_clients(p);
  return p;
}

Partition apply_gaussian_mixing(const Partition& p, const MixingConfig& cfg) {
  cfg.validate();
  const std::size_t k_clients = p.n_clients();
  if (k_clients == 0) throw std::invalid_argument("apply_gaussian_mixing: empty partition");
  if (k_clients == 1 && cfg.level > 0.0) {
    throw std::invalid_argument("apply_gaussian_mixing: a single client has no neighbour");
  }

  // cumulative[i] holds the normalised kernel over j != i, as a running CDF.
  std::vector<std::vector<double>> cumulative(k_clients);
  std::vector<std::vector<std::size_t>> targets(k_clients);
  for (std::size_t i = 0; i < k_clients && k_clients > 1; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < k_clients; ++j) {
      if (j == i) continue;
      const auto d = static_cast<double>(ring_distance(i, j, k_clients));
      total += std::exp(-d * d / (2.0 * cfg.sigma * cfg.sigma));
      cumulative[i].push_back(total);
      targets[i].push_back(j);
    }
    for (auto& c : cumulative[i]) c /= total;
  }

  Partition out;
  out.source_size = p.source_size;
  out.withheld = p.withheld;
  out.assignments.resize(k_clients);
  for (std::size_t owner = 0; owner < k_clients; ++owner) {
    for (auto record : p.assignments[owner]) {
      KeyedStream rng(derive_key(cfg.seed, "partition/mixing", record));
      std::size_t dest = owner;
      if (rng.uniform() < cfg.level) {
        const double u = rng.uniform();
        const auto& cdf = cumulative[owner];
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        if (it == cdf.end()) --it;
        dest = targets[owner][static_cast<std::size_t>(it - cdf.begin())];
      }
      out.assignments[dest].push_back(record);
    }
  }
  out.provenance = p.provenance;
  out.provenance.params["mixing"] = {{"level", cfg.level}, {"sigma", cfg.sigma}, {"seed", cfg.seed},
                                     {"topology", "ring"}, {"move", "one_way"}};
  sort_clients(out);
  return out;
}

Partition partition_combined(const Dataset& ds, std::size_t n_clients, const MixingConfig& cfg,
                             std::uint64_t seed) {
  if (n_clients < 2 || n_clients % 2 != 0) {
    throw std::invalid_argument("partition_combined: n_clients must be even and >= 2");
  }
  cfg.validate();
  auto order = iota_indices(ds.size());
  KeyedStream rng(derive_key(seed, "partition/combined"));
  rng.shuffle(std::span(order));
  const std::size_t half = ds.size() / 2;
  std::span<const std::size_t> part_a(order.data(), half);
  std::span<const std::size_t> part_b(order.data() + half, ds.size() - half);

  const std::size_t k_half = n_clients / 2;
  auto by_protein = assign_entities(ds, part_a, k_half, EntityDim::protein);
  auto by_drug = assign_entities(ds, part_b, k_half, EntityDim::drug);

  Partition base;
  base.source_size = ds.size();
  base.assignments = std::move(by_protein);
  for (auto& c : by_drug) base.assignments.push_back(std::move(c));
  base.provenance = {"combined",
                     {{"n_clients", n_clients},
                      {"half_a", {{"size", part_a.size()}, {"dim", "protein"}, {"clients", "0.." + std::to_string(k_half - 1)}}},
                      {"half_b", {{"size", part_b.size()}, {"dim", "drug"}, {"clients", std::to_string(k_half) + ".." + std::to_string(n_clients - 1)}}},
                      {"mixing_scope", "full_ring"}},
                     seed};
  sort_clients(base);
  return apply_gaussian_mixing(base, cfg);
}

Partition partition_quantity_skew(const Dataset& ds, std::size_t n_clients, double dominant_share,
                                  double sigma_q, std::uint64_t seed) {
  if (n_clients < 2) throw std::invalid_argument("partition_quantity_skew: needs at least 2 clients");
  if (!(dominant_share > 0.0 && dominant_share <= 1.0)) {
    throw std::invalid_argument("partition_quantity_skew: dominant_share must lie in (0, 1]");
  }
  if (!(sigma_q > 0.0)) throw std::invalid_argument("partition_quantity_skew: sigma_q must be positive");

  const std::size_t n = ds.size();
  auto order = iota_indices(n);
  KeyedStream rng(derive_key(seed, "partition/quantity"));
  rng.shuffle(std::span(order));

  const std::size_t dominant = share_count(dominant_share, n);
  std::vector<double> weights;
  for (std::size_t j = 1; j < n_clients; ++j) {
    const auto x = static_cast<double>(j - 1);
    weights.push_back(std::exp(-x * x / (2.0 * sigma_q * sigma_q)));
  }
  const auto counts = largest_remainder(n - dominant, weights);

  Partition p;
  p.source_size = n;
  p.assignments.resize(n_clients);
  auto cursor = order.begin();
  p.assignments[0].assign(cursor, cursor + static_cast<std::ptrdiff_t>(dominant));
  cursor += static_cast<std::ptrdiff_t>(dominant);
  for (std::size_t j = 1; j < n_clients; ++j) {
    const auto c = static_cast<std::ptrdiff_t>(counts[j - 1]);
    p.assignments[j].assign(cursor, cursor + c);
    cursor += c;
  }
  p.provenance = {"quantity",
                  {{"n_clients", n_clients}, {"dominant_share", dominant_share}, {"sigma_q", sigma_q}},
                  seed};
  sort_clients(p);
  return p;
}

Partition partition_addition(const Dataset& ds, const AdditionPlan& plan, std::uint64_t seed) {
  plan.validate();
  const std::size_t n = ds.size();
  auto order = iota_indices(n);
  KeyedStream rng(derive_key(seed, "partition/addition"));
  rng.shuffle(std::span(order));

  const std::size_t dominant = share_count(plan.dominant_share, n);
  const std::size_t extra = std::min(share_count(plan.extra_share, n), n - dominant);
  const std::vector<double> equal(plan.n_extra_clients, 1.0);
  const auto counts = largest_remainder(extra, equal);

  Partition p;
  p.source_size = n;
  p.assignments.resize(1 + plan.n_extra_clients);
  auto cursor = order.begin();
  p.assignments[0].assign(cursor, cursor + static_cast<std::ptrdiff_t>(dominant));
  cursor += static_cast<std::ptrdiff_t>(dominant);
  for (std::size_t j = 0; j < plan.n_extra_clients; ++j) {
    const auto c = static_cast<std::ptrdiff_t>(counts[j]);
    p.assignments[j + 1].assign(cursor, cursor + c);
    cursor += c;
  }
  p.withheld.assign(cursor, order.end());
  p.provenance = {"addition",
                  {{"dominant_share", plan.dominant_share},
                   {"extra_share", plan.extra_share},
                   {"n_extra_clients", plan.n_extra_clients},
                   {"used", dominant + extra},
                   {"withheld", p.withheld.size()}},
                  seed};
  sort_clients(p);
  return p;
}

void write_partition_manifest(const Partition& p, const std::filesystem::path& csv_path,
                              const std::filesystem::path& json_path) {
  std::vector<long long> owner(p.source_size, -1);
  for (std::size_t c = 0; c < p.assignments.size(); ++c) {
    for (auto i : p.assignments[c]) owner.at(i) = static_cast<long long>(c);
  }
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw Error("cannot write " + csv_path.string());
  csv << "record_index,client_id\n";
  for (std::size_t i = 0; i < owner.size(); ++i) {
    if (owner[i] >= 0) csv << i << ',' << owner[i] << '\n';
  }

  nlohmann::json meta = {
      {"strategy", p.provenance.strategy},
      {"params", p.provenance.params},
      {"seed", p.provenance.seed},
      {"n_clients", p.n_clients()},
      {"source_size", p.source_size},
      {"withheld", p.withheld},
      {"hash", partition_hash(p)},
  };
  std::ofstream js(json_path, std::ios::binary);
  if (!js) throw Error("cannot write " + json_path.string());
  js << meta.dump(2) << '\n';
}

Partition read_partition_manifest(const std::filesystem::path& csv_path,
                                  const std::filesystem::path& json_path) {
  std::ifstream js(json_path, std::ios::binary);
  if (!js) throw InputError("cannot open " + json_path.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(json_path.string() + ": " + e.what());
  }

  Partition p;
  try {
    p.provenance.strategy = meta.at("strategy").get<std::string>();
    p.provenance.params = meta.at("params");
    p.provenance.seed = meta.at("seed").get<std::uint64_t>();
    p.source_size = meta.at("source_size").get<std::size_t>();
    p.assignments.resize(meta.at("n_clients").get<std::size_t>());
    p.withheld = meta.at("withheld").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(json_path.string() + ": " + e.what());
  }

  std::ifstream csv(csv_path, std::ios::binary);
  if (!csv) throw InputError("cannot open " + csv_path.string());
  std::string line;
  if (!std::getline(csv, line) || text::strip_cr(line) != "record_index,client_id") {
    throw InputError(csv_path.string() + ":1: expected header `record_index,client_id`");
  }
  std::size_t line_no = 1;
  while (std::getline(csv, line)) {
    ++line_no;
    const auto row = text::strip_cr(line);
    if (row.empty()) continue;
    const auto fields = text::split(row);
    const auto record = fields.size() == 2 ? text::parse_int<std::size_t>(fields[0]) : std::nullopt;
    const auto client = fields.size() == 2 ? text::parse_int<std::size_t>(fields[1]) : std::nullopt;
    if (!record || !client || *client >= p.assignments.size()) {
      throw InputError(csv_path.string() + ":" + std::to_string(line_no) + ": malformed row");
    }
    p.assignments[*client].push_back(*record);
  }
  sort_clients(p);
  validate_partition(p);
  if (meta.contains("hash") && meta["hash"].get<std::uint64_t>() != partition_hash(p)) {
    throw InputError(json_path.string() + ": hash does not match the manifest contents");
  }
  return p;
}

}  // namespace feddti
