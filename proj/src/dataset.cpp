#include "feddti/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "feddti/error.hpp"
#include "feddti/random.hpp"
#include "text.hpp"

namespace feddti {

std::string_view to_string(EntityDim dim) noexcept {
  return dim == EntityDim::drug ? "drug" : "protein";
}

std::int32_t EntityIndex::intern(std::string_view id) {
  auto it = lookup_.find(std::string(id));
  if (it != lookup_.end()) return it->second;
  const auto idx = static_cast<std::int32_t>(names_.size());
  names_.emplace_back(id);
  lookup_.emplace(names_.back(), idx);
  return idx;
}

std::optional<std::int32_t> EntityIndex::find(std::string_view id) const {
  auto it = lookup_.find(std::string(id));
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

Dataset::Dataset()
    : drugs_(std::make_shared<EntityIndex>()), proteins_(std::make_shared<EntityIndex>()) {}

Dataset Dataset::from_records(std::vector<InteractionRecord> records, DatasetMetadata meta) {
  auto drugs = std::make_shared<EntityIndex>();
  auto proteins = std::make_shared<EntityIndex>();
  Dataset ds;
  ds.samples_.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.drug_id.empty() || r.protein_id.empty()) {
      throw InputError("record " + std::to_string(i) + ": empty drug_id or protein_id");
    }
    if (!std::isfinite(r.label)) {
      throw InputError("record " + std::to_string(i) + ": non-finite label");
    }
    ds.samples_.push_back({drugs->intern(r.drug_id), proteins->intern(r.protein_id), r.label});
  }
  ds.records_ = std::move(records);
  ds.drugs_ = std::move(drugs);
  ds.proteins_ = std::move(proteins);
  if (meta.source_rows == 0) meta.source_rows = ds.records_.size();
  ds.meta_ = std::move(meta);
  return ds;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.records_.reserve(indices.size());
  out.samples_.reserve(indices.size());
  for (auto i : indices) {
    out.records_.push_back(records_.at(i));
    out.samples_.push_back(samples_[i]);
  }
  out.drugs_ = drugs_;
  out.proteins_ = proteins_;
  out.meta_ = meta_;
  return out;
}

std::vector<Sample> Dataset::gather(std::span<const std::size_t> indices) const {
  std::vector<Sample> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(samples_.at(i));
  return out;
}

Dataset parse_csv(std::istream& in, const std::string& source_name) {
  std::string line;
  if (!std::getline(in, line)) {
    throw InputError(source_name + ": missing header `drug_id,protein_id,label`");
  }
  if (text::strip_cr(line) != "drug_id,protein_id,label") {
    throw InputError(source_name + ":1: expected header `drug_id,protein_id,label`, got `" +
                     std::string(text::strip_cr(line)) + "`");
  }
  std::vector<InteractionRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto row = text::strip_cr(line);
    if (row.empty()) {
      // A blank final line is a trailing newline artefact; anything after it is not.
      if (in.peek() == std::char_traits<char>::eof()) break;
      throw InputError(source_name + ":" + std::to_string(line_no) + ": empty row");
    }
    const auto fields = text::split(row);
    const auto where = source_name + ":" + std::to_string(line_no) + ": ";
    if (fields.size() != 3) {
      throw InputError(where + "expected 3 fields, got " + std::to_string(fields.size()));
    }
    if (fields[0].empty() || fields[1].empty()) throw InputError(where + "empty entity id");
    const auto label = text::parse_double(fields[2]);
    if (!label) throw InputError(where + "non-numeric label `" + std::string(fields[2]) + "`");
    if (!std::isfinite(*label)) throw InputError(where + "non-finite label");
    records.push_back({std::string(fields[0]), std::string(fields[1]), *label});
  }
  DatasetMetadata meta;
  meta.source = source_name;
  meta.source_rows = records.size();
  return Dataset::from_records(std::move(records), std::move(meta));
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open dataset file " + path.string());
  return parse_csv(in, path.string());
}

void write_csv(const Dataset& ds, std::ostream& out) {
  out << "drug_id,protein_id,label\n";
  for (const auto& r : ds.records()) {
    out << r.drug_id << ',' << r.protein_id << ',' << text::format_g17(r.label) << '\n';
  }
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_csv(ds, out);
  if (!out) throw Error("write failed for " + path.string());
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_records > 0 && (spec.n_drugs == 0 || spec.n_proteins == 0)) {
    throw std::invalid_argument("generate_synthetic: n_drugs and n_proteins must be positive");
  }
  if (spec.latent_dim == 0) throw std::invalid_argument("generate_synthetic: latent_dim must be positive");
  if (!(spec.noise_sd >= 0.0)) throw std::invalid_argument("generate_synthetic: noise_sd must be >= 0");

  auto truth = std::make_shared<SyntheticTruth>();
  truth->latent_dim = spec.latent_dim;
  truth->noise_sd = spec.noise_sd;
  truth->seed = spec.seed;
  const double scale = 1.0 / std::sqrt(static_cast<double>(spec.latent_dim));

  auto draw_latents = [&](std::size_t n, std::string_view prefix, std::string_view label,
                          std::vector<std::string>& ids, std::vector<double>& latents) {
    KeyedStream rng(derive_key(spec.seed, label));
    ids.reserve(n);
    latents.resize(n * spec.latent_dim);
    for (std::size_t k = 0; k < n; ++k) ids.push_back(std::string(prefix) + std::to_string(k));
    for (auto& x : latents) x = rng.normal() * scale;
  };
  draw_latents(spec.n_drugs, "D", "synthetic/drug-latents", truth->drug_ids, truth->drug_latents);
  draw_latents(spec.n_proteins, "P", "synthetic/protein-latents", truth->protein_ids,
               truth->protein_latents);

  KeyedStream pairs(derive_key(spec.seed, "synthetic/pairs"));
  KeyedStream noise(derive_key(spec.seed, "synthetic/noise"));
  std::vector<InteractionRecord> records;
  records.reserve(spec.n_records);
  for (std::size_t i = 0; i < spec.n_records; ++i) {
    const auto d = static_cast<std::size_t>(pairs.below(spec.n_drugs));
    const auto p = static_cast<std::size_t>(pairs.below(spec.n_proteins));
    const auto u = truth->drug_latent(d);
    const auto v = truth->protein_latent(p);
    double label = std::inner_product(u.begin(), u.end(), v.begin(), 0.0);
    if (spec.noise_sd > 0.0) label += spec.noise_sd * noise.normal();
    records.push_back({truth->drug_ids[d], truth->protein_ids[p], label});
  }

  DatasetMetadata meta;
  meta.source = "synthetic";
  meta.source_rows = spec.n_records;
  meta.synthetic = std::move(truth);
  return Dataset::from_records(std::move(records), std::move(meta));
}

SplitPair split_train_test(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) {
    throw std::invalid_argument("split_train_test: test_fraction must lie in [0, 1]");
  }
  const std::size_t n = ds.size();
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  KeyedStream rng(derive_key(seed, "split"));
  rng.shuffle(std::span(order));

  SplitPair out;
  out.seed = seed;
  out.test_fraction = test_fraction;
  out.test_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  out.train_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(out.test_indices.begin(), out.test_indices.end());
  std::sort(out.train_indices.begin(), out.train_indices.end());
  out.train = ds.subset(out.train_indices);
  out.test = ds.subset(out.test_indices);
  return out;
}

KibaCountCheck check_kiba_counts(const Dataset& ds) noexcept {
  KibaCountCheck c;
  c.records = ds.size();
  c.drugs = ds.drugs().size();
  c.proteins = ds.proteins().size();
  c.matches_original = c.records == kKibaRecords && c.drugs == kKibaDrugs && c.proteins == kKibaProteins;
  return c;
}

}  // namespace feddti
