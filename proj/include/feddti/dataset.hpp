#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace feddti {

enum class EntityDim { protein, drug };

std::string_view to_string(EntityDim dim) noexcept;

/// One (drug, protein, affinity) observation.
struct InteractionRecord {
  std::string drug_id;
  std::string protein_id;
  double label = 0.0;

  bool operator==(const InteractionRecord&) const = default;
};

/// Dense-index form of a record; what the learners consume.
struct Sample {
  std::int32_t drug = 0;
  std::int32_t protein = 0;
  double label = 0.0;
};

/// Bidirectional map between opaque entity ids and dense indices 0..size()-1,
/// assigned in order of first appearance.
class EntityIndex {
 public:
  std::int32_t intern(std::string_view id);
  std::optional<std::int32_t> find(std::string_view id) const;
  const std::string& name(std::int32_t index) const { return names_.at(static_cast<std::size_t>(index)); }
  std::size_t size() const noexcept { return names_.size(); }

 private:
  std::unordered_map<std::string, std::int32_t> lookup_;
  std::vector<std::string> names_;
};

/// Ground truth retained by generate_synthetic: label = dot(drug_latent, protein_latent) + noise.
struct SyntheticTruth {
  std::size_t latent_dim = 0;
  double noise_sd = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::string> drug_ids;     // generator order
  std::vector<std::string> protein_ids;  // generator order
  std::vector<double> drug_latents;      // drug_ids.size() x latent_dim, row-major
  std::vector<double> protein_latents;   // protein_ids.size() x latent_dim, row-major

  std::span<const double> drug_latent(std::size_t k) const {
    return {drug_latents.data() + k * latent_dim, latent_dim};
  }
  std::span<const double> protein_latent(std::size_t k) const {
    return {protein_latents.data() + k * latent_dim, latent_dim};
  }
};

struct DatasetMetadata {
  std::size_t source_rows = 0;
  std::string source;  // file path or "synthetic"
  std::shared_ptr<const SyntheticTruth> synthetic;
};

/// Immutable collection of interaction records.
///
/// Subsets produced by subset() share the parent's entity indices, so a model
/// sized for the parent accepts every subset's samples unchanged. Only a root
/// dataset is guaranteed to have indices that cover exactly its own ids.
class Dataset {
 public:
  Dataset();
  static Dataset from_records(std::vector<InteractionRecord> records, DatasetMetadata meta = {});

  std::span<const InteractionRecord> records() const noexcept { return records_; }
  std::span<const Sample> samples() const noexcept { return samples_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }

  const EntityIndex& drugs() const noexcept { return *drugs_; }
  const EntityIndex& proteins() const noexcept { return *proteins_; }
  const EntityIndex& entities(EntityDim dim) const noexcept {
    return dim == EntityDim::drug ? *drugs_ : *proteins_;
  }
  std::int32_t entity_of(std::size_t record, EntityDim dim) const noexcept {
    return dim == EntityDim::drug ? samples_[record].drug : samples_[record].protein;
  }
  const DatasetMetadata& metadata() const noexcept { return meta_; }

  Dataset subset(std::span<const std::size_t> indices) const;
  std::vector<Sample> gather(std::span<const std::size_t> indices) const;

 private:
  std::vector<InteractionRecord> records_;
  std::vector<Sample> samples_;
  std::shared_ptr<const EntityIndex> drugs_;
  std::shared_ptr<const EntityIndex> proteins_;
  DatasetMetadata meta_;
};

// Canonical CSV: header `drug_id,protein_id,label`.
Dataset load_csv(const std::filesystem::path& path);
Dataset parse_csv(std::istream& in, const std::string& source_name = "<stream>");
void write_csv(const Dataset& ds, std::ostream& out);
void save_csv(const Dataset& ds, const std::filesystem::path& path);

struct SyntheticSpec {
  std::size_t n_drugs = 200;
  std::size_t n_proteins = 50;
  std::size_t n_records = 20000;
  std::size_t latent_dim = 8;
  double noise_sd = 0.1;
  std::uint64_t seed = 0;
};

Dataset generate_synthetic(const SyntheticSpec& spec);

struct SplitPair {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_indices;  // into the source, ascending
  std::vector<std::size_t> test_indices;
  std::uint64_t seed = 0;
  double test_fraction = 0.0;
};

SplitPair split_train_test(const Dataset& ds, double test_fraction, std::uint64_t seed);

// Published statistics of the original KIBA assay collection.
inline constexpr std::size_t kKibaRecords = 246088;
inline constexpr std::size_t kKibaDrugs = 52498;
inline constexpr std::size_t kKibaProteins = 467;

struct KibaCountCheck {
  std::size_t records = 0;
  std::size_t drugs = 0;
  std::size_t proteins = 0;
  bool matches_original = false;
};

// Advisory only: filtered KIBA derivatives legitimately differ.
KibaCountCheck check_kiba_counts(const Dataset& ds) noexcept;

}  // namespace feddti
