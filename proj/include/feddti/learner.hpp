#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "feddti/dataset.hpp"

namespace feddti {

enum class ModelKind { linear, two_tower_mlp };

std::string_view to_string(ModelKind kind) noexcept;
ModelKind parse_model_kind(std::string_view s);

inline constexpr double kLayerNormEpsilon = 1e-5;

struct ModelConfig {
  ModelKind kind = ModelKind::two_tower_mlp;
  std::size_t embedding_dim = 16;
  std::size_t hidden_dim = 32;  // two_tower_mlp only
  std::size_t n_drugs = 0;
  std::size_t n_proteins = 0;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct TrainConfig {
  std::size_t epochs = 1;
  double learning_rate = 0.1;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  // Epoch e of this call shuffles with the stream for epoch first_epoch + e, so
  // consecutive calls can continue one longer schedule.
  std::size_t first_epoch = 0;

  void validate() const;
};

struct TensorSpec {
  std::string name;
  std::vector<std::size_t> shape;

  std::size_t size() const noexcept;
  bool operator==(const TensorSpec&) const = default;
};

/// Flat model parameters plus the tensor layout that gives them meaning.
class ParameterVector {
 public:
  ParameterVector() = default;
  ParameterVector(std::vector<TensorSpec> layout, std::vector<double> values);
  static ParameterVector zeros(std::vector<TensorSpec> layout);
  static ParameterVector from_tensors(std::vector<TensorSpec> layout,
                                      const std::vector<std::vector<double>>& tensors);

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<TensorSpec>& layout() const noexcept { return layout_; }
  std::size_t size() const noexcept { return values_.size(); }

  std::size_t offset_of(std::string_view name) const;
  std::span<double> tensor(std::string_view name);
  std::span<const double> tensor(std::string_view name) const;
  std::vector<std::vector<double>> tensors() const;

  bool all_finite() const noexcept;
  bool same_layout(const ParameterVector& other) const noexcept { return layout_ == other.layout_; }
  bool operator==(const ParameterVector&) const = default;

 private:
  std::vector<TensorSpec> layout_;
  std::vector<double> values_;
};

std::vector<TensorSpec> model_layout(const ModelConfig& cfg);

ParameterVector init_model(const ModelConfig& cfg, std::uint64_t seed);

double predict(const ParameterVector& params, const ModelConfig& cfg, std::size_t drug, std::size_t protein);

/// Gradient of the batch mean squared error with respect to every parameter.
ParameterVector gradient(const ParameterVector& params, const ModelConfig& cfg, std::span<const Sample> batch);

/// Mini-batch SGD. Each epoch visits `data` in the order given by a shuffle
/// keyed by (tcfg.seed, epoch); the final batch of an epoch may be short.
ParameterVector sgd_train(ParameterVector params, const ModelConfig& cfg, const TrainConfig& tcfg,
                          std::span<const Sample> data);
ParameterVector sgd_train(ParameterVector params, const ModelConfig& cfg, const TrainConfig& tcfg,
                          const Dataset& data);

// Order in which sgd_train visits `n` samples during `epoch`.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

double evaluate_mse(const ParameterVector& params, const ModelConfig& cfg, std::span<const Sample> data);
double evaluate_mse(const ParameterVector& params, const ModelConfig& cfg, const Dataset& data);

// Normalise `x` over its length with population variance, then scale and shift.
// `normalized` receives the pre-affine values.
void layer_norm(std::span<const double> x, std::span<const double> gain, std::span<const double> bias,
                std::span<double> normalized, std::span<double> out, double epsilon = kLayerNormEpsilon);

// Checkpoint: "FDTIPARM", u64 LE header length, JSON layout header, then the
// values as little-endian float64.
void save_parameters(const ParameterVector& params, std::ostream& out);
void save_parameters(const ParameterVector& params, const std::filesystem::path& path);
ParameterVector load_parameters(std::istream& in);
ParameterVector load_parameters(const std::filesystem::path& path);

}  // namespace feddti
