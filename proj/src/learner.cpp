#include "feddti/learner.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "feddti/error.hpp"
#include "feddti/random.hpp"

namespace feddti {

std::string_view to_string(ModelKind kind) noexcept {
  return kind == ModelKind::linear ? "linear" : "two_tower_mlp";
}

ModelKind parse_model_kind(std::string_view s) {
  if (s == "linear") return ModelKind::linear;
  if (s == "two_tower_mlp") return ModelKind::two_tower_mlp;
  throw ConfigError("unknown model kind `" + std::string(s) + "`");
}

void ModelConfig::validate() const {
  if (embedding_dim == 0) throw std::invalid_argument("model: embedding_dim must be positive");
  if (kind == ModelKind::two_tower_mlp && hidden_dim == 0) {
    throw std::invalid_argument("model: hidden_dim must be positive");
  }
  if (n_drugs == 0 || n_proteins == 0) throw std::invalid_argument("model: entity counts must be positive");
}

void TrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("train: epochs must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("train: learning_rate must be finite and non-negative");
  }
  if (batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
}

std::size_t TensorSpec::size() const noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

ParameterVector::ParameterVector(std::vector<TensorSpec> layout, std::vector<double> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  std::size_t n = 0;
  for (const auto& t : layout_) n += t.size();
  if (n != values_.size()) {
    throw std::invalid_argument("ParameterVector: layout describes " + std::to_string(n) + " values, got " +
                                std::to_string(values_.size()));
  }
}

ParameterVector ParameterVector::zeros(std::vector<TensorSpec> layout) {
  std::size_t n = 0;
  for (const auto& t : layout) n += t.size();
  return ParameterVector(std::move(layout), std::vector<double>(n, 0.0));
}

ParameterVector ParameterVector::from_tensors(std::vector<TensorSpec> layout,
                                              const std::vector<std::vector<double>>& tensors) {
  if (tensors.size() != layout.size()) throw std::invalid_argument("from_tensors: tensor count mismatch");
  std::vector<double> flat;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (tensors[i].size() != layout[i].size()) {
      throw std::invalid_argument("from_tensors: size mismatch for " + layout[i].name);
    }
    flat.insert(flat.end(), tensors[i].begin(), tensors[i].end());
  }
  return ParameterVector(std::move(layout), std::move(flat));
}

std::size_t ParameterVector::offset_of(std::string_view name) const {
  std::size_t off = 0;
  for (const auto& t : layout_) {
    if (t.name == name) return off;
    off += t.size();
  }
  throw std::out_of_range("no tensor named " + std::string(name));
}

std::span<double> ParameterVector::tensor(std::string_view name) {
  const auto off = offset_of(name);
  const auto it = std::find_if(layout_.begin(), layout_.end(), [&](const auto& t) { return t.name == name; });
  return {values_.data() + off, it->size()};
}

std::span<const double> ParameterVector::tensor(std::string_view name) const {
  return const_cast<ParameterVector*>(this)->tensor(name);
}

std::vector<std::vector<double>> ParameterVector::tensors() const {
  std::vector<std::vector<double>> out;
  std::size_t off = 0;
  for (const auto& t : layout_) {
    out.emplace_back(values_.begin() + static_cast<std::ptrdiff_t>(off),
                     values_.begin() + static_cast<std::ptrdiff_t>(off + t.size()));
    off += t.size();
  }
  return out;
}

bool ParameterVector::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

std::vector<TensorSpec> model_layout(const ModelConfig& cfg) {
  cfg.validate();
  const auto d = cfg.embedding_dim;
  std::vector<TensorSpec> layout = {
      {"drug_embedding", {cfg.n_drugs, d}},
      {"protein_embedding", {cfg.n_proteins, d}},
  };
  if (cfg.kind == ModelKind::linear) {
    layout.push_back({"bias", {1}});
  } else {
    const auto h = cfg.hidden_dim;
    layout.push_back({"hidden.weight", {h, 3 * d}});
    layout.push_back({"hidden.bias", {h}});
    layout.push_back({"norm.gain", {h}});
    layout.push_back({"norm.bias", {h}});
    layout.push_back({"output.weight", {h}});
    layout.push_back({"output.bias", {1}});
  }
  return layout;
}

namespace {

// Offsets into the flat vector for one model configuration.
struct Layout {
  std::size_t dim = 0;
  std::size_t hidden = 0;
  std::size_t n_drugs = 0;
  std::size_t n_proteins = 0;
  bool mlp = false;
  std::size_t drug_emb = 0;
  std::size_t protein_emb = 0;
  std::size_t dense_begin = 0;  // first parameter after the embedding tables
  std::size_t bias = 0;         // linear
  std::size_t w1 = 0, b1 = 0, gain = 0, beta = 0, w2 = 0, b2 = 0;
  std::size_t total = 0;

  explicit Layout(const ModelConfig& cfg)
      : dim(cfg.embedding_dim),
        hidden(cfg.hidden_dim),
        n_drugs(cfg.n_drugs),
        n_proteins(cfg.n_proteins),
        mlp(cfg.kind == ModelKind::two_tower_mlp) {
    cfg.validate();
    protein_emb = drug_emb + n_drugs * dim;
    dense_begin = protein_emb + n_proteins * dim;
    if (!mlp) {
      bias = dense_begin;
      total = bias + 1;
    } else {
      w1 = dense_begin;
      b1 = w1 + hidden * 3 * dim;
      gain = b1 + hidden;
      beta = gain + hidden;
      w2 = beta + hidden;
      b2 = w2 + hidden;
      total = b2 + 1;
    }
  }

  void check(const ParameterVector& p) const {
    if (p.size() != total) {
      throw std::invalid_argument("parameter vector does not match the model configuration");
    }
  }
  void check_indices(std::size_t drug, std::size_t protein) const {
    if (drug >= n_drugs || protein >= n_proteins) {
      throw std::out_of_range("entity index out of range (drug " + std::to_string(drug) + ", protein " +
                              std::to_string(protein) + ")");
    }
  }
};

// Per-sample activations of the two-tower model.
struct MlpCache {
  std::vector<double> h, pre, xhat, z;
  double inv_std = 0.0;

  explicit MlpCache(const Layout& l) : h(3 * l.dim), pre(l.hidden), xhat(l.hidden), z(l.hidden) {}
};

double forward_mlp(const double* w, const Layout& l, std::size_t drug, std::size_t protein, MlpCache& c) {
  const double* u = w + l.drug_emb + drug * l.dim;
  const double* v = w + l.protein_emb + protein * l.dim;
  for (std::size_t k = 0; k < l.dim; ++k) {
    c.h[k] = u[k];
    c.h[l.dim + k] = v[k];
    c.h[2 * l.dim + k] = u[k] * v[k];
  }
  const std::size_t in = 3 * l.dim;
  for (std::size_t j = 0; j < l.hidden; ++j) {
    const double* row = w + l.w1 + j * in;
    double acc = w[l.b1 + j];
    for (std::size_t k = 0; k < in; ++k) acc += row[k] * c.h[k];
    c.pre[j] = acc;
  }
  double mean = 0.0;
  for (auto x : c.pre) mean += x;
  mean /= static_cast<double>(l.hidden);
  double var = 0.0;
  for (auto x : c.pre) var += (x - mean) * (x - mean);
  var /= static_cast<double>(l.hidden);
  c.inv_std = 1.0 / std::sqrt(var + kLayerNormEpsilon);
  double y = w[l.b2];
  for (std::size_t j = 0; j < l.hidden; ++j) {
    c.xhat[j] = (c.pre[j] - mean) * c.inv_std;
    c.z[j] = w[l.gain + j] * c.xhat[j] + w[l.beta + j];
    if (c.z[j] > 0.0) y += w[l.w2 + j] * c.z[j];
  }
  return y;
}

double forward_linear(const double* w, const Layout& l, std::size_t drug, std::size_t protein) {
  const double* u = w + l.drug_emb + drug * l.dim;
  const double* v = w + l.protein_emb + protein * l.dim;
  double y = w[l.bias];
  for (std::size_t k = 0; k < l.dim; ++k) y += u[k] * v[k];
  return y;
}

// Adds the gradient of mean((y_hat - y)^2) over `batch` into `grad`.
void accumulate_gradient(std::span<const double> params, const Layout& l, std::span<const Sample> batch,
                         std::span<double> grad, MlpCache* cache, std::vector<double>& scratch) {
  const double* w = params.data();
  double* g = grad.data();
  const double scale = 2.0 / static_cast<double>(batch.size());
  for (const auto& s : batch) {
    const auto drug = static_cast<std::size_t>(s.drug);
    const auto protein = static_cast<std::size_t>(s.protein);
    l.check_indices(drug, protein);
    const double* u = w + l.drug_emb + drug * l.dim;
    const double* v = w + l.protein_emb + protein * l.dim;
    double* gu = g + l.drug_emb + drug * l.dim;
    double* gv = g + l.protein_emb + protein * l.dim;

    if (!l.mlp) {
      const double dy = scale * (forward_linear(w, l, drug, protein) - s.label);
      g[l.bias] += dy;
      for (std::size_t k = 0; k < l.dim; ++k) {
        gu[k] += dy * v[k];
        gv[k] += dy * u[k];
      }
      continue;
    }

    auto& c = *cache;
    const double dy = scale * (forward_mlp(w, l, drug, protein, c) - s.label);
    const std::size_t hid = l.hidden;
    const std::size_t in = 3 * l.dim;
    g[l.b2] += dy;

    // dxhat and the layer-norm backward pass.
    double* dxhat = scratch.data();
    double* dpre = scratch.data() + hid;
    double* dh = scratch.data() + 2 * hid;
    double mean_dxhat = 0.0;
    double mean_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < hid; ++j) {
      double dz = 0.0;
      if (c.z[j] > 0.0) {
        g[l.w2 + j] += dy * c.z[j];
        dz = dy * w[l.w2 + j];
      }
      g[l.gain + j] += dz * c.xhat[j];
      g[l.beta + j] += dz;
      dxhat[j] = dz * w[l.gain + j];
      mean_dxhat += dxhat[j];
      mean_dxhat_xhat += dxhat[j] * c.xhat[j];
    }
    mean_dxhat /= static_cast<double>(hid);
    mean_dxhat_xhat /= static_cast<double>(hid);
    std::fill(dh, dh + in, 0.0);
    for (std::size_t j = 0; j < hid; ++j) {
      dpre[j] = c.inv_std * (dxhat[j] - mean_dxhat - c.xhat[j] * mean_dxhat_xhat);
      g[l.b1 + j] += dpre[j];
      const double* row = w + l.w1 + j * in;
      double* grow = g + l.w1 + j * in;
      for (std::size_t k = 0; k < in; ++k) {
        grow[k] += dpre[j] * c.h[k];
        dh[k] += dpre[j] * row[k];
      }
    }
    for (std::size_t k = 0; k < l.dim; ++k) {
      gu[k] += dh[k] + dh[2 * l.dim + k] * v[k];
      gv[k] += dh[l.dim + k] + dh[2 * l.dim + k] * u[k];
    }
  }
}

}  // namespace

ParameterVector init_model(const ModelConfig& cfg, std::uint64_t seed) {
  auto params = ParameterVector::zeros(model_layout(cfg));
  auto fill_normal = [&](std::string_view name, double fan_in) {
    KeyedStream rng(derive_key(seed, "init", fnv1a64(name)));
    const double sd = 1.0 / std::sqrt(fan_in);
    for (auto& x : params.tensor(name)) x = sd * rng.normal();
  };
  const auto d = static_cast<double>(cfg.embedding_dim);
  fill_normal("drug_embedding", d);
  fill_normal("protein_embedding", d);
  if (cfg.kind == ModelKind::two_tower_mlp) {
    fill_normal("hidden.weight", 3.0 * d);
    fill_normal("output.weight", static_cast<double>(cfg.hidden_dim));
    auto gain = params.tensor("norm.gain");
    std::fill(gain.begin(), gain.end(), 1.0);
  }
  return params;
}

double predict(const ParameterVector& params, const ModelConfig& cfg, std::size_t drug, std::size_t protein) {
  const Layout l(cfg);
  l.check(params);
  l.check_indices(drug, protein);
  if (!l.mlp) return forward_linear(params.values().data(), l, drug, protein);
  MlpCache cache(l);
  return forward_mlp(params.values().data(), l, drug, protein, cache);
}

ParameterVector gradient(const ParameterVector& params, const ModelConfig& cfg, std::span<const Sample> batch) {
  if (batch.empty()) throw std::invalid_argument("gradient: empty batch");
  const Layout l(cfg);
  l.check(params);
  auto grad = ParameterVector::zeros(params.layout());
  MlpCache cache(l);
  std::vector<double> scratch(2 * l.hidden + 3 * l.dim);
  accumulate_gradient(params.values(), l, batch, grad.values(), &cache, scratch);
  return grad;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  KeyedStream rng(derive_key(seed, "sgd/epoch", epoch));
  rng.shuffle(std::span(order));
  return order;
}

ParameterVector sgd_train(ParameterVector params, const ModelConfig& cfg, const TrainConfig& tcfg,
                          std::span<const Sample> data) {
  if (data.empty()) throw std::invalid_argument("sgd_train: empty data");
  tcfg.validate();
  const Layout l(cfg);
  l.check(params);

  // The gradient buffer is kept zero between batches; only embedding rows a
  // batch touched and the dense tail need applying and clearing, which is
  // bit-identical to a dense update since the other entries are exactly 0.
  std::vector<double> grad(params.size(), 0.0);
  MlpCache cache(l);
  std::vector<double> scratch(2 * l.hidden + 3 * l.dim);
  std::vector<Sample> batch;
  batch.reserve(tcfg.batch_size);
  auto w = params.values();
  const double lr = tcfg.learning_rate;

  auto apply = [&](std::size_t begin, std::size_t count) {
    for (std::size_t i = begin; i < begin + count; ++i) {
      w[i] -= lr * grad[i];
      grad[i] = 0.0;
    }
  };

  for (std::size_t e = 0; e < tcfg.epochs; ++e) {
    const auto order = epoch_order(data.size(), tcfg.seed, tcfg.first_epoch + e);
    for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + tcfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(data[order[i]]);
      accumulate_gradient(w, l, batch, grad, &cache, scratch);
      for (const auto& s : batch) {
        apply(l.drug_emb + static_cast<std::size_t>(s.drug) * l.dim, l.dim);
        apply(l.protein_emb + static_cast<std::size_t>(s.protein) * l.dim, l.dim);
      }
      apply(l.dense_begin, l.total - l.dense_begin);
    }
  }
  return params;
}

ParameterVector sgd_train(ParameterVector params, const ModelConfig& cfg, const TrainConfig& tcfg,
                          const Dataset& data) {
  return sgd_train(std::move(params), cfg, tcfg, data.samples());
}

double evaluate_mse(const ParameterVector& params, const ModelConfig& cfg, std::span<const Sample> data) {
  if (data.empty()) throw std::invalid_argument("evaluate_mse: empty data");
  const Layout l(cfg);
  l.check(params);
  MlpCache cache(l);
  const double* w = params.values().data();
  double sum = 0.0;
  for (const auto& s : data) {
    const auto drug = static_cast<std::size_t>(s.drug);
    const auto protein = static_cast<std::size_t>(s.protein);
    l.check_indices(drug, protein);
    const double y = l.mlp ? forward_mlp(w, l, drug, protein, cache) : forward_linear(w, l, drug, protein);
    sum += (y - s.label) * (y - s.label);
  }
  return sum / static_cast<double>(data.size());
}

double evaluate_mse(const ParameterVector& params, const ModelConfig& cfg, const Dataset& data) {
  return evaluate_mse(params, cfg, data.samples());
}

void layer_norm(std::span<const double> x, std::span<const double> gain, std::span<const double> bias,
                std::span<double> normalized, std::span<double> out, double epsilon) {
  const std::size_t n = x.size();
  if (n == 0 || gain.size() != n || bias.size() != n || normalized.size() != n || out.size() != n) {
    throw std::invalid_argument("layer_norm: mismatched spans");
  }
  double mean = 0.0;
  for (auto v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (auto v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double inv_std = 1.0 / std::sqrt(var + epsilon);
  for (std::size_t i = 0; i < n; ++i) {
    normalized[i] = (x[i] - mean) * inv_std;
    out[i] = gain[i] * normalized[i] + bias[i];
  }
}

namespace {

constexpr char kMagic[8] = {'F', 'D', 'T', 'I', 'P', 'A', 'R', 'M'};

void put_u64(std::ostream& out, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(buf, 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), 8)) throw InputError("parameter file truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void save_parameters(const ParameterVector& params, std::ostream& out) {
  nlohmann::json layout = nlohmann::json::array();
  for (const auto& t : params.layout()) layout.push_back({{"name", t.name}, {"shape", t.shape}});
  const nlohmann::json header = {
      {"format", "feddti-parameters"}, {"version", 1}, {"dtype", "float64-le"},
      {"count", params.size()},        {"layout", layout},
  };
  const auto text = header.dump();
  out.write(kMagic, sizeof kMagic);
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (double v : params.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  if (!out) throw Error("failed writing parameters");
}

void save_parameters(const ParameterVector& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  save_parameters(params, out);
}

ParameterVector load_parameters(std::istream& in) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw InputError("not a feddti parameter file");
  }
  const auto header_len = get_u64(in);
  if (header_len > (std::uint64_t{1} << 30)) throw InputError("parameter header too large");
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) throw InputError("parameter file truncated");

  std::vector<TensorSpec> layout;
  std::size_t count = 0;
  try {
    const auto header = nlohmann::json::parse(text);
    count = header.at("count").get<std::size_t>();
    for (const auto& t : header.at("layout")) {
      layout.push_back({t.at("name").get<std::string>(), t.at("shape").get<std::vector<std::size_t>>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad parameter header: ") + e.what());
  }
  std::vector<double> values(count);
  for (auto& v : values) v = std::bit_cast<double>(get_u64(in));
  try {
    return ParameterVector(std::move(layout), std::move(values));
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
}

ParameterVector load_parameters(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return load_parameters(in);
}

}  // namespace feddti
