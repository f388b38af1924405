#include "hybridsentry/embedding.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <string>

#include <fmt/format.h>

namespace hybridsentry::embedding {

namespace {

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  // Column-major fill order is part of the seed -> weights contract.
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.normal(0.0, stddev);
  }
  return m;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * (1.0 / std::numbers::sqrt2))); }

/// Zero-mean, unit-variance rows; no learned affine.
Eigen::MatrixXd row_normalize(const Eigen::MatrixXd& h) {
  constexpr double kNormEps = 1e-5;
  const Eigen::VectorXd mu = h.rowwise().mean();
  Eigen::MatrixXd centered = h.colwise() - mu;
  const Eigen::VectorXd var = centered.rowwise().squaredNorm() / static_cast<double>(h.cols());
  for (Eigen::Index r = 0; r < h.rows(); ++r) centered.row(r) /= std::sqrt(var(r) + kNormEps);
  return centered;
}

}  // namespace

void LoraAdapter::validate() const {
  if (down.rows() < 1) throw DataError("LoRA rank must be >= 1");
  if (down.cols() != base.cols()) throw DataError("LoRA down projection does not match d_in");
  if (up.rows() != base.rows()) throw DataError("LoRA up projection does not match d_out");
  if (up.cols() != down.rows()) throw DataError("LoRA up/down ranks differ");
}

Eigen::MatrixXd LoraAdapter::merged_weight() const {
  validate();
  return base + scale() * (up * down);
}

LoraAdapter LoraAdapter::attach(Eigen::MatrixXd base, int rank, double alpha, Rng& rng) {
  if (rank < 1) throw DataError("LoRA rank must be >= 1");
  LoraAdapter a;
  const Eigen::Index d_in = base.cols();
  a.down = gaussian(rank, d_in, 1.0 / std::sqrt(static_cast<double>(d_in)), rng);
  a.up = Eigen::MatrixXd::Zero(base.rows(), rank);
  a.base = std::move(base);
  a.alpha = alpha;
  return a;
}

Eigen::VectorXd lora_linear_forward(const LoraAdapter& adapter, const Eigen::VectorXd& x) {
  adapter.validate();
  if (x.size() != adapter.base.cols()) {
    throw DataError(fmt::format("LoRA input has {} values, expected {}", x.size(), adapter.base.cols()));
  }
  const Eigen::VectorXd projected = adapter.down * x;
  return adapter.base * x + adapter.scale() * (adapter.up * projected);
}

Embedding mean_pool(const Eigen::MatrixXd& hidden) {
  if (hidden.rows() == 0) throw DataError("mean_pool over an empty temporal axis");
  if (hidden.cols() != static_cast<Eigen::Index>(kEmbeddingDim)) {
    throw DataError(fmt::format("hidden state has {} dims, expected {}", hidden.cols(), kEmbeddingDim));
  }
  Embedding out{};
  const auto t = static_cast<double>(hidden.rows());
  for (Eigen::Index c = 0; c < hidden.cols(); ++c) {
    double sum = 0.0;
    for (Eigen::Index r = 0; r < hidden.rows(); ++r) sum += hidden(r, c);
    out[static_cast<std::size_t>(c)] = sum / t;
  }
  return out;
}

void EncoderConfig::validate() const {
  if (context_length < 1) throw ConfigError("encoder context_length must be >= 1");
  if (d_model != static_cast<int>(kEmbeddingDim)) throw ConfigError("encoder d_model must be 64");
  if (n_layers < 1) throw ConfigError("encoder n_layers must be >= 1");
  if (lora_rank < 0) throw ConfigError("encoder lora_rank must be >= 0");
  if (lora_rank > 0 && lora_alpha <= 0.0) throw ConfigError("encoder lora_alpha must be > 0");
  if (lora_up_init_std < 0.0) throw ConfigError("encoder lora_up_init_std must be >= 0");
}

nlohmann::ordered_json EncoderConfig::to_json() const {
  return {{"context_length", context_length}, {"d_model", d_model},     {"n_layers", n_layers},
          {"seed", seed},                     {"lora_rank", lora_rank}, {"lora_alpha", lora_alpha},
          {"lora_up_init_std", lora_up_init_std}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.context_length = j.value("context_length", c.context_length);
  c.d_model = j.value("d_model", c.d_model);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.seed = j.value("seed", c.seed);
  c.lora_rank = j.value("lora_rank", c.lora_rank);
  c.lora_alpha = j.value("lora_alpha", c.lora_alpha);
  c.lora_up_init_std = j.value("lora_up_init_std", c.lora_up_init_std);
  return c;
}

MixerEncoder::MixerEncoder(const EncoderConfig& config) : config_(config) {
  config_.validate();
  Rng rng(derive_seed(config_.seed, "mixer-encoder"));
  const Eigen::Index t = config_.context_length;
  const Eigen::Index d = config_.d_model;

  input_weight_ = gaussian(1, d, 1.0, rng);
  input_bias_ = gaussian(1, d, 0.1, rng);
  position_ = gaussian(t, d, 0.1, rng);
  layers_.reserve(static_cast<std::size_t>(config_.n_layers));
  for (int l = 0; l < config_.n_layers; ++l) {
    Layer layer;
    layer.token_weight = gaussian(t, t, 1.0 / std::sqrt(static_cast<double>(t)), rng);
    layer.token_bias = gaussian(t, 1, 0.1, rng);
    Eigen::MatrixXd channel_base = gaussian(d, d, 1.0 / std::sqrt(static_cast<double>(d)), rng);
    layer.channel_bias = gaussian(1, d, 0.1, rng);
    if (config_.lora_rank > 0) {
      // adapter draws on their own stream
      Rng lora_rng(derive_seed(config_.seed, "lora-" + std::to_string(l)));
      layer.channel =
          LoraAdapter::attach(std::move(channel_base), config_.lora_rank, config_.lora_alpha, lora_rng);
      if (config_.lora_up_init_std > 0.0) {
        layer.channel.up = gaussian(d, config_.lora_rank, config_.lora_up_init_std, lora_rng);
      }
      layer.channel_weight_t = layer.channel.merged_weight().transpose();
    } else {
      layer.channel_weight_t = channel_base.transpose();
      layer.channel.base = std::move(channel_base);
    }
    layers_.push_back(std::move(layer));
  }
}

Eigen::MatrixXd MixerEncoder::hidden_states(std::span<const double> window) const {
  if (window.size() != static_cast<std::size_t>(config_.context_length)) {
    throw DataError(fmt::format("encoder expects {} values, got {}", config_.context_length, window.size()));
  }
  const Eigen::Map<const Eigen::VectorXd> x(window.data(), static_cast<Eigen::Index>(window.size()));
  Eigen::MatrixXd h = x * input_weight_;
  h.rowwise() += input_bias_;
  h += position_;
  for (const Layer& layer : layers_) {
    Eigen::MatrixXd mixed = layer.token_weight * row_normalize(h);
    mixed.colwise() += layer.token_bias;
    h += mixed.unaryExpr(&gelu);
    mixed.noalias() = row_normalize(h) * layer.channel_weight_t;
    mixed.rowwise() += layer.channel_bias;
    h += mixed.unaryExpr(&gelu);
  }
  return h;
}

Embedding MixerEncoder::forward(std::span<const double> window) const { return mean_pool(hidden_states(window)); }

Embedding encoder_forward(const EncoderConfig& config, std::span<const double> window) {
  return MixerEncoder(config).forward(window);
}

PrecomputedEmbeddings PrecomputedEmbeddings::load(std::istream& in) {
  std::unordered_map<std::string, Embedding> table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::string id;
    try {
      const auto record = nlohmann::json::parse(line);
      id = record.at("sample_id").get<std::string>();
      const auto& values = record.at("embedding");
      if (!values.is_array() || values.size() != kEmbeddingDim) {
        throw EmbeddingError(fmt::format("embedding has {} values, expected {}",
                                         values.is_array() ? values.size() : 0, kEmbeddingDim));
      }
      Embedding e{};
      for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
        if (!values[i].is_number()) throw EmbeddingError("embedding value is not a number");
        e[i] = values[i].get<double>();
        if (!std::isfinite(e[i])) throw EmbeddingError("embedding value is not finite");
      }
      if (!table.emplace(id, e).second) throw EmbeddingError("duplicate sample_id");
    } catch (const nlohmann::json::exception& e) {
      throw EmbeddingError(fmt::format("embedding file line {}: {}", line_no, e.what()));
    } catch (const EmbeddingError& e) {
      throw EmbeddingError(fmt::format("embedding file line {} (sample_id '{}'): {}", line_no, id, e.what()));
    }
  }
  return PrecomputedEmbeddings(std::move(table));
}

PrecomputedEmbeddings PrecomputedEmbeddings::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw EmbeddingError("cannot open embedding file " + path.string());
  return load(in);
}

const Embedding& PrecomputedEmbeddings::lookup(const std::string& sample_id) const {
  const auto it = table_.find(sample_id);
  if (it == table_.end()) throw EmbeddingError("missing embedding for sample_id '" + sample_id + "'");
  return it->second;
}

Embedding PrecomputedEmbeddings::embed(const dataset::SampleWindow& window) const {
  return lookup(window.sample_id);
}

Embedding NativeEncoderProvider::embed(const dataset::SampleWindow& window) const {
  return encoder_.forward(window.values);
}

void write_embeddings_jsonl(std::ostream& out, std::span<const std::pair<std::string, Embedding>> records) {
  for (const auto& [id, e] : records) {
    nlohmann::ordered_json record;
    record["sample_id"] = id;
    record["embedding"] = e;
    out << record.dump() << '\n';
  }
}

}  // namespace hybridsentry::embedding
