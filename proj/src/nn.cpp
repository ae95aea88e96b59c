#include "fedunlearn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fedunlearn/errors.hpp"
#include "fedunlearn/rng.hpp"

namespace fedunlearn {

void validate(const Architecture& arch) {
  if (arch.layer_sizes.size() < 2)
    throw std::invalid_argument("architecture needs at least an input and an output layer");
  for (int s : arch.layer_sizes)
    if (s < 1) throw std::invalid_argument("architecture layer sizes must be >= 1");
}

std::size_t Architecture::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 1; l < layer_sizes.size(); ++l)
    n += static_cast<std::size_t>(layer_sizes[l]) * layer_sizes[l - 1] + layer_sizes[l];
  return n;
}

ProbDist one_hot(int label, int num_classes) {
  if (num_classes < 1 || label < 0 || label >= num_classes)
    throw std::invalid_argument("one_hot: label out of range");
  ProbDist p(num_classes, 0.0);
  p[label] = 1.0;
  return p;
}

ParamVector init_params(const Architecture& arch, std::uint64_t seed) {
  validate(arch);
  ParamVector p{arch, std::vector<double>(arch.param_count(), 0.0)};
  auto rng = make_engine(seed);
  std::size_t off = 0;
  for (std::size_t l = 1; l < arch.layer_sizes.size(); ++l) {
    const int fan_in = arch.layer_sizes[l - 1];
    const int fan_out = arch.layer_sizes[l];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (int i = 0; i < fan_in * fan_out; ++i) p.values[off++] = dist(rng);
    off += fan_out;  // biases stay zero
  }
  return p;
}

namespace {

void check_shape(const ParamVector& params, std::span<const double> sample) {
  validate(params.arch);
  if (params.values.size() != params.arch.param_count())
    throw std::invalid_argument("param vector length does not match architecture");
  if (sample.size() != static_cast<std::size_t>(params.arch.input_dim()))
    throw std::invalid_argument("sample width does not match architecture input");
}

struct ForwardCache {
  std::vector<std::vector<double>> pre;  // z per weight layer
  std::vector<std::vector<double>> act;  // activations, act[0] is the input
};

std::vector<double> forward_impl(const ParamVector& params, std::span<const double> sample,
                                 ForwardCache* cache) {
  const auto& sizes = params.arch.layer_sizes;
  std::vector<double> cur(sample.begin(), sample.end());
  if (cache) {
    cache->pre.clear();
    cache->act.clear();
    cache->act.push_back(cur);
  }
  std::size_t off = 0;
  for (std::size_t l = 1; l < sizes.size(); ++l) {
    const int in = sizes[l - 1];
    const int out = sizes[l];
    std::vector<double> z(out);
    for (int j = 0; j < out; ++j) {
      double s = params.values[off + static_cast<std::size_t>(out) * in + j];
      const double* w = &params.values[off + static_cast<std::size_t>(j) * in];
      for (int k = 0; k < in; ++k) s += w[k] * cur[k];
      z[j] = s;
    }
    off += static_cast<std::size_t>(out) * in + out;
    if (cache) cache->pre.push_back(z);
    if (l + 1 < sizes.size())
      for (auto& v : z) v = v > 0.0 ? v : 0.0;
    cur = std::move(z);
    if (cache) cache->act.push_back(cur);
  }
  return cur;
}

}  // namespace

std::vector<double> forward_logits(const ParamVector& params, std::span<const double> sample) {
  check_shape(params, sample);
  return forward_impl(params, sample, nullptr);
}

ProbDist softmax_t(std::span<const double> logits, double temperature) {
  if (temperature <= 0.0) throw ConfigError("softmax temperature must be > 0");
  if (logits.empty()) throw std::invalid_argument("softmax over empty logits");
  const double mx = *std::max_element(logits.begin(), logits.end());
  ProbDist out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - mx) / temperature);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

double kl_div(std::span<const double> teacher, std::span<const double> student) {
  if (teacher.size() != student.size()) throw std::invalid_argument("kl_div: length mismatch");
  if (teacher.empty()) throw std::invalid_argument("kl_div: empty distributions");
  double kl = 0.0;
  for (std::size_t k = 0; k < teacher.size(); ++k) {
    const double q = teacher[k];
    if (q <= 0.0) continue;  // 0 log 0 := 0
    const double p = std::max(student[k], kProbFloor);
    kl += q * (std::log(q) - std::log(p));
  }
  return kl > 0.0 ? kl : 0.0;
}

ParamVector backprop_kl(const ParamVector& params, const std::vector<std::vector<double>>& batch,
                        const std::vector<ProbDist>& targets, const std::vector<double>& weights) {
  if (batch.empty()) throw std::invalid_argument("backprop_kl: empty batch");
  if (targets.size() != batch.size() || weights.size() != batch.size())
    throw std::invalid_argument("backprop_kl: batch, targets and weights must align");
  check_shape(params, batch.front());

  const auto& sizes = params.arch.layer_sizes;
  const std::size_t num_weight_layers = sizes.size() - 1;
  std::vector<std::size_t> offs(num_weight_layers);
  std::size_t off = 0;
  for (std::size_t l = 0; l < num_weight_layers; ++l) {
    offs[l] = off;
    off += static_cast<std::size_t>(sizes[l + 1]) * sizes[l] + sizes[l + 1];
  }

  ParamVector grad{params.arch, std::vector<double>(params.values.size(), 0.0)};
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const int num_classes = params.arch.num_classes();
  ForwardCache cache;

  for (std::size_t j = 0; j < batch.size(); ++j) {
    if (targets[j].size() != static_cast<std::size_t>(num_classes))
      throw std::invalid_argument("backprop_kl: target width does not match class count");
    const auto logits = forward_impl(params, batch[j], &cache);
    const ProbDist p = softmax_t(logits, kTemperature);

    std::vector<double> delta(num_classes);
    for (int k = 0; k < num_classes; ++k)
      delta[k] = weights[j] * inv_n * (p[k] - targets[j][k]);

    for (std::size_t l = num_weight_layers; l-- > 0;) {
      const int in = sizes[l];
      const int out = sizes[l + 1];
      const auto& a_prev = cache.act[l];
      double* gw = &grad.values[offs[l]];
      double* gb = &grad.values[offs[l] + static_cast<std::size_t>(out) * in];
      for (int r = 0; r < out; ++r) {
        const double d = delta[r];
        double* row = gw + static_cast<std::size_t>(r) * in;
        for (int k = 0; k < in; ++k) row[k] += d * a_prev[k];
        gb[r] += d;
      }
      if (l == 0) break;
      std::vector<double> prev(in, 0.0);
      const double* w = &params.values[offs[l]];
      for (int r = 0; r < out; ++r) {
        const double d = delta[r];
        const double* row = w + static_cast<std::size_t>(r) * in;
        for (int k = 0; k < in; ++k) prev[k] += row[k] * d;
      }
      const auto& z_prev = cache.pre[l - 1];
      for (int k = 0; k < in; ++k)
        if (z_prev[k] <= 0.0) prev[k] = 0.0;
      delta = std::move(prev);
    }
  }
  return grad;
}

ParamVector sgd_step(const ParamVector& params, const ParamVector& grad, double lr) {
  if (!(params.arch == grad.arch) || params.values.size() != grad.values.size())
    throw std::invalid_argument("sgd_step: parameter and gradient shapes differ");
  ParamVector out = params;
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] -= lr * grad.values[i];
  return out;
}

void add_inplace(ParamVector& acc, const ParamVector& other) {
  if (!(acc.arch == other.arch) || acc.values.size() != other.values.size())
    throw std::invalid_argument("add_inplace: shapes differ");
  for (std::size_t i = 0; i < acc.values.size(); ++i) acc.values[i] += other.values[i];
}

int predict_class(const ParamVector& params, std::span<const double> sample) {
  const auto probs = softmax_t(forward_logits(params, sample), kTemperature);
  int best = 0;
  for (std::size_t k = 1; k < probs.size(); ++k)
    if (probs[k] > probs[best]) best = static_cast<int>(k);
  return best;
}

}  // namespace fedunlearn
