#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace fedunlearn {

enum class Activation { Relu };

// Dense feed-forward topology: input width, hidden widths, class count.
struct Architecture {
  std::vector<int> layer_sizes;
  Activation activation = Activation::Relu;

  int input_dim() const { return layer_sizes.front(); }
  int num_classes() const { return layer_sizes.back(); }
  std::size_t param_count() const;
  bool operator==(const Architecture&) const = default;
};

// Throws std::invalid_argument unless there are >= 2 layers and every size is >= 1.
void validate(const Architecture& arch);

// Flat parameter record.  Per weight layer, in forward order: the out x in weight
// matrix row-major, then the out biases.
struct ParamVector {
  Architecture arch;
  std::vector<double> values;
};

using ProbDist = std::vector<double>;

inline constexpr double kProbFloor = 1e-7;
inline constexpr double kTemperature = 1.0;

ProbDist one_hot(int label, int num_classes);

// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), biases zero.
ParamVector init_params(const Architecture& arch, std::uint64_t seed);

std::vector<double> forward_logits(const ParamVector& params, std::span<const double> sample);

// Temperature softmax with max subtraction for stability.
ProbDist softmax_t(std::span<const double> logits, double temperature);

// KL(teacher || student) in nats.  Student entries are clamped to >= kProbFloor
// before the log; zero teacher entries contribute nothing; the result is floored
// at zero.
double kl_div(std::span<const double> teacher, std::span<const double> student);

// Gradient of (1/n) * sum_j weights[j] * KL(targets[j] || softmax(logits(batch[j])))
// with respect to params.  The clamp in kl_div is treated as inactive.
ParamVector backprop_kl(const ParamVector& params,
                        const std::vector<std::vector<double>>& batch,
                        const std::vector<ProbDist>& targets,
                        const std::vector<double>& weights);

ParamVector sgd_step(const ParamVector& params, const ParamVector& grad, double lr);

void add_inplace(ParamVector& acc, const ParamVector& other);

// Argmax of the predictive distribution; ties resolve to the lowest class index.
int predict_class(const ParamVector& params, std::span<const double> sample);

}  // namespace fedunlearn
