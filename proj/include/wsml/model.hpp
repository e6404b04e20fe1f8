#pragma once

#include "types.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

namespace wsml {

enum class Architecture { Linear, Mlp1 };

std::string_view architecture_token(Architecture a);
Architecture parse_architecture(std::string_view token); // throws ConfigError

/// Sigmoid-output multi-label classifier. Samples are rows of the input.
/// The linear architecture leaves the hidden tensors empty.
struct Classifier {
  Architecture arch = Architecture::Linear;
  Matrix hidden_weight;  // H x D
  Vector hidden_bias;    // H
  Matrix output_weight;  // K x H (mlp1) or K x D (linear)
  Vector output_bias;    // K
  bool frozen_hidden = false;

  Index input_dim() const {
    return arch == Architecture::Mlp1 ? hidden_weight.cols() : output_weight.cols();
  }
  Index num_classes() const { return output_weight.rows(); }
  Index hidden_units() const { return hidden_weight.rows(); }
  Index parameter_count() const {
    return hidden_weight.size() + hidden_bias.size() + output_weight.size() +
           output_bias.size();
  }

  friend bool operator==(Classifier const &, Classifier const &) = default;
};

/// Same tensor layout as the classifier's parameters.
struct Gradients {
  Matrix hidden_weight;
  Vector hidden_bias;
  Matrix output_weight;
  Vector output_bias;

  static Gradients zeros_like(Classifier const &model);
};

/// Weights ~ N(0, 1/fan_in), biases zero.
Classifier init_classifier(Architecture arch, Index dim, Index classes, Index hidden,
                           std::uint64_t seed);

Matrix logits(Classifier const &model, Matrix const &x);

/// sigmoid(logits), clamped to [kProbClamp, 1 - kProbClamp]. Throws on non-finite input.
Matrix forward(Classifier const &model, Matrix const &x);

/// (1 / (B*K)) * sum(weights .* BCE(forward(x), targets)).
Real weighted_loss(Classifier const &model, Matrix const &x, Matrix const &targets,
                   Matrix const &weights);

/// Gradient of weighted_loss with the weights held constant. The derivative
/// through the probability clamp is taken as the unclamped sigmoid's.
Gradients backward(Classifier const &model, Matrix const &x, Matrix const &targets,
                   Matrix const &weights);

enum class OptimizerKind { Sgd, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  Real learning_rate = 1e-3;
  /// Multiplier on the output layer's learning rate (1 = off).
  Real output_lr_multiplier = 1.0;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real epsilon = 1e-8;
};

struct OptimizerState {
  OptimizerConfig config;
  Gradients first_moment;
  Gradients second_moment;
  long step = 0;
};

OptimizerState init_optimizer(OptimizerConfig const &config, Classifier const &model);

/// One update. A frozen hidden layer is left untouched and its moments are not advanced.
void step(Classifier &model, Gradients const &grads, OptimizerState &opt);

/// Max over parameters of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8),
/// numeric by central differences with step h.
Real grad_check(Classifier const &model, Matrix const &x, Matrix const &targets,
                Matrix const &weights, Real h = 1e-5);

void write_model(Classifier const &model, std::ostream &out,
                 std::string const &trailer_comment = {});
Classifier read_model(std::istream &in);
void save_model(Classifier const &model, std::filesystem::path const &path,
                std::string const &trailer_comment = {});
Classifier load_model(std::filesystem::path const &path);

} // namespace wsml
