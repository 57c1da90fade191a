#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "diffex/adam.hpp"
#include "diffex/conv.hpp"
#include "diffex/nn.hpp"
#include "diffex/tensor.hpp"

namespace diffex {

// Probabilistic classifier p(y | x): optional conv feature stack followed by
// a dense head producing logits. The conv stack is empty for vector data.
struct Classifier {
  ConvNet conv;
  DenseNet head;
  std::size_t num_classes = 2;

  std::size_t input_size() const {
    return conv.empty() ? head.input_dim() : conv.input_size();
  }

  void validate() const {
    if (num_classes < 2) throw std::invalid_argument("Classifier: num_classes must be >= 2");
    head.validate();
    if (!conv.empty()) {
      conv.validate();
      if (conv.output_size() != head.input_dim())
        throw std::invalid_argument("Classifier: conv output does not match head input");
    }
    if (head.output_dim() != num_classes)
      throw std::invalid_argument("Classifier: head output does not match num_classes");
  }

  std::vector<double> logits(const std::vector<double>& x) const {
    if (conv.empty()) return head.forward(x);
    return head.forward(conv.forward(x));
  }

  std::vector<double> probabilities(const std::vector<double>& x) const {
    return softmax(logits(x));
  }

  double log_prob(const std::vector<double>& x, std::size_t y) const {
    if (y >= num_classes) throw std::invalid_argument("Classifier::log_prob: label out of range");
    return log_softmax_at(logits(x), y);
  }

  // Argmax prediction; ties resolve to the lower class index.
  std::size_t predict(const std::vector<double>& x) const {
    std::vector<double> p = logits(x);
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.size(); ++i)
      if (p[i] > p[best]) best = i;
    return best;
  }

  // d log p(y | x) / dx through the full stack.
  std::vector<double> grad_log_prob_input(const std::vector<double>& x, std::size_t y) const {
    if (y >= num_classes)
      throw std::invalid_argument("Classifier::grad_log_prob_input: label out of range");
    if (conv.empty())
      return grad_wrt_input(head, x, Objective::log_softmax_target(y));
    ConvTrace ctrace;
    std::vector<double> features = conv.forward_trace(x, ctrace);
    DenseTrace htrace;
    std::vector<double> y_logits = head.forward_trace(features, htrace);
    std::vector<double> dlogits =
        objective_output_gradient(Objective::log_softmax_target(y), y_logits);
    std::vector<double> dfeatures = head.backward_input(htrace, dlogits);
    return conv.backward(ctrace, dfeatures, nullptr);
  }
};

// One Adam step on mean cross-entropy over a batch. Returns the loss.
class ClassifierTrainer {
 public:
  ClassifierTrainer(const Classifier& clf, AdamParams p)
      : head_opt_(clf.head, p), conv_params_(p) {
    for (const ConvLayer& l : clf.conv.layers) {
      conv_states_.emplace_back(l.w.size(), p);
      conv_states_.emplace_back(l.b.size(), p);
    }
  }

  double step(Classifier& clf, const std::vector<const Tensor*>& batch,
              const std::vector<std::size_t>& labels) {
    if (batch.empty()) throw std::invalid_argument("ClassifierTrainer::step: empty batch");
    if (batch.size() != labels.size())
      throw std::invalid_argument("ClassifierTrainer::step: batch/labels mismatch");
    GradSet head_grads = clf.head.zero_grads();
    GradSet conv_grads = clf.conv.zero_grads();
    const double scale = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const std::vector<double>& x = batch[b]->data;
      const std::size_t y = labels[b];
      ConvTrace ctrace;
      DenseTrace htrace;
      std::vector<double> features = clf.conv.empty() ? x : clf.conv.forward_trace(x, ctrace);
      std::vector<double> lg = clf.head.forward_trace(features, htrace);
      loss -= log_softmax_at(lg, y) * scale;
      // d(-log p)/dlogits = softmax - onehot
      std::vector<double> dlogits = softmax(lg);
      dlogits[y] -= 1.0;
      for (double& v : dlogits) v *= scale;
      std::vector<double> dfeatures = clf.head.backward_params(htrace, dlogits, head_grads);
      if (!clf.conv.empty()) clf.conv.backward(ctrace, dfeatures, &conv_grads);
    }
    head_opt_.apply(clf.head, head_grads);
    for (std::size_t li = 0; li < clf.conv.layers.size(); ++li) {
      std::vector<double> uw = adam_step(conv_states_[2 * li], conv_grads[li].dw);
      std::vector<double> ub = adam_step(conv_states_[2 * li + 1], conv_grads[li].db);
      ConvLayer& l = clf.conv.layers[li];
      for (std::size_t i = 0; i < l.w.size(); ++i) l.w[i] += uw[i];
      for (std::size_t i = 0; i < l.b.size(); ++i) l.b[i] += ub[i];
    }
    return loss;
  }

 private:
  DenseNetAdam head_opt_;
  AdamParams conv_params_;
  std::vector<AdamState> conv_states_;
};

inline Classifier make_image_classifier(std::size_t channels, std::size_t height,
                                        std::size_t width, std::size_t num_classes, Rng& rng) {
  Classifier clf;
  clf.num_classes = num_classes;
  clf.conv.in_ch = channels;
  clf.conv.in_h = height;
  clf.conv.in_w = width;
  clf.conv.layers.push_back(make_conv_layer(channels, 8, 5, 2, 2, Activation::relu, rng));
  clf.conv.layers.push_back(make_conv_layer(8, 16, 5, 2, 2, Activation::relu, rng));
  const std::size_t feat = clf.conv.output_size();
  clf.head = make_dense_net({feat, 64, num_classes},
                            {Activation::relu, Activation::linear}, rng);
  clf.validate();
  return clf;
}

inline Classifier make_vector_classifier(std::size_t dim, std::size_t num_classes, Rng& rng) {
  Classifier clf;
  clf.num_classes = num_classes;
  clf.head = make_dense_net({dim, 64, 64, num_classes},
                            {Activation::tanh, Activation::tanh, Activation::linear}, rng);
  clf.validate();
  return clf;
}

}  // namespace diffex
