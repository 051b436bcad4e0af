#pragma once

#include <cstdint>
#include <vector>

#include "battn/attention.hpp"
#include "battn/feature.hpp"
#include "battn/knn.hpp"

namespace battn {

struct TrainConfig {
  double learning_rate = 0.008;
  std::int64_t epochs = 50;
  double margin_pos = 0.9;
  double margin_neg = 0.3;
  std::size_t k = 10;
  std::size_t k_seed = 1;
  std::size_t layers = 1;
  std::size_t m_d = 0;  // 0 = feature dimension
  std::uint64_t seed = 0;
  double slope = 0.2;
  Variant variant = Variant::band;
  Fusion fusion = Fusion::weighted_sum;
  bool use_w_qart = true;
  bool all_pairs = false;  // default pairs the probe with each neighbour
  bool use_head = true;

  void validate() const;
};

struct NodePair {
  std::size_t a = 0;
  std::size_t b = 0;
  int label = 1;  // +1 same category, -1 different
};

struct PairBatch {
  std::vector<NodePair> pairs;
};

// Pair endpoints are subgraph positions; both must be unmasked.
PairBatch make_pairs(const Subgraph& sg, const LabelVector& labels, bool all_pairs);

// Mean two-sided hinge over pairs of output rows, cosine-scored after row
// normalization: positives pay max(0, margin_pos - s), negatives max(0, s - margin_neg).
double hinge_pair_loss(const Matrix& output, const PairBatch& batch, double margin_pos,
                       double margin_neg);

struct LayerGradients {
  Matrix w_self_q, w_self_k, w_qart_q, w_qart_k, w_l;
  double theta_qart = 0.0;
  double theta_self = 0.0;
};

struct Gradients {
  std::vector<LayerGradients> layers;
  Matrix head;
};

Gradients zero_gradients(const LayerStack& stack);
void accumulate(Gradients& into, const Gradients& g);
void scale(Gradients& g, double s);

struct ForwardTrace {
  std::vector<LayerTape> layers;
  Matrix head_in;
  Matrix head_z;
  Matrix output;
};

// Forward through all layers plus the head; throws NumericError naming the
// first layer that produces a non-finite value.
Matrix stack_forward(const Subgraph& sg, const LayerStack& stack, ForwardTrace* trace);

struct BackwardResult {
  double loss = 0.0;
  Gradients grads;
};

// Exact reverse-mode gradients of hinge_pair_loss with respect to every
// parameter in the stack, including the theta scalars and the head.
BackwardResult backward(const Subgraph& sg, const LayerStack& stack, const PairBatch& batch,
                        double margin_pos, double margin_neg);

// lr0 * (1 + cos(pi * epoch / epochs)) / 2
double cosine_lr(double lr0, std::int64_t epoch, std::int64_t epochs);

void sgd_step(LayerStack& stack, const Gradients& grads, std::int64_t epoch,
              const TrainConfig& cfg);

struct TraceRow {
  std::int64_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  LayerStack stack;
  std::vector<TraceRow> trace;
};

// Supervised training over per-node subgraphs; deterministic given cfg.seed.
TrainResult train(const FeatureMatrix& features, const LabelVector& labels,
                  const TrainConfig& cfg);

// Run every node through its subgraph and keep the probe-row output.
FeatureMatrix enhance(const FeatureMatrix& features, const KnnGraph& graph,
                      const LayerStack& stack);

}  // namespace battn
