#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "battn/feature.hpp"
#include "battn/knn.hpp"
#include "battn/matrix.hpp"

namespace battn {

enum class Variant { plain_gcn, self, qart, qart_tilde, band, band_tilde };
enum class Fusion { weighted_sum, plain_sum, elementwise_product };

// Per-layer learnable weights plus the topology/fusion flags of the layer.
struct AttentionParams {
  Matrix w_self_q;  // M x M_d
  Matrix w_self_k;  // M x M_d
  Matrix w_qart_q;  // L x L
  Matrix w_qart_k;  // L x L
  double theta_qart = 1.0;
  double theta_self = 1.0;
  Matrix w_l;  // M x M_out
  Variant variant = Variant::band;
  Fusion fusion = Fusion::weighted_sum;
  bool use_w_qart = true;

  std::size_t dim_l() const { return w_qart_q.rows; }
  std::size_t dim_m() const { return w_l.rows; }
  std::size_t dim_md() const { return w_self_q.cols; }
  std::size_t dim_out() const { return w_l.cols; }
};

// Fixed-size node set: a seed plus its kNN, zero-padded up to L = k + 1.
struct Subgraph {
  std::vector<std::int64_t> node_ids;  // -1 marks padding
  Matrix features;                     // L x M, padded rows all-zero
  std::vector<bool> mask;              // true = real node
  std::size_t probe_index = 0;
  Matrix adjacency;  // symmetrised kNN edges among members, L x L, 0/1, no diagonal

  std::size_t size() const { return features.rows; }
};

struct AttentionMap {
  enum class Kind { a_x, a_self, a_qart, a_band };
  Matrix values;
  Kind kind = Kind::a_x;
};

// Raw self-attention scores at masked rows/columns before any softmax.
inline constexpr double kMaskedScore = -1e30;

// Row-normalized gram matrix of the subgraph features; padded rows and
// columns stay zero.
AttentionMap a_x(const Subgraph& sg);

// (A_X W^Q)(A_X W^K)^T; with use_w_qart false both weights are identity and
// the map is A_X A_X^T.
AttentionMap q_attention(const AttentionMap& ax, const AttentionParams& params);

// (X W^Q)(X W^K)^T / sqrt(M_d) with masked rows/columns pinned to kMaskedScore.
AttentionMap self_attention(const Subgraph& sg, const AttentionParams& params);

// Fusion of the two maps followed by a masked row softmax: masked columns get
// exactly zero weight and real rows renormalize over unmasked entries.
AttentionMap fuse(const AttentionMap& aq, const AttentionMap& as, const AttentionParams& params,
                  const std::vector<bool>& mask);

// sigma(D^-1/2 (A+I) D^-1/2 X W_l); adjacency must be symmetric and binary.
Matrix plain_gcn_layer(const Matrix& features, const Matrix& adjacency, const Matrix& w_l,
                       double slope);

// One full layer: variant selects which attention map multiplies the features.
// slope is the leaky-rectifier slope (1.0 = identity activation).
Matrix b_attention_layer(const Subgraph& sg, const AttentionParams& params, double slope);

Subgraph sample_subgraph(const FeatureMatrix& features, const KnnGraph& graph,
                         std::size_t seed_node);

// Everything a backward pass needs from one layer forward.
struct LayerTape {
  Matrix x_in;
  Matrix gram;
  std::vector<double> gram_norms;
  Matrix a_x;
  Matrix q_self, k_self, a_self;
  Matrix q_qart, k_qart, a_qart;
  Matrix scores;
  Matrix p;  // row-stochastic attention, or the fixed GCN propagation
  Matrix h;
  Matrix z;
  Matrix x_out;
};

// Shared forward used by both the public layer op and the trainer.
Matrix layer_forward(const Matrix& x_in, const Subgraph& sg, const AttentionParams& params,
                     double slope, LayerTape* tape);

Matrix masked_row_softmax(const Matrix& scores, const std::vector<bool>& mask);

// Trained model: attention layers plus an optional fully connected head.
struct LayerStack {
  std::vector<AttentionParams> layers;
  Matrix head;         // M x M_out; empty = no head
  double slope = 0.2;  // activation slope for layers and head
};

struct LayerDims {
  std::size_t l = 0;
  std::size_t m = 0;
  std::size_t m_d = 0;
  std::size_t m_out = 0;
};

AttentionParams identity_params(const LayerDims& dims, Variant variant, Fusion fusion,
                                bool use_w_qart);
AttentionParams random_params(const LayerDims& dims, Variant variant, Fusion fusion,
                              bool use_w_qart, std::mt19937_64& rng, double scale);

// Checkpoint file: magic "BATT", version, flags, then per-record dims and
// matrices; the fully connected head is a trailing record with L = 0, M_d = 0.
void save_stack(const LayerStack& stack, const std::string& path);
LayerStack load_stack(const std::string& path);

std::string variant_name(Variant v);
std::string fusion_name(Fusion f);
Variant parse_variant(const std::string& name);
Fusion parse_fusion(const std::string& name);

}  // namespace battn
