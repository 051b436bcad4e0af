#include "battn/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "battn/error.hpp"
#include "battn/rng.hpp"

namespace battn {

namespace {

inline double leaky_grad(double z, double slope) { return z > 0.0 ? 1.0 : slope; }

// Fisher-Yates with rejection-sampled bounds; std::shuffle is
// implementation-defined, this is not.
void shuffle_indices(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::uint64_t bound = i;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r;
    do {
      r = rng();
    } while (r >= limit);
    std::swap(v[i - 1], v[r % bound]);
  }
}

struct NormalizedRows {
  Matrix unit;                // rows scaled to unit norm (zero rows left zero)
  std::vector<double> norms;  // original row norms
};

NormalizedRows normalize_rows(const Matrix& y) {
  NormalizedRows out;
  out.unit = y;
  out.norms.assign(y.rows, 0.0);
  for (std::size_t i = 0; i < y.rows; ++i) {
    const double n = norm2(y.row(i));
    out.norms[i] = n;
    if (n > 0.0) {
      for (double& v : out.unit.row(i)) v /= n;
    }
  }
  return out;
}

void check_batch(const PairBatch& batch, std::size_t l) {
  if (batch.pairs.empty()) throw ValidationError("pair batch: empty pair list");
  for (const auto& p : batch.pairs) {
    if (p.a >= l || p.b >= l) throw ValidationError("pair batch: endpoint out of range");
    if (p.a == p.b) throw ValidationError("pair batch: degenerate pair");
    if (p.label != 1 && p.label != -1) throw ValidationError("pair batch: label must be +-1");
  }
}

bool uses_self_map(Variant v) {
  return v == Variant::self || v == Variant::qart_tilde || v == Variant::band ||
         v == Variant::band_tilde;
}

bool uses_qart_map(Variant v) {
  return v == Variant::qart || v == Variant::qart_tilde || v == Variant::band ||
         v == Variant::band_tilde;
}

bool qart_base_is_self(Variant v) {
  return v == Variant::qart_tilde || v == Variant::band_tilde;
}

// Reverse pass for one layer; returns the gradient with respect to its input.
Matrix layer_backward(const LayerTape& t, const Subgraph& sg, const AttentionParams& prm,
                      double slope, const Matrix& d_x_out, LayerGradients& gl) {
  const std::size_t l = sg.size();

  Matrix dz = d_x_out;
  for (std::size_t idx = 0; idx < dz.data.size(); ++idx) {
    dz.data[idx] *= leaky_grad(t.z.data[idx], slope);
  }
  axpy(1.0, matmul_tn(t.h, dz), gl.w_l);
  const Matrix dh = matmul_nt(dz, prm.w_l);
  const Matrix dp = matmul_nt(dh, t.x_in);
  Matrix dx = matmul_tn(t.p, dh);

  if (prm.variant == Variant::plain_gcn) return dx;  // propagation matrix is fixed

  // softmax backward; zero entries of p kill masked and padded positions
  Matrix ds(l, l);
  for (std::size_t i = 0; i < l; ++i) {
    double row_dot = 0.0;
    for (std::size_t j = 0; j < l; ++j) row_dot += dp.at(i, j) * t.p.at(i, j);
    for (std::size_t j = 0; j < l; ++j) {
      ds.at(i, j) = t.p.at(i, j) * (dp.at(i, j) - row_dot);
    }
  }

  Matrix d_a_qart;
  Matrix d_a_self;
  switch (prm.variant) {
    case Variant::self:
      d_a_self = ds;
      break;
    case Variant::qart:
    case Variant::qart_tilde:
      d_a_qart = ds;
      break;
    default:
      switch (prm.fusion) {
        case Fusion::weighted_sum: {
          double gq = 0.0, gs = 0.0;
          for (std::size_t idx = 0; idx < ds.data.size(); ++idx) {
            gq += ds.data[idx] * t.a_qart.data[idx];
            gs += ds.data[idx] * t.a_self.data[idx];
          }
          gl.theta_qart += gq;
          gl.theta_self += gs;
          d_a_qart = ds;
          for (double& v : d_a_qart.data) v *= prm.theta_qart;
          d_a_self = ds;
          for (double& v : d_a_self.data) v *= prm.theta_self;
          break;
        }
        case Fusion::plain_sum:
          d_a_qart = ds;
          d_a_self = ds;
          break;
        case Fusion::elementwise_product: {
          d_a_qart = Matrix(l, l);
          d_a_self = Matrix(l, l);
          for (std::size_t idx = 0; idx < ds.data.size(); ++idx) {
            d_a_qart.data[idx] = ds.data[idx] * t.a_self.data[idx];
            d_a_self.data[idx] = ds.data[idx] * t.a_qart.data[idx];
          }
          break;
        }
      }
      break;
  }

  Matrix d_a_x;
  if (uses_qart_map(prm.variant)) {
    const Matrix& base = qart_base_is_self(prm.variant) ? t.a_self : t.a_x;
    Matrix d_base;
    if (prm.use_w_qart) {
      const Matrix dq = matmul(d_a_qart, t.k_qart);
      const Matrix dk = matmul_tn(d_a_qart, t.q_qart);
      axpy(1.0, matmul_tn(base, dq), gl.w_qart_q);
      axpy(1.0, matmul_tn(base, dk), gl.w_qart_k);
      d_base = matmul_nt(dq, prm.w_qart_q);
      axpy(1.0, matmul_nt(dk, prm.w_qart_k), d_base);
    } else {
      Matrix sym = d_a_qart;
      axpy(1.0, transpose(d_a_qart), sym);
      d_base = matmul(sym, base);
    }
    if (qart_base_is_self(prm.variant)) {
      if (d_a_self.empty()) {
        d_a_self = std::move(d_base);
      } else {
        axpy(1.0, d_base, d_a_self);
      }
    } else {
      d_a_x = std::move(d_base);
    }
  }

  if (uses_self_map(prm.variant) && !d_a_self.empty()) {
    const double c = 1.0 / std::sqrt(static_cast<double>(prm.w_self_q.cols));
    Matrix dq = matmul(d_a_self, t.k_self);
    for (double& v : dq.data) v *= c;
    Matrix dk = matmul_tn(d_a_self, t.q_self);
    for (double& v : dk.data) v *= c;
    axpy(1.0, matmul_tn(t.x_in, dq), gl.w_self_q);
    axpy(1.0, matmul_tn(t.x_in, dk), gl.w_self_k);
    axpy(1.0, matmul_nt(dq, prm.w_self_q), dx);
    axpy(1.0, matmul_nt(dk, prm.w_self_k), dx);
  }

  if (!d_a_x.empty()) {
    // row normalization backward, then the gram product
    Matrix dg(l, l);
    for (std::size_t i = 0; i < l; ++i) {
      const double n = t.gram_norms[i];
      if (n <= 0.0) continue;
      double row_dot = 0.0;
      for (std::size_t j = 0; j < l; ++j) row_dot += t.a_x.at(i, j) * d_a_x.at(i, j);
      for (std::size_t j = 0; j < l; ++j) {
        dg.at(i, j) = (d_a_x.at(i, j) - t.a_x.at(i, j) * row_dot) / n;
      }
    }
    Matrix sym = dg;
    axpy(1.0, transpose(dg), sym);
    axpy(1.0, matmul(sym, t.x_in), dx);
  }
  return dx;
}

}  // namespace

void TrainConfig::validate() const {
  if (learning_rate < 0.0) throw ValidationError("config: learning_rate must be >= 0");
  if (epochs < 1) throw ValidationError("config: epochs must be >= 1");
  if (!(margin_pos > 0.0 && margin_pos < 1.0) || !(margin_neg > 0.0 && margin_neg < 1.0)) {
    throw ValidationError("config: margins must lie in (0,1)");
  }
  if (layers < 1) throw ValidationError("config: layers must be >= 1");
  if (k < 1) throw ValidationError("config: k must be >= 1");
  if (k_seed < 1) throw ValidationError("config: k_seed must be >= 1");
  if (!(slope > 0.0)) throw ValidationError("config: slope must be positive");
}

PairBatch make_pairs(const Subgraph& sg, const LabelVector& labels, bool all_pairs) {
  const std::size_t l = sg.size();
  PairBatch batch;
  auto label_of = [&](std::size_t pos) {
    const auto id = sg.node_ids[pos];
    if (id < 0 || static_cast<std::size_t>(id) >= labels.size()) {
      throw ValidationError("make_pairs: node id out of label range");
    }
    return labels[static_cast<std::size_t>(id)];
  };
  if (all_pairs) {
    for (std::size_t i = 0; i < l; ++i) {
      if (!sg.mask[i]) continue;
      for (std::size_t j = i + 1; j < l; ++j) {
        if (!sg.mask[j]) continue;
        batch.pairs.push_back({i, j, label_of(i) == label_of(j) ? 1 : -1});
      }
    }
  } else {
    const std::size_t probe = sg.probe_index;
    for (std::size_t j = 0; j < l; ++j) {
      if (j == probe || !sg.mask[j]) continue;
      batch.pairs.push_back({probe, j, label_of(probe) == label_of(j) ? 1 : -1});
    }
  }
  return batch;
}

double hinge_pair_loss(const Matrix& output, const PairBatch& batch, double margin_pos,
                       double margin_neg) {
  check_batch(batch, output.rows);
  const auto rows = normalize_rows(output);
  double loss = 0.0;
  for (const auto& p : batch.pairs) {
    const double s = dot(rows.unit.row(p.a), rows.unit.row(p.b));
    if (p.label > 0) {
      loss += std::max(0.0, margin_pos - s);
    } else {
      loss += std::max(0.0, s - margin_neg);
    }
  }
  return loss / static_cast<double>(batch.pairs.size());
}

Gradients zero_gradients(const LayerStack& stack) {
  Gradients g;
  g.layers.resize(stack.layers.size());
  for (std::size_t i = 0; i < stack.layers.size(); ++i) {
    const auto& p = stack.layers[i];
    auto& gl = g.layers[i];
    gl.w_self_q = Matrix(p.w_self_q.rows, p.w_self_q.cols);
    gl.w_self_k = Matrix(p.w_self_k.rows, p.w_self_k.cols);
    gl.w_qart_q = Matrix(p.w_qart_q.rows, p.w_qart_q.cols);
    gl.w_qart_k = Matrix(p.w_qart_k.rows, p.w_qart_k.cols);
    gl.w_l = Matrix(p.w_l.rows, p.w_l.cols);
  }
  if (!stack.head.empty()) g.head = Matrix(stack.head.rows, stack.head.cols);
  return g;
}

void accumulate(Gradients& into, const Gradients& g) {
  for (std::size_t i = 0; i < into.layers.size(); ++i) {
    axpy(1.0, g.layers[i].w_self_q, into.layers[i].w_self_q);
    axpy(1.0, g.layers[i].w_self_k, into.layers[i].w_self_k);
    axpy(1.0, g.layers[i].w_qart_q, into.layers[i].w_qart_q);
    axpy(1.0, g.layers[i].w_qart_k, into.layers[i].w_qart_k);
    axpy(1.0, g.layers[i].w_l, into.layers[i].w_l);
    into.layers[i].theta_qart += g.layers[i].theta_qart;
    into.layers[i].theta_self += g.layers[i].theta_self;
  }
  if (!into.head.empty()) axpy(1.0, g.head, into.head);
}

void scale(Gradients& g, double s) {
  for (auto& gl : g.layers) {
    for (Matrix* m : {&gl.w_self_q, &gl.w_self_k, &gl.w_qart_q, &gl.w_qart_k, &gl.w_l}) {
      for (double& v : m->data) v *= s;
    }
    gl.theta_qart *= s;
    gl.theta_self *= s;
  }
  for (double& v : g.head.data) v *= s;
}

Matrix stack_forward(const Subgraph& sg, const LayerStack& stack, ForwardTrace* trace) {
  if (stack.layers.empty()) throw ValidationError("stack_forward: no layers");
  Matrix x = sg.features;
  if (trace) trace->layers.resize(stack.layers.size());
  for (std::size_t i = 0; i < stack.layers.size(); ++i) {
    LayerTape* tape = trace ? &trace->layers[i] : nullptr;
    x = layer_forward(x, sg, stack.layers[i], stack.slope, tape);
    if (!x.all_finite()) {
      throw NumericError("stack_forward: non-finite output at layer " + std::to_string(i));
    }
  }
  if (!stack.head.empty()) {
    if (stack.head.rows != x.cols) throw ValidationError("stack_forward: head dims mismatch");
    if (trace) trace->head_in = x;
    Matrix z = matmul(x, stack.head);
    if (trace) trace->head_z = z;
    x = z;
    for (double& v : x.data) {
      if (v < 0.0) v *= stack.slope;
    }
    if (!x.all_finite()) throw NumericError("stack_forward: non-finite output at head");
  }
  if (trace) trace->output = x;
  return x;
}

BackwardResult backward(const Subgraph& sg, const LayerStack& stack, const PairBatch& batch,
                        double margin_pos, double margin_neg) {
  ForwardTrace trace;
  const Matrix y = stack_forward(sg, stack, &trace);
  check_batch(batch, y.rows);

  const auto rows = normalize_rows(y);
  const double inv_pairs = 1.0 / static_cast<double>(batch.pairs.size());

  double loss = 0.0;
  Matrix d_unit(y.rows, y.cols);
  for (const auto& p : batch.pairs) {
    const double s = dot(rows.unit.row(p.a), rows.unit.row(p.b));
    double d_s = 0.0;
    if (p.label > 0) {
      const double violation = margin_pos - s;
      if (violation > 0.0) {
        loss += violation;
        d_s = -inv_pairs;
      }
    } else {
      const double violation = s - margin_neg;
      if (violation > 0.0) {
        loss += violation;
        d_s = inv_pairs;
      }
    }
    if (d_s != 0.0) {
      for (std::size_t c = 0; c < y.cols; ++c) {
        d_unit.at(p.a, c) += d_s * rows.unit.at(p.b, c);
        d_unit.at(p.b, c) += d_s * rows.unit.at(p.a, c);
      }
    }
  }
  loss *= inv_pairs;

  // through the row normalization
  Matrix dy(y.rows, y.cols);
  for (std::size_t i = 0; i < y.rows; ++i) {
    const double n = rows.norms[i];
    if (n <= 0.0) continue;
    double row_dot = 0.0;
    for (std::size_t c = 0; c < y.cols; ++c) row_dot += rows.unit.at(i, c) * d_unit.at(i, c);
    for (std::size_t c = 0; c < y.cols; ++c) {
      dy.at(i, c) = (d_unit.at(i, c) - rows.unit.at(i, c) * row_dot) / n;
    }
  }

  BackwardResult result;
  result.loss = loss;
  result.grads = zero_gradients(stack);

  Matrix dx;
  if (!stack.head.empty()) {
    Matrix dz = dy;
    for (std::size_t idx = 0; idx < dz.data.size(); ++idx) {
      dz.data[idx] *= leaky_grad(trace.head_z.data[idx], stack.slope);
    }
    axpy(1.0, matmul_tn(trace.head_in, dz), result.grads.head);
    dx = matmul_nt(dz, stack.head);
  } else {
    dx = dy;
  }

  for (std::size_t i = stack.layers.size(); i-- > 0;) {
    dx = layer_backward(trace.layers[i], sg, stack.layers[i], stack.slope, dx,
                        result.grads.layers[i]);
  }
  return result;
}

double cosine_lr(double lr0, std::int64_t epoch, std::int64_t epochs) {
  if (epochs < 1) throw ValidationError("cosine_lr: epochs must be >= 1");
  if (epoch < 0 || epoch > epochs) throw ValidationError("cosine_lr: epoch out of range");
  const double phase = M_PI * static_cast<double>(epoch) / static_cast<double>(epochs);
  return lr0 * (1.0 + std::cos(phase)) / 2.0;
}

namespace {

void apply_update(LayerStack& stack, const Gradients& grads, double lr) {
  for (std::size_t i = 0; i < stack.layers.size(); ++i) {
    auto& p = stack.layers[i];
    const auto& g = grads.layers[i];
    axpy(-lr, g.w_self_q, p.w_self_q);
    axpy(-lr, g.w_self_k, p.w_self_k);
    axpy(-lr, g.w_qart_q, p.w_qart_q);
    axpy(-lr, g.w_qart_k, p.w_qart_k);
    axpy(-lr, g.w_l, p.w_l);
    p.theta_qart -= lr * g.theta_qart;
    p.theta_self -= lr * g.theta_self;
  }
  if (!stack.head.empty()) axpy(-lr, grads.head, stack.head);
}

}  // namespace

void sgd_step(LayerStack& stack, const Gradients& grads, std::int64_t epoch,
              const TrainConfig& cfg) {
  apply_update(stack, grads, cosine_lr(cfg.learning_rate, epoch, cfg.epochs));
}

TrainResult train(const FeatureMatrix& features, const LabelVector& labels,
                  const TrainConfig& cfg) {
  cfg.validate();
  const FeatureMatrix feats = features.normalized ? features : l2_normalize(features);
  validate_labels(labels, feats.rows());
  const KnnGraph graph = build_knn_graph(feats, cfg.k);

  const std::size_t m = feats.cols();
  const LayerDims dims{cfg.k + 1, m, cfg.m_d > 0 ? cfg.m_d : m, m};

  TrainResult result;
  result.stack.slope = cfg.slope;
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    result.stack.layers.push_back(identity_params(dims, cfg.variant, cfg.fusion, cfg.use_w_qart));
  }
  if (cfg.use_head) result.stack.head = Matrix::identity(m);

  const std::size_t n = feats.rows();
  std::vector<Subgraph> subgraphs;
  std::vector<PairBatch> batches;
  std::vector<std::size_t> active;
  subgraphs.reserve(n);
  batches.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    subgraphs.push_back(sample_subgraph(feats, graph, i));
    batches.push_back(make_pairs(subgraphs.back(), labels, cfg.all_pairs));
    if (!batches.back().pairs.empty()) active.push_back(i);
  }
  if (active.empty()) throw ValidationError("train: no subgraph yields any pair");

  result.trace.reserve(static_cast<std::size_t>(cfg.epochs));
  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(cfg.learning_rate, epoch, cfg.epochs);
    std::vector<std::size_t> order = active;
    auto rng = substream(cfg.seed, 0x5eed0000ULL + static_cast<std::uint64_t>(epoch));
    shuffle_indices(order, rng);

    double epoch_loss = 0.0;
    std::size_t steps = 0;
    std::size_t pos = 0;
    while (pos < order.size()) {
      const std::size_t group_end = std::min(order.size(), pos + cfg.k_seed);
      Gradients grads = zero_gradients(result.stack);
      std::size_t group_count = 0;
      for (std::size_t g = pos; g < group_end; ++g) {
        const std::size_t idx = order[g];
        const BackwardResult br =
            backward(subgraphs[idx], result.stack, batches[idx], cfg.margin_pos, cfg.margin_neg);
        accumulate(grads, br.grads);
        epoch_loss += br.loss;
        ++group_count;
        ++steps;
      }
      scale(grads, 1.0 / static_cast<double>(group_count));
      apply_update(result.stack, grads, lr);
      pos = group_end;
    }
    result.trace.push_back({epoch, lr, epoch_loss / static_cast<double>(steps)});
  }
  return result;
}

FeatureMatrix enhance(const FeatureMatrix& features, const KnnGraph& graph,
                      const LayerStack& stack) {
  const FeatureMatrix feats = features.normalized ? features : l2_normalize(features);
  if (graph.size() != feats.rows()) throw ValidationError("enhance: graph/features size mismatch");
  if (stack.layers.empty()) throw ValidationError("enhance: empty stack");
  const std::size_t expected_l = stack.layers.front().dim_l();
  if (graph.k + 1 != expected_l) {
    throw ValidationError("enhance: checkpoint expects k = " + std::to_string(expected_l - 1) +
                          ", graph has k = " + std::to_string(graph.k));
  }

  const std::size_t n = feats.rows();
  FeatureMatrix out;
  std::size_t out_cols = stack.head.empty() ? stack.layers.back().dim_out() : stack.head.cols;
  out.values = Matrix(n, out_cols);
  out.normalized = false;
  for (std::size_t i = 0; i < n; ++i) {
    const Subgraph sg = sample_subgraph(feats, graph, i);
    const Matrix y = stack_forward(sg, stack, nullptr);
    std::copy(y.row(sg.probe_index).begin(), y.row(sg.probe_index).end(), out.values.row(i).begin());
  }
  return out;
}

}  // namespace battn
