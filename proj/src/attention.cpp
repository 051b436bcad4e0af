#include "battn/attention.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <unordered_set>

#include "battn/error.hpp"

namespace battn {

namespace {

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

Matrix leaky(const Matrix& z, double slope) {
  Matrix out = z;
  for (double& v : out.data) {
    if (v < 0.0) v *= slope;
  }
  return out;
}

void check_subgraph(const Subgraph& sg) {
  const std::size_t l = sg.size();
  if (l == 0) throw ValidationError("subgraph: empty");
  if (sg.mask.size() != l || sg.node_ids.size() != l) {
    throw ValidationError("subgraph: mask/node_ids size mismatch");
  }
  if (sg.probe_index >= l || !sg.mask[sg.probe_index]) {
    throw ValidationError("subgraph: probe must be a real node");
  }
  for (std::size_t i = 0; i < l; ++i) {
    if (!sg.mask[i]) {
      for (double v : sg.features.row(i)) {
        if (v != 0.0) throw ValidationError("subgraph: padded row has non-zero features");
      }
    }
  }
}

// Row-normalized gram matrix; zero rows (padding) are left zero.
void gram_rownorm(const Matrix& x, Matrix& gram, std::vector<double>& norms, Matrix& ax) {
  gram = matmul_nt(x, x);
  const std::size_t l = x.rows;
  norms.assign(l, 0.0);
  ax = gram;
  for (std::size_t i = 0; i < l; ++i) {
    const double n = norm2(gram.row(i));
    norms[i] = n;
    if (n > 0.0) {
      for (double& v : ax.row(i)) v /= n;
    }
  }
}

Matrix gcn_propagation(const Matrix& adjacency, const std::vector<bool>& mask) {
  const std::size_t l = adjacency.rows;
  Matrix tilde(l, l);
  for (std::size_t i = 0; i < l; ++i) {
    if (!mask[i]) continue;
    tilde.at(i, i) = 1.0;  // self loop
    for (std::size_t j = 0; j < l; ++j) {
      if (i != j && mask[j] && adjacency.at(i, j) != 0.0) tilde.at(i, j) = 1.0;
    }
  }
  std::vector<double> inv_sqrt_deg(l, 0.0);
  for (std::size_t i = 0; i < l; ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < l; ++j) d += tilde.at(i, j);
    if (d > 0.0) inv_sqrt_deg[i] = 1.0 / std::sqrt(d);
  }
  Matrix p(l, l);
  for (std::size_t i = 0; i < l; ++i) {
    for (std::size_t j = 0; j < l; ++j) {
      p.at(i, j) = inv_sqrt_deg[i] * tilde.at(i, j) * inv_sqrt_deg[j];
    }
  }
  return p;
}

void check_params(const AttentionParams& prm, std::size_t l, std::size_t m) {
  if (prm.w_l.rows != m || prm.w_l.cols == 0) {
    throw ValidationError("attention params: w_l must be M x M_out");
  }
  if (uses_self_map(prm.variant)) {
    if (prm.w_self_q.rows != m || prm.w_self_k.rows != m ||
        prm.w_self_q.cols != prm.w_self_k.cols || prm.w_self_q.cols == 0) {
      throw ValidationError("attention params: self weights must be M x M_d");
    }
  }
  if (uses_qart_map(prm.variant) && prm.use_w_qart) {
    if (prm.w_qart_q.rows != l || prm.w_qart_q.cols != l || prm.w_qart_k.rows != l ||
        prm.w_qart_k.cols != l) {
      throw ValidationError("attention params: qart weights must be L x L");
    }
  }
}

Matrix rectangular_eye(std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < std::min(rows, cols); ++i) m.at(i, i) = 1.0;
  return m;
}

}  // namespace

Matrix masked_row_softmax(const Matrix& scores, const std::vector<bool>& mask) {
  if (scores.rows != scores.cols || scores.rows != mask.size()) {
    throw ValidationError("masked_row_softmax: shape mismatch");
  }
  const std::size_t l = scores.rows;
  Matrix p(l, l);
  for (std::size_t i = 0; i < l; ++i) {
    if (!mask[i]) continue;
    double maxv = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < l; ++j) {
      if (mask[j]) maxv = std::max(maxv, scores.at(i, j));
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < l; ++j) {
      if (!mask[j]) continue;
      const double e = std::exp(scores.at(i, j) - maxv);
      p.at(i, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < l; ++j) {
      if (mask[j]) p.at(i, j) /= sum;
    }
  }
  return p;
}

AttentionMap a_x(const Subgraph& sg) {
  check_subgraph(sg);
  Matrix gram;
  std::vector<double> norms;
  Matrix ax;
  gram_rownorm(sg.features, gram, norms, ax);
  return {std::move(ax), AttentionMap::Kind::a_x};
}

AttentionMap q_attention(const AttentionMap& ax, const AttentionParams& params) {
  const std::size_t l = ax.values.rows;
  if (ax.values.cols != l) throw ValidationError("q_attention: input map must be square");
  Matrix result;
  if (params.use_w_qart) {
    if (params.w_qart_q.rows != l || params.w_qart_q.cols != l || params.w_qart_k.rows != l ||
        params.w_qart_k.cols != l) {
      throw ValidationError("q_attention: qart weights must be L x L");
    }
    result = matmul_nt(matmul(ax.values, params.w_qart_q), matmul(ax.values, params.w_qart_k));
  } else {
    result = matmul_nt(ax.values, ax.values);
  }
  return {std::move(result), AttentionMap::Kind::a_qart};
}

AttentionMap self_attention(const Subgraph& sg, const AttentionParams& params) {
  check_subgraph(sg);
  const std::size_t m = sg.features.cols;
  if (params.w_self_q.rows != m || params.w_self_k.rows != m ||
      params.w_self_q.cols != params.w_self_k.cols || params.w_self_q.cols == 0) {
    throw ValidationError("self_attention: self weights must be M x M_d");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(params.w_self_q.cols));
  Matrix raw =
      matmul_nt(matmul(sg.features, params.w_self_q), matmul(sg.features, params.w_self_k));
  for (double& v : raw.data) v *= scale;
  const std::size_t l = sg.size();
  for (std::size_t i = 0; i < l; ++i) {
    for (std::size_t j = 0; j < l; ++j) {
      if (!sg.mask[i] || !sg.mask[j]) raw.at(i, j) = kMaskedScore;
    }
  }
  return {std::move(raw), AttentionMap::Kind::a_self};
}

AttentionMap fuse(const AttentionMap& aq, const AttentionMap& as, const AttentionParams& params,
                  const std::vector<bool>& mask) {
  if (!aq.values.same_shape(as.values) || aq.values.rows != mask.size()) {
    throw ValidationError("fuse: shape mismatch");
  }
  const std::size_t l = mask.size();
  Matrix scores(l, l);
  for (std::size_t i = 0; i < l; ++i) {
    for (std::size_t j = 0; j < l; ++j) {
      if (!mask[i] || !mask[j]) continue;  // excluded from the softmax anyway
      const double q = aq.values.at(i, j);
      const double s = as.values.at(i, j);
      switch (params.fusion) {
        case Fusion::weighted_sum:
          scores.at(i, j) = params.theta_qart * q + params.theta_self * s;
          break;
        case Fusion::plain_sum:
          scores.at(i, j) = q + s;
          break;
        case Fusion::elementwise_product:
          scores.at(i, j) = q * s;
          break;
      }
    }
  }
  return {masked_row_softmax(scores, mask), AttentionMap::Kind::a_band};
}

Matrix plain_gcn_layer(const Matrix& features, const Matrix& adjacency, const Matrix& w_l,
                       double slope) {
  const std::size_t l = features.rows;
  if (adjacency.rows != l || adjacency.cols != l) {
    throw ValidationError("plain_gcn_layer: adjacency must be L x L");
  }
  if (w_l.rows != features.cols) throw ValidationError("plain_gcn_layer: w_l must be M x M_out");
  for (std::size_t i = 0; i < l; ++i) {
    if (adjacency.at(i, i) != 0.0) throw ValidationError("plain_gcn_layer: diagonal must be zero");
    for (std::size_t j = 0; j < l; ++j) {
      const double v = adjacency.at(i, j);
      if (v != 0.0 && v != 1.0) throw ValidationError("plain_gcn_layer: adjacency must be binary");
      if (v != adjacency.at(j, i)) {
        throw ValidationError("plain_gcn_layer: adjacency must be symmetric");
      }
    }
  }
  const std::vector<bool> all_real(l, true);
  const Matrix p = gcn_propagation(adjacency, all_real);
  return leaky(matmul(matmul(p, features), w_l), slope);
}

Matrix layer_forward(const Matrix& x_in, const Subgraph& sg, const AttentionParams& prm,
                     double slope, LayerTape* tape) {
  const std::size_t l = sg.size();
  if (x_in.rows != l) throw ValidationError("layer_forward: feature rows must match subgraph size");
  check_params(prm, l, x_in.cols);

  LayerTape local;
  LayerTape& t = tape ? *tape : local;
  t.x_in = x_in;

  if (prm.variant == Variant::plain_gcn) {
    t.p = gcn_propagation(sg.adjacency, sg.mask);
  } else {
    if (uses_qart_map(prm.variant) && !qart_base_is_self(prm.variant)) {
      gram_rownorm(x_in, t.gram, t.gram_norms, t.a_x);
    }
    if (uses_self_map(prm.variant)) {
      t.q_self = matmul(x_in, prm.w_self_q);
      t.k_self = matmul(x_in, prm.w_self_k);
      t.a_self = matmul_nt(t.q_self, t.k_self);
      const double scale = 1.0 / std::sqrt(static_cast<double>(prm.w_self_q.cols));
      for (double& v : t.a_self.data) v *= scale;
    }
    if (uses_qart_map(prm.variant)) {
      const Matrix& base = qart_base_is_self(prm.variant) ? t.a_self : t.a_x;
      if (prm.use_w_qart) {
        t.q_qart = matmul(base, prm.w_qart_q);
        t.k_qart = matmul(base, prm.w_qart_k);
        t.a_qart = matmul_nt(t.q_qart, t.k_qart);
      } else {
        t.a_qart = matmul_nt(base, base);
      }
    }

    switch (prm.variant) {
      case Variant::self:
        t.scores = t.a_self;
        break;
      case Variant::qart:
      case Variant::qart_tilde:
        t.scores = t.a_qart;
        break;
      default: {
        t.scores = Matrix(l, l);
        for (std::size_t idx = 0; idx < t.scores.data.size(); ++idx) {
          const double q = t.a_qart.data[idx];
          const double s = t.a_self.data[idx];
          switch (prm.fusion) {
            case Fusion::weighted_sum:
              t.scores.data[idx] = prm.theta_qart * q + prm.theta_self * s;
              break;
            case Fusion::plain_sum:
              t.scores.data[idx] = q + s;
              break;
            case Fusion::elementwise_product:
              t.scores.data[idx] = q * s;
              break;
          }
        }
        break;
      }
    }
    t.p = masked_row_softmax(t.scores, sg.mask);
  }

  t.h = matmul(t.p, x_in);
  t.z = matmul(t.h, prm.w_l);
  t.x_out = leaky(t.z, slope);
  return t.x_out;
}

Matrix b_attention_layer(const Subgraph& sg, const AttentionParams& params, double slope) {
  check_subgraph(sg);
  return layer_forward(sg.features, sg, params, slope, nullptr);
}

Subgraph sample_subgraph(const FeatureMatrix& features, const KnnGraph& graph,
                         std::size_t seed_node) {
  const std::size_t n = features.rows();
  if (graph.size() != n) throw ValidationError("sample_subgraph: graph/features size mismatch");
  if (seed_node >= n) throw ValidationError("sample_subgraph: seed node out of range");

  const std::size_t l = graph.k + 1;
  const auto& nbs = graph.neighbors[seed_node];
  if (nbs.size() > graph.k) throw ValidationError("sample_subgraph: neighbor list longer than k");

  Subgraph sg;
  sg.node_ids.assign(l, -1);
  sg.mask.assign(l, false);
  sg.features = Matrix(l, features.cols());
  sg.probe_index = 0;

  sg.node_ids[0] = static_cast<std::int64_t>(seed_node);
  sg.mask[0] = true;
  std::copy(features.row(seed_node).begin(), features.row(seed_node).end(),
            sg.features.row(0).begin());
  for (std::size_t t = 0; t < nbs.size(); ++t) {
    const auto id = static_cast<std::size_t>(nbs[t].id);
    sg.node_ids[t + 1] = nbs[t].id;
    sg.mask[t + 1] = true;
    std::copy(features.row(id).begin(), features.row(id).end(), sg.features.row(t + 1).begin());
  }

  // induced kNN adjacency (union of directions) for the plain-GCN baseline
  sg.adjacency = Matrix(l, l);
  std::vector<std::unordered_set<std::int64_t>> out_edges(l);
  for (std::size_t i = 0; i < l; ++i) {
    if (!sg.mask[i]) continue;
    for (const auto& nb : graph.neighbors[static_cast<std::size_t>(sg.node_ids[i])]) {
      out_edges[i].insert(nb.id);
    }
  }
  for (std::size_t i = 0; i < l; ++i) {
    if (!sg.mask[i]) continue;
    for (std::size_t j = i + 1; j < l; ++j) {
      if (!sg.mask[j]) continue;
      if (out_edges[i].count(sg.node_ids[j]) > 0 || out_edges[j].count(sg.node_ids[i]) > 0) {
        sg.adjacency.at(i, j) = 1.0;
        sg.adjacency.at(j, i) = 1.0;
      }
    }
  }
  return sg;
}

AttentionParams identity_params(const LayerDims& dims, Variant variant, Fusion fusion,
                                bool use_w_qart) {
  AttentionParams p;
  p.w_self_q = rectangular_eye(dims.m, dims.m_d);
  p.w_self_k = rectangular_eye(dims.m, dims.m_d);
  p.w_qart_q = Matrix::identity(dims.l);
  p.w_qart_k = Matrix::identity(dims.l);
  p.w_l = rectangular_eye(dims.m, dims.m_out);
  p.variant = variant;
  p.fusion = fusion;
  p.use_w_qart = use_w_qart;
  return p;
}

AttentionParams random_params(const LayerDims& dims, Variant variant, Fusion fusion,
                              bool use_w_qart, std::mt19937_64& rng, double scale) {
  auto fill = [&](Matrix& m) {
    for (double& v : m.data) {
      v = (static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0) * scale;
    }
  };
  AttentionParams p;
  p.w_self_q = Matrix(dims.m, dims.m_d);
  p.w_self_k = Matrix(dims.m, dims.m_d);
  p.w_qart_q = Matrix(dims.l, dims.l);
  p.w_qart_k = Matrix(dims.l, dims.l);
  p.w_l = Matrix(dims.m, dims.m_out);
  fill(p.w_self_q);
  fill(p.w_self_k);
  fill(p.w_qart_q);
  fill(p.w_qart_k);
  fill(p.w_l);
  p.theta_qart = 1.0 + (static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5) * scale;
  p.theta_self = 1.0 + (static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5) * scale;
  p.variant = variant;
  p.fusion = fusion;
  p.use_w_qart = use_w_qart;
  return p;
}

namespace {

constexpr char kMagic[4] = {'B', 'A', 'T', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw ValidationError("checkpoint: truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw ValidationError("checkpoint: truncated file");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

void write_matrix(std::ostream& os, const Matrix& m) {
  for (double v : m.data) write_f64(os, v);
}

Matrix read_matrix(std::istream& is, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (double& v : m.data) v = read_f64(is);
  return m;
}

std::uint32_t variant_code(Variant v) {
  switch (v) {
    case Variant::plain_gcn: return 0;
    case Variant::self: return 1;
    case Variant::qart: return 2;
    case Variant::qart_tilde: return 3;
    case Variant::band: return 4;
    case Variant::band_tilde: return 5;
  }
  throw ValidationError("unknown variant");
}

Variant variant_from_code(std::uint32_t c) {
  switch (c) {
    case 0: return Variant::plain_gcn;
    case 1: return Variant::self;
    case 2: return Variant::qart;
    case 3: return Variant::qart_tilde;
    case 4: return Variant::band;
    case 5: return Variant::band_tilde;
  }
  throw ValidationError("checkpoint: unknown variant code");
}

std::uint32_t fusion_code(Fusion f) {
  switch (f) {
    case Fusion::weighted_sum: return 0;
    case Fusion::plain_sum: return 1;
    case Fusion::elementwise_product: return 2;
  }
  throw ValidationError("unknown fusion");
}

Fusion fusion_from_code(std::uint32_t c) {
  switch (c) {
    case 0: return Fusion::weighted_sum;
    case 1: return Fusion::plain_sum;
    case 2: return Fusion::elementwise_product;
  }
  throw ValidationError("checkpoint: unknown fusion code");
}

}  // namespace

void save_stack(const LayerStack& stack, const std::string& path) {
  if (stack.layers.empty()) throw ValidationError("save_stack: no layers");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("save_stack: cannot open " + path);
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  write_u32(os, variant_code(stack.layers.front().variant));
  write_u32(os, fusion_code(stack.layers.front().fusion));
  write_u32(os, stack.layers.front().use_w_qart ? 1 : 0);
  write_f64(os, stack.slope);
  const std::uint32_t records =
      static_cast<std::uint32_t>(stack.layers.size()) + (stack.head.empty() ? 0 : 1);
  write_u32(os, records);
  for (const auto& layer : stack.layers) {
    write_u32(os, static_cast<std::uint32_t>(layer.dim_l()));
    write_u32(os, static_cast<std::uint32_t>(layer.dim_m()));
    write_u32(os, static_cast<std::uint32_t>(layer.dim_md()));
    write_u32(os, static_cast<std::uint32_t>(layer.dim_out()));
    write_matrix(os, layer.w_self_q);
    write_matrix(os, layer.w_self_k);
    write_matrix(os, layer.w_qart_q);
    write_matrix(os, layer.w_qart_k);
    write_f64(os, layer.theta_qart);
    write_f64(os, layer.theta_self);
    write_matrix(os, layer.w_l);
  }
  if (!stack.head.empty()) {
    // head record: L = 0 and M_d = 0 mark a pure fully connected layer
    write_u32(os, 0);
    write_u32(os, static_cast<std::uint32_t>(stack.head.rows));
    write_u32(os, 0);
    write_u32(os, static_cast<std::uint32_t>(stack.head.cols));
    write_f64(os, 0.0);
    write_f64(os, 0.0);
    write_matrix(os, stack.head);
  }
  if (!os) throw ValidationError("save_stack: write failed for " + path);
}

LayerStack load_stack(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("load_stack: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw ValidationError("load_stack: bad magic, not a checkpoint file");
  }
  const std::uint32_t version = read_u32(is);
  if (version != kVersion) throw ValidationError("load_stack: unsupported version");
  const Variant variant = variant_from_code(read_u32(is));
  const Fusion fusion = fusion_from_code(read_u32(is));
  const bool use_w_qart = read_u32(is) != 0;
  LayerStack stack;
  stack.slope = read_f64(is);
  const std::uint32_t records = read_u32(is);
  if (records == 0) throw ValidationError("load_stack: empty checkpoint");
  for (std::uint32_t r = 0; r < records; ++r) {
    const std::uint32_t l = read_u32(is);
    const std::uint32_t m = read_u32(is);
    const std::uint32_t m_d = read_u32(is);
    const std::uint32_t m_out = read_u32(is);
    if (l == 0 && m_d == 0) {
      const double t_q = read_f64(is);
      const double t_s = read_f64(is);
      (void)t_q;
      (void)t_s;
      stack.head = read_matrix(is, m, m_out);
      if (r + 1 != records) throw ValidationError("load_stack: head record must be last");
      break;
    }
    AttentionParams layer;
    layer.w_self_q = read_matrix(is, m, m_d);
    layer.w_self_k = read_matrix(is, m, m_d);
    layer.w_qart_q = read_matrix(is, l, l);
    layer.w_qart_k = read_matrix(is, l, l);
    layer.theta_qart = read_f64(is);
    layer.theta_self = read_f64(is);
    layer.w_l = read_matrix(is, m, m_out);
    layer.variant = variant;
    layer.fusion = fusion;
    layer.use_w_qart = use_w_qart;
    stack.layers.push_back(std::move(layer));
  }
  if (stack.layers.empty()) throw ValidationError("load_stack: checkpoint has no layers");
  return stack;
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::plain_gcn: return "gcn";
    case Variant::self: return "self";
    case Variant::qart: return "qart";
    case Variant::qart_tilde: return "qart-tilde";
    case Variant::band: return "band";
    case Variant::band_tilde: return "band-tilde";
  }
  return "?";
}

std::string fusion_name(Fusion f) {
  switch (f) {
    case Fusion::weighted_sum: return "weighted-sum";
    case Fusion::plain_sum: return "plain-sum";
    case Fusion::elementwise_product: return "product";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  if (name == "gcn" || name == "plain-gcn") return Variant::plain_gcn;
  if (name == "self") return Variant::self;
  if (name == "qart") return Variant::qart;
  if (name == "qart-tilde") return Variant::qart_tilde;
  if (name == "band") return Variant::band;
  if (name == "band-tilde") return Variant::band_tilde;
  throw ValidationError("unknown variant: " + name);
}

Fusion parse_fusion(const std::string& name) {
  if (name == "weighted-sum") return Fusion::weighted_sum;
  if (name == "plain-sum") return Fusion::plain_sum;
  if (name == "product") return Fusion::elementwise_product;
  throw ValidationError("unknown fusion: " + name);
}

}  // namespace battn
