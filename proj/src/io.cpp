#include "battn/io.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "battn/error.hpp"

namespace battn {

namespace {

constexpr char kFeatMagic[4] = {'F', 'E', 'A', 'T'};

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw ValidationError("feature file: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(os, bits);
}

float read_f32(std::istream& is) {
  const std::uint32_t bits = read_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream os(path, mode);
  if (!os) throw ValidationError("cannot open for writing: " + path);
  return os;
}

}  // namespace

void write_feat(const FeatureMatrix& features, const std::string& path) {
  features.validate();
  auto os = open_out(path, std::ios::binary);
  os.write(kFeatMagic, 4);
  write_u32(os, static_cast<std::uint32_t>(features.rows()));
  write_u32(os, static_cast<std::uint32_t>(features.cols()));
  for (double v : features.values.data) write_f32(os, static_cast<float>(v));
  if (!os) throw ValidationError("write failed: " + path);
}

FeatureMatrix read_feat(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kFeatMagic, 4) != 0) {
    throw ValidationError("not a FEAT file: " + path);
  }
  const std::uint32_t n = read_u32(is);
  const std::uint32_t m = read_u32(is);
  if (n == 0 || m == 0) throw ValidationError("FEAT file with empty dimensions: " + path);
  FeatureMatrix features;
  features.values = Matrix(n, m);
  for (double& v : features.values.data) {
    v = static_cast<double>(read_f32(is));
    if (!std::isfinite(v)) throw ValidationError("FEAT file contains non-finite values: " + path);
  }
  char extra;
  if (is.read(&extra, 1)) throw ValidationError("FEAT file has trailing bytes: " + path);
  return features;
}

FeatureMatrix read_features_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
        if (used != cell.size()) throw std::invalid_argument(cell);
        row.push_back(v);
      } catch (const std::exception&) {
        throw ValidationError("bad CSV value '" + cell + "' in " + path);
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ValidationError("ragged CSV rows in " + path);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows.front().empty()) throw ValidationError("empty feature CSV: " + path);
  FeatureMatrix features;
  features.values = Matrix(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].begin(), rows[i].end(), features.values.row(i).begin());
  }
  features.validate();
  return features;
}

FeatureMatrix read_features_auto(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open: " + path);
  char magic[4] = {0, 0, 0, 0};
  is.read(magic, 4);
  is.close();
  if (std::memcmp(magic, kFeatMagic, 4) == 0) return read_feat(path);
  return read_features_csv(path);
}

LabelVector read_labels(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open: " + path);
  LabelVector labels;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    try {
      std::size_t used = 0;
      const long long v = std::stoll(line, &used);
      while (used < line.size() && std::isspace(static_cast<unsigned char>(line[used]))) ++used;
      if (used != line.size()) throw std::invalid_argument(line);
      if (v < 0) throw ValidationError("negative label in " + path);
      labels.push_back(v);
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception&) {
      throw ValidationError("bad label line '" + line + "' in " + path);
    }
  }
  if (labels.empty()) throw ValidationError("empty label file: " + path);
  return labels;
}

void write_labels(const LabelVector& labels, const std::string& path) {
  auto os = open_out(path);
  for (auto v : labels) os << v << "\n";
  if (!os) throw ValidationError("write failed: " + path);
}

void write_knn_csv(const KnnGraph& graph, const std::string& path) {
  auto os = open_out(path);
  os << "probe,neighbor,score\n";
  char buf[64];
  for (std::size_t i = 0; i < graph.size(); ++i) {
    for (const auto& nb : graph.neighbors[i]) {
      std::snprintf(buf, sizeof(buf), "%.6f", nb.score);
      os << i << "," << nb.id << "," << buf << "\n";
    }
  }
  if (!os) throw ValidationError("write failed: " + path);
}

void write_roc_csv(const std::vector<RocPoint>& points, const std::string& path) {
  auto os = open_out(path);
  os << "fpr,tpr,threshold\n";
  char buf[128];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f", p.fpr, p.tpr, p.threshold);
    os << buf << "\n";
  }
  if (!os) throw ValidationError("write failed: " + path);
}

void write_assignment_csv(const ClusterAssignment& assignment, const std::string& path) {
  auto os = open_out(path);
  os << "node,cluster\n";
  for (std::size_t i = 0; i < assignment.size(); ++i) os << i << "," << assignment[i] << "\n";
  if (!os) throw ValidationError("write failed: " + path);
}

ClusterAssignment read_assignment_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open: " + path);
  std::string line;
  if (!std::getline(is, line) || line != "node,cluster") {
    throw ValidationError("assignment CSV must start with 'node,cluster': " + path);
  }
  ClusterAssignment out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw ValidationError("assignment CSV line " + std::to_string(lineno) + " malformed");
    }
    try {
      const auto node = std::stoull(line.substr(0, comma));
      const auto cluster = std::stoll(line.substr(comma + 1));
      if (node != out.size()) {
        throw ValidationError("assignment CSV: nodes must be consecutive from 0");
      }
      if (cluster < 0) throw ValidationError("assignment CSV: negative cluster id");
      out.push_back(cluster);
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception&) {
      throw ValidationError("assignment CSV line " + std::to_string(lineno) + " malformed");
    }
  }
  if (out.empty()) throw ValidationError("assignment CSV has no rows: " + path);
  return out;
}

void write_sweep_csv(const SweepResult& sweep, const std::string& path) {
  auto os = open_out(path);
  os << "threshold,fp,fb\n";
  char buf[128];
  for (const auto& row : sweep.rows) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f", row.threshold, row.fp, row.fb);
    os << buf << "\n";
  }
  if (!os) throw ValidationError("write failed: " + path);
}

void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path) {
  auto os = open_out(path);
  os << "epoch,lr,loss\n";
  char buf[128];
  for (const auto& row : trace) {
    std::snprintf(buf, sizeof(buf), "%lld,%.8f,%.8f", static_cast<long long>(row.epoch), row.lr,
                  row.loss);
    os << buf << "\n";
  }
  if (!os) throw ValidationError("write failed: " + path);
}

void write_simulation_csv(const SimulationReport& report,
                          const std::vector<std::pair<std::string, std::string>>& footer,
                          const std::string& path) {
  auto os = open_out(path);
  os << "trial,noisy_single,miss_single,simm_same,simm_cross\n";
  char buf[160];
  for (std::size_t t = 0; t < report.rows.size(); ++t) {
    const auto& row = report.rows[t];
    std::snprintf(buf, sizeof(buf), "%zu,%lld,%lld,%.6f,%.6f", t,
                  static_cast<long long>(row.noisy_single),
                  static_cast<long long>(row.miss_single), row.simm_same, row.simm_cross);
    os << buf << "\n";
  }
  for (const auto& [key, value] : footer) os << key << "=" << value << "\n";
  if (!os) throw ValidationError("write failed: " + path);
}

std::map<std::string, std::string> read_config_kv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  auto trim = [](std::string s) {
    const auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!s.empty() && issp(s.front())) s.erase(s.begin());
    while (!s.empty() && issp(s.back())) s.pop_back();
    return s;
  };
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(lineno) + " is not key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ValidationError("config line " + std::to_string(lineno) + ": empty key");
    if (kv.count(key) > 0) throw ValidationError("config: duplicate key " + key);
    kv[key] = value;
  }
  return kv;
}

}  // namespace battn
