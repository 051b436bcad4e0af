#pragma once

#include <map>
#include <string>
#include <vector>

#include "battn/clustering.hpp"
#include "battn/feature.hpp"
#include "battn/knn.hpp"
#include "battn/metrics.hpp"
#include "battn/multitest.hpp"
#include "battn/training.hpp"

namespace battn {

// FEAT file: magic "FEAT", u32-LE N and M, then N*M float32-LE values row-major.
void write_feat(const FeatureMatrix& features, const std::string& path);
FeatureMatrix read_feat(const std::string& path);

// One comma-separated row per line.
FeatureMatrix read_features_csv(const std::string& path);

// Sniffs the FEAT magic, falls back to CSV.
FeatureMatrix read_features_auto(const std::string& path);

// One non-negative integer per line; line i labels node i.
LabelVector read_labels(const std::string& path);
void write_labels(const LabelVector& labels, const std::string& path);

// CSV "probe,neighbor,score", score with 6 decimals.
void write_knn_csv(const KnnGraph& graph, const std::string& path);

// CSV "fpr,tpr,threshold", 6 decimals.
void write_roc_csv(const std::vector<RocPoint>& points, const std::string& path);

// CSV "node,cluster".
void write_assignment_csv(const ClusterAssignment& assignment, const std::string& path);
ClusterAssignment read_assignment_csv(const std::string& path);

// CSV "threshold,fp,fb".
void write_sweep_csv(const SweepResult& sweep, const std::string& path);

// CSV "epoch,lr,loss".
void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path);

// CSV "trial,noisy_single,miss_single,simm_same,simm_cross" followed by a
// key=value footer block.
void write_simulation_csv(const SimulationReport& report,
                          const std::vector<std::pair<std::string, std::string>>& footer,
                          const std::string& path);

// key=value lines with '#' comments; unknown keys are the caller's problem.
std::map<std::string, std::string> read_config_kv(const std::string& path);

}  // namespace battn
