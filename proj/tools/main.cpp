// battn: multiple-tests similarity, band-attention layers, and the
// surrounding graph pipeline (kNN build, training, enhancement, G-cut
// clustering, evaluation metrics), wired together as file-based subcommands.

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "battn/clustering.hpp"
#include "battn/error.hpp"
#include "battn/io.hpp"
#include "battn/metrics.hpp"
#include "battn/multitest.hpp"
#include "battn/synthetic.hpp"
#include "battn/training.hpp"

namespace {

using namespace battn;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void write_text(const std::string& text, const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw ValidationError("cannot open for writing: " + path);
  std::fwrite(text.data(), 1, text.size(), f);
  std::fclose(f);
}

ScoredPairSet all_pairs_cosine(const FeatureMatrix& features, const LabelVector& labels) {
  const auto f = l2_normalize(features);
  ScoredPairSet pairs;
  pairs.reserve(f.rows() * (f.rows() - 1) / 2);
  for (std::size_t i = 0; i < f.rows(); ++i) {
    for (std::size_t j = i + 1; j < f.rows(); ++j) {
      pairs.push_back({dot(f.row(i), f.row(j)), labels[i] == labels[j]});
    }
  }
  return pairs;
}

EdgeScorer parse_scorer(const std::string& name) {
  if (name == "cosine") return EdgeScorer::cosine;
  if (name == "simm") return EdgeScorer::simm;
  throw ValidationError("unknown scorer: " + name);
}

EdgeMode parse_edge_mode(const std::string& name) {
  if (name == "union") return EdgeMode::union_directed;
  if (name == "mutual") return EdgeMode::intersection;
  throw ValidationError("unknown edge mode: " + name);
}

struct SimulateArgs {
  TestModel model;
  std::int64_t trials = 10000;
  std::uint64_t seed = 0;
  std::string mode = "binary";
  std::string out;
};

int cmd_simulate(SimulateArgs& args) {
  args.model.mode = args.mode == "real" ? TestMode::real : TestMode::binary;
  args.model.validate();
  const auto report = simulate(args.model, args.trials, args.seed);
  const double delta = args.model.delta();
  const std::int64_t feasible_m =
      args.model.mode == TestMode::binary ? min_m_binary(args.model) : min_m_real(args.model);

  std::vector<std::pair<std::string, std::string>> footer{
      {"mode", args.mode},
      {"m", std::to_string(args.model.m)},
      {"trials", std::to_string(report.trials)},
      {"seed", std::to_string(args.seed)},
      {"delta", fmt(delta)},
      {"threshold", fmt(report.threshold_used)},
      {"min_m", std::to_string(feasible_m)},
      {"noisy_mean", fmt(report.noisy_mean)},
      {"noisy_expected", fmt(report.noisy_expected)},
      {"miss_mean", fmt(report.miss_mean)},
      {"miss_expected", fmt(report.miss_expected)},
      {"noisy_rate_post", fmt(report.noisy_rate_post)},
      {"miss_rate_post", fmt(report.miss_rate_post)},
  };
  if (!args.out.empty()) write_simulation_csv(report, footer, args.out);
  for (const auto& [key, value] : footer) std::printf("%s=%s\n", key.c_str(), value.c_str());
  return 0;
}

struct EvalSimArgs {
  std::string features, labels, out;
  std::vector<std::size_t> ks{5, 10, 20};
  std::string mode = "real";
  double binary_threshold = 0.5;
};

int cmd_eval_sim(const EvalSimArgs& args) {
  const auto features = l2_normalize(read_features_auto(args.features));
  const auto labels = read_labels(args.labels);
  validate_labels(labels, features.rows());
  const TestMode mode = args.mode == "binary" ? TestMode::binary : TestMode::real;

  std::string csv = "k,enr,auc_s,auc_m,auc_delta\n";
  for (const std::size_t k : args.ks) {
    const auto graph = build_knn_graph(features, k);
    const double noise = avg_enr(graph, labels);
    ScoredPairSet sim_s_pairs;
    ScoredPairSet sim_m_pairs;
    for (std::size_t i = 0; i < graph.size(); ++i) {
      for (const auto& nb : graph.neighbors[i]) {
        const auto j = static_cast<std::size_t>(nb.id);
        const bool positive = labels[i] == labels[j];
        sim_s_pairs.push_back({nb.score, positive});
        sim_m_pairs.push_back(
            {sim_m(graph, features, i, j, mode, args.binary_threshold).value, positive});
      }
    }
    const double auc_s = auc(sim_s_pairs);
    const double auc_m = auc(sim_m_pairs);
    csv += std::to_string(k) + "," + fmt(noise) + "," + fmt(auc_s) + "," + fmt(auc_m) + "," +
           fmt(auc_m - auc_s) + "\n";
    // display convention: AUC shown x100, the CSV keeps raw [0,1] values
    std::printf("k=%zu enr=%s auc_s=%.2f auc_m=%.2f auc_delta=%.2f\n", k, fmt(noise).c_str(),
                100.0 * auc_s, 100.0 * auc_m, 100.0 * (auc_m - auc_s));
  }
  if (!args.out.empty()) write_text(csv, args.out);
  return 0;
}

void apply_config_file(TrainConfig& cfg, const std::string& path) {
  const auto kv = read_config_kv(path);
  for (const auto& [key, value] : kv) {
    try {
      if (key == "learning_rate") {
        cfg.learning_rate = std::stod(value);
      } else if (key == "epochs") {
        cfg.epochs = std::stoll(value);
      } else if (key == "margin_pos") {
        cfg.margin_pos = std::stod(value);
      } else if (key == "margin_neg") {
        cfg.margin_neg = std::stod(value);
      } else if (key == "k") {
        cfg.k = std::stoul(value);
      } else if (key == "k_seed") {
        cfg.k_seed = std::stoul(value);
      } else if (key == "layers") {
        cfg.layers = std::stoul(value);
      } else if (key == "m_d") {
        cfg.m_d = std::stoul(value);
      } else if (key == "seed") {
        cfg.seed = std::stoull(value);
      } else if (key == "slope") {
        cfg.slope = std::stod(value);
      } else if (key == "variant") {
        cfg.variant = parse_variant(value);
      } else if (key == "fusion") {
        cfg.fusion = parse_fusion(value);
      } else if (key == "use_w_qart") {
        cfg.use_w_qart = value == "1" || value == "true";
      } else if (key == "all_pairs") {
        cfg.all_pairs = value == "1" || value == "true";
      } else if (key == "use_head") {
        cfg.use_head = value == "1" || value == "true";
      } else {
        throw ValidationError("config: unknown key '" + key + "'");
      }
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception&) {
      throw ValidationError("config: bad value for key '" + key + "'");
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multiple-tests similarity and band-attention graph structure toolkit"};
  app.require_subcommand(1);

  SyntheticConfig syn;
  std::string syn_out, syn_labels_out;
  auto* gen = app.add_subcommand("gen-synthetic", "generate labeled features on the unit sphere");
  gen->add_option("--classes", syn.classes)->check(CLI::PositiveNumber);
  gen->add_option("--samples", syn.samples_per_class, "samples per class")
      ->check(CLI::PositiveNumber);
  gen->add_option("--dim", syn.dim)->check(CLI::PositiveNumber);
  gen->add_option("--noise", syn.noise, "Gaussian perturbation scale");
  gen->add_option("--seed", syn.seed);
  gen->add_option("--out", syn_out, "output FEAT file")->required();
  gen->add_option("--labels-out", syn_labels_out, "output label file")->required();

  std::string bg_features, bg_labels, bg_out;
  std::size_t bg_k = 10;
  auto* bg = app.add_subcommand("build-graph", "build the exact kNN graph");
  bg->add_option("--features", bg_features, "FEAT or CSV feature file")->required();
  bg->add_option("--k", bg_k)->check(CLI::PositiveNumber);
  bg->add_option("--labels", bg_labels, "optional labels; prints avg ENR");
  bg->add_option("--out", bg_out, "kNN CSV")->required();

  EvalSimArgs ev;
  auto* evc = app.add_subcommand("eval-sim", "compare Sim-S and Sim-M AUC over kNN pairs");
  evc->add_option("--features", ev.features)->required();
  evc->add_option("--labels", ev.labels)->required();
  evc->add_option("--k", ev.ks, "k values to sweep");
  evc->add_option("--mode", ev.mode)->check(CLI::IsMember({"binary", "real"}));
  evc->add_option("--simm-threshold", ev.binary_threshold, "single-test threshold, binary mode");
  evc->add_option("--out", ev.out, "output CSV");

  SimulateArgs sim;
  auto* simc = app.add_subcommand("simulate", "Monte-Carlo check of the error-rate bounds");
  simc->add_option("--p", sim.model.p, "same-category connect probability")->required();
  simc->add_option("--q", sim.model.q, "cross-category connect probability")->required();
  simc->add_option("--alpha", sim.model.alpha, "same-category pool fraction")->required();
  simc->add_option("--gamma", sim.model.gamma, "error reduction factor")->required();
  simc->add_option("--m", sim.model.m, "candidate pool size");
  simc->add_option("--trials", sim.trials)->check(CLI::PositiveNumber);
  simc->add_option("--seed", sim.seed);
  simc->add_option("--mode", sim.mode)->check(CLI::IsMember({"binary", "real"}));
  simc->add_option("--s-plus", sim.model.s_plus, "same-category mean similarity (real mode)");
  simc->add_option("--s-minus", sim.model.s_minus, "cross-category mean similarity (real mode)");
  simc->add_option("--sd", sim.model.noise_sd, "similarity noise sd (real mode)");
  simc->add_option("--out", sim.out, "output CSV with key=value footer");

  TrainConfig tc;       // effective config
  TrainConfig cli_tc;   // receives command-line values
  std::string tr_features, tr_labels, tr_config, tr_checkpoint, tr_trace;
  std::string tr_variant = "band", tr_fusion = "weighted-sum";
  bool tr_no_w_qart = false, tr_all_pairs = false, tr_no_head = false;
  auto* tr = app.add_subcommand("train", "train the attention stack on labeled features");
  tr->add_option("--features", tr_features)->required();
  tr->add_option("--labels", tr_labels)->required();
  tr->add_option("--config", tr_config, "key=value config file; flags override");
  auto* opt_k = tr->add_option("--k", cli_tc.k)->check(CLI::PositiveNumber);
  auto* opt_layers = tr->add_option("--layers", cli_tc.layers)->check(CLI::PositiveNumber);
  auto* opt_epochs = tr->add_option("--epochs", cli_tc.epochs)->check(CLI::PositiveNumber);
  auto* opt_lr = tr->add_option("--lr", cli_tc.learning_rate);
  auto* opt_seed = tr->add_option("--seed", cli_tc.seed);
  auto* opt_mp = tr->add_option("--margin-pos", cli_tc.margin_pos);
  auto* opt_mn = tr->add_option("--margin-neg", cli_tc.margin_neg);
  auto* opt_md = tr->add_option("--m-d", cli_tc.m_d, "query/key dimension (0 = feature dim)");
  auto* opt_kseed = tr->add_option("--k-seed", cli_tc.k_seed, "seeds per optimizer step");
  auto* opt_slope = tr->add_option("--slope", cli_tc.slope, "leaky rectifier slope");
  auto* opt_variant =
      tr->add_option("--variant", tr_variant)
          ->check(CLI::IsMember({"gcn", "self", "qart", "qart-tilde", "band", "band-tilde"}));
  auto* opt_fusion = tr->add_option("--fusion", tr_fusion)
                         ->check(CLI::IsMember({"weighted-sum", "plain-sum", "product"}));
  auto* opt_no_wq = tr->add_flag("--no-w-qart", tr_no_w_qart, "identity qart projections");
  auto* opt_ap = tr->add_flag("--all-pairs", tr_all_pairs, "score all subgraph pairs");
  auto* opt_nh = tr->add_flag("--no-head", tr_no_head, "drop the fully connected head");
  tr->add_option("--checkpoint-out", tr_checkpoint)->required();
  tr->add_option("--trace-out", tr_trace, "loss trace CSV");

  std::string en_features, en_checkpoint, en_out;
  auto* en = app.add_subcommand("enhance", "run features through a trained stack");
  en->add_option("--features", en_features)->required();
  en->add_option("--checkpoint", en_checkpoint)->required();
  en->add_option("--out", en_out, "output FEAT file")->required();

  std::string cl_features, cl_out;
  std::size_t cl_k = 10;
  double cl_threshold = 0.5;
  std::string cl_scorer = "cosine", cl_edge_mode = "union";
  auto* cl = app.add_subcommand("cluster", "G-cut clustering of the kNN graph");
  cl->add_option("--features", cl_features)->required();
  cl->add_option("--k", cl_k)->check(CLI::PositiveNumber);
  cl->add_option("--threshold", cl_threshold, "keep edges with score strictly above");
  cl->add_option("--scorer", cl_scorer)->check(CLI::IsMember({"cosine", "simm"}));
  cl->add_option("--edge-mode", cl_edge_mode)->check(CLI::IsMember({"union", "mutual"}));
  cl->add_option("--out", cl_out, "assignment CSV")->required();

  std::string me_features, me_labels, me_assignment, me_out, me_roc;
  auto* me = app.add_subcommand("metrics", "AUC/ROC, mAP, and clustering F-scores");
  me->add_option("--features", me_features)->required();
  me->add_option("--labels", me_labels)->required();
  me->add_option("--assignment", me_assignment, "cluster assignment CSV");
  me->add_option("--out", me_out, "key=value summary file");
  me->add_option("--roc-out", me_roc, "ROC CSV");

  std::string sw_features, sw_labels, sw_out;
  std::size_t sw_k = 10;
  std::string sw_scorer = "cosine", sw_edge_mode = "union";
  double sw_start = 0.0, sw_step = 0.05, sw_end = 1.0;
  auto* sw = app.add_subcommand("sweep", "threshold sweep for the best F-score balance");
  sw->add_option("--features", sw_features)->required();
  sw->add_option("--labels", sw_labels)->required();
  sw->add_option("--k", sw_k)->check(CLI::PositiveNumber);
  sw->add_option("--scorer", sw_scorer)->check(CLI::IsMember({"cosine", "simm"}));
  sw->add_option("--edge-mode", sw_edge_mode)->check(CLI::IsMember({"union", "mutual"}));
  sw->add_option("--grid-start", sw_start);
  sw->add_option("--grid-step", sw_step)->check(CLI::PositiveNumber);
  sw->add_option("--grid-end", sw_end);
  sw->add_option("--out", sw_out, "sweep CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (gen->parsed()) {
      const auto data = gen_synthetic(syn);
      write_feat(data.features, syn_out);
      write_labels(data.labels, syn_labels_out);
      std::printf("nodes=%zu dim=%zu classes=%zu\n", data.features.rows(), data.features.cols(),
                  syn.classes);
      return 0;
    }
    if (bg->parsed()) {
      const auto features = l2_normalize(read_features_auto(bg_features));
      const auto graph = build_knn_graph(features, bg_k);
      write_knn_csv(graph, bg_out);
      if (!bg_labels.empty()) {
        const auto labels = read_labels(bg_labels);
        std::printf("avg_enr=%s\n", fmt(avg_enr(graph, labels)).c_str());
      }
      std::printf("nodes=%zu k=%zu\n", graph.size(), graph.k);
      return 0;
    }
    if (evc->parsed()) return cmd_eval_sim(ev);
    if (simc->parsed()) return cmd_simulate(sim);
    if (tr->parsed()) {
      const auto features = read_features_auto(tr_features);
      const auto labels = read_labels(tr_labels);
      if (!tr_config.empty()) apply_config_file(tc, tr_config);
      if (opt_k->count() > 0) tc.k = cli_tc.k;
      if (opt_layers->count() > 0) tc.layers = cli_tc.layers;
      if (opt_epochs->count() > 0) tc.epochs = cli_tc.epochs;
      if (opt_lr->count() > 0) tc.learning_rate = cli_tc.learning_rate;
      if (opt_seed->count() > 0) tc.seed = cli_tc.seed;
      if (opt_mp->count() > 0) tc.margin_pos = cli_tc.margin_pos;
      if (opt_mn->count() > 0) tc.margin_neg = cli_tc.margin_neg;
      if (opt_md->count() > 0) tc.m_d = cli_tc.m_d;
      if (opt_kseed->count() > 0) tc.k_seed = cli_tc.k_seed;
      if (opt_slope->count() > 0) tc.slope = cli_tc.slope;
      if (opt_variant->count() > 0) tc.variant = parse_variant(tr_variant);
      if (opt_fusion->count() > 0) tc.fusion = parse_fusion(tr_fusion);
      if (opt_no_wq->count() > 0) tc.use_w_qart = !tr_no_w_qart;
      if (opt_ap->count() > 0) tc.all_pairs = tr_all_pairs;
      if (opt_nh->count() > 0) tc.use_head = !tr_no_head;
      const auto result = train(features, labels, tc);
      save_stack(result.stack, tr_checkpoint);
      if (!tr_trace.empty()) write_trace_csv(result.trace, tr_trace);
      std::printf("epochs=%lld final_loss=%s checkpoint=%s\n", static_cast<long long>(tc.epochs),
                  fmt(result.trace.back().loss).c_str(), tr_checkpoint.c_str());
      return 0;
    }
    if (en->parsed()) {
      const auto features = l2_normalize(read_features_auto(en_features));
      const auto stack = load_stack(en_checkpoint);
      const std::size_t k = stack.layers.front().dim_l() - 1;
      const auto graph = build_knn_graph(features, k);
      const auto enhanced = enhance(features, graph, stack);
      write_feat(enhanced, en_out);
      std::printf("nodes=%zu k=%zu out=%s\n", enhanced.rows(), k, en_out.c_str());
      return 0;
    }
    if (cl->parsed()) {
      const auto features = l2_normalize(read_features_auto(cl_features));
      const auto graph = build_knn_graph(features, cl_k);
      const auto edges =
          edges_from_knn(graph, features, parse_scorer(cl_scorer), parse_edge_mode(cl_edge_mode));
      const auto assignment = g_cut(edges, features.rows(), cl_threshold);
      write_assignment_csv(assignment, cl_out);
      std::int64_t clusters = 0;
      for (auto c : assignment) clusters = std::max(clusters, c + 1);
      std::printf("nodes=%zu clusters=%lld\n", assignment.size(),
                  static_cast<long long>(clusters));
      return 0;
    }
    if (me->parsed()) {
      const auto features = read_features_auto(me_features);
      const auto labels = read_labels(me_labels);
      validate_labels(labels, features.rows());
      const auto pairs = all_pairs_cosine(features, labels);
      const double auc_value = auc(pairs);
      const auto map_result = mean_average_precision(features, labels);
      std::vector<std::pair<std::string, std::string>> summary{
          {"auc", fmt(auc_value)},
          {"map", fmt(map_result.value)},
          {"map_probes_used", std::to_string(map_result.probes_used)},
          {"map_probes_skipped", std::to_string(map_result.probes_skipped)},
      };
      if (!me_assignment.empty()) {
        const auto assignment = read_assignment_csv(me_assignment);
        const auto fp = pairwise_f(assignment, labels);
        const auto fb = bcubed_f(assignment, labels);
        summary.push_back({"fp", fmt(fp.f)});
        summary.push_back({"fp_precision", fmt(fp.precision)});
        summary.push_back({"fp_recall", fmt(fp.recall)});
        summary.push_back({"fb", fmt(fb.f)});
        summary.push_back({"fb_precision", fmt(fb.precision)});
        summary.push_back({"fb_recall", fmt(fb.recall)});
      }
      if (!me_roc.empty()) write_roc_csv(roc_points(pairs), me_roc);
      std::string text;
      for (const auto& [key, value] : summary) text += key + "=" + value + "\n";
      if (!me_out.empty()) write_text(text, me_out);
      std::fputs(text.c_str(), stdout);
      return 0;
    }
    if (sw->parsed()) {
      const auto features = l2_normalize(read_features_auto(sw_features));
      const auto labels = read_labels(sw_labels);
      validate_labels(labels, features.rows());
      const auto graph = build_knn_graph(features, sw_k);
      const auto edges =
          edges_from_knn(graph, features, parse_scorer(sw_scorer), parse_edge_mode(sw_edge_mode));
      if (!(sw_end >= sw_start)) throw ValidationError("sweep: grid end before start");
      std::vector<double> grid;
      for (double t = sw_start; t <= sw_end + 1e-12; t += sw_step) grid.push_back(t);
      const auto sweep = threshold_sweep(edges, features.rows(), labels, grid);
      if (!sw_out.empty()) write_sweep_csv(sweep, sw_out);
      const auto& best = sweep.rows[sweep.best_index];
      std::printf("best_threshold=%s fp=%s fb=%s\n", fmt(best.threshold).c_str(),
                  fmt(best.fp).c_str(), fmt(best.fb).c_str());
      return 0;
    }
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitNumeric;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
