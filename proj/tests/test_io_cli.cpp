#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "battn/error.hpp"
#include "battn/io.hpp"
#include "battn/knn.hpp"
#include "battn/multitest.hpp"
#include "battn/synthetic.hpp"
#include "doctest.h"

using namespace battn;
namespace fs = std::filesystem;

namespace {

const fs::path kTmp = fs::path("cli_test_tmp");

struct TmpDir {
  TmpDir() {
    fs::remove_all(kTmp);
    fs::create_directories(kTmp);
  }
  ~TmpDir() { fs::remove_all(kTmp); }
};

std::string path(const std::string& name) { return (kTmp / name).string(); }

int run(const std::string& args) {
  const std::string cmd = std::string(BATTN_CLI_PATH) + " " + args + " > " + path("stdout.txt") +
                          " 2> " + path("stderr.txt");
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("FEAT files round-trip losslessly") {
  TmpDir tmp;
  SyntheticConfig cfg;
  cfg.classes = 3;
  cfg.samples_per_class = 5;
  cfg.dim = 4;
  cfg.seed = 1;
  const auto data = gen_synthetic(cfg);
  write_feat(data.features, path("a.feat"));
  const auto loaded = read_feat(path("a.feat"));
  write_feat(loaded, path("b.feat"));
  CHECK(slurp(path("a.feat")) == slurp(path("b.feat")));
  CHECK(loaded.rows() == 15);
  CHECK(loaded.cols() == 4);
  for (std::size_t i = 0; i < loaded.values.data.size(); ++i) {
    CHECK(loaded.values.data[i] ==
          static_cast<double>(static_cast<float>(data.features.values.data[i])));
  }
}

TEST_CASE("FEAT reader rejects corrupt input") {
  TmpDir tmp;
  {
    std::ofstream os(path("bad.feat"), std::ios::binary);
    os << "NOPE";
  }
  CHECK_THROWS_AS(read_feat(path("bad.feat")), ValidationError);
  CHECK_THROWS_AS(read_feat(path("missing.feat")), ValidationError);
}

TEST_CASE("feature CSV import accepts rectangles and rejects ragged rows") {
  TmpDir tmp;
  {
    std::ofstream os(path("ok.csv"));
    os << "1.0,2.0\n3.0,4.5\n";
  }
  const auto f = read_features_csv(path("ok.csv"));
  CHECK(f.rows() == 2);
  CHECK(f.values.at(1, 1) == doctest::Approx(4.5));
  CHECK(read_features_auto(path("ok.csv")).rows() == 2);
  {
    std::ofstream os(path("ragged.csv"));
    os << "1.0,2.0\n3.0\n";
  }
  CHECK_THROWS_AS(read_features_csv(path("ragged.csv")), ValidationError);
  {
    std::ofstream os(path("junk.csv"));
    os << "1.0,abc\n";
  }
  CHECK_THROWS_AS(read_features_csv(path("junk.csv")), ValidationError);
}

TEST_CASE("label files round-trip and reject bad lines") {
  TmpDir tmp;
  write_labels(LabelVector{0, 1, 2, 1}, path("l.txt"));
  CHECK(read_labels(path("l.txt")) == LabelVector{0, 1, 2, 1});
  {
    std::ofstream os(path("neg.txt"));
    os << "0\n-3\n";
  }
  CHECK_THROWS_AS(read_labels(path("neg.txt")), ValidationError);
}

TEST_CASE("assignment CSV round-trips") {
  TmpDir tmp;
  const ClusterAssignment a{0, 0, 1, 2, 1};
  write_assignment_csv(a, path("a.csv"));
  CHECK(read_assignment_csv(path("a.csv")) == a);
}

TEST_CASE("config parser handles comments and rejects malformed lines") {
  TmpDir tmp;
  {
    std::ofstream os(path("cfg.txt"));
    os << "# a comment\n"
       << "epochs = 12\n"
       << "learning_rate=0.004  # trailing comment\n"
       << "\n";
  }
  const auto kv = read_config_kv(path("cfg.txt"));
  CHECK(kv.at("epochs") == "12");
  CHECK(kv.at("learning_rate") == "0.004");
  {
    std::ofstream os(path("bad.txt"));
    os << "no equals sign here\n";
  }
  CHECK_THROWS_AS(read_config_kv(path("bad.txt")), ValidationError);
}

TEST_CASE("cli: gen-synthetic is deterministic per seed") {
  TmpDir tmp;
  REQUIRE(run("gen-synthetic --classes 3 --samples 4 --dim 5 --noise 0.2 --seed 9 --out " +
              path("f1.feat") + " --labels-out " + path("l1.txt")) == 0);
  REQUIRE(run("gen-synthetic --classes 3 --samples 4 --dim 5 --noise 0.2 --seed 9 --out " +
              path("f2.feat") + " --labels-out " + path("l2.txt")) == 0);
  CHECK(slurp(path("f1.feat")) == slurp(path("f2.feat")));
  CHECK(slurp(path("l1.txt")) == slurp(path("l2.txt")));
  REQUIRE(run("gen-synthetic --classes 2 --samples 3 --dim 4 --noise 0 --seed 1 --out " +
              path("f0.feat") + " --labels-out " + path("l0.txt")) == 0);
  // zero noise: within-class cosine is 1
  const auto f0 = read_feat(path("f0.feat"));
  CHECK(sim_s(f0.row(0), f0.row(1)) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("cli: simulate writes a deterministic CSV whose footer matches the library") {
  TmpDir tmp;
  const std::string flags =
      "simulate --p 0.8 --q 0.2 --alpha 0.7 --gamma 10 --m 500 --trials 400 --seed 7 --out ";
  REQUIRE(run(flags + path("s1.csv")) == 0);
  REQUIRE(run(flags + path("s2.csv")) == 0);
  const std::string body = slurp(path("s1.csv"));
  CHECK(body == slurp(path("s2.csv")));
  CHECK(body.find("trial,noisy_single,miss_single,simm_same,simm_cross") == 0);

  TestModel model;
  model.p = 0.8;
  model.q = 0.2;
  model.alpha = 0.7;
  model.gamma = 10.0;
  model.m = 500;
  char expect_min_m[64];
  std::snprintf(expect_min_m, sizeof(expect_min_m), "min_m=%lld",
                static_cast<long long>(min_m_binary(model)));
  CHECK(body.find(expect_min_m) != std::string::npos);
  char expect_threshold[64];
  std::snprintf(expect_threshold, sizeof(expect_threshold), "threshold=%.6f",
                threshold_s_t(model, model.delta()));
  CHECK(body.find(expect_threshold) != std::string::npos);
}

TEST_CASE("cli: usage errors exit 2, data errors 3, numeric failures 4") {
  TmpDir tmp;
  CHECK(run("simulate --p 0.8 --q 0.2 --alpha 0.7") == 2);  // missing --gamma
  CHECK(run("no-such-command") == 2);
  CHECK(run("build-graph --features " + path("missing.feat") + " --k 3 --out " + path("g.csv")) ==
        3);
  // q = 0 makes delta zero: the threshold is undefined
  CHECK(run("simulate --p 0.8 --q 0 --alpha 0.7 --gamma 2 --trials 10 --seed 1") == 4);
}

TEST_CASE("cli: cluster with an impossible threshold yields singletons") {
  TmpDir tmp;
  REQUIRE(run("gen-synthetic --classes 2 --samples 4 --dim 4 --noise 0.1 --seed 3 --out " +
              path("f.feat") + " --labels-out " + path("l.txt")) == 0);
  REQUIRE(run("cluster --features " + path("f.feat") + " --k 3 --threshold 2.0 --out " +
              path("a.csv")) == 0);
  const auto a = read_assignment_csv(path("a.csv"));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == static_cast<std::int64_t>(i));
}

TEST_CASE("cli: train rejects unknown config keys") {
  TmpDir tmp;
  REQUIRE(run("gen-synthetic --classes 2 --samples 5 --dim 4 --noise 0.2 --seed 3 --out " +
              path("f.feat") + " --labels-out " + path("l.txt")) == 0);
  {
    std::ofstream os(path("cfg.txt"));
    os << "epochs=2\nbogus_knob=1\n";
  }
  CHECK(run("train --features " + path("f.feat") + " --labels " + path("l.txt") + " --config " +
            path("cfg.txt") + " --checkpoint-out " + path("ck.batt")) == 3);
}

TEST_CASE("cli: train/enhance/metrics pipeline reruns byte-identically") {
  TmpDir tmp;
  REQUIRE(run("gen-synthetic --classes 3 --samples 8 --dim 6 --noise 0.25 --seed 5 --out " +
              path("f.feat") + " --labels-out " + path("l.txt")) == 0);
  const std::string train_flags = "train --features " + path("f.feat") + " --labels " +
                                  path("l.txt") + " --k 5 --epochs 4 --seed 2 --checkpoint-out ";
  REQUIRE(run(train_flags + path("ck1.batt") + " --trace-out " + path("t1.csv")) == 0);
  REQUIRE(run(train_flags + path("ck2.batt") + " --trace-out " + path("t2.csv")) == 0);
  CHECK(slurp(path("ck1.batt")) == slurp(path("ck2.batt")));
  CHECK(slurp(path("t1.csv")) == slurp(path("t2.csv")));

  REQUIRE(run("enhance --features " + path("f.feat") + " --checkpoint " + path("ck1.batt") +
              " --out " + path("e1.feat")) == 0);
  REQUIRE(run("enhance --features " + path("f.feat") + " --checkpoint " + path("ck1.batt") +
              " --out " + path("e2.feat")) == 0);
  CHECK(slurp(path("e1.feat")) == slurp(path("e2.feat")));

  REQUIRE(run("metrics --features " + path("e1.feat") + " --labels " + path("l.txt") + " --out " +
              path("m1.txt") + " --roc-out " + path("r1.csv")) == 0);
  REQUIRE(run("metrics --features " + path("e1.feat") + " --labels " + path("l.txt") + " --out " +
              path("m2.txt") + " --roc-out " + path("r2.csv")) == 0);
  CHECK(slurp(path("m1.txt")) == slurp(path("m2.txt")));
  CHECK(slurp(path("r1.csv")) == slurp(path("r2.csv")));
  CHECK(slurp(path("m1.txt")).find("auc=") != std::string::npos);
  CHECK(slurp(path("r1.csv")).find("fpr,tpr,threshold") == 0);
}

TEST_CASE("cli: eval-sim emits one row per k and reruns byte-identically") {
  TmpDir tmp;
  REQUIRE(run("gen-synthetic --classes 4 --samples 10 --dim 8 --noise 0.25 --seed 6 --out " +
              path("f.feat") + " --labels-out " + path("l.txt")) == 0);
  const std::string flags = "eval-sim --features " + path("f.feat") + " --labels " + path("l.txt") +
                            " --k 5 --out ";
  REQUIRE(run(flags + path("e1.csv")) == 0);
  REQUIRE(run(flags + path("e2.csv")) == 0);
  const std::string body = slurp(path("e1.csv"));
  CHECK(body == slurp(path("e2.csv")));
  std::size_t lines = 0;
  for (char c : body) lines += c == '\n';
  CHECK(lines == 2);  // header + one data row
  CHECK(body.find("k,enr,auc_s,auc_m,auc_delta") == 0);
}

TEST_CASE("raising generator noise raises the kNN edge noise rate") {
  double prev = -1.0;
  for (double noise : {0.05, 0.2, 0.35, 0.5}) {
    SyntheticConfig cfg;
    cfg.classes = 5;
    cfg.samples_per_class = 20;
    cfg.dim = 8;
    cfg.noise = noise;
    cfg.seed = 12;
    const auto data = gen_synthetic(cfg);
    const auto graph = build_knn_graph(data.features, 6);
    const double rate = avg_enr(graph, data.labels);
    CHECK(rate >= prev);
    prev = rate;
  }
}

TEST_CASE("cli: metrics consumes a cluster assignment and reports both F-scores") {
  TmpDir tmp;
  REQUIRE(run("gen-synthetic --classes 3 --samples 10 --dim 8 --noise 0.15 --seed 4 --out " +
              path("f.feat") + " --labels-out " + path("l.txt")) == 0);
  REQUIRE(run("cluster --features " + path("f.feat") + " --k 5 --threshold 0.8 --out " +
              path("a.csv")) == 0);
  REQUIRE(run("metrics --features " + path("f.feat") + " --labels " + path("l.txt") +
              " --assignment " + path("a.csv") + " --out " + path("m.txt")) == 0);
  const auto body = slurp(path("m.txt"));
  CHECK(body.find("fp=") != std::string::npos);
  CHECK(body.find("fb=") != std::string::npos);
  CHECK(body.find("fp_precision=") != std::string::npos);
  CHECK(body.find("fb_recall=") != std::string::npos);
}

TEST_CASE("cli: knn export carries the documented header") {
  TmpDir tmp;
  REQUIRE(run("gen-synthetic --classes 2 --samples 4 --dim 4 --noise 0.2 --seed 8 --out " +
              path("f.feat") + " --labels-out " + path("l.txt")) == 0);
  REQUIRE(run("build-graph --features " + path("f.feat") + " --k 3 --labels " + path("l.txt") +
              " --out " + path("knn.csv")) == 0);
  const auto body = slurp(path("knn.csv"));
  CHECK(body.find("probe,neighbor,score") == 0);
  // 8 nodes x 3 neighbors + header
  std::size_t lines = 0;
  for (char c : body) lines += c == '\n';
  CHECK(lines == 25);
}
