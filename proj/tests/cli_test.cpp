#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "sbanm/eval.hpp"
#include "sbanm/graph_io.hpp"

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = sbanm::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("sbanm_cli_" + std::to_string(::getpid()) + "_" +
           ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  std::string path(const std::string& rel) const { return (dir / rel).string(); }
  fs::path dir;
};

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"fit", "--input", path("x.tsv")}).code, 1);  // --blocks missing
  EXPECT_EQ(run({"simulate", "--out", path("s"), "--blocks", "3", "--experiment2"}).code, 1);
  EXPECT_EQ(run({"simulate", "--out", path("s"), "--experiment2", "--layers", "2"}).code, 1);
  EXPECT_EQ(run({"simulate", "--out", path("s"), "--blocks", "5:3"}).code, 1);
  const CliRun bad = run({"build-net", "--responses", path("r.csv"), "--transform", "cosine", "--out", path("b")});
  EXPECT_EQ(bad.code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(Cli, DataErrorsExitTwo) {
  EXPECT_EQ(run({"fit", "--input", path("missing.tsv"), "--blocks", "2", "--out", path("f")}).code, 2);
  std::ofstream(path("bad.tsv")) << "garbage\n";
  const CliRun r = run({"fit", "--input", path("bad.tsv"), "--blocks", "2", "--out", path("f")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST_F(Cli, SimulateFitEvalRoundTrip) {
  const CliRun s = run({"simulate", "--layers", "2", "--nodes", "60", "--blocks", "3", "--candidates", "10",
                     "--keep-frac", "0.1", "--seed", "4", "--out", path("sim")});
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_EQ(s.out.rfind("rank\tcandidate\tQ\tmin_bhattacharyya\tsizes\n", 0), 0u);
  EXPECT_NE(s.err.find("# simulate layers=2 nodes=60 blocks=3:3"), std::string::npos);
  ASSERT_TRUE(fs::exists(dir / "sim" / "candidate_0" / "net.tsv"));
  EXPECT_EQ(slurp(dir / "sim" / "candidates.tsv"), s.out);

  const CliRun f = run({"fit", "--input", path("sim/candidate_0/net.tsv"), "--blocks", "3", "--seed", "1", "--out",
                     path("fit")});
  ASSERT_EQ(f.code, 0) << f.err;
  EXPECT_NE(f.out.find("converged\t"), std::string::npos);
  EXPECT_NE(f.out.find("noise_block\t"), std::string::npos);
  EXPECT_NE(f.err.find("iter\t1\telbo="), std::string::npos);
  for (const char* name : {"memberships.csv", "params.json", "trace.tsv"}) EXPECT_TRUE(fs::exists(dir / "fit" / name));
  EXPECT_EQ(slurp(dir / "fit" / "trace.tsv").rfind("iteration\telbo\n", 0), 0u);
  const sbanm::ParamsDocument doc = sbanm::read_params(dir / "fit" / "params.json");
  EXPECT_EQ(doc.params.Q, 3u);

  const CliRun e = run({"eval", "--truth", path("sim/candidate_0/truth.csv"), "--pred", path("fit/memberships.csv")});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(e.out.rfind("ari\tnmi\texact_recovery\n", 0), 0u);
  const auto truth = sbanm::read_memberships(dir / "sim" / "candidate_0" / "truth.csv");
  const auto pred = sbanm::read_memberships(dir / "fit" / "memberships.csv");
  const std::string want = "ari\tnmi\texact_recovery\n" + sbanm::format_double(sbanm::ari(truth, pred)) + "\t" +
                           sbanm::format_double(sbanm::nmi(truth, pred)) + "\t" +
                           (sbanm::exact_recovery(truth, pred) ? "true" : "false") + "\n";
  EXPECT_EQ(e.out, want);
}

TEST_F(Cli, OutputsIndependentOfThreadCount) {
  ASSERT_EQ(run({"simulate", "--layers", "3", "--nodes", "80", "--blocks", "3:4", "--candidates", "6", "--keep-frac",
                 "0.5", "--seed", "2", "--threads", "1", "--out", path("a")})
                .code,
            0);
  ASSERT_EQ(run({"simulate", "--layers", "3", "--nodes", "80", "--blocks", "3:4", "--candidates", "6", "--keep-frac",
                 "0.5", "--seed", "2", "--threads", "8", "--out", path("b")})
                .code,
            0);
  for (const char* f : {"candidates.tsv", "candidate_0/net.tsv", "candidate_2/truth.csv", "candidate_1/params.json"}) {
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  }
  const CliRun f1 = run({"fit", "--input", path("a/candidate_0/net.tsv"), "--blocks", "3", "--threads", "1", "--out",
                      path("f1")});
  const CliRun f8 = run({"fit", "--input", path("a/candidate_0/net.tsv"), "--blocks", "3", "--threads", "8", "--out",
                      path("f8")});
  ASSERT_EQ(f1.code, 0);
  ASSERT_EQ(f8.code, 0);
  EXPECT_EQ(f1.out, f8.out);
  for (const char* f : {"memberships.csv", "params.json", "trace.tsv"}) {
    EXPECT_EQ(slurp(dir / "f1" / f), slurp(dir / "f8" / f)) << f;
  }
}

TEST_F(Cli, ExperimentTwoWithSvi) {
  const CliRun s = run({"simulate", "--experiment2", "--seed", "3", "--out", path("e2")});
  ASSERT_EQ(s.code, 0) << s.err;
  const CliRun f = run({"fit", "--input", path("e2/net.tsv"), "--blocks", "4", "--svi", "--svi-a", "60", "--out",
                     path("fit")});
  ASSERT_EQ(f.code, 0) << f.err;
  EXPECT_NE(f.err.find("svi\t1\telbo="), std::string::npos);
  const CliRun e = run({"eval", "--truth", path("e2/truth.csv"), "--pred", path("fit/memberships.csv")});
  EXPECT_NE(e.out.find("\ttrue\n"), std::string::npos) << e.out;
}

TEST_F(Cli, SelectPrintsTable) {
  ASSERT_EQ(run({"simulate", "--layers", "2", "--nodes", "60", "--blocks", "3", "--seed", "8", "--out", path("s")}).code,
            0);
  const CliRun r = run({"select", "--input", path("s/net.tsv"), "--qmin", "2", "--qmax", "4", "--out", path("best")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("Q\ticl\telbo\tconverged\n2\t", 0), 0u);
  EXPECT_NE(r.out.find("\nbest\t"), std::string::npos);
  EXPECT_EQ(slurp(dir / "best" / "selection.tsv"), r.out);
  EXPECT_EQ(run({"select", "--input", path("s/net.tsv"), "--qmin", "4", "--qmax", "2"}).code, 1);
}

TEST_F(Cli, BuildNetTransforms) {
  std::ofstream(path("r.csv")) << "subject,mood:a,mood:b,anx:c\ns1,1,1,NA\ns2,1,0,1\ns3,0,0,1\n";
  const CliRun r = run({"build-net", "--responses", path("r.csv"), "--transform", "fisher-agreement", "--out", path("n")});
  ASSERT_EQ(r.code, 0) << r.err;
  const sbanm::MultilayerNetwork net = sbanm::read_network(dir / "n" / "net.tsv");
  EXPECT_EQ(net.num_nodes(), 3u);
  EXPECT_EQ(net.num_layers(), 2u);

  sbanm::MultilayerNetwork counts(3, 1);
  counts.set_weight(0, 1, 0, 2.0);
  counts.set_weight(0, 2, 0, 6.0);
  counts.set_weight(1, 2, 0, 1.0);
  sbanm::write_network(counts, dir / "counts.tsv");
  const CliRun l =
      run({"build-net", "--responses", path("counts.tsv"), "--transform", "logit-strength", "--out", path("l")});
  ASSERT_EQ(l.code, 0) << l.err;
  EXPECT_EQ(slurp(dir / "l" / "net.tsv"), sbanm::format_network(sbanm::normalize_logit(counts)));

  std::ofstream(path("bad.csv")) << "subject,a\ns1,1\n";
  EXPECT_EQ(run({"build-net", "--responses", path("bad.csv"), "--transform", "fisher-agreement", "--out", path("x")})
                .code,
            2);
}

}  // namespace
