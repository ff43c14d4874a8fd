#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <string>

#include "marca/io.hpp"

using namespace marca;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string output;  // stdout and stderr
};

Outcome run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + MARCA_CLI_PATH + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {-1, ""};
  std::string out;
  std::array<char, 4096> buf;
  while (std::size_t n = fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

// A synthetic dataset and trained bundle, created once for the whole suite.
class Cli : public ::testing::Test {
 protected:
  static fs::path dir;

  static void SetUpTestSuite() {
    dir = fs::temp_directory_path() / ("marca_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    ASSERT_EQ(run("synth " + (dir / "data").string() + " --holdouts 3").code, 0);
    ASSERT_EQ(run("train " + (dir / "data/manifest.json").string() + " " +
                  (dir / "bundle").string()).code, 0);
  }
  static void TearDownTestSuite() { fs::remove_all(dir); }

  static std::string p(const std::string& rel) { return (dir / rel).string(); }
};

fs::path Cli::dir;

}  // namespace

TEST_F(Cli, TrainWritesBundleAndReports) {
  for (const char* f : {"schema.json", "basis_0.marc", "basis_1.marc", "selectors.marc",
                        "G.marc", "E.marc", "diagnostics.json", "config.json"})
    EXPECT_TRUE(fs::exists(dir / "bundle" / f)) << f;
  const Outcome r = run("train " + p("data/manifest.json") + " " + p("bundle_b"));
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("iterations="), std::string::npos);
  EXPECT_NE(r.output.find("residual="), std::string::npos);
  EXPECT_NE(r.output.find("wall_time_s="), std::string::npos);
  // same seed, same bytes
  for (const char* f : {"G.marc", "E.marc", "selectors.marc", "diagnostics.json"})
    EXPECT_EQ(io::read_file(dir / "bundle" / f), io::read_file(dir / "bundle_b" / f)) << f;
}

TEST_F(Cli, FlagsEchoedInConfig) {
  const Outcome r = run("train " + p("data/manifest.json") + " " + p("bundle_flags") +
                    " --lambda 0.05 --eps 1e-6 --t-max 500");
  EXPECT_EQ(r.code, 0) << r.output;
  const auto b = io::load_bundle(dir / "bundle_flags");
  EXPECT_EQ(*b.config.lambda, 0.05);
  EXPECT_EQ(b.config.eps, 1e-6);
  EXPECT_EQ(b.config.t_max, 500);
}

TEST_F(Cli, NonConvergenceWarnsButSucceeds) {
  const Outcome r = run("train " + p("data/manifest.json") + " " + p("bundle_short") + " --t-max 3");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("warning"), std::string::npos);
  EXPECT_FALSE(io::load_bundle(dir / "bundle_short").diagnostics.converged);
}

TEST_F(Cli, UnknownLabelNamesSample) {
  auto m = io::read_manifest(dir / "data/manifest.json");
  m.samples[4].labels["age"] = "age_99";
  io::write_manifest(dir / "data/bad_manifest.json", m);
  const Outcome r = run("train " + p("data/bad_manifest.json") + " " + p("bundle_bad"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("sample 4"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("age_99"), std::string::npos);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("train " + p("nope.json") + " " + p("x")).code, 3);
  EXPECT_EQ(run("train").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("train " + p("data/manifest.json") + " " + p("x") + " --rho 0.5").code, 2);
  EXPECT_EQ(run("complete --bundle " + p("missing") + " --input " + p("data/holdout/y") +
                " --out " + p("o")).code,
            3);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, CompleteDirectoryIsThreadIndependent) {
  const std::string base = "complete --bundle " + p("bundle") + " --input " +
                           p("data/holdout/y") + " --mask " + p("data/holdout/mask");
  const Outcome one = run(base + " --out " + p("c1"), "MARCA_THREADS=1");
  const Outcome many = run(base + " --out " + p("c4"), "MARCA_THREADS=4");
  ASSERT_EQ(one.code, 0) << one.output;
  ASSERT_EQ(many.code, 0) << many.output;
  for (const char* f : {"h_0000.marc", "h_0001.marc", "h_0002.marc"})
    EXPECT_EQ(io::read_file(dir / "c1" / f), io::read_file(dir / "c4" / f));
  EXPECT_EQ(run(base + " --out " + p("c0"), "MARCA_THREADS=zero").code, 2);

  // masked entries close to the clean signal
  const Vector clean = io::read_vector(dir / "data/holdout/clean/h_0000.marc");
  const Vector got = io::read_vector(dir / "c1/h_0000.marc");
  const Vector w = io::read_vector(dir / "data/holdout/mask/h_0000.marc");
  const Vector miss = Vector::Ones(w.size()) - w;
  EXPECT_LE((got - clean).cwiseProduct(miss).norm() / clean.cwiseProduct(miss).norm(), 0.1);
}

TEST_F(Cli, CompleteSingleFileCsv) {
  const Vector y = io::read_vector(dir / "data/holdout/y/h_0001.marc");
  io::write_vector(dir / "y.csv", y);
  const Outcome r = run("complete --bundle " + p("bundle") + " --input " + p("y.csv") +
                    " --out " + p("y_hat.csv") + " --skip-individual");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(io::read_vector(dir / "y_hat.csv").size(), y.size());
  EXPECT_EQ(run("complete --bundle " + p("bundle") + " --input " + p("y.csv") + " --out " +
                p("z.csv") + " --rank 2 --energy 0.5").code,
            2);
}

TEST_F(Cli, TransferTargets) {
  const std::string base = "transfer --bundle " + p("bundle") + " --input " +
                           p("data/holdout/y/h_0000.marc") + " --mask " +
                           p("data/holdout/mask/h_0000.marc");
  EXPECT_EQ(run(base + " --out " + p("t.marc") + " --target identity=identity_1 --target age=age_2").code, 0);
  EXPECT_EQ(run(base + " --out " + p("tp.marc") + " --target age=age_2 --post-hoc").code, 0);
  const Outcome bad = run(base + " --out " + p("t2.marc") + " --target age=age_9");
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.output.find("age_9"), std::string::npos);
  EXPECT_EQ(run(base + " --out " + p("t3.marc") + " --target age").code, 2);
}

TEST_F(Cli, EvalReports) {
  // bundle rebuilt from the ground truth scores zero error
  const auto t = io::load_truth(dir / "data/truth");
  ModelBundle b;
  b.schema = t.schema;
  b.bases = t.bases;
  b.bank = t.bank;
  b.G = t.G;
  b.E = t.E;
  io::save_bundle(dir / "truth_bundle", b);
  const Outcome r = run("eval " + p("truth_bundle") + " " + p("data/truth"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("clean_error_observed=0\n"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("sparse_f1=1\n"), std::string::npos);
  EXPECT_NE(r.output.find("\"sparse_f1\""), std::string::npos);

  const Outcome trained = run("eval " + p("bundle") + " " + p("data/truth") + " --json " + p("m.json"));
  EXPECT_EQ(trained.code, 0);
  EXPECT_TRUE(fs::exists(dir / "m.json"));

  ASSERT_EQ(run("synth " + p("small") + " --features 50 --samples 20").code, 0);
  EXPECT_EQ(run("eval " + p("bundle") + " " + p("small/truth")).code, 2);
}

TEST_F(Cli, SynthRejectsInfeasibleSpec) {
  EXPECT_EQ(run("synth " + p("bad") + " --rank-g 100").code, 2);
  EXPECT_EQ(run("synth " + p("bad") + " --counts 3,x").code, 2);
}
