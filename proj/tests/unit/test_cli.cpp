#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "tvem/cli.hpp"

namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "tvem");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return tvem::run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

struct CaptureCout {
  std::stringstream buf;
  std::streambuf* old;
  CaptureCout() : old(std::cout.rdbuf(buf.rdbuf())) {}
  ~CaptureCout() { std::cout.rdbuf(old); }
};

}  // namespace

TEST_CASE("cli end to end on a small simulated dataset") {
  const fs::path dir = fs::temp_directory_path() / "tvem_cli_tests";
  fs::create_directories(dir);
  const fs::path cfg = dir / "small.cfg";
  {
    std::ofstream out(cfg);
    out << "n_subjects = 15\nmin_assessments = 6\nmax_assessments = 9\n"
           "n_iter = 60\nburn_in = 30\nthin = 3\nn_chains = 2\n"
           "standardize = x1, x2, x3, x4, x5, x6, x7, x8, x9, x10, x11, x12, x13, x14\n";
  }
  const std::string a = (dir / "a.csv").string(), b = (dir / "b.csv").string();
  const std::string truth = (dir / "truth.tsv").string();
  REQUIRE(run({"simulate", "--config", cfg.string(), "--seed", "7", "--out", a, "--truth", truth}) == 0);
  REQUIRE(run({"simulate", "--config", cfg.string(), "--seed", "7", "--out", b}) == 0);
  CHECK(slurp(a) == slurp(b));

  const std::string draws = (dir / "d.bin").string(), report = (dir / "mppi.tsv").string();
  {
    CaptureCout cap;
    REQUIRE(run({"fit", "--config", cfg.string(), "--data", a, "--out", draws, "--report", report, "--seed", "3",
                 "--dp-fixed", "--dp-random"}) == 0);
  }
  std::ifstream rep(report);
  int lines = 0;
  for (std::string line; std::getline(rep, line);) ++lines;
  CHECK(lines == 1 + 60);  // header + 45 fixed + 15 random

  {
    CaptureCout cap;
    REQUIRE(run({"summarize", "--draws", draws, "--out-dir", (dir / "sum").string()}) == 0);
    CHECK(cap.buf.str().find("mppi correlation") != std::string::npos);
  }
  CHECK(fs::exists(dir / "sum" / "curves.tsv"));
  CHECK(fs::exists(dir / "sum" / "clusters.tsv"));
  CHECK(fs::exists(dir / "sum" / "rhat.tsv"));
  {
    CaptureCout cap;
    REQUIRE(run({"loo", "--draws", draws, "--data", a}) == 0);
    CHECK(cap.buf.str().find("elpd_loo") != std::string::npos);
    CHECK(cap.buf.str().find("ppc\tsample_size") != std::string::npos);
  }
  {
    // a truth table scored against itself
    std::ifstream in(truth);
    std::ofstream out(dir / "perfect.tsv");
    std::string line;
    std::getline(in, line);
    out << "term\tkind\tselected\n";
    while (std::getline(in, line)) out << line << "\n";
  }
  {
    CaptureCout cap;
    REQUIRE(run({"metrics", "--selected", (dir / "perfect.tsv").string(), "--truth", truth}) == 0);
    CHECK(cap.buf.str().find("fixed\t1.000\t1.000\t1.000") != std::string::npos);
    CHECK(cap.buf.str().find("random\t1.000\t1.000\t1.000") != std::string::npos);
  }
}

TEST_CASE("cli rejects bad usage") {
  CHECK(run({"fit", "--bogus"}) != 0);
  CHECK(run({}) != 0);
  const fs::path cfg = fs::temp_directory_path() / "tvem_bad.cfg";
  {
    std::ofstream out(cfg);
    out << "what = 1\n";
  }
  CHECK(run({"simulate", "--config", cfg.string(), "--out", "/dev/null"}) != 0);
}
