#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <vector>

#include "diffusion/config.hpp"
#include "diffusion/datasets.hpp"
#include "diffusion/textio.hpp"
#include "doctest.h"

using namespace diffusion;
namespace fs = std::filesystem;

#ifndef DK_CLI_PATH
#error "DK_CLI_PATH must point at the diffuse binary"
#endif

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("dk_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int counter;
};
int TempDir::counter = 0;

int run(const std::string& args) {
  const std::string cmd = std::string(DK_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::vector<char>((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
}

void write_tiny_config(const fs::path& path, const std::string& data_file,
                       const std::string& out_dir, std::uint64_t seed) {
  std::ofstream out(path);
  out << "experiment = tiny\n"
      << "data = " << data_file << "\n"
      << "out_dir = " << out_dir << "\n"
      << "T = 12\n"
      << "schedule = fixed\n"
      << "model = mlp\n"
      << "hidden = 8\n"
      << "batch = 8\n"
      << "steps = 60\n"
      << "lr = 0.05\n"
      << "decay = 0.9\n"
      << "seed = " << seed << "\n"
      << "t_subsample = 4\n"
      << "eval_every = 30\n"
      << "eval_batch = 32\n";
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("sample --n 5") == 2);           // missing required options
  CHECK(run("gen-data --kind nonsense --n 5 --out /dev/null") == 2);
}

TEST_CASE("missing files exit with code 1") {
  TempDir tmp;
  CHECK(run("sample --ckpt " + (tmp.path / "no.ckpt").string() + " --n 3 --out " +
            (tmp.path / "s.txt").string()) == 1);
  CHECK(run("train --config " + (tmp.path / "no.cfg").string()) == 1);
}

TEST_CASE("tiny pipeline: gen-data, train, sample, evaluate, conditional, bounds") {
  TempDir tmp;
  const std::string base = tmp.path.string();

  REQUIRE(run("gen-data --kind heartbeat --n 120 --holdout 40 --seed 5 --out " + base +
              "/hb.txt") == 0);
  REQUIRE(fs::exists(tmp.path / "hb.txt"));
  REQUIRE(fs::exists(tmp.path / "hb_holdout.txt"));

  write_tiny_config(tmp.path / "run.cfg", "hb.txt", "run", 7);
  REQUIRE(run("train --config " + base + "/run.cfg") == 0);
  REQUIRE(fs::exists(tmp.path / "run/final.ckpt"));
  REQUIRE(fs::exists(tmp.path / "run/train_log.csv"));
  CHECK(!fs::exists(tmp.path / "run/.lock"));  // released

  REQUIRE(run("sample --ckpt " + base + "/run/final.ckpt --n 10 --seed 3 --out " + base +
              "/samples.txt") == 0);
  const Dataset samples = read_dataset(tmp.path / "samples.txt");
  CHECK(samples.kind == DataKind::binary);
  CHECK(samples.values.rows == 10);
  CHECK(samples.values.cols == 20);

  REQUIRE(run("evaluate --ckpt " + base + "/run/final.ckpt --data " + base +
              "/hb_holdout.txt --n-traj 4 --limit 8 --t-subsample 4 --out " + base +
              "/eval.txt --breakdown " + base + "/bk.txt") == 0);
  // The summary is a key=value file readable by the config-style parser.
  std::ifstream summary(tmp.path / "eval.txt");
  std::string line;
  bool saw_k = false, saw_null = false;
  while (std::getline(summary, line)) {
    if (line.rfind("k_bits", 0) == 0) saw_k = true;
    if (line.rfind("null_bits", 0) == 0) saw_null = true;
  }
  CHECK(saw_k);
  CHECK(saw_null);
  const MatrixFile bk = read_matrix(tmp.path / "bk.txt");
  CHECK(bk.values.rows == 4);  // the subsampled time subset
  CHECK(bk.values.cols == 2);

  // Conditional sampling with a coordinate mask clamps exactly.
  {
    Mat mask(1, 20), obs(1, 20);
    mask(0, 2) = 1.0;
    obs(0, 2) = 1.0;
    write_matrix(tmp.path / "mask.txt", mask, {});
    write_matrix(tmp.path / "obs.txt", obs, {});
    REQUIRE(run("conditional --ckpt " + base + "/run/final.ckpt --mask " + base +
                "/mask.txt --obs " + base + "/obs.txt --n 16 --seed 9 --out " + base +
                "/cond.txt") == 0);
    const MatrixFile cond = read_matrix(tmp.path / "cond.txt");
    REQUIRE(cond.values.rows == 16);
    for (int i = 0; i < 16; ++i) CHECK(cond.values(i, 2) == 1.0);
  }

  REQUIRE(run("bounds --ckpt " + base + "/run/final.ckpt --data " + base +
              "/hb_holdout.txt --out " + base + "/bounds.txt") == 0);
  const MatrixFile bounds = read_matrix(tmp.path / "bounds.txt");
  CHECK(bounds.values.rows == 11);
  for (int i = 0; i < bounds.values.rows; ++i)
    CHECK(bounds.values(i, 1) <= bounds.values(i, 2) + 1e-12);
}

TEST_CASE("the full pipeline is deterministic under a fixed seed") {
  TempDir tmp;
  const std::string base = tmp.path.string();
  REQUIRE(run("gen-data --kind heartbeat --n 100 --seed 21 --out " + base + "/a.txt") == 0);
  REQUIRE(run("gen-data --kind heartbeat --n 100 --seed 21 --out " + base + "/b.txt") == 0);
  CHECK(slurp(tmp.path / "a.txt") == slurp(tmp.path / "b.txt"));

  write_tiny_config(tmp.path / "r1.cfg", "a.txt", "run1", 33);
  write_tiny_config(tmp.path / "r2.cfg", "a.txt", "run2", 33);
  REQUIRE(run("train --config " + base + "/r1.cfg") == 0);
  REQUIRE(run("train --config " + base + "/r2.cfg") == 0);
  CHECK(slurp(tmp.path / "run1/final.ckpt") == slurp(tmp.path / "run2/final.ckpt"));

  REQUIRE(run("sample --ckpt " + base + "/run1/final.ckpt --n 12 --seed 4 --out " + base +
              "/s1.txt") == 0);
  REQUIRE(run("sample --ckpt " + base + "/run2/final.ckpt --n 12 --seed 4 --out " + base +
              "/s2.txt") == 0);
  CHECK(slurp(tmp.path / "s1.txt") == slurp(tmp.path / "s2.txt"));
}

TEST_CASE("kind mismatch between checkpoint and data fails loudly") {
  TempDir tmp;
  const std::string base = tmp.path.string();
  REQUIRE(run("gen-data --kind heartbeat --n 60 --seed 2 --out " + base + "/hb.txt") == 0);
  REQUIRE(run("gen-data --kind swiss-roll --n 60 --seed 2 --out " + base + "/sw.txt") == 0);
  write_tiny_config(tmp.path / "run.cfg", "hb.txt", "run", 3);
  REQUIRE(run("train --config " + base + "/run.cfg") == 0);
  CHECK(run("evaluate --ckpt " + base + "/run/final.ckpt --data " + base +
            "/sw.txt --out " + base + "/e.txt") == 1);
  CHECK(run("bounds --ckpt " + base + "/run/final.ckpt --data " + base + "/sw.txt --out " +
            base + "/b.txt") == 1);
}

TEST_CASE("run directories are locked against concurrent writers") {
  TempDir tmp;
  const std::string base = tmp.path.string();
  REQUIRE(run("gen-data --kind heartbeat --n 60 --seed 2 --out " + base + "/hb.txt") == 0);
  write_tiny_config(tmp.path / "run.cfg", "hb.txt", "run", 3);
  fs::create_directories(tmp.path / "run");
  std::ofstream(tmp.path / "run/.lock") << "held\n";
  CHECK(run("train --config " + base + "/run.cfg") == 1);
  fs::remove(tmp.path / "run/.lock");
  CHECK(run("train --config " + base + "/run.cfg") == 0);
}
