#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "diffusion/checkpoint.hpp"
#include "diffusion/config.hpp"
#include "diffusion/datasets.hpp"
#include "diffusion/textio.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace diffusion;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("dk_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int counter;
};
int TempDir::counter = 0;

std::vector<unsigned char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("swiss roll generator") {
  Rng rng(5);
  Dataset ds = swiss_roll(10000, rng);
  CHECK(ds.values.rows == 10000);
  CHECK(ds.values.cols == 2);

  SUBCASE("standardized to pooled variance one") {
    double mean = 0.0;
    for (double v : ds.values.a) mean += v;
    mean /= ds.values.a.size();
    double var = 0.0;
    for (double v : ds.values.a) var += (v - mean) * (v - mean);
    var /= ds.values.a.size();
    CHECK(var == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("deterministic under the seed") {
    Rng r1(42), r2(42);
    const Dataset a = swiss_roll(500, r1);
    const Dataset b = swiss_roll(500, r2);
    CHECK(a.values.a == b.values.a);
    CHECK(a.factor == b.factor);
  }

  SUBCASE("radius grows monotonically with angle before jitter") {
    Rng r(7);
    const SwissRollArc arc = swiss_roll_arc(3000, r);
    std::vector<double> radius(arc.angle.size());
    for (std::size_t i = 0; i < radius.size(); ++i)
      radius[i] = std::hypot(arc.points(i, 0), arc.points(i, 1));
    CHECK(oracles::spearman(arc.angle, radius) > 0.99);
  }
}

TEST_CASE("heartbeat generator") {
  Rng rng(9);
  Dataset ds = heartbeat(100000, rng);
  CHECK(ds.values.cols == 20);

  SUBCASE("every sequence is a pulse train with period five") {
    for (int i = 0; i < ds.values.rows; ++i) {
      int ones = 0, phase = -1;
      for (int j = 0; j < 20; ++j)
        if (ds.values(i, j) == 1.0) {
          if (phase < 0) phase = j;
          ones++;
        }
      CHECK(ones == 4);
      CHECK(phase >= 0);
      CHECK(phase <= 4);
      for (int j = 0; j < 20; ++j)
        CHECK(ds.values(i, j) == ((j % 5 == phase) ? 1.0 : 0.0));
    }
  }

  SUBCASE("phases are uniform over the first five bins") {
    std::vector<int> counts(5, 0);
    for (int i = 0; i < ds.values.rows; ++i)
      for (int j = 0; j < 5; ++j)
        if (ds.values(i, j) == 1.0) counts[j]++;
    for (int c : counts) CHECK(std::fabs(c / 1e5 - 0.2) < 0.005);
  }

  SUBCASE("support has exactly five distinct sequences") {
    std::set<std::vector<double>> support;
    for (int i = 0; i < 2000; ++i) support.insert(ds.values.row_vector(i));
    CHECK(support.size() == 5);
  }

  SUBCASE("ground-truth log likelihood is log2(1/5) bits per sequence") {
    CHECK(std::log2(1.0 / 5.0) == doctest::Approx(-2.3219280948873623).epsilon(1e-12));
  }
}

TEST_CASE("standardize") {
  Rng rng(11);
  Mat data(50, 3);
  for (double& v : data.a) v = 2.0 + 3.0 * rng.normal();

  SUBCASE("unit-variance data keeps factor one") {
    auto [scaled, factor] = standardize(data);
    auto [scaled2, factor2] = standardize(scaled);
    CHECK(factor2 == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 0; i < scaled.a.size(); ++i)
      CHECK(scaled2.a[i] == doctest::Approx(scaled.a[i]).epsilon(1e-12));
  }

  SUBCASE("factor is homogeneous of degree one") {
    auto [scaled, factor] = standardize(data);
    Mat tripled = data;
    for (double& v : tripled.a) v *= 3.0;
    auto [scaled3, factor3] = standardize(tripled);
    CHECK(factor3 == doctest::Approx(3.0 * factor).epsilon(1e-12));
  }

  SUBCASE("zero variance is rejected") {
    Mat flat(4, 2);
    for (double& v : flat.a) v = 1.0;
    CHECK_THROWS_AS(standardize(flat), std::invalid_argument);
  }
}

TEST_CASE("matrix text round trip") {
  TempDir tmp;
  Rng rng(13);
  Mat m(7, 3);
  for (double& v : m.a) v = rng.normal() * std::pow(10.0, rng.uniform(-8, 8));
  m.a[0] = 0.1 + 0.2;  // classic non-representable sum
  const fs::path p = tmp.path / "m.txt";
  write_matrix(p, m, {{"kind", "continuous"}, {"n", "7"}});
  const MatrixFile mf = read_matrix(p);
  CHECK(mf.header.at("kind") == "continuous");
  CHECK(mf.values.rows == 7);
  CHECK(mf.values.cols == 3);
  for (std::size_t i = 0; i < m.a.size(); ++i) CHECK(mf.values.a[i] == m.a[i]);  // bitwise
}

TEST_CASE("dataset file round trip") {
  TempDir tmp;
  Rng rng(17);
  const Dataset ds = swiss_roll(100, rng);
  const fs::path p = tmp.path / "ds.txt";
  write_dataset(p, ds);
  const Dataset back = read_dataset(p);
  CHECK(back.kind == DataKind::continuous);
  CHECK(back.values.a == ds.values.a);
  CHECK(back.factor == ds.factor);
  CHECK(back.generator == "swiss-roll");
  CHECK(back.seed == ds.seed);

  Dataset hb = heartbeat(50, rng);
  write_dataset(tmp.path / "hb.txt", hb);
  CHECK(read_dataset(tmp.path / "hb.txt").kind == DataKind::binary);
}

TEST_CASE("run config parsing") {
  TempDir tmp;
  const fs::path cfg_path = tmp.path / "run.cfg";

  SUBCASE("round trip of a full config") {
    std::ofstream out(cfg_path);
    out << "# comment line\n"
        << "experiment = swiss\n"
        << "data = train.txt\n"
        << "out_dir = runs/swiss\n"
        << "T = 40\n"
        << "beta1 = 1e-4\n"
        << "schedule = learnable\n"
        << "model = rbf\n"
        << "hidden = 16\n"
        << "readout = per-step\n"
        << "output = transform\n"
        << "batch = 128\n"
        << "steps = 5000\n"
        << "lr = 0.005\n"
        << "decay = 0.9\n"
        << "seed = 77\n"
        << "eval_every = 250\n";
    out.close();
    const RunConfig cfg = parse_run_config(cfg_path);
    CHECK(cfg.experiment == "swiss");
    CHECK(cfg.data_path == tmp.path / "train.txt");  // relative to the config
    CHECK(cfg.out_dir == tmp.path / "runs/swiss");
    CHECK(cfg.steps_T == 40);
    CHECK(cfg.schedule_mode == ScheduleMode::learnable);
    CHECK(cfg.model.family == ModelFamily::rbf);
    CHECK(cfg.model.hidden == std::vector<int>{16});
    CHECK(cfg.train.batch == 128);
    CHECK(cfg.train.seed == 77);
    CHECK(cfg.train.learn_schedule);  // defaults from the schedule mode
  }

  SUBCASE("unknown keys are rejected") {
    std::ofstream out(cfg_path);
    out << "experiment = x\ndata = d.txt\nout_dir = o\nT = 5\nhidden = 4\nbogus_key = 3\n";
    out.close();
    CHECK_THROWS_WITH_AS(parse_run_config(cfg_path), doctest::Contains("bogus_key"),
                         std::invalid_argument);
  }

  SUBCASE("missing required keys are rejected") {
    std::ofstream out(cfg_path);
    out << "experiment = x\n";
    out.close();
    CHECK_THROWS_AS(parse_run_config(cfg_path), std::invalid_argument);
  }

  SUBCASE("mlp hidden list") {
    std::ofstream out(cfg_path);
    out << "experiment = hb\ndata = d.txt\nout_dir = o\nT = 2000\nmodel = mlp\n"
        << "hidden = 50,50,50\nschedule = fixed\n";
    out.close();
    const RunConfig cfg = parse_run_config(cfg_path);
    CHECK(cfg.model.hidden == std::vector<int>{50, 50, 50});
    CHECK(!cfg.train.learn_schedule);
  }
}

TEST_CASE("checkpoint round trip and failure modes") {
  TempDir tmp;
  Rng rng(19);

  Checkpoint ckpt;
  ckpt.spec =
      DiffusionSpec{make_schedule(ProcessKind::gaussian, 12, 1e-3, ScheduleMode::learnable), 2};
  ckpt.model_desc.family = ModelFamily::rbf;
  ckpt.model_desc.hidden = {8};
  Mat data(40, 2);
  for (double& v : data.a) v = rng.normal();
  auto model = make_model(ckpt.spec, ckpt.model_desc, rng, &data);
  for (double& v : model->params().values()) v += 0.3 * rng.normal();
  ckpt.params = model->params();
  ckpt.train_step = 777;
  ckpt.seed = 4242;
  ckpt.standardization = 1.37;

  const fs::path p = tmp.path / "model.ckpt";
  save_checkpoint(p, ckpt);

  SUBCASE("save -> load -> save is byte identical") {
    const Checkpoint back = load_checkpoint(p);
    CHECK(back.params.values() == ckpt.params.values());
    CHECK(back.spec.schedule.beta == ckpt.spec.schedule.beta);
    CHECK(back.spec.schedule.u == ckpt.spec.schedule.u);
    CHECK(back.train_step == 777);
    CHECK(back.standardization == 1.37);
    const fs::path p2 = tmp.path / "model2.ckpt";
    save_checkpoint(p2, back);
    CHECK(slurp(p) == slurp(p2));
  }

  SUBCASE("the saved model reproduces the live model") {
    const Checkpoint back = load_checkpoint(p);
    auto rebuilt = model_from_checkpoint(back);
    const std::vector<double> x = {0.2, -0.4};
    const DiagonalDistribution a = reverse_apply(ckpt.spec, *model, x, 5);
    const DiagonalDistribution b = reverse_apply(back.spec, *rebuilt, x, 5);
    CHECK(a.mean == b.mean);
    CHECK(a.var == b.var);
  }

  SUBCASE("truncation is detected as a checksum failure") {
    auto bytes = slurp(p);
    bytes.resize(bytes.size() - 17);
    const fs::path bad = tmp.path / "trunc.ckpt";
    std::ofstream(bad, std::ios::binary)
        .write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    try {
      load_checkpoint(bad);
      FAIL("expected a throw");
    } catch (const CheckpointError& e) {
      CHECK(e.status() == CheckpointStatus::checksum_mismatch);
    }
  }

  SUBCASE("corrupted payload is a checksum failure") {
    auto bytes = slurp(p);
    bytes[bytes.size() / 2] ^= 0x40;
    const fs::path bad = tmp.path / "corrupt.ckpt";
    std::ofstream(bad, std::ios::binary)
        .write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    try {
      load_checkpoint(bad);
      FAIL("expected a throw");
    } catch (const CheckpointError& e) {
      CHECK(e.status() == CheckpointStatus::checksum_mismatch);
    }
  }

  SUBCASE("foreign files are rejected by magic") {
    const fs::path bad = tmp.path / "not.ckpt";
    std::ofstream(bad, std::ios::binary) << "definitely not a checkpoint, but long enough";
    try {
      load_checkpoint(bad);
      FAIL("expected a throw");
    } catch (const CheckpointError& e) {
      CHECK(e.status() == CheckpointStatus::bad_magic);
    }
  }

  SUBCASE("version bumps are refused") {
    auto bytes = slurp(p);
    bytes[8] = 99;  // version field follows the 8-byte magic
    // Recompute the trailer so only the version differs.
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t i = 0; i + 8 < bytes.size(); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
    std::memcpy(bytes.data() + bytes.size() - 8, &h, 8);
    const fs::path bad = tmp.path / "vers.ckpt";
    std::ofstream(bad, std::ios::binary)
        .write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    try {
      load_checkpoint(bad);
      FAIL("expected a throw");
    } catch (const CheckpointError& e) {
      CHECK(e.status() == CheckpointStatus::version_mismatch);
    }
  }
}
