#include "diffusion/datasets.hpp"

#include <cmath>
#include <stdexcept>

#include "diffusion/textio.hpp"

namespace diffusion {

namespace {

constexpr double kTurns = 1.5;
constexpr double kJitter = 0.001;

}  // namespace

SwissRollArc swiss_roll_arc(int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("swiss_roll: n must be >= 1");
  SwissRollArc arc;
  arc.angle.resize(n);
  arc.points = Mat(n, 2);
  const double theta_min = M_PI;
  const double theta_max = M_PI + 2.0 * M_PI * kTurns;
  for (int i = 0; i < n; ++i) {
    const double theta = rng.uniform(theta_min, theta_max);
    const double radius = theta / theta_max;
    arc.angle[i] = theta;
    arc.points(i, 0) = radius * std::cos(theta);
    arc.points(i, 1) = radius * std::sin(theta);
  }
  return arc;
}

Dataset swiss_roll(int n, Rng& rng) {
  const std::uint64_t seed = rng.base_seed();
  SwissRollArc arc = swiss_roll_arc(n, rng);
  for (double& v : arc.points.a) v += kJitter * rng.normal();
  auto [scaled, factor] = standardize(arc.points);
  Dataset ds;
  ds.kind = DataKind::continuous;
  ds.values = std::move(scaled);
  ds.factor = factor;
  ds.generator = "swiss-roll";
  ds.seed = seed;
  return ds;
}

Dataset heartbeat(int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("heartbeat: n must be >= 1");
  constexpr int kLen = 20;
  constexpr int kPeriod = 5;
  Dataset ds;
  ds.kind = DataKind::binary;
  ds.values = Mat(n, kLen);
  ds.generator = "heartbeat";
  ds.seed = rng.base_seed();
  for (int i = 0; i < n; ++i) {
    const int phase = static_cast<int>(rng.below(kPeriod));
    for (int j = phase; j < kLen; j += kPeriod) ds.values(i, j) = 1.0;
  }
  return ds;
}

std::pair<Mat, double> standardize(const Mat& data) {
  if (data.a.empty()) throw std::invalid_argument("standardize: empty data");
  double mean = 0.0;
  for (double v : data.a) mean += v;
  mean /= static_cast<double>(data.a.size());
  double var = 0.0;
  for (double v : data.a) var += (v - mean) * (v - mean);
  var /= static_cast<double>(data.a.size());
  if (!(var > 0.0)) throw std::invalid_argument("standardize: zero variance data");
  const double s = std::sqrt(var);
  Mat out = data;
  for (double& v : out.a) v /= s;
  return {std::move(out), s};
}

void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
  std::map<std::string, std::string> header;
  header["kind"] = ds.kind == DataKind::continuous ? "continuous" : "binary";
  header["n"] = std::to_string(ds.values.rows);
  header["d"] = std::to_string(ds.values.cols);
  header["seed"] = std::to_string(ds.seed);
  header["factor"] = format_double(ds.factor);
  header["generator"] = ds.generator;
  write_matrix(path, ds.values, header);
}

Dataset read_dataset(const std::filesystem::path& path) {
  MatrixFile mf = read_matrix(path);
  Dataset ds;
  const auto kind = mf.header.find("kind");
  if (kind == mf.header.end())
    throw std::runtime_error("dataset missing kind header: " + path.string());
  if (kind->second == "continuous")
    ds.kind = DataKind::continuous;
  else if (kind->second == "binary")
    ds.kind = DataKind::binary;
  else
    throw std::runtime_error("dataset has unknown kind: " + kind->second);
  ds.values = std::move(mf.values);
  if (auto it = mf.header.find("factor"); it != mf.header.end()) ds.factor = std::stod(it->second);
  if (auto it = mf.header.find("seed"); it != mf.header.end()) ds.seed = std::stoull(it->second);
  if (auto it = mf.header.find("generator"); it != mf.header.end()) ds.generator = it->second;
  if (ds.kind == DataKind::binary)
    for (double v : ds.values.a)
      if (v != 0.0 && v != 1.0)
        throw std::runtime_error("binary dataset contains non-bit values: " + path.string());
  return ds;
}

}  // namespace diffusion
