#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "diffusion/mat.hpp"
#include "diffusion/rng.hpp"

namespace diffusion {

enum class DataKind { continuous, binary };

struct Dataset {
  DataKind kind = DataKind::continuous;
  Mat values;           // n x d
  double factor = 1.0;  // standardization divisor, continuous only
  std::string generator;
  std::uint64_t seed = 0;
};

/// Two-dimensional spiral: angle uniform over 1.5 turns, radius proportional
/// to angle, Gaussian jitter of 0.05 pre-standardization; output scaled to
/// pooled variance 1.
Dataset swiss_roll(int n, Rng& rng);

/// Pre-jitter geometry of the spiral (angles and exact arc points), exposed
/// for generator property checks.
struct SwissRollArc {
  std::vector<double> angle;
  Mat points;
};
SwissRollArc swiss_roll_arc(int n, Rng& rng);

/// Length-20 binary sequences with a pulse every 5 bins; phase uniform over
/// {0..4}, exactly four ones per sequence.
Dataset heartbeat(int n, Rng& rng);

/// Divide by the pooled standard deviation (square root of the mean centered
/// second moment over all entries); the mean is not subtracted. Returns the
/// scaled matrix and the divisor. Zero variance is rejected.
std::pair<Mat, double> standardize(const Mat& data);

void write_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace diffusion
