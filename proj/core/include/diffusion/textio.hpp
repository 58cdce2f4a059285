#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "diffusion/mat.hpp"

namespace diffusion {

/// Whitespace-separated numeric text matrix with a single '#'-prefixed
/// key=value header line. Values are written with 17 significant digits, so
/// write/read round-trips are exact for doubles.
void write_matrix(const std::filesystem::path& path, const Mat& m,
                  const std::map<std::string, std::string>& header);

struct MatrixFile {
  Mat values;
  std::map<std::string, std::string> header;
};

MatrixFile read_matrix(const std::filesystem::path& path);

std::string format_double(double v);

}  // namespace diffusion
