#include "diffusion/textio.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace diffusion {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_matrix(const std::filesystem::path& path, const Mat& m,
                  const std::map<std::string, std::string>& header) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "#";
  for (const auto& [k, v] : header) out << " " << k << "=" << v;
  out << "\n";
  for (int i = 0; i < m.rows; ++i) {
    for (int j = 0; j < m.cols; ++j) {
      if (j) out << " ";
      out << format_double(m(i, j));
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

MatrixFile read_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  MatrixFile mf;
  std::string line;
  std::vector<double> values;
  int cols = -1, rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string tok;
      while (hs >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        mf.header[tok.substr(0, eq)] = tok.substr(eq + 1);
      }
      continue;
    }
    std::istringstream ls(line);
    int n = 0;
    double v;
    while (ls >> v) {
      values.push_back(v);
      ++n;
    }
    if (n == 0) continue;
    if (cols < 0) cols = n;
    if (n != cols) throw std::runtime_error("ragged matrix row in " + path.string());
    ++rows;
  }
  if (cols < 0) throw std::runtime_error("empty matrix file: " + path.string());
  mf.values = Mat(rows, cols, std::move(values));
  return mf;
}

}  // namespace diffusion
