#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cdc/objective.hpp"
#include "cdc/optimizer.hpp"
#include "cdc/types.hpp"

namespace cdc::cli {

/// Shortest text that still round-trips a double exactly.
inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// A numeric table with a header row.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  void add(std::vector<double> row) {
    if (row.size() != header.size()) throw Error("Table: row width does not match the header");
    rows.push_back(std::move(row));
  }
};

inline std::string to_csv(const Table& t) {
  std::string out;
  for (std::size_t k = 0; k < t.header.size(); ++k) out += (k ? "," : "") + t.header[k];
  out += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t k = 0; k < row.size(); ++k) out += (k ? "," : "") + format_number(row[k]);
    out += '\n';
  }
  return out;
}

inline Table parse_csv(const std::string& text) {
  Table t;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error("csv: missing header row");
  std::stringstream hs(line);
  for (std::string cell; std::getline(hs, cell, ',');) t.header.push_back(cell);
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream rs(line);
    for (std::string cell; std::getline(rs, cell, ',');) {
      std::size_t used = 0;
      row.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw Error("csv: malformed number '" + cell + "'");
    }
    t.add(std::move(row));
  }
  return t;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline Table iterations_table() {
  return {{"power_db", "t", "L_hat", "R_hat", "B_hat", "D_hat", "mi", "lambda", "beta", "tau", "epsilon", "grad_norm"},
          {}};
}

inline void add_iteration(Table& t, double power_db, const IterationRecord& r) {
  t.add({power_db, static_cast<double>(r.t), r.L_hat, r.R_hat, r.B_hat, r.D_hat, r.mi, r.lambda, r.beta, r.tau,
         r.epsilon, r.grad_norm});
}

inline Table curve_table() { return {{"power_db", "beta", "lambda", "rate", "distortion", "cost"}, {}}; }

/// `rate_scale` converts the nats stored in the curve point to the output
/// unit (1 for nats, 1 / ln 2 for bits).
inline void add_curve_point(Table& t, double power_db, const CurvePoint& p, double rate_scale) {
  t.add({power_db, p.beta, p.lambda, p.rate * rate_scale, p.distortion, p.cost});
}

inline Table particles_table() { return {{"power_db", "beta", "particle", "component", "re", "im"}, {}}; }

inline void add_particles(Table& t, double power_db, double beta, const ParticleSet& ps) {
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (std::size_t k = 0; k < ps.dim(); ++k)
      t.add({power_db, beta, static_cast<double>(i), static_cast<double>(k), ps[i][k].real(), ps[i][k].imag()});
}

}  // namespace cdc::cli
