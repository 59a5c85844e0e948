#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "reach/neural.hpp"
#include "reach/tube.hpp"

// Serialization: networks, tubes and manifests as JSON; tube dumps as CSV.
// All floating-point text output uses %.17g so that re-parsing reproduces the
// exact double and re-executed runs are byte-identical.

namespace reach {

using nlohmann::json;

inline std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Networks.

inline json net_to_json(const MLPNet<double>& net) {
  json layers = json::array();
  for (const auto& l : net.layers) {
    json rows = json::array();
    for (int i = 0; i < l.w.rows; ++i) {
      json row = json::array();
      for (int j = 0; j < l.w.cols; ++j) row.push_back(l.w(i, j));
      rows.push_back(std::move(row));
    }
    layers.push_back({{"act", act_name(l.act)}, {"w", std::move(rows)}, {"b", l.b}});
  }
  return {{"layers", std::move(layers)}};
}

inline MLPNet<double> net_from_json(const json& j) {
  MLPNet<double> net;
  for (const auto& lj : j.at("layers")) {
    const auto& rows = lj.at("w");
    int r = static_cast<int>(rows.size());
    int c = r > 0 ? static_cast<int>(rows[0].size()) : 0;
    Mat<double> w(r, c);
    for (int i = 0; i < r; ++i) {
      if (static_cast<int>(rows[static_cast<size_t>(i)].size()) != c)
        throw std::invalid_argument("net_from_json: ragged weight matrix");
      for (int jj = 0; jj < c; ++jj) w(i, jj) = rows[static_cast<size_t>(i)][static_cast<size_t>(jj)];
    }
    Vec<double> b = lj.at("b").get<Vec<double>>();
    net.layers.push_back({std::move(w), std::move(b), act_from_name(lj.at("act"))});
  }
  net.validate();
  return net;
}

// ---------------------------------------------------------------------------
// Tubes.

inline json tube_to_json(const Tube& tube) {
  json boxes = json::array();
  for (const auto& b : tube.boxes) {
    json lo = json::array(), hi = json::array();
    for (int d = 0; d < b.size(); ++d) {
      lo.push_back(b[d].lo);
      hi.push_back(b[d].hi);
    }
    boxes.push_back({{"lo", std::move(lo)}, {"hi", std::move(hi)}});
  }
  return {{"boxes", std::move(boxes)},
          {"t_lo", tube.t_lo},
          {"t_hi", tube.t_hi},
          {"diverged", tube.diverged},
          {"failed_step", tube.failed_step},
          {"failure_reason", tube.failure_reason}};
}

inline Tube tube_from_json(const json& j) {
  Tube tube;
  tube.t_lo = j.at("t_lo").get<std::vector<double>>();
  tube.t_hi = j.at("t_hi").get<std::vector<double>>();
  for (const auto& bj : j.at("boxes")) {
    Vec<double> lo = bj.at("lo").get<Vec<double>>();
    Vec<double> hi = bj.at("hi").get<Vec<double>>();
    Box b(static_cast<int>(lo.size()));
    for (int d = 0; d < b.size(); ++d) b[d] = {lo[static_cast<size_t>(d)], hi[static_cast<size_t>(d)]};
    tube.boxes.push_back(std::move(b));
  }
  if (tube.boxes.size() != tube.t_lo.size() || tube.boxes.size() != tube.t_hi.size())
    throw std::invalid_argument("tube_from_json: length mismatch");
  tube.diverged = j.at("diverged");
  tube.failed_step = j.at("failed_step");
  tube.failure_reason = j.at("failure_reason");
  return tube;
}

// Continuous-time tube CSV: one row per (step, dim) with the step's time
// window. Discrete-time CSV drops the window columns (the step index is the
// timestamp).
inline std::string tube_to_csv(const Tube& tube, bool with_time_window = true) {
  std::string out = with_time_window ? "step,t_lo,t_hi,dim,lo,hi\n" : "step,dim,lo,hi\n";
  for (size_t k = 0; k < tube.boxes.size(); ++k) {
    const auto& b = tube.boxes[k];
    for (int d = 0; d < b.size(); ++d) {
      out += std::to_string(k);
      if (with_time_window) {
        out += ',';
        out += fmt_g17(tube.t_lo[k]);
        out += ',';
        out += fmt_g17(tube.t_hi[k]);
      }
      out += ',';
      out += std::to_string(d);
      out += ',';
      out += fmt_g17(b[d].lo);
      out += ',';
      out += fmt_g17(b[d].hi);
      out += '\n';
    }
  }
  return out;
}

inline Tube tube_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("tube_from_csv: empty input");
  bool with_time = line == "step,t_lo,t_hi,dim,lo,hi";
  if (!with_time && line != "step,dim,lo,hi")
    throw std::invalid_argument("tube_from_csv: unknown header \"" + line + "\"");
  Tube tube;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string tok;
    auto next = [&]() {
      if (!std::getline(row, tok, ',')) throw std::invalid_argument("tube_from_csv: short row");
      return tok;
    };
    size_t step = std::stoul(next());
    double tlo = step, thi = step;
    if (with_time) {
      tlo = std::stod(next());
      thi = std::stod(next());
    }
    int dim = std::stoi(next());
    double lo = std::stod(next());
    double hi = std::stod(next());
    if (step == tube.boxes.size()) {
      tube.boxes.emplace_back(0);
      tube.t_lo.push_back(tlo);
      tube.t_hi.push_back(thi);
    }
    if (step != tube.boxes.size() - 1 || dim != tube.boxes.back().size())
      throw std::invalid_argument("tube_from_csv: rows out of order");
    tube.boxes.back().dims.push_back({lo, hi});
  }
  return tube;
}

// ---------------------------------------------------------------------------
// Manifest: everything needed to re-execute a run to identical outputs.

struct Manifest {
  std::string version = "reach-0.1.0";
  std::string command;
  json config;       // full flag/config echo
  uint64_t seed = 0;
  int threads = 1;

  json to_json() const {
    return {{"version", version},
            {"command", command},
            {"config", config},
            {"seed", seed},
            {"threads", threads}};
  }

  static Manifest from_json(const json& j) {
    Manifest m;
    m.version = j.at("version");
    m.command = j.at("command");
    m.config = j.at("config");
    m.seed = j.at("seed");
    m.threads = j.at("threads");
    return m;
  }
};

// ---------------------------------------------------------------------------
// Files.

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << content;
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_json_file(const std::string& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

inline json read_json_file(const std::string& path) { return json::parse(read_text_file(path)); }

}  // namespace reach
