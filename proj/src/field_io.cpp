#include "delayctl/field_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "delayctl/errors.hpp"
#include "delayctl/expression.hpp"

namespace delayctl {

namespace {

std::string strip_json(const std::string& stem) {
  const std::string suffix = ".json";
  if (stem.size() > suffix.size() && stem.compare(stem.size() - suffix.size(), suffix.size(), suffix) == 0) {
    return stem.substr(0, stem.size() - suffix.size());
  }
  return stem;
}

void put(std::string& line, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  if (!line.empty()) line += ',';
  line += buf;
}

}  // namespace

Json field_header(const ReducedValueField& f) {
  Json h;
  h["format"] = "delayctl-field";
  h["n"] = f.n;
  h["m"] = f.m;
  h["T"] = f.T;
  h["lo"] = to_json(f.lo);
  h["hi"] = to_json(f.hi);
  h["nodes_per_axis"] = f.nodes_per_axis;
  h["times"] = f.times;
  Json ll = Json::array();
  for (char c : f.left_limit) ll.push_back(c != 0);
  h["left_limit"] = ll;
  h["grid"] = {{"time_steps", f.config.time_steps},
               {"time_grading", f.config.time_grading},
               {"theta_order", f.config.theta_order},
               {"quad_order", f.config.quad_order}};
  h["running_pullback_exact"] = f.running_pullback_exact;
  Json cols = Json::array({"i", "t"});
  for (const auto& y : indexed_names("y", f.n)) cols.push_back(y);
  cols.push_back("f");
  for (const auto& g : indexed_names("fbar", f.m)) cols.push_back(g);
  h["columns"] = cols;
  return h;
}

void write_field(const ReducedValueField& f, const std::string& stem_in, const Json& meta) {
  const std::string stem = strip_json(stem_in);
  Json h = field_header(f);
  h["csv"] = std::filesystem::path(stem + ".csv").filename().string();
  h["meta"] = meta;
  std::ofstream js(stem + ".json");
  if (!js) throw ConfigError("cannot write '" + stem + ".json'");
  js << h.dump(2) << '\n';

  std::ofstream csv(stem + ".csv");
  if (!csv) throw ConfigError("cannot write '" + stem + ".csv'");
  std::string line;
  for (const auto& c : h["columns"]) line += (line.empty() ? "" : ",") + c.get<std::string>();
  csv << line << '\n';
  const int N = f.node_count();
  for (std::size_t i = 0; i < f.times.size(); ++i) {
    for (int j = 0; j < N; ++j) {
      line = std::to_string(i);
      put(line, f.times[i]);
      const VectorXd y = f.node(j);
      for (int a = 0; a < f.n; ++a) put(line, y(a));
      put(line, f.f[i](j));
      for (int k = 0; k < f.m; ++k) put(line, f.fbar[i](k, j));
      csv << line << '\n';
    }
  }
}

ReducedValueField read_field(const std::string& stem_in) {
  const std::string stem = strip_json(stem_in);
  const Json h = load_json(stem + ".json");
  if (h.value("format", "") != "delayctl-field") throw ConfigError("'" + stem + ".json' is not a field export");
  ReducedValueField f;
  try {
    f.n = h.at("n").get<int>();
    f.m = h.at("m").get<int>();
    f.T = h.at("T").get<double>();
    f.lo = json_vector(h.at("lo"), f.n, "field.lo");
    f.hi = json_vector(h.at("hi"), f.n, "field.hi");
    f.nodes_per_axis = h.at("nodes_per_axis").get<int>();
    f.times = h.at("times").get<std::vector<double>>();
    for (const auto& b : h.at("left_limit")) f.left_limit.push_back(b.get<bool>() ? 1 : 0);
    const Json& g = h.at("grid");
    f.config.nodes = f.nodes_per_axis;
    f.config.lo = f.lo;
    f.config.hi = f.hi;
    f.config.time_steps = g.at("time_steps").get<int>();
    f.config.time_grading = g.at("time_grading").get<double>();
    f.config.theta_order = g.at("theta_order").get<int>();
    f.config.quad_order = g.at("quad_order").get<int>();
    f.running_pullback_exact = h.at("running_pullback_exact").get<bool>();
  } catch (const Json::exception& e) {
    throw ConfigError("'" + stem + ".json': " + e.what());
  }
  if (f.left_limit.size() != f.times.size()) throw ConfigError("field header: times and left_limit differ in length");

  const std::filesystem::path dir = std::filesystem::path(stem).parent_path();
  const std::string csv_path = (dir / h.value("csv", std::filesystem::path(stem + ".csv").filename().string())).string();
  std::ifstream in(csv_path);
  if (!in) throw ConfigError("cannot open '" + csv_path + "'");
  const int N = f.node_count();
  f.f.assign(f.times.size(), VectorXd::Zero(N));
  f.fbar.assign(f.times.size(), MatrixXd::Zero(f.m, N));
  std::string line;
  std::getline(in, line);  // column names
  const std::size_t expected = f.times.size() * static_cast<std::size_t>(N);
  std::size_t rows = 0;
  std::vector<double> vals;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    vals.clear();
    const char* p = line.c_str();
    while (*p) {
      char* end = nullptr;
      vals.push_back(std::strtod(p, &end));
      if (end == p) throw ConfigError(csv_path + ": malformed number in row " + std::to_string(rows + 1));
      p = *end == ',' ? end + 1 : end;
    }
    if (static_cast<int>(vals.size()) != 3 + f.n + f.m) {
      throw ConfigError(csv_path + ": row " + std::to_string(rows + 1) + " has the wrong number of columns");
    }
    // Rows are written time-major, spatial index fastest.
    const std::size_t i = rows / N;
    const int j = static_cast<int>(rows % N);
    if (i >= f.times.size() || static_cast<std::size_t>(vals[0]) != i) {
      throw ConfigError(csv_path + ": rows out of order at row " + std::to_string(rows + 1));
    }
    f.f[i](j) = vals[2 + f.n];
    for (int k = 0; k < f.m; ++k) f.fbar[i](k, j) = vals[3 + f.n + k];
    ++rows;
  }
  if (rows != expected) {
    throw ConfigError(csv_path + ": expected " + std::to_string(expected) + " rows, found " + std::to_string(rows));
  }
  return f;
}

}  // namespace delayctl
