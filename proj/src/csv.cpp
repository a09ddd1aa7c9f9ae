#include "r3d/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <vector>

namespace r3d {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

double parse_double(const std::string& field, const char* what, std::size_t line_no) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw IoError("line " + std::to_string(line_no) + ": cannot parse " + what + " '" +
                  field + "'");
  return v;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Builder {
  std::string id;
  double x = 0.0;
  std::optional<int> t;
  std::vector<double> draws;
  std::vector<double> weights;  // empty unless any row carried a weight
};

}  // namespace

UnitSample load_units(std::istream& in, const LoadOptions& opt) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty input, expected a CSV header");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const auto header = split_line(line);
  int col_id = -1, col_x = -1, col_t = -1, col_z = -1, col_w = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "unit_id") col_id = static_cast<int>(c);
    else if (header[c] == "x") col_x = static_cast<int>(c);
    else if (header[c] == "t") col_t = static_cast<int>(c);
    else if (header[c] == "z") col_z = static_cast<int>(c);
    else if (header[c] == "w") col_w = static_cast<int>(c);
    else throw IoError("unknown CSV column '" + header[c] + "'");
  }
  if (col_id < 0 || col_x < 0 || col_z < 0)
    throw IoError("CSV header must contain unit_id, x, and z columns");

  std::vector<Builder> builders;
  std::unordered_map<std::string, std::size_t> index;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_line(line);
    if (fields.size() != header.size())
      throw IoError("line " + std::to_string(line_no) + ": expected " +
                    std::to_string(header.size()) + " fields, got " +
                    std::to_string(fields.size()));

    const std::string& id = fields[static_cast<std::size_t>(col_id)];
    if (id.empty()) throw IoError("line " + std::to_string(line_no) + ": empty unit id");
    const double x = parse_double(fields[static_cast<std::size_t>(col_x)], "x", line_no);
    const double z = parse_double(fields[static_cast<std::size_t>(col_z)], "z", line_no);

    std::optional<int> t;
    if (col_t >= 0 && !fields[static_cast<std::size_t>(col_t)].empty()) {
      const std::string& f = fields[static_cast<std::size_t>(col_t)];
      if (f == "0") t = 0;
      else if (f == "1") t = 1;
      else throw IoError("line " + std::to_string(line_no) + ": treatment must be 0 or 1, got '" + f + "'");
    }

    auto [it, fresh] = index.try_emplace(id, builders.size());
    if (fresh) {
      Builder b;
      b.id = id;
      b.x = x - opt.cutoff;
      b.t = t;
      builders.push_back(std::move(b));
    }
    Builder& b = builders[it->second];
    if (!fresh) {
      if (x - opt.cutoff != b.x)
        throw ValidationError("unit '" + id + "' has conflicting running values");
      if (t.has_value() && b.t.has_value() && *t != *b.t)
        throw ValidationError("unit '" + id + "' has conflicting treatment indicators");
      if (t.has_value() && !b.t.has_value()) b.t = t;
    }
    b.draws.push_back(z);
    if (col_w >= 0) {
      const std::string& f = fields[static_cast<std::size_t>(col_w)];
      b.weights.push_back(f.empty() ? 1.0 : parse_double(f, "w", line_no));
    }
  }

  UnitSample sample;
  sample.cutoff = opt.cutoff;
  sample.units.reserve(builders.size());
  for (auto& b : builders) {
    UnitRecord u;
    u.id = std::move(b.id);
    u.x = b.x;
    u.t = b.t;
    u.draws = Eigen::Map<Eigen::VectorXd>(b.draws.data(),
                                          static_cast<Eigen::Index>(b.draws.size()));
    if (!b.weights.empty())
      u.weights = Eigen::Map<Eigen::VectorXd>(b.weights.data(),
                                              static_cast<Eigen::Index>(b.weights.size()));
    sample.units.push_back(std::move(u));
  }
  sample.validate_units(opt.require_t);
  return sample;
}

UnitSample load_units_file(const std::string& path, const LoadOptions& opt) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return load_units(in, opt);
}

void save_units(std::ostream& out, const UnitSample& sample) {
  out << "unit_id,x,t,z,w\n";
  for (const auto& u : sample.units) {
    const std::string x = format_double(u.x);
    const std::string t = u.t.has_value() ? std::to_string(*u.t) : std::string();
    for (Eigen::Index j = 0; j < u.draws.size(); ++j) {
      out << u.id << ',' << x << ',' << t << ',' << format_double(u.draws(j)) << ',';
      if (u.weights.size() != 0) out << format_double(u.weights(j));
      out << '\n';
    }
  }
}

void save_units_file(const std::string& path, const UnitSample& sample) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  save_units(out, sample);
  out.flush();
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace r3d
