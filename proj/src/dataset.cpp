#include "gmethods/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gmethods {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

long parse_int_field(const std::string& s, const std::string& what, std::size_t lineno) {
  std::size_t pos = 0;
  long v = 0;
  try {
    v = std::stol(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || s.empty()) {
    throw std::runtime_error("csv line " + std::to_string(lineno) + ": bad " + what +
                             " value '" + s + "'");
  }
  return v;
}

double parse_real_field(const std::string& s, const std::string& what, std::size_t lineno) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || s.empty()) {
    throw std::runtime_error("csv line " + std::to_string(lineno) + ": bad " + what +
                             " value '" + s + "'");
  }
  return v;
}

// Meta comments look like:  # scenario=seq_rand seed=7
void parse_meta_comment(const std::string& line, std::string* scenario_id,
                        std::uint64_t* seed) {
  std::stringstream ss(line.substr(1));
  std::string tok;
  while (ss >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos) continue;
    std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "scenario") *scenario_id = val;
    if (key == "seed") *seed = std::stoull(val);
  }
}

}  // namespace

void LongitudinalDataset::validate() const {
  std::size_t n = a1.size();
  if (l.size() != n || a2.size() != n || y.size() != n)
    throw std::runtime_error("dataset columns have unequal lengths");
  if (!cens.empty() && cens.size() != n)
    throw std::runtime_error("censor column length mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    if (a1[i] < 0 || a1[i] >= a1_levels)
      throw std::runtime_error("record " + std::to_string(i) + ": a1 out of support");
    if (l[i] < 0 || l[i] >= l_levels)
      throw std::runtime_error("record " + std::to_string(i) + ": l out of support");
    if (a2[i] < 0 || a2[i] >= a2_levels)
      throw std::runtime_error("record " + std::to_string(i) + ": a2 out of support");
    bool censored = !cens.empty() && cens[i] != 0;
    if (censored) {
      if (y[i] != -1)
        throw std::runtime_error("record " + std::to_string(i) +
                                 ": censored record must have y = -1");
    } else if (y[i] < 0 || y[i] >= y_levels) {
      throw std::runtime_error("record " + std::to_string(i) + ": y out of support");
    }
  }
}

LongitudinalDataset LongitudinalDataset::read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  LongitudinalDataset d;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  bool has_c = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      parse_meta_comment(line, &d.scenario_id, &d.seed);
      continue;
    }
    auto fields = split_csv_line(line);
    if (!header_seen) {
      if (fields.size() == 4 && fields[0] == "a1" && fields[1] == "l" &&
          fields[2] == "a2" && fields[3] == "y") {
        has_c = false;
      } else if (fields.size() == 5 && fields[0] == "a1" && fields[1] == "l" &&
                 fields[2] == "a2" && fields[3] == "y" && fields[4] == "c") {
        has_c = true;
      } else {
        throw std::runtime_error("expected header a1,l,a2,y[,c] in " + path);
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != (has_c ? 5u : 4u))
      throw std::runtime_error("csv line " + std::to_string(lineno) +
                               ": wrong field count");
    d.push(static_cast<int>(parse_int_field(fields[0], "a1", lineno)),
           static_cast<int>(parse_int_field(fields[1], "l", lineno)),
           static_cast<int>(parse_int_field(fields[2], "a2", lineno)),
           static_cast<int>(parse_int_field(fields[3], "y", lineno)));
    if (has_c)
      d.cens.push_back(static_cast<std::uint8_t>(parse_int_field(fields[4], "c", lineno)));
  }
  if (!header_seen) throw std::runtime_error("empty dataset file: " + path);
  // Infer level counts from the data; callers with a scenario in hand can
  // overwrite these before validate().
  auto infer = [](const std::vector<std::int8_t>& col) {
    int m = 1;
    for (auto v : col) m = std::max(m, static_cast<int>(v) + 1);
    return std::max(m, 2);
  };
  d.a1_levels = infer(d.a1);
  d.l_levels = infer(d.l);
  d.a2_levels = infer(d.a2);
  d.y_levels = infer(d.y);
  d.validate();
  return d;
}

void LongitudinalDataset::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path);
  if (!scenario_id.empty())
    out << "# scenario=" << scenario_id << " seed=" << seed << "\n";
  out << (has_censoring() ? "a1,l,a2,y,c\n" : "a1,l,a2,y\n");
  for (std::size_t i = 0; i < size(); ++i) {
    out << static_cast<int>(a1[i]) << ',' << static_cast<int>(l[i]) << ','
        << static_cast<int>(a2[i]) << ',' << static_cast<int>(y[i]);
    if (has_censoring()) out << ',' << static_cast<int>(cens[i]);
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

CellCounts CellCounts::from(const LongitudinalDataset& data) {
  CellCounts c;
  c.init(data.a1_levels, data.l_levels, data.a2_levels, data.y_levels);
  if (data.has_censoring()) c.wcens.assign(static_cast<std::size_t>(c.A1) * c.L, 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    bool censored = data.has_censoring() && data.cens[i] != 0;
    if (censored) {
      c.wcens[static_cast<std::size_t>(data.a1[i]) * c.L + data.l[i]] += 1.0;
    } else {
      c.at(data.a1[i], data.l[i], data.a2[i], data.y[i]) += 1.0;
    }
    c.total += 1.0;
  }
  return c;
}

void ContinuousDataset::validate() const {
  std::size_t n = y.size();
  if (d <= 0) throw std::runtime_error("continuous dataset: dimension must be positive");
  if (x.size() != n * static_cast<std::size_t>(d))
    throw std::runtime_error("continuous dataset: x size mismatch");
  if (!a2.empty() && a2.size() != n)
    throw std::runtime_error("continuous dataset: a2 length mismatch");
  for (double v : x)
    if (!(v >= 0.0 && v <= 1.0))
      throw std::runtime_error("continuous dataset: covariate outside [0,1]");
}

ContinuousDataset ContinuousDataset::read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  ContinuousDataset d;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  bool has_a2 = false;
  int dim = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      parse_meta_comment(line, &d.scenario_id, &d.seed);
      continue;
    }
    auto fields = split_csv_line(line);
    if (!header_seen) {
      // Header is l1,...,ld[,a2],y
      std::size_t i = 0;
      while (i < fields.size() && fields[i] == "l" + std::to_string(i + 1)) ++i;
      dim = static_cast<int>(i);
      if (dim == 0) throw std::runtime_error("expected l1,...,ld[,a2],y header in " + path);
      if (i < fields.size() && fields[i] == "a2") {
        has_a2 = true;
        ++i;
      }
      if (i + 1 != fields.size() || fields[i] != "y")
        throw std::runtime_error("expected l1,...,ld[,a2],y header in " + path);
      d.d = dim;
      header_seen = true;
      continue;
    }
    if (fields.size() != static_cast<std::size_t>(dim) + (has_a2 ? 2u : 1u))
      throw std::runtime_error("csv line " + std::to_string(lineno) +
                               ": wrong field count");
    for (int j = 0; j < dim; ++j)
      d.x.push_back(parse_real_field(fields[j], "l" + std::to_string(j + 1), lineno));
    std::size_t k = dim;
    if (has_a2)
      d.a2.push_back(static_cast<std::uint8_t>(parse_int_field(fields[k++], "a2", lineno)));
    d.y.push_back(parse_real_field(fields[k], "y", lineno));
  }
  if (!header_seen) throw std::runtime_error("empty dataset file: " + path);
  d.validate();
  return d;
}

void ContinuousDataset::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path);
  if (!scenario_id.empty())
    out << "# scenario=" << scenario_id << " seed=" << seed << "\n";
  for (int j = 0; j < d; ++j) out << "l" << (j + 1) << ',';
  if (!a2.empty()) out << "a2,";
  out << "y\n";
  char buf[64];
  for (std::size_t i = 0; i < size(); ++i) {
    for (int j = 0; j < d; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", x[i * d + j]);
      out << buf << ',';
    }
    if (!a2.empty()) out << static_cast<int>(a2[i]) << ',';
    std::snprintf(buf, sizeof buf, "%.17g", y[i]);
    out << buf << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace gmethods
