#ifndef RPMIX_IO_HPP
#define RPMIX_IO_HPP

// Model documents (JSON), sample CSV files and direction CSV files.

#include "rpmix/directions.hpp"
#include "rpmix/model.hpp"

#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace rpmix {

using Json = nlohmann::json;

/// Shortest round-trip representation of a double.
inline std::string format_double(double v, int precision = 17) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

inline std::string read_text(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path &path, const std::string &text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << text;
  if (!out) throw InvalidArgument("write failed for " + path.string());
}

// ---- model documents ----

inline Json model_to_json(const MixtureModel &model) {
  Json j;
  j["family"] = model.family().name();
  if (model.family().is_t()) j["nu"] = model.family().nu;
  j["weights"] = std::vector<double>(model.weights().data(), model.weights().data() + model.weights().size());
  Json means = Json::array(), covs = Json::array();
  for (std::size_t c = 0; c < model.components(); ++c) {
    const Vector &mu = model.means()[c];
    means.push_back(std::vector<double>(mu.data(), mu.data() + mu.size()));
    Json rows = Json::array();
    const Matrix &s = model.covariances()[c];
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(s.cols()));
      for (Eigen::Index q = 0; q < s.cols(); ++q) row[static_cast<std::size_t>(q)] = s(r, q);
      rows.push_back(row);
    }
    covs.push_back(rows);
  }
  j["means"] = means;
  j["covariances"] = covs;
  return j;
}

namespace detail {

inline Vector json_vector(const Json &j, const std::string &what) {
  if (!j.is_array()) throw ConfigError(what + " must be an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(what + " must contain only numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

/// Accepts a nested d x d array or a flat row-major array of d*d numbers.
inline Matrix json_matrix(const Json &j, Eigen::Index d, const std::string &what) {
  Matrix m(d, d);
  if (j.is_array() && !j.empty() && j[0].is_array()) {
    if (static_cast<Eigen::Index>(j.size()) != d) throw ConfigError(what + " must have d rows");
    for (Eigen::Index r = 0; r < d; ++r) {
      const Vector row = json_vector(j[static_cast<std::size_t>(r)], what);
      if (row.size() != d) throw ConfigError(what + " must have d columns");
      m.row(r) = row.transpose();
    }
    return m;
  }
  const Vector flat = json_vector(j, what);
  if (flat.size() != d * d) throw ConfigError(what + " must hold d*d entries");
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c) m(r, c) = flat[r * d + c];
  return m;
}

inline std::pair<std::size_t, std::size_t> line_column(const std::string &text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

} // namespace detail

inline Family family_from_json(const Json &j) {
  const std::string name = j.value("family", std::string("gaussian"));
  if (name == "gaussian") return Family::gaussian();
  if (name == "student_t" || name == "t") {
    if (!j.contains("nu") || !j["nu"].is_number_integer())
      throw ConfigError("student_t family needs an integer nu");
    return Family::student_t(j["nu"].get<int>());
  }
  throw ConfigError("unknown family '" + name + "'");
}

inline MixtureModel model_from_json(const Json &j) {
  if (!j.is_object()) throw ConfigError("model document must be an object");
  for (const char *key : {"weights", "means", "covariances"})
    if (!j.contains(key)) throw ConfigError(std::string("model document lacks '") + key + "'");
  const Family family = family_from_json(j);
  const Vector w = detail::json_vector(j["weights"], "weights");
  if (!j["means"].is_array() || !j["covariances"].is_array())
    throw ConfigError("means and covariances must be arrays");
  std::vector<Vector> means;
  for (const auto &mu : j["means"]) means.push_back(detail::json_vector(mu, "means"));
  if (means.empty()) throw ConfigError("model needs at least one component");
  const Eigen::Index d = means.front().size();
  std::vector<Matrix> covs;
  for (const auto &s : j["covariances"]) covs.push_back(detail::json_matrix(s, d, "covariances"));
  try {
    return MixtureModel(family, w, means, covs);
  } catch (const Error &e) {
    throw ConfigError(std::string("invalid model: ") + e.what());
  }
}

inline Json parse_json(const std::string &text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error &e) {
    const auto [line, col] = detail::line_column(text, e.byte > 0 ? e.byte - 1 : 0);
    throw ParseError("malformed JSON document", line, col);
  }
}

inline MixtureModel read_model(const std::filesystem::path &path) {
  return model_from_json(parse_json(read_text(path)));
}

inline void write_model(const std::filesystem::path &path, const MixtureModel &model) {
  write_text(path, model_to_json(model).dump(2) + "\n");
}

// ---- CSV ----

struct CsvSchema {
  enum class Header { Auto, Present, Absent };
  Header header = Header::Auto;
  /// Name of the label column (needs a header).
  std::optional<std::string> label_column;
  /// Last column holds 1-based integer labels.
  bool label_last = false;
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

inline std::vector<std::string> split_fields(const std::string &line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

inline bool parse_number(const std::string &s, double &v) {
  if (s.empty()) return false;
  const char *b = s.data();
  const char *e = s.data() + s.size();
  if (*b == '+') ++b;
  const auto [p, ec] = std::from_chars(b, e, v);
  return ec == std::errc() && p == e && std::isfinite(v);
}

} // namespace detail

/// Parses numeric CSV text into a sample. Empty lines are skipped; row
/// order is preserved; labels become 0-based.
inline LabeledSample parse_csv(const std::string &text, const CsvSchema &schema = {}) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::optional<std::size_t> label_index;
  std::size_t width = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_fields(line);
    if (first) {
      first = false;
      bool has_header = schema.header == CsvSchema::Header::Present;
      if (schema.header == CsvSchema::Header::Auto) {
        double tmp = 0.0;
        for (const auto &f : fields)
          if (!detail::parse_number(f, tmp)) has_header = true;
      }
      width = fields.size();
      if (schema.label_column) {
        if (!has_header) throw ParseError("label column '" + *schema.label_column + "' needs a header", line_no, 1);
        const auto it = std::find(fields.begin(), fields.end(), *schema.label_column);
        if (it == fields.end())
          throw ParseError("no column named '" + *schema.label_column + "'", line_no, 1);
        label_index = static_cast<std::size_t>(it - fields.begin());
      } else if (schema.label_last) {
        label_index = width - 1;
      }
      if (has_header) {
        header = fields;
        continue;
      }
    }
    if (fields.size() != width)
      throw ParseError("expected " + std::to_string(width) + " fields, found " + std::to_string(fields.size()),
                       line_no, std::min(fields.size(), width) + 1);
    std::vector<double> row;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      double v = 0.0;
      if (!detail::parse_number(fields[c], v))
        throw ParseError("non-numeric value '" + fields[c] + "'", line_no, c + 1);
      if (label_index && c == *label_index) {
        if (v != std::floor(v) || v < 1.0 || v > 1e9)
          throw ParseError("labels must be positive integers", line_no, c + 1);
        labels.push_back(static_cast<int>(v) - 1);
      } else {
        row.push_back(v);
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("no observations", line_no + 1, 1);
  LabeledSample out;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(rows.front().size());
  if (d < 1) throw ParseError("no data columns", 1, 1);
  out.data.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < d; ++c) out.data(i, c) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
  if (label_index) out.labels = std::move(labels);
  return out;
}

inline LabeledSample ingest_csv(const std::filesystem::path &path, const CsvSchema &schema = {}) {
  return parse_csv(read_text(path), schema);
}

/// Headerless CSV, one observation per row, optional final 1-based label.
inline std::string format_csv(const LabeledSample &s) {
  std::string out;
  for (Eigen::Index i = 0; i < s.data.rows(); ++i) {
    for (Eigen::Index c = 0; c < s.data.cols(); ++c) {
      if (c > 0) out += ',';
      out += format_double(s.data(i, c));
    }
    if (s.labels) out += ',' + std::to_string((*s.labels)[static_cast<std::size_t>(i)] + 1);
    out += '\n';
  }
  return out;
}

inline void write_csv(const std::filesystem::path &path, const LabeledSample &s) {
  write_text(path, format_csv(s));
}

inline void write_directions(const std::filesystem::path &path, const DirectionSet &dirs) {
  write_csv(path, LabeledSample{dirs.vectors(), std::nullopt});
}

inline DirectionSet read_directions(const std::filesystem::path &path) {
  CsvSchema schema;
  schema.header = CsvSchema::Header::Absent;
  return DirectionSet(ingest_csv(path, schema).data);
}

} // namespace rpmix

#endif // RPMIX_IO_HPP
