#include <algorithm>
#include <charconv>
#include <cstdio>
#include <sstream>

#include "dshift/errors.hpp"
#include "dshift/evaluation.hpp"

namespace dshift {

namespace {

std::string two_decimals(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

// Shortest representation that round-trips.
std::string exact(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Terminal columns, counting each UTF-8 code point as one.
std::size_t display_width(const std::string& s) {
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string render_table(const EvaluationReport& r) {
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header{"method"};
  header.insert(header.end(), r.models.begin(), r.models.end());
  grid.push_back(header);

  std::vector<std::string> base{r.baseline.method};
  for (double v : r.baseline.values) base.push_back(two_decimals(v));
  grid.push_back(base);

  for (const auto& row : r.rows) {
    std::vector<std::string> line{row.method};
    for (std::size_t m = 0; m < r.models.size(); ++m) {
      const MethodDelta d = compute_delta(r.baseline.values[m], row.values[m]);
      line.push_back(two_decimals(row.values[m]) + marker(d.direction));
    }
    grid.push_back(line);
  }

  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& line : grid)
    for (std::size_t c = 0; c < line.size(); ++c) widths[c] = std::max(widths[c], display_width(line[c]));

  std::string out;
  for (const auto& line : grid) {
    std::string text;
    for (std::size_t c = 0; c < line.size(); ++c) {
      text += line[c];
      if (c + 1 < line.size()) text += std::string(widths[c] - display_width(line[c]) + 2, ' ');
    }
    out += text + "\n";
  }
  return out;
}

std::string render_json(const EvaluationReport& r) {
  nlohmann::ordered_json doc;
  nlohmann::ordered_json baseline = nlohmann::ordered_json::object();
  for (std::size_t m = 0; m < r.models.size(); ++m) baseline[r.models[m]] = r.baseline.values[m];
  doc["baseline"] = baseline;
  nlohmann::ordered_json methods = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) {
    nlohmann::ordered_json values = nlohmann::ordered_json::object();
    nlohmann::ordered_json deltas = nlohmann::ordered_json::object();
    for (std::size_t m = 0; m < r.models.size(); ++m) {
      values[r.models[m]] = row.values[m];
      deltas[r.models[m]] = compute_delta(r.baseline.values[m], row.values[m]).delta;
    }
    methods.push_back({{"name", row.method}, {"values", values}, {"deltas", deltas}});
  }
  doc["methods"] = methods;
  nlohmann::ordered_json metadata = nlohmann::ordered_json::object();
  metadata["baseline_method"] = r.baseline.method;
  for (const auto& [key, value] : r.metadata.items())
    if (key != "baseline_method") metadata[key] = value;
  doc["metadata"] = metadata;
  return doc.dump(2) + "\n";
}

std::string render_csv(const EvaluationReport& r) {
  std::string out = "method,model,base,value,delta,direction\n";
  for (const auto& d : r.deltas()) {
    out += csv_field(d.method) + "," + csv_field(d.model) + "," + exact(d.base) + "," + exact(d.value) + "," +
           exact(d.delta) + "," + to_string(d.direction) + "\n";
  }
  return out;
}

}  // namespace

ReportFormat parse_report_format(const std::string& text) {
  if (text == "text-table" || text == "text" || text == "table") return ReportFormat::text_table;
  if (text == "json") return ReportFormat::json;
  if (text == "csv") return ReportFormat::csv;
  throw ArgumentError("unknown report format '" + text + "' (expected text-table, json or csv)");
}

ReportFormat report_format_for_path(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".json") return ReportFormat::json;
  if (ext == ".csv") return ReportFormat::csv;
  return ReportFormat::text_table;
}

std::string render_report(const EvaluationReport& report, ReportFormat format) {
  report.validate();
  switch (format) {
    case ReportFormat::text_table:
      return render_table(report);
    case ReportFormat::json:
      return render_json(report);
    case ReportFormat::csv:
      return render_csv(report);
  }
  return {};
}

EvaluationReport parse_report_json(const std::string& text) {
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("baseline") || !doc.contains("methods"))
    throw FormatError("report JSON needs \"baseline\" and \"methods\"");

  EvaluationReport r;
  try {
    for (const auto& [model, value] : doc.at("baseline").items()) {
      r.models.push_back(model);
      r.baseline.values.push_back(value.get<double>());
    }
    if (doc.contains("metadata")) r.metadata = doc.at("metadata");
    r.baseline.method = r.metadata.value("baseline_method", std::string("base"));
    for (const auto& entry : doc.at("methods")) {
      ReportRow row{entry.at("name").get<std::string>(), {}};
      const auto& values = entry.at("values");
      for (const auto& model : r.models) {
        if (!values.contains(model))
          throw FormatError("method '" + row.method + "' has no value for model '" + model + "'");
        row.values.push_back(values.at(model).get<double>());
      }
      r.rows.push_back(std::move(row));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed report JSON: ") + e.what());
  }
  r.validate();
  return r;
}

}  // namespace dshift
