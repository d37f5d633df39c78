#include "latex_tables.hpp"

#include <regex>
#include <sstream>

namespace dshift::testing {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, '&')) cells.push_back(trim(cell));
  return cells;
}

std::string plain_header(std::string cell) {
  cell = std::regex_replace(cell, std::regex(R"(\$\^2\$)"), "2");
  return trim(cell);
}

}  // namespace

const TableRow* LatexTable::row(const std::string& name) const {
  for (const auto& r : rows)
    if (r.name == name) return &r;
  return nullptr;
}

std::vector<LatexTable> parse_latex_tables(const std::string& text) {
  std::vector<LatexTable> out;
  const std::regex env(R"(\\begin\{table\}([\s\S]*?)\\end\{table\})");
  const std::regex label(R"(\\label\{([^}]*)\})");
  const std::regex number(R"(^-?[0-9]+(\.[0-9]+)?)");
  for (auto it = std::sregex_iterator(text.begin(), text.end(), env); it != std::sregex_iterator(); ++it) {
    const std::string body = (*it)[1].str();
    LatexTable table;
    std::smatch m;
    if (std::regex_search(body, m, label)) table.label = m[1].str();
    std::istringstream lines(body);
    std::string line;
    bool header_done = false;
    while (std::getline(lines, line)) {
      const auto end = line.find("\\\\");
      if (end == std::string::npos || line.find('&') == std::string::npos) continue;
      auto cells = split_cells(line.substr(0, end));
      if (!header_done) {
        for (std::size_t i = 1; i < cells.size(); ++i) table.columns.push_back(plain_header(cells[i]));
        header_done = true;
        continue;
      }
      TableRow row;
      row.name = cells[0];
      for (std::size_t i = 1; i < cells.size(); ++i) {
        std::smatch n;
        if (!std::regex_search(cells[i], n, number)) continue;
        row.values.push_back(std::stod(n[0].str()));
        const bool up = cells[i].find("\\uparrow") != std::string::npos;
        const bool down = cells[i].find("\\downarrow") != std::string::npos;
        row.arrows.push_back(up ? 1 : (down ? -1 : 0));
      }
      table.rows.push_back(std::move(row));
    }
    out.push_back(std::move(table));
  }
  return out;
}

std::optional<LatexTable> find_table(const std::vector<LatexTable>& tables, const std::string& label) {
  for (const auto& t : tables)
    if (t.label == label) return t;
  return std::nullopt;
}

}  // namespace dshift::testing
