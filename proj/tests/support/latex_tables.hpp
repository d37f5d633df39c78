#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dshift::testing {

/// One body row of a LaTeX results table: numbers plus the arrow printed next to each.
struct TableRow {
  std::string name;
  std::vector<double> values;
  /// +1 for an up arrow, -1 for a down arrow, 0 when the cell has none.
  std::vector<int> arrows;
};

struct LatexTable {
  std::string label;
  std::vector<std::string> columns;
  std::vector<TableRow> rows;

  const TableRow* row(const std::string& name) const;
};

/// Every table environment in a LaTeX/Markdown document.
std::vector<LatexTable> parse_latex_tables(const std::string& text);
std::optional<LatexTable> find_table(const std::vector<LatexTable>& tables, const std::string& label);

}  // namespace dshift::testing
