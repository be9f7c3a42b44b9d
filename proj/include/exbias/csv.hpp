#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace exbias {

/// Minimal comma-separated table; '#'-prefixed lines are collected as comments.
struct CsvTable {
  std::vector<std::string> comments;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
  double number(std::size_t row, std::size_t col) const;
};

CsvTable read_csv(std::istream& in);

/// Writes `text` with every line prefixed by "# ".
void write_comment_block(std::ostream& out, const std::string& text);

}  // namespace exbias
