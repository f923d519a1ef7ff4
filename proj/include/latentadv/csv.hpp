#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace latentadv::csv {

using Row = std::vector<std::string>;

// RFC-4180 reader: comma separated, double-quoted fields may contain commas,
// line breaks and doubled quotes. Accepts LF or CRLF line endings and a UTF-8 BOM.
class Reader {
 public:
  explicit Reader(std::istream& in);
  // Reads the next record; returns false at end of input. Blank lines are skipped.
  bool next(Row& row);
  // 1-based physical line number where the last record started.
  std::size_t line() const { return record_line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 1;
  std::size_t record_line_ = 0;
  bool first_ = true;
};

std::vector<Row> read_all(std::istream& in);

// Quotes a field only when it needs it.
std::string escape(std::string_view field);
void write_row(std::ostream& out, const Row& row);

}  // namespace latentadv::csv
