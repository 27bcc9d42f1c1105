#pragma once

#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace breedkit::csv {

// RFC 4180 table: first record is the header. Fields may be quoted and
// quoted fields may span lines.
class Table {
  public:
    static Table read(std::istream &in, const std::string &source = "<stream>");
    static Table read_file(const std::filesystem::path &path);

    const std::vector<std::string> &header() const { return header_; }
    std::size_t rows() const { return rows_.size(); }
    const std::vector<std::string> &row(std::size_t i) const { return rows_.at(i); }

    bool has_column(std::string_view name) const;
    std::size_t column(std::string_view name) const; // throws ParseError
    const std::string &cell(std::size_t row, std::string_view column) const;
    // Empty string when the column is absent or the cell is blank.
    std::optional<std::string> optional_cell(std::size_t row, std::string_view column) const;

    // 1-based line number of the given data row in the source, for messages.
    std::size_t line_of(std::size_t row) const { return lines_.at(row); }
    const std::string &source() const { return source_; }

    // Parse a numeric cell; blank → nullopt, garbage → ParseError.
    std::optional<double> number(std::size_t row, std::string_view column) const;
    double required_number(std::size_t row, std::string_view column) const;

  private:
    std::string source_;
    std::vector<std::string> header_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::vector<std::string>> rows_;
    std::vector<std::size_t> lines_;
};

// Quote a field only when needed.
std::string escape(std::string_view field);

void write_row(std::ostream &out, const std::vector<std::string> &fields);

} // namespace breedkit::csv
