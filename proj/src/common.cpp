#include "breedkit/csv.hpp"
#include "breedkit/date.hpp"
#include "breedkit/error.hpp"
#include "breedkit/format.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace breedkit {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    std::array<char, 64> buf{};
    auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (auto &c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::optional<double> parse_double(std::string_view text) {
    text = trim(text);
    if (text.empty()) return std::nullopt;
    if (text.front() == '+') text.remove_prefix(1);
    double v = 0.0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) return std::nullopt;
    return v;
}

std::optional<long long> parse_integer(std::string_view text) {
    text = trim(text);
    if (text.empty()) return std::nullopt;
    long long v = 0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) return std::nullopt;
    return v;
}

Date Date::parse(std::string_view iso) {
    iso = trim(iso);
    auto bad = [&] { return ParseError("invalid ISO date '" + std::string(iso) + "'"); };
    if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') throw bad();
    auto y = parse_integer(iso.substr(0, 4));
    auto m = parse_integer(iso.substr(5, 2));
    auto d = parse_integer(iso.substr(8, 2));
    if (!y || !m || !d) throw bad();
    std::chrono::year_month_day ymd{std::chrono::year(static_cast<int>(*y)),
                                    std::chrono::month(static_cast<unsigned>(*m)),
                                    std::chrono::day(static_cast<unsigned>(*d))};
    if (!ymd.ok()) throw bad();
    return Date(std::chrono::sys_days(ymd));
}

std::string Date::str() const {
    std::chrono::year_month_day ymd(days_);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

namespace csv {

namespace {

// Reads one record; returns false at end of input. `line` tracks physical lines.
bool read_record(std::istream &in, std::vector<std::string> &fields, std::size_t &line, const std::string &source) {
    fields.clear();
    if (in.peek() == std::char_traits<char>::eof()) return false;
    std::string field;
    bool quoted = false;
    bool was_quoted = false;
    const std::size_t start_line = line + 1;
    int ch;
    while ((ch = in.get()) != std::char_traits<char>::eof()) {
        char c = static_cast<char>(ch);
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    field.push_back('"');
                    in.get();
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        if (c == '"' && field.empty() && !was_quoted) {
            quoted = true;
            was_quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
            was_quoted = false;
        } else if (c == '\n') {
            ++line;
            break;
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    if (quoted) throw ParseError(source + ":" + std::to_string(start_line) + ": unterminated quoted field");
    if (ch == std::char_traits<char>::eof()) ++line;
    fields.push_back(std::move(field));
    return true;
}

bool blank(const std::vector<std::string> &fields) {
    return fields.size() == 1 && trim(fields[0]).empty();
}

} // namespace

Table Table::read(std::istream &in, const std::string &source) {
    Table t;
    t.source_ = source;
    std::size_t line = 0;
    std::vector<std::string> fields;
    while (read_record(in, fields, line, source)) {
        if (blank(fields)) continue;
        t.header_.clear();
        for (auto &f : fields) t.header_.emplace_back(trim(f));
        break;
    }
    if (t.header_.empty()) throw EmptyInput(source + ": missing CSV header");
    // Tolerate a UTF-8 byte order mark on the first header cell.
    if (t.header_[0].rfind("\xEF\xBB\xBF", 0) == 0) t.header_[0].erase(0, 3);
    for (std::size_t i = 0; i < t.header_.size(); ++i) {
        if (!t.index_.emplace(t.header_[i], i).second)
            throw ParseError(source + ": duplicate column '" + t.header_[i] + "'");
    }
    while (read_record(in, fields, line, source)) {
        if (blank(fields)) continue;
        if (fields.size() != t.header_.size())
            throw ParseError(source + ":" + std::to_string(line) + ": expected " + std::to_string(t.header_.size()) +
                             " fields, found " + std::to_string(fields.size()));
        t.rows_.push_back(fields);
        t.lines_.push_back(line);
    }
    return t;
}

Table Table::read_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return read(in, path.string());
}

bool Table::has_column(std::string_view name) const { return index_.count(std::string(name)) != 0; }

std::size_t Table::column(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ParseError(source_ + ": missing column '" + std::string(name) + "'");
    return it->second;
}

const std::string &Table::cell(std::size_t row, std::string_view name) const { return rows_.at(row).at(column(name)); }

std::optional<std::string> Table::optional_cell(std::size_t row, std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    const auto &v = rows_.at(row).at(it->second);
    if (trim(v).empty()) return std::nullopt;
    return std::string(trim(v));
}

std::optional<double> Table::number(std::size_t row, std::string_view name) const {
    auto text = optional_cell(row, name);
    if (!text) return std::nullopt;
    auto v = parse_double(*text);
    if (!v)
        throw ParseError(source_ + ":" + std::to_string(line_of(row)) + ": column '" + std::string(name) +
                         "' is not numeric: '" + *text + "'");
    return v;
}

double Table::required_number(std::size_t row, std::string_view name) const {
    auto v = number(row, name);
    if (!v)
        throw ParseError(source_ + ":" + std::to_string(line_of(row)) + ": column '" + std::string(name) +
                         "' is empty");
    return *v;
}

std::string escape(std::string_view field) {
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

void write_row(std::ostream &out, const std::vector<std::string> &fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        out << escape(fields[i]);
    }
    out << '\n';
}

} // namespace csv
} // namespace breedkit
