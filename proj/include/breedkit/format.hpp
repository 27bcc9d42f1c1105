#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace breedkit {

// Shortest decimal text that reads back to the identical double.
std::string format_double(double v);

// Strict full-token parse; nullopt on any trailing garbage or empty input.
std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_integer(std::string_view text);

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);

} // namespace breedkit
