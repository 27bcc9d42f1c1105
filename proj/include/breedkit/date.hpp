#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace breedkit {

// Calendar date at day resolution, parsed from and printed as YYYY-MM-DD.
class Date {
  public:
    Date() = default;
    explicit Date(std::chrono::sys_days days) : days_(days) {}

    static Date parse(std::string_view iso); // throws ParseError

    std::chrono::sys_days days() const { return days_; }
    std::string str() const;

    // Signed difference in days (this - other).
    long long minus(const Date &other) const { return (days_ - other.days_).count(); }

    friend auto operator<=>(const Date &, const Date &) = default;

  private:
    std::chrono::sys_days days_{};
};

} // namespace breedkit
