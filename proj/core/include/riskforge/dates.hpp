#pragma once

#include <compare>
#include <optional>
#include <string>

namespace riskforge {

// Calendar date with day granularity. All window arithmetic in the
// pipeline is expressed in whole days.
class Date {
public:
    Date() = default;
    explicit Date(int serial_day) : serial_(serial_day) {}
    Date(int year, int month, int day);

    // Days since 1970-01-01 (may be negative).
    int serial() const { return serial_; }

    // "YYYY-MM-DD"; returns nullopt on anything else.
    static std::optional<Date> parse(const std::string& iso);
    std::string to_string() const;

    Date add_days(int days) const { return Date(serial_ + days); }
    friend int days_between(Date from, Date to) { return to.serial_ - from.serial_; }

    auto operator<=>(const Date&) const = default;

private:
    int serial_ = 0;
};

} // namespace riskforge
