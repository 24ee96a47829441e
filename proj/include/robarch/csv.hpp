#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace robarch::csv {

/// Shortest round-trip decimal form with '.' separator; locale independent.
std::string number(double value);

/// Quotes a field when it contains a comma, quote or line break.
std::string field(std::string_view text);

/// Splits one CSV line, honouring double-quoted fields.
std::vector<std::string> split_line(std::string_view line);

}  // namespace robarch::csv
