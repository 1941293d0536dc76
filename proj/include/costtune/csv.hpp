#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace costtune::csv {

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);
/// Throws LoadError on trailing garbage or an empty field.
double parse_double(std::string_view s);

/// Quotes a field when it contains a comma, quote or newline.
std::string escape(std::string_view field);

/// Splits one CSV record (no embedded newlines) honouring double quotes.
std::vector<std::string> split_line(std::string_view line);

/// Splits text into lines, dropping a trailing empty line and any '\r'.
std::vector<std::string> lines(std::string_view text);

} // namespace costtune::csv
