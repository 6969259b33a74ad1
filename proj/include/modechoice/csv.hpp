#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace modechoice::csv {

// Splits one delimiter-separated line. Double-quoted fields may contain the
// delimiter and doubled quotes; embedded newlines are not supported.
std::vector<std::string> split(std::string_view line, char delimiter = ',');

// Quotes a field only when it needs it.
std::string quote(std::string_view field, char delimiter = ',');

std::string join(const std::vector<std::string>& fields, char delimiter = ',');

// Reads a header plus rows. Blank lines are skipped; a trailing '\r' is dropped.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Index of a header column, or npos.
    [[nodiscard]] std::size_t column(std::string_view name) const;
};

Table read(std::istream& in, char delimiter = ',');
Table read_file(const std::string& path, char delimiter = ',');

} // namespace modechoice::csv
