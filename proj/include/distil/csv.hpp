#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace distil {

// RFC 4180 style reader: quoted fields may contain the delimiter, doubled
// quotes and newlines. Returns every row including the header.
std::vector<std::vector<std::string>> parse_delimited(std::string_view text, char delimiter);

// Picks ',' or '\t' from the header line.
char sniff_delimiter(std::string_view text);

}  // namespace distil
