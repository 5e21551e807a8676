#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace drd {

// Shortest decimal that round-trips to the same double; used in every CSV
// artifact.
std::string format_double(double v);

std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace drd
