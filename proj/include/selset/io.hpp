#pragma once

#include <string>
#include <vector>

namespace selset {

// Shortest decimal representation that round-trips to the same double.
std::string format_double(double v);

std::string read_text_file(const std::string& path);

// Writes via a temporary file in the same directory followed by a rename, so
// an interrupted run never leaves a truncated artifact behind.
void atomic_write_text(const std::string& path, const std::string& content);

std::string csv_row(const std::vector<std::string>& fields);

}  // namespace selset
