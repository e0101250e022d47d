#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace dcsrl
{

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never observe a partially written file.
void write_file_atomic( const std::filesystem::path& path, std::string_view contents );

[[nodiscard]] std::string read_file( const std::filesystem::path& path );

/// Shortest decimal text that round-trips to the same double.
[[nodiscard]] std::string format_double( double v );

} // namespace dcsrl
