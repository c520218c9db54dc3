#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "covtest/mc.hpp"

namespace covtest::cli {

inline constexpr int kCsvSchemaVersion = 1;
inline constexpr int kManifestSchemaVersion = 1;

std::uint64_t fnv1a64(std::string_view bytes) noexcept;
std::string hex64(std::uint64_t value);

// Shortest decimal string that round-trips to the same double.
std::string format_double(double value);

// RFC-4180 field: quoted only when it contains a comma, quote or line break.
std::string csv_field(std::string_view value);

// Line plot of power against ||Sigma - I||_F, one series per statistic
// (T_n solid, CLRT dashed). `metadata` is embedded verbatim in a <metadata>
// element and must not contain "]]>".
std::string render_power_svg(const PowerCurve& curve, std::string_view title,
                             std::string_view metadata);

// Writes bytes exactly (binary mode, so LF line endings survive everywhere).
void write_file(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace covtest::cli
