#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace agpolab {

/// Formats with `sig` significant digits (printf %g semantics, C locale).
std::string format_sig(double v, int sig);

/// 7 significant digits — the CSV convention used by every emitted table.
inline std::string format_sig7(double v) { return format_sig(v, 7); }

/// 17 significant digits — lossless double round-trip, used by checkpoints.
inline std::string format_sig17(double v) { return format_sig(v, 17); }

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

}  // namespace agpolab
