#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "xlisac/harness.hpp"

namespace xlisac {

enum class Unit { None, Frequency, Power, Angle, Length, NoisePower };

// Parses "<number> [suffix]" for the given quantity. Angles come back in radians,
// powers in watts, lengths in meters. Lengths accept a "lambda" suffix when lambda > 0.
double parse_quantity(const std::string& text, Unit unit, double lambda = 0.0);

std::vector<double> parse_list(const std::string& text);

// INI sections: [system], [scenario], [estimation], [optimization], [harness].
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace xlisac
