#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

namespace spdreg {

/// Parse a practical TOML subset into JSON: `#` comments, [dotted.table]
/// headers, `key = value` with strings, booleans, integers, floats, and
/// single-line (possibly nested) arrays. Enough for experiment configs;
/// anything else raises IoError.
nlohmann::json parse_toml_lite(const std::string& text);

/// Load a config file as JSON. `.toml` goes through parse_toml_lite,
/// everything else through the JSON parser.
nlohmann::json load_config(const std::filesystem::path& path);

}  // namespace spdreg
