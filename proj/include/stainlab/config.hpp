#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace stainlab::config {

using KeyValues = std::map<std::string, std::string>;

/// Flat `key = value` file; blank lines and lines starting with '#' are ignored.
KeyValues read_key_values(const std::filesystem::path& path);

int to_int(const std::string& key, const std::string& value);
double to_double(const std::string& key, const std::string& value);
bool to_bool(const std::string& key, const std::string& value);

}  // namespace stainlab::config
