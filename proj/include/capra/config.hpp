#pragma once

#include <map>
#include <string>

namespace capra {

// Flat "key = value" configuration file; '#' starts a comment. Unknown keys
// are the caller's concern.
std::map<std::string, std::string> read_flat_config(const std::string& path);

}  // namespace capra
