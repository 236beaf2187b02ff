#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace district {

/// One "key = value ..." line of a run config file.
struct ConfigEntry {
    std::string key;                  // flag name without leading dashes, '_' folded to '-'
    std::vector<std::string> values;  // whitespace-separated, surrounding quotes removed
};

/// Parses a declarative key-value file: one `key = value` per line, values
/// split on whitespace (so `seed = 1 2 3` lists three seeds), `#` starts a
/// comment, blank lines ignored. A bare `key` with no '=' is a boolean flag.
/// Throws a config error naming the line on malformed input.
std::vector<ConfigEntry> parse_config(std::string_view text);

/// Expands `--config FILE` inside `args` (args[0] is the subcommand) into
/// flags. Entries whose flag also appears on the command line are dropped, so
/// explicit flags win.
std::vector<std::string> expand_config(const std::vector<std::string>& args);

}  // namespace district
