#include "district/config.hpp"

#include <algorithm>
#include <set>

#include "district/error.hpp"
#include "district/io.hpp"
#include "district/text.hpp"

namespace district {

std::vector<ConfigEntry> parse_config(std::string_view text) {
    std::vector<ConfigEntry> entries;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string line(text.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;

        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = collapse_whitespace(line);
        if (line.empty()) continue;

        ConfigEntry entry;
        const auto eq = line.find('=');
        entry.key = collapse_whitespace(line.substr(0, eq));
        if (entry.key.empty() || entry.key.find(' ') != std::string::npos) {
            fail(ErrorKind::config, "config line " + std::to_string(line_no) + ": malformed key");
        }
        while (!entry.key.empty() && entry.key.front() == '-') entry.key.erase(0, 1);
        std::replace(entry.key.begin(), entry.key.end(), '_', '-');
        if (eq != std::string::npos) {
            for (auto& v : split_whitespace(line.substr(eq + 1))) {
                if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) {
                    v = v.substr(1, v.size() - 2);
                }
                entry.values.push_back(std::move(v));
            }
            if (entry.values.empty()) {
                fail(ErrorKind::config, "config line " + std::to_string(line_no) + ": no value for " + entry.key);
            }
        }
        entries.push_back(std::move(entry));
    }
    return entries;
}

std::vector<std::string> expand_config(const std::vector<std::string>& args) {
    std::vector<std::string> rest;
    std::vector<std::string> config_paths;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) fail(ErrorKind::config, "--config needs a file");
            config_paths.push_back(args[++i]);
        } else if (args[i].rfind("--config=", 0) == 0) {
            config_paths.push_back(args[i].substr(9));
        } else {
            rest.push_back(args[i]);
        }
    }
    if (config_paths.empty()) return rest;

    std::set<std::string> explicit_flags;
    for (const auto& a : rest) {
        if (a.rfind("--", 0) == 0) explicit_flags.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2));
    }

    std::vector<std::string> out;
    if (!rest.empty()) out.push_back(rest.front());
    for (const auto& path : config_paths) {
        std::string text;
        try {
            text = read_file(path);
        } catch (const Error& e) {
            fail(ErrorKind::config, std::string("cannot read config: ") + e.what());
        }
        for (const auto& entry : parse_config(text)) {
            if (explicit_flags.count(entry.key)) continue;
            out.push_back("--" + entry.key);
            for (const auto& v : entry.values) out.push_back(v);
        }
    }
    out.insert(out.end(), rest.begin() + (rest.empty() ? 0 : 1), rest.end());
    return out;
}

}  // namespace district
