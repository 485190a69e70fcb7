#ifndef UDAKIT_CLASS_MAP_HPP
#define UDAKIT_CLASS_MAP_HPP

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>

#include "udakit/errors.hpp"

namespace udakit {

/// Source-to-target semantic id mapping plus the ignore id excluded from
/// metrics. Target ids of the non-ignored classes form a contiguous 0..C-1
/// range; this is validated on load.
///
/// Text format, one mapping per line:
///     10 -> 1        # Car/Vehicle
///     ignore = 255
/// Full-line comments start with '#'. The trailing comment on a mapping line
/// names the target class.
struct ClassMap {
    std::unordered_map<std::uint16_t, std::uint16_t> entries;
    std::uint16_t ignore_id = 255;
    std::map<std::uint16_t, std::string> names;  // target id -> display name

    std::size_t num_classes() const { return num_classes_; }

    std::string class_name(std::uint16_t target) const {
        auto it = names.find(target);
        if (it != names.end()) return it->second;
        return "class_" + std::to_string(target);
    }

    /// Identity map over C classes (target ids map to themselves).
    static ClassMap identity(std::size_t num_classes, std::uint16_t ignore_id) {
        ClassMap map;
        map.ignore_id = ignore_id;
        for (std::size_t c = 0; c < num_classes; ++c) {
            map.entries[static_cast<std::uint16_t>(c)] = static_cast<std::uint16_t>(c);
        }
        map.validate();
        return map;
    }

    static ClassMap parse(std::istream& in) {
        ClassMap map;
        bool saw_ignore = false;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::string name;
            auto hash = line.find('#');
            if (hash != std::string::npos) {
                name = trim(line.substr(hash + 1));
                line = line.substr(0, hash);
            }
            line = trim(line);
            if (line.empty()) continue;

            auto fail = [&](const std::string& why) {
                throw FormatError("class map line " + std::to_string(line_no) + ": " + why);
            };

            auto eq = line.find('=');
            auto arrow = line.find("->");
            if (arrow != std::string::npos) {
                std::uint16_t src = parse_id(trim(line.substr(0, arrow)), fail);
                std::uint16_t dst = parse_id(trim(line.substr(arrow + 2)), fail);
                if (map.entries.count(src)) fail("duplicate source id " + std::to_string(src));
                map.entries[src] = dst;
                if (!name.empty() && !map.names.count(dst)) map.names[dst] = name;
            } else if (eq != std::string::npos && trim(line.substr(0, eq)) == "ignore") {
                if (saw_ignore) fail("duplicate ignore directive");
                map.ignore_id = parse_id(trim(line.substr(eq + 1)), fail);
                saw_ignore = true;
            } else {
                fail("expected '<src> -> <dst>' or 'ignore = <id>'");
            }
        }
        map.validate();
        return map;
    }

    static ClassMap load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open class map file: " + path);
        try {
            return parse(in);
        } catch (const FormatError& e) {
            throw FormatError(path + ": " + e.what());
        }
    }

    /// Checks the contiguity invariant and caches the class count.
    void validate() {
        std::set<std::uint16_t> targets;
        for (const auto& [src, dst] : entries) {
            if (dst != ignore_id) targets.insert(dst);
        }
        std::uint16_t expected = 0;
        for (std::uint16_t t : targets) {
            if (t != expected) {
                throw FormatError("class map target ids not contiguous: expected " +
                                  std::to_string(expected) + ", found " + std::to_string(t));
            }
            ++expected;
        }
        names.erase(ignore_id);
        num_classes_ = targets.size();
    }

  private:
    std::size_t num_classes_ = 0;

    static std::string trim(const std::string& s) {
        auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    template <typename Fail>
    static std::uint16_t parse_id(const std::string& s, Fail&& fail) {
        if (s.empty()) fail("missing id");
        std::size_t pos = 0;
        unsigned long v = 0;
        try {
            v = std::stoul(s, &pos);
        } catch (const std::exception&) {
            fail("invalid id '" + s + "'");
        }
        if (pos != s.size() || v > 0xFFFFu) fail("invalid id '" + s + "'");
        return static_cast<std::uint16_t>(v);
    }
};

}  // namespace udakit

#endif
