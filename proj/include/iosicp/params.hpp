#pragma once

#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "iosicp/errors.hpp"

namespace iosicp {

/// Named flat parameter arrays, shared text format for the selection GNN and
/// the HPHA short-term attention MLP. One `name v0 v1 ...` entry per line,
/// '#' starts a comment.
using ParamSet = std::map<std::string, std::vector<double>>;

inline ParamSet read_params(std::istream& is) {
    ParamSet out;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ls(line);
        std::string name;
        if (!(ls >> name)) continue;
        std::vector<double> values;
        double v;
        while (ls >> v) values.push_back(v);
        if (!ls.eof())
            throw ParseError("params line " + std::to_string(line_no) + ": bad number");
        if (values.empty())
            throw ParseError("params line " + std::to_string(line_no) + ": no values for '" +
                             name + "'");
        out[name] = std::move(values);
    }
    return out;
}

inline void write_params(const ParamSet& set, std::ostream& os) {
    char buf[64];
    for (const auto& [name, values] : set) {
        os << name;
        for (double v : values) {
            std::snprintf(buf, sizeof buf, " %.17g", v);
            os << buf;
        }
        os << "\n";
    }
}

inline const std::vector<double>& require_params(const ParamSet& set, const std::string& name,
                                                 std::size_t expected) {
    const auto it = set.find(name);
    if (it == set.end()) throw ConfigError("params: missing entry '" + name + "'");
    if (it->second.size() != expected)
        throw ConfigError("params: entry '" + name + "' has " +
                          std::to_string(it->second.size()) + " values, expected " +
                          std::to_string(expected));
    return it->second;
}

}  // namespace iosicp
