#include "spdreg/config_io.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "spdreg/errors.hpp"

namespace spdreg {

namespace {

void skip_ws(const std::string& s, std::size_t& i) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
}

std::string parse_basic_string(const std::string& s, std::size_t& i) {
    // i points at the opening quote
    const char quote = s[i++];
    std::string out;
    while (i < s.size() && s[i] != quote) {
        if (quote == '"' && s[i] == '\\' && i + 1 < s.size()) {
            ++i;
            switch (s[i]) {
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                default:
                    throw IoError(std::string("unsupported escape \\") + s[i]);
            }
        } else {
            out += s[i];
        }
        ++i;
    }
    if (i >= s.size()) throw IoError("unterminated string");
    ++i;  // closing quote
    return out;
}

nlohmann::json parse_value(const std::string& s, std::size_t& i);

nlohmann::json parse_array(const std::string& s, std::size_t& i) {
    ++i;  // '['
    nlohmann::json arr = nlohmann::json::array();
    skip_ws(s, i);
    if (i < s.size() && s[i] == ']') {
        ++i;
        return arr;
    }
    while (true) {
        skip_ws(s, i);
        arr.push_back(parse_value(s, i));
        skip_ws(s, i);
        if (i < s.size() && s[i] == ',') {
            ++i;
            skip_ws(s, i);
            if (i < s.size() && s[i] == ']') {  // trailing comma
                ++i;
                return arr;
            }
            continue;
        }
        if (i < s.size() && s[i] == ']') {
            ++i;
            return arr;
        }
        throw IoError("malformed array");
    }
}

nlohmann::json parse_scalar(const std::string& token) {
    if (token == "true") return true;
    if (token == "false") return false;
    try {
        std::size_t used = 0;
        if (token.find_first_of(".eEnif") == std::string::npos) {
            const long long v = std::stoll(token, &used);
            if (used == token.size()) return v;
        } else {
            const double v = std::stod(token, &used);
            if (used == token.size()) return v;
        }
    } catch (...) {
    }
    throw IoError("cannot parse value '" + token + "'");
}

nlohmann::json parse_value(const std::string& s, std::size_t& i) {
    skip_ws(s, i);
    if (i >= s.size()) throw IoError("missing value");
    if (s[i] == '"' || s[i] == '\'') return parse_basic_string(s, i);
    if (s[i] == '[') return parse_array(s, i);
    std::size_t start = i;
    while (i < s.size() && s[i] != ',' && s[i] != ']' && s[i] != '#' &&
           s[i] != ' ' && s[i] != '\t') {
        ++i;
    }
    return parse_scalar(s.substr(start, i - start));
}

std::string parse_key(const std::string& s, std::size_t& i) {
    skip_ws(s, i);
    if (i < s.size() && (s[i] == '"' || s[i] == '\'')) {
        return parse_basic_string(s, i);
    }
    std::size_t start = i;
    while (i < s.size() &&
           (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_' ||
            s[i] == '-')) {
        ++i;
    }
    if (i == start) throw IoError("missing key");
    return s.substr(start, i - start);
}

std::vector<std::string> parse_key_path(const std::string& s) {
    std::vector<std::string> parts;
    std::size_t i = 0;
    while (true) {
        parts.push_back(parse_key(s, i));
        skip_ws(s, i);
        if (i < s.size() && s[i] == '.') {
            ++i;
            continue;
        }
        break;
    }
    skip_ws(s, i);
    if (i != s.size()) throw IoError("malformed key '" + s + "'");
    return parts;
}

nlohmann::json* descend(nlohmann::json& root,
                        const std::vector<std::string>& path) {
    nlohmann::json* node = &root;
    for (const auto& part : path) {
        node = &(*node)[part];
        if (!node->is_object() && !node->is_null()) {
            throw IoError("key '" + part + "' is both a value and a table");
        }
    }
    return node;
}

}  // namespace

nlohmann::json parse_toml_lite(const std::string& text) {
    nlohmann::json root = nlohmann::json::object();
    nlohmann::json* table = &root;

    std::istringstream lines(text);
    std::string line;
    int line_no = 0;
    while (std::getline(lines, line)) {
        ++line_no;
        try {
            std::size_t i = 0;
            skip_ws(line, i);
            if (i >= line.size() || line[i] == '#' || line[i] == '\r') continue;
            if (line[i] == '[') {
                const std::size_t close = line.find(']', i);
                if (close == std::string::npos) throw IoError("unclosed table header");
                const std::string header = line.substr(i + 1, close - i - 1);
                std::size_t rest = close + 1;
                skip_ws(line, rest);
                if (rest < line.size() && line[rest] != '#' && line[rest] != '\r') {
                    throw IoError("trailing characters after table header");
                }
                table = descend(root, parse_key_path(header));
                if (table->is_null()) *table = nlohmann::json::object();
                continue;
            }
            const std::size_t eq = line.find('=', i);
            if (eq == std::string::npos) throw IoError("expected 'key = value'");
            const std::vector<std::string> path =
                parse_key_path(line.substr(i, eq - i));
            std::size_t vi = eq + 1;
            nlohmann::json value = parse_value(line, vi);
            skip_ws(line, vi);
            if (vi < line.size() && line[vi] != '#' && line[vi] != '\r') {
                throw IoError("trailing characters after value");
            }
            nlohmann::json* slot = table;
            for (std::size_t p = 0; p + 1 < path.size(); ++p) {
                slot = &(*slot)[path[p]];
            }
            (*slot)[path.back()] = std::move(value);
        } catch (const IoError& e) {
            std::ostringstream msg;
            msg << "config line " << line_no << ": " << e.what();
            throw IoError(msg.str());
        }
    }
    return root;
}

nlohmann::json load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    if (path.extension() == ".toml") return parse_toml_lite(buf.str());
    try {
        return nlohmann::json::parse(buf.str());
    } catch (const nlohmann::json::exception& e) {
        throw IoError("cannot parse " + path.string() + ": " + e.what());
    }
}

}  // namespace spdreg
