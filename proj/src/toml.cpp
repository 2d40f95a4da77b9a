#include "relscan/toml.hpp"

#include "relscan/error.hpp"

#include <cctype>
#include <string>
#include <vector>

namespace relscan::toml {

using nlohmann::json;

namespace {

class Parser {
public:
    explicit Parser(std::string_view text) : s_(text) {}

    json run() {
        json root = json::object();
        json* current = &root;
        while (true) {
            skip_ws_comments_newlines();
            if (eof()) break;
            if (peek() == '[') {
                const bool array = peek(1) == '[';
                pos_ += array ? 2 : 1;
                const auto path = key_path();
                skip_inline_ws();
                expect(']');
                if (array) expect(']');
                current = array ? &append_table(root, path) : &open_table(root, path);
            } else {
                const auto path = key_path();
                skip_inline_ws();
                expect('=');
                skip_inline_ws();
                json v = value();
                assign(*current, path, std::move(v));
            }
            end_of_line();
        }
        return root;
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw Error(ErrorKind::Parse, "line " + std::to_string(line_) + ": " + what);
    }

    bool eof() const { return pos_ >= s_.size(); }
    char peek(std::size_t ahead = 0) const { return pos_ + ahead < s_.size() ? s_[pos_ + ahead] : '\0'; }

    char get() {
        if (eof()) fail("unexpected end of input");
        const char c = s_[pos_++];
        if (c == '\n') ++line_;
        return c;
    }

    void expect(char c) {
        if (peek() != c) fail(std::string("expected '") + c + "'");
        get();
    }

    void skip_inline_ws() {
        while (peek() == ' ' || peek() == '\t') ++pos_;
    }

    void skip_comment() {
        if (peek() == '#')
            while (!eof() && peek() != '\n') ++pos_;
    }

    void skip_ws_comments_newlines() {
        while (!eof()) {
            skip_inline_ws();
            skip_comment();
            if (peek() == '\r' || peek() == '\n') get();
            else break;
        }
    }

    void end_of_line() {
        skip_inline_ws();
        skip_comment();
        if (peek() == '\r') get();
        if (!eof() && peek() != '\n') fail("unexpected text after value");
    }

    std::string bare_key() {
        std::string k;
        while (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-') k.push_back(get());
        if (k.empty()) fail("expected a key");
        return k;
    }

    std::vector<std::string> key_path() {
        std::vector<std::string> path;
        while (true) {
            skip_inline_ws();
            if (peek() == '"') path.push_back(basic_string());
            else if (peek() == '\'') path.push_back(literal_string());
            else path.push_back(bare_key());
            skip_inline_ws();
            if (peek() != '.') break;
            get();
        }
        return path;
    }

    static void append_utf8(std::string& out, unsigned long cp) {
        if (cp < 0x80) out.push_back(static_cast<char>(cp));
        else if (cp < 0x800) {
            out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else if (cp < 0x10000) {
            out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
            out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
    }

    void escape(std::string& out) {
        const char e = get();
        switch (e) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case 'r': out.push_back('\r'); break;
        case 'b': out.push_back('\b'); break;
        case 'f': out.push_back('\f'); break;
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        case 'u':
        case 'U': {
            const int n = e == 'u' ? 4 : 8;
            std::string hex;
            for (int i = 0; i < n; ++i) hex.push_back(get());
            try {
                append_utf8(out, std::stoul(hex, nullptr, 16));
            } catch (const std::exception&) {
                fail("bad unicode escape");
            }
            break;
        }
        default: fail(std::string("unknown escape \\") + e);
        }
    }

    std::string basic_string() {
        expect('"');
        if (peek() == '"' && peek(1) == '"') {
            pos_ += 2;
            if (peek() == '\n') get();
            std::string out;
            while (!(peek() == '"' && peek(1) == '"' && peek(2) == '"')) {
                if (eof()) fail("unterminated string");
                const char c = get();
                if (c == '\\') {
                    if (peek() == '\n' || peek() == ' ' || peek() == '\r') {
                        while (std::isspace(static_cast<unsigned char>(peek()))) get();
                    } else {
                        escape(out);
                    }
                } else {
                    out.push_back(c);
                }
            }
            pos_ += 3;
            return out;
        }
        std::string out;
        while (peek() != '"') {
            if (eof() || peek() == '\n') fail("unterminated string");
            const char c = get();
            if (c == '\\') escape(out);
            else out.push_back(c);
        }
        get();
        return out;
    }

    std::string literal_string() {
        expect('\'');
        if (peek() == '\'' && peek(1) == '\'') {
            pos_ += 2;
            if (peek() == '\n') get();
            std::string out;
            while (!(peek() == '\'' && peek(1) == '\'' && peek(2) == '\'')) {
                if (eof()) fail("unterminated string");
                out.push_back(get());
            }
            pos_ += 3;
            return out;
        }
        std::string out;
        while (peek() != '\'') {
            if (eof() || peek() == '\n') fail("unterminated string");
            out.push_back(get());
        }
        get();
        return out;
    }

    json value() {
        const char c = peek();
        if (c == '"') return basic_string();
        if (c == '\'') return literal_string();
        if (c == '[') return array();
        if (c == '{') return inline_table();
        std::string tok;
        while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || std::string_view("+-_.:").find(peek()) !=
                                                                                  std::string_view::npos))
            tok.push_back(get());
        if (tok.empty()) fail("expected a value");
        if (tok == "true") return true;
        if (tok == "false") return false;
        std::string digits;
        for (char ch : tok)
            if (ch != '_') digits.push_back(ch);
        try {
            std::size_t used = 0;
            const long long i = std::stoll(digits, &used, 0);
            if (used == digits.size()) return i;
            const double d = std::stod(digits, &used);
            if (used == digits.size()) return d;
        } catch (const std::exception&) {
        }
        if (std::isdigit(static_cast<unsigned char>(tok[0]))) return tok; // date-time
        fail("unrecognized value '" + tok + "'");
    }

    json array() {
        expect('[');
        json out = json::array();
        while (true) {
            skip_ws_comments_newlines();
            if (peek() == ']') {
                get();
                return out;
            }
            out.push_back(value());
            skip_ws_comments_newlines();
            if (peek() == ',') {
                get();
                continue;
            }
            if (peek() == ']') {
                get();
                return out;
            }
            fail("expected ',' or ']' in array");
        }
    }

    json inline_table() {
        expect('{');
        json out = json::object();
        skip_inline_ws();
        if (peek() == '}') {
            get();
            return out;
        }
        while (true) {
            const auto path = key_path();
            skip_inline_ws();
            expect('=');
            skip_inline_ws();
            assign(out, path, value());
            skip_inline_ws();
            if (peek() == ',') {
                get();
                skip_inline_ws();
                continue;
            }
            if (peek() == '}') {
                get();
                return out;
            }
            fail("expected ',' or '}' in inline table");
        }
    }

    json& descend(json& node, const std::string& key) {
        json& child = node[key];
        if (child.is_null()) child = json::object();
        if (child.is_array()) {
            if (child.empty() || !child.back().is_object()) fail("key '" + key + "' is not a table");
            return child.back();
        }
        if (!child.is_object()) fail("key '" + key + "' is not a table");
        return child;
    }

    json& open_table(json& root, const std::vector<std::string>& path) {
        json* node = &root;
        for (const auto& k : path) node = &descend(*node, k);
        return *node;
    }

    json& append_table(json& root, const std::vector<std::string>& path) {
        json* node = &root;
        for (std::size_t i = 0; i + 1 < path.size(); ++i) node = &descend(*node, path[i]);
        json& arr = (*node)[path.back()];
        if (arr.is_null()) arr = json::array();
        if (!arr.is_array()) fail("key '" + path.back() + "' is not an array of tables");
        arr.push_back(json::object());
        return arr.back();
    }

    void assign(json& table, const std::vector<std::string>& path, json v) {
        json* node = &table;
        for (std::size_t i = 0; i + 1 < path.size(); ++i) node = &descend(*node, path[i]);
        if (node->contains(path.back())) fail("duplicate key '" + path.back() + "'");
        (*node)[path.back()] = std::move(v);
    }

    std::string_view s_;
    std::size_t pos_ = 0;
    int line_ = 1;
};

} // namespace

json parse(std::string_view text) { return Parser(text).run(); }

} // namespace relscan::toml
