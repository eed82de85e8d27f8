#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "noteqa/errors.hpp"
#include "noteqa/text.hpp"

// Small non-validating XML reader, enough for the task distribution format:
// elements, attributes, character data, comments, CDATA and the five
// predefined entities plus numeric references. Positions are tracked so parse
// errors point at the offending line/column.

namespace noteqa::xml {

struct Node {
    std::string name;
    std::vector<std::pair<std::string, std::string>> attributes;
    std::vector<Node> children;
    std::string text;  // character data directly inside this element
    int line = 0;
    int column = 0;

    const std::string* attr(std::string_view key) const {
        for (const auto& [k, v] : attributes)
            if (k == key) return &v;
        return nullptr;
    }

    const Node* child(std::string_view child_name) const {
        for (const Node& c : children)
            if (c.name == child_name) return &c;
        return nullptr;
    }

    std::vector<const Node*> children_named(std::string_view child_name) const {
        std::vector<const Node*> out;
        for (const Node& c : children)
            if (c.name == child_name) out.push_back(&c);
        return out;
    }
};

namespace detail {

class Reader {
  public:
    explicit Reader(std::string_view input) : in_(input) {}

    Node parse_document() {
        skip_misc();
        if (eof()) fail("expected root element");
        Node root = parse_element();
        skip_misc();
        if (!eof()) fail("trailing content after root element");
        return root;
    }

  private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError("xml: " + msg, line_, column_);
    }

    bool eof() const { return pos_ >= in_.size(); }
    char peek() const { return in_[pos_]; }

    char next() {
        char c = in_[pos_++];
        if (c == '\n') {
            ++line_;
            column_ = 1;
        } else {
            ++column_;
        }
        return c;
    }

    bool starts_with(std::string_view s) const { return in_.compare(pos_, s.size(), s) == 0; }

    void expect(std::string_view s) {
        if (!starts_with(s)) fail("expected '" + std::string(s) + "'");
        for (size_t i = 0; i < s.size(); ++i) next();
    }

    void skip_ws() {
        while (!eof() && text::is_space(peek())) next();
    }

    // Whitespace, comments, processing instructions and DOCTYPE between
    // top-level constructs.
    void skip_misc() {
        for (;;) {
            skip_ws();
            if (starts_with("<?")) {
                skip_until("?>");
            } else if (starts_with("<!--")) {
                skip_until("-->");
            } else if (starts_with("<!")) {
                skip_until(">");
            } else {
                return;
            }
        }
    }

    void skip_until(std::string_view terminator) {
        while (!eof() && !starts_with(terminator)) next();
        if (eof()) fail("unterminated '" + std::string(terminator) + "' construct");
        expect(terminator);
    }

    static bool is_name_char(char c) {
        unsigned char uc = static_cast<unsigned char>(c);
        return std::isalnum(uc) || c == '_' || c == '-' || c == '.' || c == ':';
    }

    std::string parse_name() {
        std::string name;
        while (!eof() && is_name_char(peek())) name.push_back(next());
        if (name.empty()) fail("expected a name");
        return name;
    }

    std::string parse_entity() {
        expect("&");
        std::string body;
        while (!eof() && peek() != ';') body.push_back(next());
        if (eof()) fail("unterminated entity reference");
        next();  // ';'
        if (body == "amp") return "&";
        if (body == "lt") return "<";
        if (body == "gt") return ">";
        if (body == "quot") return "\"";
        if (body == "apos") return "'";
        if (!body.empty() && body[0] == '#') {
            int base = 10;
            size_t digits = 1;
            if (body.size() > 1 && (body[1] == 'x' || body[1] == 'X')) {
                base = 16;
                digits = 2;
            }
            try {
                unsigned long code = std::stoul(body.substr(digits), nullptr, base);
                return encode_utf8(code);
            } catch (const std::exception&) {
                fail("bad numeric character reference '&" + body + ";'");
            }
        }
        fail("unknown entity '&" + body + ";'");
    }

    static std::string encode_utf8(unsigned long cp) {
        std::string out;
        if (cp < 0x80) {
            out.push_back(static_cast<char>(cp));
        } else if (cp < 0x800) {
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
        return out;
    }

    std::string parse_attr_value() {
        if (eof() || (peek() != '"' && peek() != '\'')) fail("expected quoted attribute value");
        char quote = next();
        std::string value;
        while (!eof() && peek() != quote) {
            if (peek() == '&')
                value += parse_entity();
            else
                value.push_back(next());
        }
        if (eof()) fail("unterminated attribute value");
        next();  // closing quote
        return value;
    }

    Node parse_element() {
        Node node;
        node.line = line_;
        node.column = column_;
        expect("<");
        node.name = parse_name();
        for (;;) {
            skip_ws();
            if (eof()) fail("unterminated start tag <" + node.name + ">");
            if (starts_with("/>")) {
                expect("/>");
                return node;
            }
            if (peek() == '>') {
                next();
                break;
            }
            std::string key = parse_name();
            skip_ws();
            expect("=");
            skip_ws();
            node.attributes.emplace_back(std::move(key), parse_attr_value());
        }
        // Content until the matching end tag.
        for (;;) {
            if (eof()) fail("missing </" + node.name + ">");
            if (starts_with("</")) {
                expect("</");
                std::string closing = parse_name();
                if (closing != node.name)
                    fail("mismatched end tag </" + closing + ">, expected </" + node.name + ">");
                skip_ws();
                expect(">");
                return node;
            }
            if (starts_with("<!--")) {
                skip_until("-->");
            } else if (starts_with("<![CDATA[")) {
                expect("<![CDATA[");
                while (!eof() && !starts_with("]]>")) node.text.push_back(next());
                skip_until("]]>");
            } else if (peek() == '<') {
                node.children.push_back(parse_element());
            } else if (peek() == '&') {
                node.text += parse_entity();
            } else {
                node.text.push_back(next());
            }
        }
    }

    std::string_view in_;
    size_t pos_ = 0;
    int line_ = 1;
    int column_ = 1;
};

}  // namespace detail

inline Node parse(std::string_view input) { return detail::Reader(input).parse_document(); }

}  // namespace noteqa::xml
