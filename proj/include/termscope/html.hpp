#pragma once

// Lenient tag-soup tokenizer. It never fails: malformed markup degrades to
// text, unterminated raw-text elements run to end of input.

#include "termscope/util/text.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace termscope::html {

enum class TokenKind { Text, StartTag, EndTag, Comment };

struct Attribute {
    std::string name;  // lowercased
    std::string value; // entity-decoded
};

struct Token {
    TokenKind kind = TokenKind::Text;
    std::string name; // lowercased tag name; empty for text/comment
    std::string data; // decoded text for Text tokens
    std::vector<Attribute> attributes;
    bool self_closing = false;

    const std::string* attr(std::string_view key) const {
        for (const auto& a : attributes)
            if (a.name == key) return &a.value;
        return nullptr;
    }
};

namespace detail {

struct NamedEntity {
    const char* name;
    char32_t cp;
};

inline constexpr NamedEntity kEntities[] = {
    {"amp", '&'},      {"lt", '<'},        {"gt", '>'},        {"quot", '"'},
    {"apos", '\''},    {"nbsp", 0xA0},     {"copy", 0xA9},     {"reg", 0xAE},
    {"trade", 0x2122}, {"euro", 0x20AC},   {"pound", 0xA3},    {"yen", 0xA5},
    {"cent", 0xA2},    {"sect", 0xA7},     {"para", 0xB6},     {"middot", 0xB7},
    {"ndash", 0x2013}, {"mdash", 0x2014},  {"lsquo", 0x2018},  {"rsquo", 0x2019},
    {"ldquo", 0x201C}, {"rdquo", 0x201D},  {"hellip", 0x2026}, {"bull", 0x2022},
    {"laquo", 0xAB},   {"raquo", 0xBB},    {"deg", 0xB0},      {"times", 0xD7},
    {"auml", 0xE4},    {"ouml", 0xF6},     {"uuml", 0xFC},     {"Auml", 0xC4},
    {"Ouml", 0xD6},    {"Uuml", 0xDC},     {"szlig", 0xDF},    {"eacute", 0xE9},
    {"egrave", 0xE8},  {"agrave", 0xE0},   {"ccedil", 0xE7},   {"ntilde", 0xF1},
};

inline bool is_name_char(unsigned char c) {
    return std::isalnum(c) || c == '-' || c == '_' || c == ':' || c == '.';
}

} // namespace detail

inline std::string decode_entities(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        if (s[i] != '&') {
            out.push_back(s[i++]);
            continue;
        }
        auto semi = s.find(';', i + 1);
        if (semi == std::string_view::npos || semi - i > 12) {
            out.push_back(s[i++]);
            continue;
        }
        auto body = s.substr(i + 1, semi - i - 1);
        bool done = false;
        if (!body.empty() && body[0] == '#') {
            char32_t cp = 0;
            bool hex = body.size() > 1 && (body[1] == 'x' || body[1] == 'X');
            auto digits = body.substr(hex ? 2 : 1);
            bool ok = !digits.empty();
            for (char c : digits) {
                int v;
                if (c >= '0' && c <= '9') v = c - '0';
                else if (hex && c >= 'a' && c <= 'f') v = c - 'a' + 10;
                else if (hex && c >= 'A' && c <= 'F') v = c - 'A' + 10;
                else {
                    ok = false;
                    break;
                }
                cp = cp * (hex ? 16 : 10) + static_cast<char32_t>(v);
                if (cp > 0x10FFFF) {
                    ok = false;
                    break;
                }
            }
            if (ok && cp != 0) {
                text::utf8_append(out, cp);
                done = true;
            }
        } else {
            for (const auto& e : detail::kEntities) {
                if (body == e.name) {
                    text::utf8_append(out, e.cp);
                    done = true;
                    break;
                }
            }
        }
        if (done) {
            i = semi + 1;
        } else {
            out.push_back(s[i++]);
        }
    }
    return out;
}

inline bool is_raw_text_element(std::string_view name) {
    return name == "script" || name == "style" || name == "textarea" || name == "title" ||
           name == "noscript" || name == "template" || name == "xmp";
}

inline std::vector<Token> tokenize(std::string_view in) {
    std::vector<Token> tokens;
    std::string pending_text;
    auto flush_text = [&] {
        if (pending_text.empty()) return;
        Token t;
        t.kind = TokenKind::Text;
        t.data = decode_entities(pending_text);
        tokens.push_back(std::move(t));
        pending_text.clear();
    };

    std::size_t i = 0;
    const std::size_t n = in.size();
    while (i < n) {
        if (in[i] != '<') {
            pending_text.push_back(in[i++]);
            continue;
        }
        if (in.substr(i, 4) == "<!--") {
            flush_text();
            auto end = in.find("-->", i + 4);
            Token t;
            t.kind = TokenKind::Comment;
            t.data = std::string(in.substr(i + 4, end == std::string_view::npos ? n - i - 4 : end - i - 4));
            tokens.push_back(std::move(t));
            i = end == std::string_view::npos ? n : end + 3;
            continue;
        }
        if (i + 1 < n && (in[i + 1] == '!' || in[i + 1] == '?')) {
            // doctype, CDATA, processing instructions
            flush_text();
            auto end = in.find('>', i + 2);
            i = end == std::string_view::npos ? n : end + 1;
            continue;
        }
        bool closing = i + 1 < n && in[i + 1] == '/';
        std::size_t p = i + (closing ? 2 : 1);
        if (p >= n || !std::isalpha(static_cast<unsigned char>(in[p]))) {
            if (closing && p < n && in[p] == '>') {
                i = p + 1;
                continue;
            }
            pending_text.push_back(in[i++]);
            continue;
        }
        flush_text();
        std::size_t name_start = p;
        while (p < n && detail::is_name_char(static_cast<unsigned char>(in[p]))) ++p;
        Token tag;
        tag.kind = closing ? TokenKind::EndTag : TokenKind::StartTag;
        tag.name = text::to_lower(in.substr(name_start, p - name_start));

        // attributes
        while (p < n && in[p] != '>') {
            auto c = static_cast<unsigned char>(in[p]);
            if (text::is_space(c)) {
                ++p;
                continue;
            }
            if (c == '/') {
                if (p + 1 < n && in[p + 1] == '>') tag.self_closing = true;
                ++p;
                continue;
            }
            std::size_t an = p;
            while (p < n && in[p] != '=' && in[p] != '>' && in[p] != '/' &&
                   !text::is_space(static_cast<unsigned char>(in[p])))
                ++p;
            Attribute attr;
            attr.name = text::to_lower(in.substr(an, p - an));
            while (p < n && text::is_space(static_cast<unsigned char>(in[p]))) ++p;
            if (p < n && in[p] == '=') {
                ++p;
                while (p < n && text::is_space(static_cast<unsigned char>(in[p]))) ++p;
                if (p < n && (in[p] == '"' || in[p] == '\'')) {
                    char q = in[p++];
                    auto end = in.find(q, p);
                    if (end == std::string_view::npos) end = n;
                    attr.value = decode_entities(in.substr(p, end - p));
                    p = end < n ? end + 1 : n;
                } else {
                    std::size_t vs = p;
                    while (p < n && in[p] != '>' && !text::is_space(static_cast<unsigned char>(in[p]))) ++p;
                    attr.value = decode_entities(in.substr(vs, p - vs));
                }
            }
            if (!attr.name.empty() && !closing) tag.attributes.push_back(std::move(attr));
        }
        i = p < n ? p + 1 : n;
        std::string raw_name = tag.name;
        bool raw = !closing && !tag.self_closing && is_raw_text_element(raw_name);
        tokens.push_back(std::move(tag));
        if (raw) {
            // Scan for the matching close tag, case-insensitively.
            std::size_t j = i;
            std::size_t close = n;
            while (j < n) {
                auto lt = in.find("</", j);
                if (lt == std::string_view::npos) break;
                if (text::starts_with_icase(in.substr(lt + 2), raw_name)) {
                    close = lt;
                    break;
                }
                j = lt + 2;
            }
            Token body;
            body.kind = TokenKind::Text;
            body.name = raw_name; // marks raw content
            body.data = std::string(in.substr(i, close - i));
            tokens.push_back(std::move(body));
            if (close < n) {
                auto gt = in.find('>', close);
                Token end;
                end.kind = TokenKind::EndTag;
                end.name = raw_name;
                tokens.push_back(std::move(end));
                i = gt == std::string_view::npos ? n : gt + 1;
            } else {
                i = n;
            }
        }
    }
    flush_text();
    return tokens;
}

// Elements whose boundaries separate text blocks.
inline bool is_block_element(std::string_view name) {
    static constexpr std::string_view blocks[] = {
        "p",       "div",     "li",       "ul",      "ol",     "h1",    "h2",      "h3",
        "h4",      "h5",      "h6",       "td",      "th",     "tr",    "table",   "section",
        "article", "br",      "hr",       "dd",      "dt",     "dl",    "blockquote", "pre",
        "main",    "aside",   "form",     "fieldset", "address", "figure", "figcaption", "body",
        "caption", "tbody",   "thead",    "tfoot",   "details", "summary", "center", "label",
        "option",  "select",  "button",   "legend"};
    for (auto b : blocks)
        if (b == name) return true;
    return false;
}

// Void elements never hold content, so a start tag closes immediately.
inline bool is_void_element(std::string_view name) {
    static constexpr std::string_view voids[] = {"area", "base", "br",   "col",   "embed", "hr",    "img",
                                                 "input", "link", "meta", "param", "source", "track", "wbr"};
    for (auto v : voids)
        if (v == name) return true;
    return false;
}

inline bool is_hidden_element(std::string_view name) {
    return name == "script" || name == "style" || name == "noscript" || name == "template" ||
           name == "head" || name == "title" || name == "svg" || name == "iframe" ||
           name == "textarea" || name == "xmp";
}

// Text a reader would see, block boundaries rendered as newlines.
inline std::string visible_text(std::string_view markup) {
    auto tokens = tokenize(markup);
    std::string out;
    int hidden = 0;
    for (const auto& t : tokens) {
        switch (t.kind) {
        case TokenKind::StartTag:
            if (is_hidden_element(t.name) && !t.self_closing) ++hidden;
            else if (is_block_element(t.name)) out.push_back('\n');
            break;
        case TokenKind::EndTag:
            if (is_hidden_element(t.name)) hidden = hidden > 0 ? hidden - 1 : 0;
            else if (is_block_element(t.name)) out.push_back('\n');
            break;
        case TokenKind::Text:
            if (hidden == 0 && t.name.empty()) out += t.data;
            break;
        case TokenKind::Comment:
            break;
        }
    }
    return out;
}

struct Anchor {
    std::string href;
    std::string text; // whitespace-normalized anchor text (alt/aria-label/title fallback)
};

inline std::vector<Anchor> anchors(std::string_view markup) {
    auto tokens = tokenize(markup);
    std::vector<Anchor> out;
    bool in_anchor = false;
    Anchor current;
    std::string fallback;
    int hidden = 0;
    auto close_anchor = [&] {
        if (!in_anchor) return;
        current.text = text::normalize_whitespace(current.text);
        if (current.text.empty()) current.text = text::normalize_whitespace(fallback);
        out.push_back(std::move(current));
        current = {};
        fallback.clear();
        in_anchor = false;
    };
    for (const auto& t : tokens) {
        if (t.kind == TokenKind::StartTag) {
            if (t.name == "a") {
                close_anchor();
                if (const auto* href = t.attr("href")) {
                    in_anchor = true;
                    current.href = *href;
                    for (auto key : {"aria-label", "title"})
                        if (const auto* v = t.attr(key); v && fallback.empty()) fallback = *v;
                }
            } else if (in_anchor && t.name == "img") {
                if (const auto* alt = t.attr("alt")) fallback += " " + *alt;
            } else if (is_hidden_element(t.name) && !t.self_closing) {
                ++hidden;
            }
        } else if (t.kind == TokenKind::EndTag) {
            if (t.name == "a") close_anchor();
            else if (is_hidden_element(t.name)) hidden = hidden > 0 ? hidden - 1 : 0;
        } else if (t.kind == TokenKind::Text && in_anchor && hidden == 0 && t.name.empty()) {
            current.text += t.data;
        }
    }
    close_anchor();
    return out;
}

} // namespace termscope::html
