#pragma once

// Paragraph-level segmentation of terms-and-conditions markup.

#include "termscope/corpus_store.hpp"
#include "termscope/html.hpp"
#include "termscope/util/text.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace termscope {

inline constexpr std::size_t kMinFragmentChars = 25;

namespace extract_detail {

inline bool is_boilerplate(std::string_view name) {
    return name == "nav" || name == "footer" || name == "header" || html::is_hidden_element(name);
}

inline std::size_t char_count(std::string_view s) {
    std::size_t n = 0;
    for (unsigned char c : s)
        if ((c & 0xC0) != 0x80) ++n;
    return n;
}

// Decoded entities such as "&lt;b" must not reintroduce tag-like text.
inline std::string defuse_markup(std::string s) {
    for (std::size_t i = 0; i + 1 < s.size(); ++i)
        if (s[i] == '<' && std::isalpha(static_cast<unsigned char>(s[i + 1]))) s.insert(i + 1, 1, ' ');
    return s;
}

} // namespace extract_detail

// Visible block fragments in document order, whitespace-normalized, before
// short-fragment merging.
inline std::vector<std::string> block_fragments(std::string_view markup) {
    std::vector<std::string> out;
    std::string current;
    int skipped = 0;
    auto flush = [&] {
        auto t = text::normalize_whitespace(current);
        if (!t.empty()) out.push_back(extract_detail::defuse_markup(std::move(t)));
        current.clear();
    };
    for (const auto& t : html::tokenize(markup)) {
        switch (t.kind) {
        case html::TokenKind::StartTag:
            if (extract_detail::is_boilerplate(t.name)) {
                if (!t.self_closing && !html::is_void_element(t.name)) ++skipped;
            } else if (t.name == "br") {
                current.push_back(' ');
            } else if (html::is_block_element(t.name)) {
                flush();
            }
            break;
        case html::TokenKind::EndTag:
            if (extract_detail::is_boilerplate(t.name)) skipped = skipped > 0 ? skipped - 1 : 0;
            else if (html::is_block_element(t.name)) flush();
            break;
        case html::TokenKind::Text:
            if (skipped == 0 && t.name.empty()) current += t.data;
            break;
        case html::TokenKind::Comment:
            break;
        }
    }
    flush();
    return out;
}

// Fragments shorter than kMinFragmentChars are carried into the following
// fragment; a short tail is appended to the preceding one.
inline std::vector<std::string> merge_short_fragments(const std::vector<std::string>& fragments) {
    std::vector<std::string> out;
    std::string pending;
    for (const auto& f : fragments) {
        std::string joined = pending.empty() ? f : pending + " " + f;
        if (extract_detail::char_count(joined) < kMinFragmentChars) {
            pending = std::move(joined);
            continue;
        }
        out.push_back(std::move(joined));
        pending.clear();
    }
    if (!pending.empty()) {
        if (out.empty()) out.push_back(std::move(pending));
        else out.back() += " " + pending;
    }
    return out;
}

inline std::vector<TermRecord> extract_terms(std::string_view markup, std::string_view website_url,
                                             std::string_view page_url) {
    std::vector<TermRecord> out;
    if (markup.empty()) return out;
    int position = 0;
    for (const auto& text : merge_short_fragments(block_fragments(markup)))
        out.push_back(make_term(website_url, page_url, position++, text));
    return out;
}

} // namespace termscope
