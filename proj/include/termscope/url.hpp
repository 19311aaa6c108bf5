#pragma once

#include "termscope/util/text.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace termscope {

class UrlError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// An absolute http(s) URL split into components. Userinfo is dropped.
struct Url {
    std::string scheme;
    std::string host;
    std::optional<int> port;
    std::string path = "/";
    std::optional<std::string> query;
    std::optional<std::string> fragment;

    int effective_port() const {
        if (port) return *port;
        return scheme == "https" ? 443 : 80;
    }

    std::string origin() const {
        std::string out = scheme + "://" + host;
        if (port) out += ":" + std::to_string(*port);
        return out;
    }

    std::string str() const {
        std::string out = origin() + path;
        if (query) out += "?" + *query;
        if (fragment) out += "#" + *fragment;
        return out;
    }

    friend bool operator==(const Url&, const Url&) = default;
};

namespace detail {

inline std::string remove_dot_segments(std::string_view path) {
    std::vector<std::string> out;
    bool absolute = !path.empty() && path.front() == '/';
    auto segments = text::split(path, '/');
    bool trailing = false;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const auto& seg = segments[i];
        bool last = i + 1 == segments.size();
        if (i == 0 && absolute && seg.empty()) continue;
        if (seg == ".") {
            trailing = last;
            continue;
        }
        if (seg == "..") {
            if (!out.empty()) out.pop_back();
            trailing = last;
            continue;
        }
        out.push_back(seg);
        trailing = false;
    }
    std::string result = absolute ? "/" : "";
    result += text::join(out, "/");
    if (trailing && !result.empty() && result.back() != '/') result += "/";
    return result;
}

} // namespace detail

// Parses an absolute http or https URL. Scheme-less input such as
// "example.com/x" is accepted and treated as https.
inline Url parse_url(std::string_view raw) {
    auto s = text::trim(raw);
    if (s.empty()) throw UrlError("empty url");
    Url url;
    auto scheme_end = s.find("://");
    if (scheme_end == std::string_view::npos) {
        url.scheme = "https";
    } else {
        url.scheme = text::to_lower(s.substr(0, scheme_end));
        s.remove_prefix(scheme_end + 3);
    }
    if (url.scheme != "http" && url.scheme != "https")
        throw UrlError("unsupported scheme: " + url.scheme);

    auto frag_pos = s.find('#');
    if (frag_pos != std::string_view::npos) {
        url.fragment = std::string(s.substr(frag_pos + 1));
        s = s.substr(0, frag_pos);
    }
    auto query_pos = s.find('?');
    if (query_pos != std::string_view::npos) {
        url.query = std::string(s.substr(query_pos + 1));
        s = s.substr(0, query_pos);
    }
    auto path_pos = s.find('/');
    std::string_view authority = s.substr(0, path_pos);
    url.path = path_pos == std::string_view::npos ? "/" : std::string(s.substr(path_pos));

    auto at = authority.rfind('@');
    if (at != std::string_view::npos) authority.remove_prefix(at + 1);
    auto colon = authority.rfind(':');
    if (colon != std::string_view::npos && authority.find(']') == std::string_view::npos) {
        auto port_str = authority.substr(colon + 1);
        authority = authority.substr(0, colon);
        if (!port_str.empty()) {
            int port = 0;
            for (char c : port_str) {
                if (c < '0' || c > '9') throw UrlError("bad port in url");
                port = port * 10 + (c - '0');
                if (port > 65535) throw UrlError("port out of range");
            }
            url.port = port;
        }
    }
    if (authority.empty()) throw UrlError("url has no host");
    for (char c : authority) {
        if (text::is_space(static_cast<unsigned char>(c)) || c == '<' || c == '>' || c == '"')
            throw UrlError("invalid host");
    }
    url.host = text::to_lower(authority);
    while (!url.host.empty() && url.host.back() == '.') url.host.pop_back();
    if (url.host.empty()) throw UrlError("url has no host");
    url.path = detail::remove_dot_segments(url.path);
    if (url.path.empty()) url.path = "/";
    return url;
}

// Lowercased scheme and host, no fragment, no default port, query kept.
inline Url normalize(Url url) {
    url.fragment.reset();
    if (url.port && ((url.scheme == "http" && *url.port == 80) ||
                     (url.scheme == "https" && *url.port == 443)))
        url.port.reset();
    if (url.path.empty()) url.path = "/";
    return url;
}

inline std::string normalize_url(std::string_view raw) { return normalize(parse_url(raw)).str(); }

inline bool is_normalized(std::string_view raw) {
    try {
        return normalize_url(raw) == raw;
    } catch (const UrlError&) {
        return false;
    }
}

// Resolves a reference against a base URL. Returns nullopt for non-http
// schemes (mailto:, javascript:, tel:) and unparseable references.
inline std::optional<Url> resolve(const Url& base, std::string_view ref_raw) {
    auto ref = text::trim(ref_raw);
    if (ref.empty()) return base;
    auto colon = ref.find(':');
    auto first_delim = ref.find_first_of("/?#");
    if (colon != std::string_view::npos && (first_delim == std::string_view::npos || colon < first_delim)) {
        auto scheme = text::to_lower(ref.substr(0, colon));
        if (scheme != "http" && scheme != "https") return std::nullopt;
        try {
            return parse_url(ref);
        } catch (const UrlError&) {
            return std::nullopt;
        }
    }
    if (ref.size() >= 2 && ref[0] == '/' && ref[1] == '/') {
        try {
            return parse_url(base.scheme + ":" + std::string(ref));
        } catch (const UrlError&) {
            return std::nullopt;
        }
    }
    Url out = base;
    out.fragment.reset();
    std::string_view rest = ref;
    std::optional<std::string> fragment;
    auto hash = rest.find('#');
    if (hash != std::string_view::npos) {
        fragment = std::string(rest.substr(hash + 1));
        rest = rest.substr(0, hash);
    }
    std::optional<std::string> query;
    auto q = rest.find('?');
    if (q != std::string_view::npos) {
        query = std::string(rest.substr(q + 1));
        rest = rest.substr(0, q);
    }
    if (rest.empty()) {
        if (query) out.query = query;
    } else if (rest.front() == '/') {
        out.path = detail::remove_dot_segments(rest);
        out.query = query;
    } else {
        auto dir = base.path.substr(0, base.path.rfind('/') + 1);
        out.path = detail::remove_dot_segments(dir + std::string(rest));
        out.query = query;
    }
    if (out.path.empty()) out.path = "/";
    out.fragment = fragment;
    return out;
}

// Approximates the registrable domain (eTLD+1) without the public suffix
// list: two labels, or three when the second-level label is a common
// generic second-level under a country code (co.uk, com.au, ...).
inline std::string registrable_domain(std::string_view host) {
    auto labels = text::split(host, '.');
    if (labels.size() <= 2) return std::string(host);
    bool numeric = true;
    for (char c : host)
        if (!(c == '.' || (c >= '0' && c <= '9'))) numeric = false;
    if (numeric) return std::string(host);
    static const char* const second_levels[] = {"co", "com", "net", "org", "gov", "edu", "ac", "ne", "or"};
    const auto& sld = labels[labels.size() - 2];
    const auto& tld = labels.back();
    bool cc_second = false;
    if (tld.size() == 2)
        for (auto* s : second_levels)
            if (sld == s) cc_second = true;
    std::size_t keep = cc_second ? 3 : 2;
    std::vector<std::string> tail(labels.end() - static_cast<std::ptrdiff_t>(keep), labels.end());
    return text::join(tail, ".");
}

inline bool same_registrable_domain(const Url& a, const Url& b) {
    return registrable_domain(a.host) == registrable_domain(b.host);
}

} // namespace termscope
