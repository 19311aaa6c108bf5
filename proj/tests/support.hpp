#pragma once

#include "termscope/termscope.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

namespace testing_support {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "ts") {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                (tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string str() const { return path_.string(); }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), {});
}

inline void write_file(const std::filesystem::path& p, const std::string& body) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary | std::ios::trunc) << body;
}

inline std::filesystem::path fixture(const std::string& rel) { return std::filesystem::path(TERMSCOPE_FIXTURE_DIR) / rel; }

inline termscope::FetchOptions fast_fetch() {
    termscope::FetchOptions o;
    o.per_host_delay = std::chrono::milliseconds(0);
    return o;
}

inline termscope::WebsiteRecord shop_site(const std::string& url, termscope::Source source = termscope::Source::Custom,
                                          std::optional<int> rank = std::nullopt) {
    termscope::WebsiteRecord w;
    w.url = url;
    w.source = source;
    w.rank = rank;
    w.shopping_verdict = termscope::ShoppingVerdict::Shopping;
    w.language = "en";
    w.fetched_at = termscope::now_utc();
    return w;
}

} // namespace testing_support
