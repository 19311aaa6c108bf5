#pragma once

// Brute-force density-reachability reference: full distance matrix, explicit
// neighbor lists, breadth-first expansion from each unvisited core point.

#include <cstddef>
#include <deque>
#include <map>
#include <vector>

namespace oracle {

struct DbscanResult {
    std::vector<int> labels; // -1 for noise
    std::vector<bool> core;
};

inline DbscanResult dbscan(const std::vector<std::vector<double>>& pts, double eps, std::size_t min_pts) {
    const std::size_t n = pts.size();
    std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < pts[i].size(); ++k) dot += pts[i][k] * pts[j][k];
            dist[i][j] = 1.0 - dot;
        }
    std::vector<std::vector<std::size_t>> nbr(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (dist[i][j] <= eps) nbr[i].push_back(j);

    DbscanResult r;
    r.core.assign(n, false);
    r.labels.assign(n, -1);
    for (std::size_t i = 0; i < n; ++i) r.core[i] = nbr[i].size() >= min_pts;

    // Core components by BFS over core-core edges.
    std::vector<int> comp(n, -1);
    int next = 0;
    for (std::size_t s = 0; s < n; ++s) {
        if (!r.core[s] || comp[s] != -1) continue;
        std::deque<std::size_t> q{s};
        comp[s] = next;
        while (!q.empty()) {
            auto p = q.front();
            q.pop_front();
            for (auto x : nbr[p])
                if (r.core[x] && comp[x] == -1) {
                    comp[x] = next;
                    q.push_back(x);
                }
        }
        ++next;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (r.core[i]) {
            r.labels[i] = comp[i];
            continue;
        }
        // Border: first core neighbor in input order.
        for (std::size_t j = 0; j < n; ++j)
            if (r.core[j] && dist[i][j] <= eps) {
                r.labels[i] = comp[j];
                break;
            }
    }
    return r;
}

// Equal up to a bijective relabeling of cluster ids; noise must match noise.
inline bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) return false;
    std::map<int, int> ab, ba;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if ((a[i] == -1) != (b[i] == -1)) return false;
        if (a[i] == -1) continue;
        auto [it1, new1] = ab.emplace(a[i], b[i]);
        auto [it2, new2] = ba.emplace(b[i], a[i]);
        if (it1->second != b[i] || it2->second != a[i]) return false;
    }
    return true;
}

} // namespace oracle
