#pragma once

// Test-only helpers and independent reference implementations.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "medseg/cluster.hpp"
#include "medseg/common.hpp"

namespace medseg::testing {

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("medseg_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// Collects warnings for the lifetime of the object.
class WarningCapture {
public:
    WarningCapture() {
        set_warning_handler([this](std::string_view m) { messages.emplace_back(m); });
    }
    ~WarningCapture() { set_warning_handler(nullptr); }
    bool contains(std::string_view needle) const {
        return std::any_of(messages.begin(), messages.end(),
                           [&](const std::string& m) { return m.find(needle) != std::string::npos; });
    }
    std::vector<std::string> messages;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline PointSet random_points(std::size_t n, std::size_t dim, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    PointSet p;
    p.dim = dim;
    for (std::size_t i = 0; i < n; ++i) {
        p.ids.push_back("p" + std::to_string(i));
        for (std::size_t d = 0; d < dim; ++d) p.coords.push_back(g(rng));
    }
    return p;
}

// --- Adjusted Rand index by counting agreeing and disagreeing pairs ----------------

inline double ari_pair_counting(const std::vector<int>& u, const std::vector<int>& v) {
    const std::size_t n = u.size();
    double a = 0, b = 0, c = 0, d = 0;  // same/same, same/diff, diff/same, diff/diff
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool su = u[i] == u[j];
            const bool sv = v[i] == v[j];
            if (su && sv) ++a;
            else if (su) ++b;
            else if (sv) ++c;
            else ++d;
        }
    }
    const double pairs = a + b + c + d;
    if (pairs == 0) return 1.0;
    const double expected = (a + b) * (a + c) / pairs;
    const double max_index = 0.5 * ((a + b) + (a + c));
    if (max_index == expected) return 1.0;
    return (a - expected) / (max_index - expected);
}

/// All set partitions of {0..n-1} as restricted-growth label strings.
inline std::vector<std::vector<int>> all_partitions(std::size_t n) {
    std::vector<std::vector<int>> out;
    std::vector<int> labels(n, 0);
    std::function<void(std::size_t, int)> rec = [&](std::size_t i, int max_label) {
        if (i == n) {
            out.push_back(labels);
            return;
        }
        for (int l = 0; l <= max_label + 1; ++l) {
            labels[i] = l;
            rec(i + 1, std::max(max_label, l));
        }
    };
    if (n == 0) return {{}};
    labels[0] = 0;
    rec(1, 0);
    return out;
}

// --- Ward by recomputing every cluster pair from the raw points ----------------------

struct NaiveMerge {
    std::size_t a, b;  // node ids in the scipy convention
    double height;
};

inline std::vector<NaiveMerge> naive_ward(const PointSet& pts) {
    const std::size_t n = pts.size();
    struct Cl {
        std::size_t node;
        std::vector<std::size_t> members;
    };
    std::vector<Cl> live;
    for (std::size_t i = 0; i < n; ++i) live.push_back({i, {i}});
    auto mean = [&](const Cl& c) {
        std::vector<double> m(pts.dim, 0.0);
        for (auto i : c.members) {
            for (std::size_t d = 0; d < pts.dim; ++d) m[d] += pts.row(i)[d];
        }
        for (auto& x : m) x /= static_cast<double>(c.members.size());
        return m;
    };
    std::vector<NaiveMerge> merges;
    for (std::size_t step = 0; step + 1 < n; ++step) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < live.size(); ++i) {
            const auto mi = mean(live[i]);
            for (std::size_t j = i + 1; j < live.size(); ++j) {
                const auto mj = mean(live[j]);
                double dist = 0;
                for (std::size_t d = 0; d < pts.dim; ++d) dist += (mi[d] - mj[d]) * (mi[d] - mj[d]);
                const double na = static_cast<double>(live[i].members.size());
                const double nb = static_cast<double>(live[j].members.size());
                const double cost = na * nb / (na + nb) * dist;
                if (cost < best) {
                    best = cost;
                    bi = i;
                    bj = j;
                }
            }
        }
        Cl merged{n + step, live[bi].members};
        merged.members.insert(merged.members.end(), live[bj].members.begin(), live[bj].members.end());
        merges.push_back({std::min(live[bi].node, live[bj].node), std::max(live[bi].node, live[bj].node), best});
        live.erase(live.begin() + static_cast<std::ptrdiff_t>(bj));
        live[bi] = std::move(merged);
    }
    return merges;
}

/// Minimum WCSS over every split of the points into two non-empty groups.
inline double exhaustive_two_means(const PointSet& pts) {
    const std::size_t n = pts.size();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t mask = 1; mask + 1 < (std::size_t{1} << n); ++mask) {
        if (mask & 1) continue;  // each split once: point 0 always in group 0
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) labels[i] = (mask >> i) & 1;
        best = std::min(best, compute_wcss(pts, labels, 2));
    }
    return best;
}

}  // namespace medseg::testing
