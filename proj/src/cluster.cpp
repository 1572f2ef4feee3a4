#include "medseg/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <unordered_map>

namespace medseg {

std::string_view method_name(ClusterMethod m) {
    return m == ClusterMethod::KMeans ? "kmeans" : "ward";
}

ClusterMethod parse_method(std::string_view name) {
    if (name == "kmeans") return ClusterMethod::KMeans;
    if (name == "ward") return ClusterMethod::Ward;
    throw Error("unknown clustering method '" + std::string(name) + "' (expected kmeans or ward)");
}

PointSet PointSet::from(const std::vector<VisitVector>& vectors) {
    PointSet p;
    if (vectors.empty()) return p;
    p.dim = vectors.front().vector.size();
    p.ids.reserve(vectors.size());
    p.coords.reserve(vectors.size() * p.dim);
    for (const auto& v : vectors) {
        if (v.vector.size() != p.dim) throw Error("visit vectors have inconsistent lengths");
        p.ids.push_back(v.visit_id);
        p.coords.insert(p.coords.end(), v.vector.begin(), v.vector.end());
    }
    return p;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t d = 0; d < a.size(); ++d) {
        const double t = a[d] - b[d];
        s += t * t;
    }
    return s;
}

std::optional<int> Clustering::label_of(const std::string& id) const {
    auto it = std::find(ids.begin(), ids.end(), id);
    if (it == ids.end()) return std::nullopt;
    return labels[static_cast<std::size_t>(it - ids.begin())];
}

namespace {

std::vector<double> cluster_means(const PointSet& points, const std::vector<int>& labels, std::size_t k,
                                  std::vector<std::size_t>& counts) {
    std::vector<double> means(k * points.dim, 0.0);
    counts.assign(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto c = static_cast<std::size_t>(labels[i]);
        ++counts[c];
        auto r = points.row(i);
        for (std::size_t d = 0; d < points.dim; ++d) means[c * points.dim + d] += r[d];
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) continue;
        for (std::size_t d = 0; d < points.dim; ++d) means[c * points.dim + d] /= static_cast<double>(counts[c]);
    }
    return means;
}

void check_k(std::size_t k, std::size_t n) {
    if (k < 2) throw Error("k must be >= 2");
    if (k > n) throw Error("k = " + std::to_string(k) + " exceeds the number of points (" + std::to_string(n) + ")");
}

}  // namespace

double compute_wcss(const PointSet& points, const std::vector<int>& labels, std::size_t k) {
    std::vector<std::size_t> counts;
    const auto means = cluster_means(points, labels, k, counts);
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto c = static_cast<std::size_t>(labels[i]);
        total += squared_distance(points.row(i), {means.data() + c * points.dim, points.dim});
    }
    return total;
}

void finalize_clustering(Clustering& c, const PointSet& points) {
    std::unordered_map<int, int> remap;
    for (auto& l : c.labels) {
        auto [it, inserted] = remap.emplace(l, static_cast<int>(remap.size()));
        l = it->second;
    }
    c.k = remap.size();
    c.sizes.assign(c.k, 0);
    for (int l : c.labels) ++c.sizes[static_cast<std::size_t>(l)];
    c.ids = points.ids;
    c.wcss = compute_wcss(points, c.labels, c.k);
}

// --- k-means ---------------------------------------------------------------------

namespace {

struct LloydRun {
    std::vector<int> labels;
    double wcss = 0.0;
    std::vector<double> history;
};

std::vector<double> kmeanspp_seed(const PointSet& pts, std::size_t k, std::mt19937_64& rng) {
    const std::size_t n = pts.size();
    std::vector<double> centers;
    centers.reserve(k * pts.dim);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    auto first = pts.row(pick(rng));
    centers.insert(centers.end(), first.begin(), first.end());
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(pts.row(i), first);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (std::size_t c = 1; c < k; ++c) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        std::size_t chosen = 0;
        if (total <= 0.0) {
            chosen = pick(rng);
        } else {
            double target = uni(rng) * total;
            chosen = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                target -= d2[i];
                if (target < 0.0) {
                    chosen = i;
                    break;
                }
            }
        }
        auto row = pts.row(chosen);
        centers.insert(centers.end(), row.begin(), row.end());
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(pts.row(i), row));
    }
    return centers;
}

LloydRun lloyd(const PointSet& pts, std::vector<double> centers, std::size_t k, const KMeansOptions& opt) {
    const std::size_t n = pts.size();
    const std::size_t dim = pts.dim;
    LloydRun run;
    run.labels.assign(n, -1);
    std::vector<int> next(n);
    std::vector<double> dist(n);
    for (std::size_t iter = 0; iter < opt.max_iterations; ++iter) {
        parallel_for(n, opt.workers, [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                double best = std::numeric_limits<double>::infinity();
                int arg = 0;
                for (std::size_t c = 0; c < k; ++c) {
                    const double d = squared_distance(pts.row(i), {centers.data() + c * dim, dim});
                    if (d < best) {
                        best = d;
                        arg = static_cast<int>(c);
                    }
                }
                next[i] = arg;
                dist[i] = best;
            }
        });
        // Reseed emptied clusters with the point farthest from its own center.
        std::vector<std::size_t> counts(k, 0);
        for (int l : next) ++counts[static_cast<std::size_t>(l)];
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            std::size_t far = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[static_cast<std::size_t>(next[i])] < 2) continue;
                if (far == n || dist[i] > dist[far]) far = i;
            }
            if (far == n) break;  // fewer distinct donors than clusters; cannot happen for k <= n
            --counts[static_cast<std::size_t>(next[far])];
            next[far] = static_cast<int>(c);
            counts[c] = 1;
            dist[far] = 0.0;
        }
        const bool stable = next == run.labels;
        run.labels = next;
        std::vector<std::size_t> sizes;
        centers = cluster_means(pts, run.labels, k, sizes);
        const double wcss = compute_wcss(pts, run.labels, k);
        if (!run.history.empty() && wcss > run.history.back() * (1.0 + 1e-12) + 1e-12) {
            throw Error("internal error: Lloyd iteration increased WCSS");
        }
        run.history.push_back(wcss);
        run.wcss = wcss;
        if (stable) break;
    }
    return run;
}

}  // namespace

Clustering kmeans(const PointSet& points, const KMeansOptions& options) {
    check_k(options.k, points.size());
    if (options.restarts < 1) throw Error("restarts must be >= 1");
    std::mt19937_64 rng(options.seed);
    LloydRun best;
    bool have = false;
    for (std::size_t r = 0; r < options.restarts; ++r) {
        auto run = lloyd(points, kmeanspp_seed(points, options.k, rng), options.k, options);
        if (!have || run.wcss < best.wcss) {
            best = std::move(run);
            have = true;
        }
    }
    Clustering c;
    c.method = ClusterMethod::KMeans;
    c.labels = std::move(best.labels);
    c.seed = options.seed;
    c.wcss_history = std::move(best.history);
    finalize_clustering(c, points);
    return c;
}

// --- Ward ------------------------------------------------------------------------

namespace {

class Condensed {
public:
    explicit Condensed(std::size_t n) : n_(n), data_(n * (n - 1) / 2) {}
    double& operator()(std::size_t i, std::size_t j) {
        if (i > j) std::swap(i, j);
        return data_[i * (2 * n_ - i - 1) / 2 + (j - i - 1)];
    }

private:
    std::size_t n_;
    std::vector<double> data_;
};

}  // namespace

Dendrogram ward_dendrogram(const PointSet& points) {
    const std::size_t n = points.size();
    Dendrogram dendro;
    dendro.leaves = n;
    if (n < 2) return dendro;

    Condensed dist(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) dist(i, j) = 0.5 * squared_distance(points.row(i), points.row(j));
    }

    std::vector<std::size_t> size(n, 1);
    std::vector<std::size_t> node(n);
    std::iota(node.begin(), node.end(), 0);
    std::vector<char> active(n, 1);
    std::vector<std::size_t> nn(n, 0);
    std::vector<double> nnd(n, std::numeric_limits<double>::infinity());

    auto rescan = [&](std::size_t i) {
        nnd[i] = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i || !active[j]) continue;
            const double d = dist(i, j);
            if (d < nnd[i]) {
                nnd[i] = d;
                nn[i] = j;
            }
        }
    };
    for (std::size_t i = 0; i < n; ++i) rescan(i);

    for (std::size_t step = 0; step + 1 < n; ++step) {
        std::size_t p = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (active[i] && (p == n || nnd[i] < nnd[p])) p = i;
        }
        std::size_t q = nn[p];
        if (q < p) std::swap(p, q);
        const double height = dist(p, q);

        dendro.merges.push_back({std::min(node[p], node[q]), std::max(node[p], node[q]), height, size[p] + size[q]});

        // Lance-Williams update for Ward; the merged cluster lives in slot p.
        active[q] = 0;
        for (std::size_t k = 0; k < n; ++k) {
            if (!active[k] || k == p) continue;
            const double nk = static_cast<double>(size[k]);
            const double np = static_cast<double>(size[p]);
            const double nq = static_cast<double>(size[q]);
            dist(k, p) = ((nk + np) * dist(k, p) + (nk + nq) * dist(k, q) - nk * height) / (nk + np + nq);
        }
        size[p] += size[q];
        node[p] = n + step;

        for (std::size_t k = 0; k < n; ++k) {
            if (!active[k] || k == p) continue;
            if (nn[k] == p || nn[k] == q) {
                rescan(k);
            } else {
                const double d = dist(k, p);
                if (d < nnd[k] || (d == nnd[k] && p < nn[k])) {
                    nnd[k] = d;
                    nn[k] = p;
                }
            }
        }
        rescan(p);
    }
    return dendro;
}

Clustering cut_dendrogram(const Dendrogram& dendrogram, const PointSet& points, std::size_t k) {
    const std::size_t n = points.size();
    check_k(k, n);
    if (dendrogram.leaves != n) throw Error("dendrogram does not match the point set");
    // Union-find over node ids.
    std::vector<std::size_t> parent(2 * n - 1);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (std::size_t s = 0; s < n - k; ++s) {
        const auto& m = dendrogram.merges[s];
        parent[find(m.node_a)] = n + s;
        parent[find(m.node_b)] = n + s;
    }
    Clustering c;
    c.method = ClusterMethod::Ward;
    c.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) c.labels[i] = static_cast<int>(find(i));
    finalize_clustering(c, points);
    return c;
}

std::pair<Clustering, Dendrogram> ward(const PointSet& points, std::size_t k) {
    check_k(k, points.size());
    auto d = ward_dendrogram(points);
    auto c = cut_dendrogram(d, points, k);
    return {std::move(c), std::move(d)};
}

// --- Adjusted Rand index -----------------------------------------------------------

double adjusted_rand(const std::vector<int>& u, const std::vector<int>& v) {
    if (u.size() != v.size()) throw Error("label vectors differ in length");
    const double n = static_cast<double>(u.size());
    auto choose2 = [](double x) { return x * (x - 1.0) / 2.0; };
    std::map<std::pair<int, int>, double> table;
    std::map<int, double> a, b;
    for (std::size_t i = 0; i < u.size(); ++i) {
        table[{u[i], v[i]}] += 1.0;
        a[u[i]] += 1.0;
        b[v[i]] += 1.0;
    }
    double index = 0.0, sa = 0.0, sb = 0.0;
    for (const auto& [_, c] : table) index += choose2(c);
    for (const auto& [_, c] : a) sa += choose2(c);
    for (const auto& [_, c] : b) sb += choose2(c);
    const double pairs = choose2(n);
    if (pairs == 0.0) return 1.0;
    const double expected = sa * sb / pairs;
    const double max_index = 0.5 * (sa + sb);
    // Zero denominator only when both partitions are all-singletons or one block.
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

double adjusted_rand(const Clustering& u, const Clustering& v) {
    std::unordered_map<std::string, int> vl;
    for (std::size_t i = 0; i < v.ids.size(); ++i) vl.emplace(v.ids[i], v.labels[i]);
    std::vector<std::string> only_u, only_v;
    std::vector<int> lu, lv;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < u.ids.size(); ++i) {
        seen.insert(u.ids[i]);
        auto it = vl.find(u.ids[i]);
        if (it == vl.end()) {
            only_u.push_back(u.ids[i]);
            continue;
        }
        lu.push_back(u.labels[i]);
        lv.push_back(it->second);
    }
    for (const auto& id : v.ids) {
        if (!seen.count(id)) only_v.push_back(id);
    }
    if (!only_u.empty() || !only_v.empty()) {
        auto list = [](const std::vector<std::string>& ids) {
            std::string s;
            for (std::size_t i = 0; i < ids.size() && i < 10; ++i) s += (i ? ", " : "") + ids[i];
            if (ids.size() > 10) s += ", ... (" + std::to_string(ids.size()) + " total)";
            return s.empty() ? std::string("none") : s;
        };
        throw Error("clusterings cover different visits; only in first: " + list(only_u) +
                    "; only in second: " + list(only_v));
    }
    return adjusted_rand(lu, lv);
}

// --- Elbow -----------------------------------------------------------------------

ElbowChoice choose_elbow(const ElbowCurve& curve, double tau) {
    const auto& w = curve.wcss;
    if (w.empty()) throw Error("empty WCSS curve");
    ElbowChoice choice;
    choice.k = curve.ks.front();
    if (std::all_of(w.begin(), w.end(), [](double x) { return x <= 0.0; })) {
        choice.degenerate = true;
        return choice;
    }
    for (std::size_t i = 0; i + 1 < w.size(); ++i) {
        const double drop = w[i] > 0.0 ? (w[i] - w[i + 1]) / w[i] : 0.0;
        if (drop < tau) {
            choice.k = curve.ks[i];
            return choice;
        }
    }
    choice.fallback = true;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i + 1 < w.size(); ++i) {
        const double second = w[i - 1] - 2.0 * w[i] + w[i + 1];
        if (second > best) {
            best = second;
            choice.k = curve.ks[i];
        }
    }
    if (w.size() < 3) choice.k = curve.ks.back();
    return choice;
}

ElbowResult elbow_k(const PointSet& points, const ElbowOptions& options) {
    if (options.k_min < 2 || options.k_max < options.k_min) throw Error("invalid k range for the elbow rule");
    if (options.k_max > points.size()) {
        throw Error("k range " + std::to_string(options.k_min) + ".." + std::to_string(options.k_max) +
                    " exceeds the number of points (" + std::to_string(points.size()) + ")");
    }
    ElbowResult result;
    std::optional<Dendrogram> dendro;
    if (options.method == ClusterMethod::Ward) dendro = ward_dendrogram(points);
    for (std::size_t k = options.k_min; k <= options.k_max; ++k) {
        double wcss = 0.0;
        if (dendro) {
            wcss = cut_dendrogram(*dendro, points, k).wcss;
        } else {
            auto opt = options.kmeans;
            opt.k = k;
            wcss = kmeans(points, opt).wcss;
        }
        result.curve.ks.push_back(k);
        result.curve.wcss.push_back(wcss);
    }
    result.choice = choose_elbow(result.curve, options.tau);
    if (result.choice.degenerate) warn("all points are identical; elbow rule defaults to k = " +
                                       std::to_string(result.choice.k));
    return result;
}

// --- I/O -------------------------------------------------------------------------

void write_assignments(const std::filesystem::path& path, const Clustering& c) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    for (std::size_t i = 0; i < c.ids.size(); ++i) out << c.ids[i] << '\t' << c.labels[i] << '\n';
}

Clustering load_assignments(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    Clustering c;
    std::string line;
    std::size_t number = 0;
    std::set<int> distinct;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto f = split(line, '\t');
        if (f.size() != 2) throw Error(path.string() + ":" + std::to_string(number) + ": expected visit_id, cluster");
        c.ids.push_back(f[0]);
        c.labels.push_back(static_cast<int>(parse_int(f[1], "cluster id")));
        distinct.insert(c.labels.back());
    }
    c.k = distinct.size();
    std::map<int, std::size_t> sizes;
    for (int l : c.labels) ++sizes[l];
    for (const auto& [_, s] : sizes) c.sizes.push_back(s);
    return c;
}

void write_dendrogram(const std::filesystem::path& path, const Dendrogram& d) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "node_a\tnode_b\theight\tsize\n";
    for (const auto& m : d.merges) {
        out << m.node_a << '\t' << m.node_b << '\t' << format_double(m.height) << '\t' << m.size << '\n';
    }
}

}  // namespace medseg
