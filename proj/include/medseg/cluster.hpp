#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "medseg/embedding.hpp"

namespace medseg {

enum class ClusterMethod { KMeans, Ward };
std::string_view method_name(ClusterMethod m);
ClusterMethod parse_method(std::string_view name);

/// Row-major n x dim points with ids; the common input of the clustering code.
struct PointSet {
    std::vector<std::string> ids;
    std::size_t dim = 0;
    std::vector<double> coords;

    std::size_t size() const { return ids.size(); }
    std::span<const double> row(std::size_t i) const { return {coords.data() + i * dim, dim}; }
    static PointSet from(const std::vector<VisitVector>& vectors);
};

double squared_distance(std::span<const double> a, std::span<const double> b);

struct Clustering {
    ClusterMethod method = ClusterMethod::KMeans;
    std::size_t k = 0;
    std::vector<std::string> ids;
    std::vector<int> labels;           // labels[i] is the cluster of ids[i], in 0..k-1
    double wcss = 0.0;
    std::vector<std::size_t> sizes;
    std::optional<std::uint64_t> seed; // k-means only
    std::vector<double> wcss_history;  // k-means: WCSS after every Lloyd iteration of the best restart

    std::optional<int> label_of(const std::string& id) const;
};

/// Renumbers labels by first appearance and recomputes sizes and WCSS.
void finalize_clustering(Clustering& c, const PointSet& points);
double compute_wcss(const PointSet& points, const std::vector<int>& labels, std::size_t k);

struct KMeansOptions {
    std::size_t k = 2;
    std::size_t restarts = 10;
    std::uint64_t seed = 42;
    std::size_t max_iterations = 300;
    int workers = 1;
};

/// Lloyd iterations from k-means++ seeding, best WCSS over restarts.
Clustering kmeans(const PointSet& points, const KMeansOptions& options);

struct Merge {
    std::size_t node_a = 0;  // node ids: 0..n-1 leaves, n+s for the cluster formed at step s
    std::size_t node_b = 0;
    double height = 0.0;     // increase in WCSS caused by the merge
    std::size_t size = 0;
};

struct Dendrogram {
    std::size_t leaves = 0;
    std::vector<Merge> merges;  // n - 1 rows
};

/// Ward agglomeration with merge cost |A||B|/(|A|+|B|) * |mean_A - mean_B|^2,
/// maintained by the Lance-Williams recurrence. Ties go to the lowest slot pair.
Dendrogram ward_dendrogram(const PointSet& points);
/// Applies the first n-k merges.
Clustering cut_dendrogram(const Dendrogram& dendrogram, const PointSet& points, std::size_t k);
std::pair<Clustering, Dendrogram> ward(const PointSet& points, std::size_t k);

/// Chance-corrected agreement between two clusterings of the same ids.
double adjusted_rand(const Clustering& u, const Clustering& v);
/// Same from raw label vectors aligned by position.
double adjusted_rand(const std::vector<int>& u, const std::vector<int>& v);

struct ElbowCurve {
    std::vector<std::size_t> ks;
    std::vector<double> wcss;
};

struct ElbowChoice {
    std::size_t k = 2;
    bool fallback = false;    // chosen by the second-difference rule
    bool degenerate = false;  // every WCSS was zero
};

/// Smallest k with (W(k) - W(k+1)) / W(k) < tau; otherwise the k maximizing
/// W(k-1) - 2 W(k) + W(k+1).
ElbowChoice choose_elbow(const ElbowCurve& curve, double tau);

struct ElbowOptions {
    std::size_t k_min = 2;
    std::size_t k_max = 15;
    ClusterMethod method = ClusterMethod::Ward;
    double tau = 0.05;
    KMeansOptions kmeans;  // k is overwritten per point of the curve
};

struct ElbowResult {
    ElbowCurve curve;
    ElbowChoice choice;
};

ElbowResult elbow_k(const PointSet& points, const ElbowOptions& options);

void write_assignments(const std::filesystem::path& path, const Clustering& c);
/// Reads a visit_id / cluster TSV; method and WCSS are left at defaults.
Clustering load_assignments(const std::filesystem::path& path);
void write_dendrogram(const std::filesystem::path& path, const Dendrogram& d);

}  // namespace medseg
