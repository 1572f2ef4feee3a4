#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "medseg/cluster.hpp"
#include "medseg/corpus.hpp"

namespace medseg {

// --- Recommendation profiles -------------------------------------------------------

struct ProfileRow {
    std::string group;         // lexicon label used for grouping, empty when ungrouped
    std::string concept_id;
    std::size_t visits = 0;    // cluster visits containing the concept
    double percent = 0.0;      // 100 * visits / cluster size
};

struct ClusterProfile {
    int cluster = 0;
    std::size_t size = 0;
    std::vector<ProfileRow> rows;
};

struct ProfileOptions {
    std::size_t top_n = 5;
    std::size_t filter_top = 15;          // "common" means within this many of a cluster's top terms
    std::size_t filter_min_clusters = 3;  // ... in at least this many clusters
    /// When set, rows are grouped by the first of these labels the concept carries
    /// (concepts with none of them are dropped) and top_n applies per group.
    std::vector<std::string> groups;
    const Lexicon* lexicon = nullptr;
};

struct ProfileResult {
    std::vector<ClusterProfile> clusters;
    std::set<std::string> filtered;  // concepts removed as common to many clusters
};

/// Per cluster, recommendation concepts ranked by the share of the cluster's
/// visits that contain them, after removing concepts that are among the
/// `filter_top` most common in at least `filter_min_clusters` clusters.
ProfileResult cluster_profile(const Clustering& clustering, const std::vector<AnnotatedVisit>& annotated,
                              const ProfileOptions& options);
void write_profile(const std::filesystem::path& path, const ProfileResult& profile);

// --- Contingency tables and correspondence analysis --------------------------------

inline constexpr std::string_view kMissingLabel = "\xE2\x88\x85";  // U+2205, metadata absent

struct ContingencyTable {
    std::vector<std::string> rows;
    std::vector<std::string> cols;
    std::vector<std::vector<long long>> counts;  // rows x cols

    long long total() const;
};

/// counts[i][j] = visits of cluster i whose label is j. Visits without a label
/// are counted under kMissingLabel. Columns are sorted.
ContingencyTable contingency(const Clustering& clustering, const std::map<std::string, std::string>& labels);

void write_contingency(const std::filesystem::path& path, const ContingencyTable& table);
ContingencyTable load_contingency(const std::filesystem::path& path);

struct CorrespondenceResult {
    std::vector<std::string> row_labels;  // after dropping all-zero rows
    std::vector<std::string> col_labels;
    Eigen::MatrixXd row_coords;           // principal coordinates, rows x 2
    Eigen::MatrixXd col_coords;           // cols x 2
    Eigen::VectorXd row_masses;
    Eigen::VectorXd col_masses;
    std::vector<double> inertias;         // squared singular values, descending (all of them)
    double total_inertia = 0.0;           // sum of squared standardized residuals
};

CorrespondenceResult correspondence_analysis(const ContingencyTable& table);
/// TSV with an inertia header line, then point_type, label, dim1, dim2.
void write_correspondence(const std::filesystem::path& path, const CorrespondenceResult& ca);

}  // namespace medseg
