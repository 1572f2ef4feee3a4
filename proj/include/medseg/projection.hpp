#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "medseg/cluster.hpp"

namespace medseg {

struct Projection2D {
    std::vector<std::string> ids;
    std::vector<std::array<double, 2>> coords;
    std::vector<std::string> color_key;  // empty, or one label per item

    std::size_t size() const { return ids.size(); }
};

struct PcaResult {
    Projection2D projection;
    std::array<double, 2> explained_ratio{};  // share of total variance per component
    std::array<std::vector<double>, 2> loadings;
};

/// Column-centres, projects on the top two right singular directions. The
/// first nonzero loading of each component is made positive.
PcaResult pca_2d(const PointSet& points);

struct TsneOptions {
    double perplexity = 30.0;
    std::size_t iterations = 1000;
    std::uint64_t seed = 42;
    double learning_rate = 200.0;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    std::size_t momentum_switch = 250;
    double exaggeration = 12.0;
    std::size_t exaggeration_iterations = 250;
    std::size_t kl_every = 50;
    int workers = 1;
};

/// Row-conditional input affinities calibrated to a target entropy.
struct Affinities {
    std::size_t n = 0;
    std::vector<double> conditional;  // n x n, row i is p_{.|i}, zero diagonal
    std::vector<double> entropy;      // achieved H_i (nats)
    std::vector<double> beta;         // precision 1 / (2 sigma_i^2)
    std::vector<bool> converged;      // |H_i - ln(perplexity)| <= tolerance
    double target_entropy = 0.0;
};

inline constexpr double kEntropyTolerance = 1e-5;
inline constexpr std::size_t kMaxBisectionSteps = 50;

Affinities calibrate_affinities(const PointSet& points, double perplexity, int workers = 1);

struct TsneResult {
    Projection2D projection;
    double perplexity = 0.0;  // after any automatic lowering
    std::vector<std::pair<std::size_t, double>> kl_history;  // (iteration, KL(P||Q))
    Affinities affinities;
};

/// Exact O(n^2) t-SNE.
TsneResult tsne_2d(const PointSet& points, const TsneOptions& options);

/// KL(P||Q) of a layout against symmetrized affinities (used for baselines).
double tsne_kl(const std::vector<double>& joint_p, const std::vector<std::array<double, 2>>& layout);
std::vector<double> symmetrize(const Affinities& affinities);

void write_projection(const std::filesystem::path& path, const Projection2D& projection);

struct SvgOptions {
    std::string title;
    std::string x_label = "dim 1";
    std::string y_label = "dim 2";
    bool label_points = false;
    int width = 720;
    int height = 540;
};

/// Standalone scatter plot. Identical input gives identical bytes.
std::string render_svg(const Projection2D& projection, const SvgOptions& options = {});
void emit_svg(const Projection2D& projection, const std::filesystem::path& path, const SvgOptions& options = {});

}  // namespace medseg
