#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "medseg/corpus.hpp"

namespace medseg {

struct CoocEntry {
    std::uint32_t i = 0;  // i < j
    std::uint32_t j = 0;
    double count = 0.0;
};

/// Upper-triangle storage of a symmetric co-occurrence matrix with no diagonal.
struct CoocMatrix {
    std::vector<std::string> vocab;
    std::vector<CoocEntry> entries;  // sorted by (i, j)

    /// X_ij for any i, j (0 on the diagonal and for absent pairs).
    double at(std::size_t i, std::size_t j) const;
};

/// Whole-section windows: each visit's de-duplicated in-vocabulary concept set
/// adds 1 to every unordered pair. Vocabulary is ordered by visit count
/// (descending) then concept id.
CoocMatrix build_cooc(const std::vector<AnnotatedVisit>& annotated, Section section,
                      std::size_t min_count = 5, int workers = 1);

void write_cooc(const std::filesystem::path& tsv_path, const CoocMatrix& cooc);
CoocMatrix load_cooc(const std::filesystem::path& tsv_path);
/// The vocabulary sidecar written next to a co-occurrence dump.
std::filesystem::path cooc_vocab_path(const std::filesystem::path& tsv_path);

struct GloveOptions {
    std::size_t dim = 20;
    std::size_t epochs = 50;
    double alpha = 0.75;
    double x_max = 100.0;
    double learning_rate = 0.05;
    double accumulator_init = 1.0;
    std::uint64_t seed = 42;
    int workers = 1;
};

/// Trainable GloVe parameters, row-major |vocab| x dim.
struct GloveState {
    std::size_t rows = 0;
    std::size_t dim = 0;
    std::vector<double> main;
    std::vector<double> context;
    std::vector<double> main_bias;
    std::vector<double> context_bias;

    GloveState() = default;
    GloveState(std::size_t rows, std::size_t dim);
    std::span<double> main_row(std::size_t i) { return {main.data() + i * dim, dim}; }
    std::span<double> context_row(std::size_t i) { return {context.data() + i * dim, dim}; }
    std::span<const double> main_row(std::size_t i) const { return {main.data() + i * dim, dim}; }
    std::span<const double> context_row(std::size_t i) const {
        return {context.data() + i * dim, dim};
    }
};

double glove_weight(double x, double x_max, double alpha);

/// J = sum over ordered pairs with X_ij > 0 of f(X_ij) (w_i.w~_j + b_i + b~_j - ln X_ij)^2.
double glove_loss(const CoocMatrix& cooc, const GloveState& state, const GloveOptions& options);
/// Exact dJ/dtheta laid out like the state.
GloveState glove_gradient(const CoocMatrix& cooc, const GloveState& state,
                          const GloveOptions& options);
GloveState glove_init(std::size_t rows, const GloveOptions& options);

class EmbeddingModel {
public:
    EmbeddingModel() = default;
    EmbeddingModel(std::vector<std::string> vocab, std::size_t dim, std::vector<double> vectors);

    const std::vector<std::string>& vocab() const { return vocab_; }
    std::size_t dim() const { return dim_; }
    std::size_t size() const { return vocab_.size(); }
    /// Exported embedding (main + context for trained models).
    std::span<const double> vector(std::size_t i) const { return {vectors_.data() + i * dim_, dim_}; }
    std::optional<std::size_t> index(const std::string& concept_id) const;
    std::size_t require(const std::string& concept_id) const;

    /// Populated only for models produced by train_glove in this process.
    GloveState params;
    std::vector<double> loss_history;  // [0] = before training, [e] = after epoch e

private:
    std::vector<std::string> vocab_;
    std::size_t dim_ = 0;
    std::vector<double> vectors_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Adaptive-gradient GloVe over shuffled nonzero entries (both orientations).
EmbeddingModel train_glove(const CoocMatrix& cooc, const GloveOptions& options);

void write_embedding(const std::filesystem::path& path, const EmbeddingModel& model);
EmbeddingModel load_embedding(const std::filesystem::path& path);

double cosine(std::span<const double> a, std::span<const double> b);

struct Neighbor {
    std::string concept_id;
    double cosine = 0.0;
};
/// Top-k by cosine of exported vectors, query excluded; ties broken by concept id.
std::vector<Neighbor> nearest_terms(const EmbeddingModel& model, const std::string& concept_id,
                                    std::size_t k);

struct VisitVector {
    std::string visit_id;
    std::vector<double> vector;
};

/// Mean of unique in-vocabulary concept vectors per section, interview part
/// followed by examination part. Visits with no in-vocabulary concept in
/// either section are dropped with a warning.
std::vector<VisitVector> embed_visits(const std::vector<AnnotatedVisit>& annotated,
                                      const EmbeddingModel& interview_model,
                                      const EmbeddingModel& examination_model);

void write_visit_vectors(const std::filesystem::path& path, const std::vector<VisitVector>& vectors);
std::vector<VisitVector> load_visit_vectors(const std::filesystem::path& path);

}  // namespace medseg
