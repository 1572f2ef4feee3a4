#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "medseg/embedding.hpp"

namespace medseg {

using TermPair = std::pair<std::string, std::string>;

struct AnalogyCategory {
    std::string name;
    std::vector<TermPair> pairs;

    /// Throws unless there are >= 2 pairs and every pair has distinct terms.
    void validate() const;
};

struct AnalogyQuestion {
    std::string a, b, c, d;  // a : b :: c : d
};

/// Both orientations of every unordered pair of pairs: n(n-1) questions.
std::vector<AnalogyQuestion> make_questions(const AnalogyCategory& category);

/// Answers "a : b :: c : ?" by ranking the vocabulary (minus a, b, c) against
/// v(b) - v(a) + v(c). Returns nullopt when any term is out of vocabulary.
std::optional<bool> answer(const EmbeddingModel& model, const AnalogyQuestion& q, std::size_t k);

/// 1-based rank of d among candidates (excluding a, b, c); nullopt when OOV.
std::optional<std::size_t> answer_rank(const EmbeddingModel& model, const AnalogyQuestion& q);

struct CategoryResult {
    std::string name;
    std::size_t questions = 0;
    std::size_t skipped = 0;
    std::vector<double> accuracy;  // one per k; empty when every question was skipped
};

struct AnalogyReport {
    std::vector<std::size_t> ks;
    std::vector<CategoryResult> categories;
    std::vector<double> mean;  // unweighted mean over categories with answered questions
    std::optional<CategoryResult> synonym;
    std::vector<double> mean_with_synonym;  // includes the synonym task when present
};

AnalogyReport evaluate(const EmbeddingModel& model, const std::vector<AnalogyCategory>& categories,
                       const std::vector<std::size_t>& ks,
                       const std::vector<TermPair>& synonym_pairs = {});

/// Fraction of in-vocabulary pairs whose second term is among the top-k
/// cosine neighbours of the first.
double synonym_check(const EmbeddingModel& model, const std::vector<TermPair>& pairs, std::size_t k);

/// Pairs file: TSV category, term_a, term_b. Rows in category "synonym" feed
/// the word-order task instead of an analogy category.
struct PairsFile {
    std::vector<AnalogyCategory> categories;
    std::vector<TermPair> synonyms;
};
PairsFile load_pairs(const std::filesystem::path& path);
void write_analogy_report(const std::filesystem::path& path, const AnalogyReport& report);

}  // namespace medseg
