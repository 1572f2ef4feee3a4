#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "medseg/corpus.hpp"

namespace medseg {

struct Candidate {
    Tokens tokens;
    std::size_t freq = 0;
    /// Indices (into the same candidate list) of strictly longer candidates
    /// containing this one contiguously.
    std::vector<std::size_t> nested_in;

    std::string id() const { return join(tokens); }
};

struct CandidateOptions {
    std::size_t max_len = 5;
    std::size_t min_freq = 5;
    std::set<std::string> stopwords;
    std::vector<Section> sections = {Section::Interview, Section::Examination};
    int workers = 1;
};

/// Counts contiguous n-grams (raw occurrences) and links nesting among the
/// survivors. Output is sorted by token sequence.
std::vector<Candidate> extract_candidates(const std::vector<Visit>& visits,
                                          const CandidateOptions& options);

/// log2(|a|+1) * (f(a) - mean frequency of the candidates containing a).
double c_value(const Candidate& candidate, std::span<const Candidate> all);

using LabelMap = std::map<std::string, std::set<std::string>>;

/// Keeps candidates with C-value >= threshold, ordered by C-value descending
/// then term. Terms absent from `labels` get the single label "term".
Lexicon build_lexicon(std::span<const Candidate> candidates, double cvalue_threshold,
                      const std::optional<LabelMap>& labels = std::nullopt);

std::set<std::string> load_stopwords(const std::filesystem::path& path);
/// TSV: term, comma-separated labels.
LabelMap load_label_file(const std::filesystem::path& path);

}  // namespace medseg
