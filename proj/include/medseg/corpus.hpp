#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "medseg/common.hpp"

namespace medseg {

enum class Section { Interview = 0, Examination = 1, Recommendation = 2 };
inline constexpr std::array<Section, 3> kAllSections = {
    Section::Interview, Section::Examination, Section::Recommendation};

std::string_view section_name(Section s);
Section parse_section(std::string_view name);

struct Visit {
    std::string visit_id;
    std::string doctor_id;
    std::string specialty;
    std::optional<std::string> icd10;
    Tokens interview;
    Tokens examination;
    Tokens recommendation;

    const Tokens& section(Section s) const;
};

/// Lowercases ASCII plus the Latin-1 and Latin Extended-A letters (covers Polish).
std::string to_lower_utf8(std::string_view text);
/// Number of UTF-8 code points.
std::size_t utf8_length(std::string_view text);

/// Reads JSON Lines. Blank lines are ignored; errors name the 1-based line.
std::vector<Visit> load_corpus(const std::filesystem::path& path);
std::vector<Visit> parse_corpus(std::istream& in);
void write_corpus(const std::filesystem::path& path, const std::vector<Visit>& visits);

struct LexiconEntry {
    Tokens term;
    std::set<std::string> labels;
    double score = 0.0;

    /// Canonical concept id: the term tokens joined by single spaces.
    std::string id() const { return join(term); }
};

/// Immutable ranked list of terms with a token trie for longest-match lookup.
class Lexicon {
public:
    Lexicon() = default;
    explicit Lexicon(std::vector<LexiconEntry> entries);

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::vector<LexiconEntry>& entries() const { return entries_; }
    const LexiconEntry& operator[](std::size_t i) const { return entries_[i]; }
    std::optional<std::size_t> find(const std::string& concept_id) const;

    /// Length (in tokens) and entry index of the longest term starting at
    /// tokens[pos], or nullopt when no term matches there.
    std::optional<std::pair<std::size_t, std::size_t>> longest_match(const Tokens& tokens,
                                                                    std::size_t pos) const;

private:
    struct Node {
        std::unordered_map<std::string, std::size_t> children;
        std::optional<std::size_t> entry;
    };
    std::vector<LexiconEntry> entries_;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::vector<Node> trie_;
};

Lexicon load_lexicon(const std::filesystem::path& path);
void write_lexicon(const std::filesystem::path& path, const Lexicon& lexicon);

struct SectionCoverage {
    std::size_t tokens_covered = 0;
    std::size_t tokens_total = 0;
    std::size_t chars_covered = 0;
    std::size_t chars_total = 0;
};

struct AnnotatedVisit {
    std::string visit_id;
    std::vector<std::string> interview_concepts;
    std::vector<std::string> examination_concepts;
    std::vector<std::string> recommendation_concepts;
    std::array<SectionCoverage, 3> coverage{};

    const std::vector<std::string>& concepts(Section s) const;
    std::vector<std::string>& concepts(Section s);
    const SectionCoverage& section_coverage(Section s) const {
        return coverage[static_cast<std::size_t>(s)];
    }
};

/// Greedy left-to-right longest-match annotation of every section.
AnnotatedVisit annotate(const Visit& visit, const Lexicon& lexicon);
std::vector<AnnotatedVisit> annotate_all(const std::vector<Visit>& visits, const Lexicon& lexicon,
                                         int workers = 1);

struct CoverageMean {
    std::optional<double> token_ratio;  // nullopt when every visit has this section empty
    std::optional<double> char_ratio;
    std::size_t visits = 0;             // visits contributing to the mean
};

struct CoverageReport {
    std::array<CoverageMean, 3> sections{};
    const CoverageMean& operator[](Section s) const {
        return sections[static_cast<std::size_t>(s)];
    }
};

CoverageReport coverage_report(const std::vector<AnnotatedVisit>& annotated);

/// Keeps visits with recommendation concepts and interview or examination concepts.
std::vector<AnnotatedVisit> filter_for_clustering(const std::vector<AnnotatedVisit>& annotated);

/// Annotated JSON Lines: the input record plus concept arrays and a coverage block.
struct AnnotatedCorpus {
    std::vector<Visit> visits;
    std::vector<AnnotatedVisit> annotated;
};
void write_annotated(const std::filesystem::path& path, const std::vector<Visit>& visits,
                     const std::vector<AnnotatedVisit>& annotated);
AnnotatedCorpus load_annotated(const std::filesystem::path& path);

}  // namespace medseg
