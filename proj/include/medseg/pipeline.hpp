#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "medseg/analogy.hpp"
#include "medseg/analysis.hpp"
#include "medseg/cluster.hpp"
#include "medseg/corpus.hpp"
#include "medseg/embedding.hpp"
#include "medseg/projection.hpp"
#include "medseg/synth.hpp"
#include "medseg/terms.hpp"

namespace medseg {

/// Every stage parameter. Defaults are the documented CLI defaults.
struct PipelineConfig {
    std::filesystem::path corpus;
    std::filesystem::path out_dir = "out";
    std::optional<std::filesystem::path> stopwords;
    std::optional<std::filesystem::path> labels;
    std::optional<std::filesystem::path> pairs;

    // terms
    std::size_t max_len = 5;
    std::size_t min_freq = 5;
    double cvalue_threshold = 20.0;
    std::vector<Section> term_sections = {Section::Interview, Section::Examination, Section::Recommendation};

    // embedding
    std::size_t min_count = 5;
    std::size_t dim = 20;
    std::size_t epochs = 50;
    double alpha = 0.75;
    double x_max = 100.0;
    double learning_rate = 0.05;

    // analogy
    Section analogy_section = Section::Interview;
    std::vector<std::size_t> ks = {1, 3, 5};

    // cluster
    ClusterMethod method = ClusterMethod::Ward;
    std::optional<std::size_t> k;  // nullopt = elbow selection
    std::size_t k_min = 2;
    std::size_t k_max = 15;
    double tau = 0.05;
    std::size_t restarts = 10;
    bool compare_methods = true;

    // analysis
    std::size_t top_n = 5;
    std::vector<std::string> profile_groups;
    std::string contingency_field = "doctor_id";  // doctor_id | specialty | icd10
    std::string projection_method = "tsne";    // tsne | pca
    std::string projection_target = "visits";  // visits | interview | examination (term embeddings)
    double perplexity = 30.0;
    std::size_t tsne_iterations = 1000;
    bool interpret = true;  // pipeline runs profile / contingency / CA / projection

    std::uint64_t seed = 42;
    int workers = 1;

    void validate() const;
};

/// Fixed artifact names inside out_dir.
struct Artifacts {
    std::filesystem::path dir;

    std::filesystem::path lexicon() const { return dir / "lexicon.tsv"; }
    std::filesystem::path annotated() const { return dir / "annotated.jsonl"; }
    std::filesystem::path coverage() const { return dir / "coverage.tsv"; }
    std::filesystem::path cooc(Section s) const { return dir / ("cooc_" + std::string(section_name(s)) + ".tsv"); }
    std::filesystem::path embedding(Section s) const {
        return dir / ("embedding_" + std::string(section_name(s)) + ".txt");
    }
    std::filesystem::path loss(Section s) const { return dir / ("loss_" + std::string(section_name(s)) + ".tsv"); }
    std::filesystem::path analogy() const { return dir / "analogy.tsv"; }
    std::filesystem::path visit_vectors() const { return dir / "visit_vectors.tsv"; }
    std::filesystem::path assignments() const { return dir / "assignments.tsv"; }
    std::filesystem::path assignments(ClusterMethod m) const {
        return dir / ("assignments_" + std::string(method_name(m)) + ".tsv");
    }
    std::filesystem::path stats() const { return dir / "stats.json"; }
    std::filesystem::path dendrogram() const { return dir / "dendrogram.tsv"; }
    std::filesystem::path elbow() const { return dir / "elbow.tsv"; }
    std::filesystem::path profile() const { return dir / "profile.tsv"; }
    std::filesystem::path contingency(const std::string& field) const { return dir / ("contingency_" + field + ".tsv"); }
    std::filesystem::path ca(const std::string& field) const { return dir / ("ca_" + field + ".tsv"); }
    std::filesystem::path ca_svg(const std::string& field) const { return dir / ("ca_" + field + ".svg"); }
    std::filesystem::path projection(const std::string& target, const std::string& method) const {
        return dir / ("projection_" + target + "_" + method + ".tsv");
    }
    std::filesystem::path projection_svg(const std::string& target, const std::string& method) const {
        return dir / ("projection_" + target + "_" + method + ".svg");
    }
};

struct StageReport {
    std::vector<std::filesystem::path> written;
    std::vector<std::string> lines;  // human-readable summary
};

StageReport run_generate(const SynthSpec& spec, const std::filesystem::path& output);
StageReport run_extract_terms(const PipelineConfig& cfg);
StageReport run_annotate(const PipelineConfig& cfg);
StageReport run_cooccur(const PipelineConfig& cfg);
StageReport run_train(const PipelineConfig& cfg);
StageReport run_analogy(const PipelineConfig& cfg);
StageReport run_embed_visits(const PipelineConfig& cfg);
StageReport run_cluster(const PipelineConfig& cfg);
StageReport run_elbow(const PipelineConfig& cfg);
StageReport run_profile(const PipelineConfig& cfg);
StageReport run_contingency(const PipelineConfig& cfg);
StageReport run_ca(const PipelineConfig& cfg);
StageReport run_project(const PipelineConfig& cfg);
StageReport run_nearest(const PipelineConfig& cfg, const std::string& concept_id, std::size_t k);
/// Concept extraction, embeddings, visit embeddings and clustering, followed
/// by the interpretation stages when cfg.interpret is set.
StageReport run_pipeline(const PipelineConfig& cfg);

/// ARI between two assignment files.
double compare_assignments(const std::filesystem::path& a, const std::filesystem::path& b);

}  // namespace medseg
