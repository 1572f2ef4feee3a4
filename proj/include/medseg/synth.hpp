#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "medseg/corpus.hpp"

namespace medseg {

/// A planted-topic corpus for end-to-end checks. Concept vocabularies are
/// disjoint across topics (and across sections within a topic).
struct SynthSpec {
    std::size_t n_visits = 300;
    std::size_t n_topics = 3;
    std::size_t interview_concepts = 15;        // per topic
    std::size_t examination_concepts = 12;      // per topic
    std::size_t recommendation_terms = 6;       // per topic
    std::size_t doctors_per_topic = 2;
    double noise = 0.05;                        // chance a concept is drawn from another topic
    std::uint64_t seed = 42;

    void validate() const;
};

struct SynthTopic {
    std::vector<Tokens> interview;
    std::vector<Tokens> examination;
    std::vector<Tokens> recommendation;
};

/// Deterministic per-topic vocabularies (depends only on the sizes in `spec`).
std::vector<SynthTopic> synth_vocabulary(const SynthSpec& spec);

/// Each visit draws a topic uniformly; icd10 carries the planted topic ("T<k>").
std::vector<Visit> generate_synthetic(const SynthSpec& spec);

}  // namespace medseg
