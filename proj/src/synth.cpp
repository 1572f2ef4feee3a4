#include "medseg/synth.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <random>

namespace medseg {

void SynthSpec::validate() const {
    if (n_topics < 2) throw Error("synthetic corpus needs at least 2 topics");
    if (n_visits < 1) throw Error("synthetic corpus needs at least 1 visit");
    if (interview_concepts < 6 || examination_concepts < 5 || recommendation_terms < 3) {
        throw Error("synthetic topic vocabularies are too small");
    }
    if (doctors_per_topic < 1) throw Error("doctors_per_topic must be >= 1");
    if (!(noise >= 0.0 && noise < 1.0)) throw Error("noise rate must lie in [0, 1)");
}

namespace {

constexpr std::array<const char*, 10> kStems = {"cardi", "derm", "gastr", "neur", "pulm",
                                                "nephr", "endo",  "onco",  "orth", "psych"};

std::string stem(std::size_t topic) {
    return topic < kStems.size() ? std::string(kStems[topic]) : "topic" + std::to_string(topic);
}

// Every fourth concept is a two-token phrase.
std::vector<Tokens> make_concepts(std::size_t topic, const char* head, const char* tail, std::size_t count) {
    std::vector<Tokens> out;
    for (std::size_t i = 0; i < count; ++i) {
        Tokens t{stem(topic) + head + std::to_string(i)};
        if (i % 4 == 3) t.push_back(stem(topic) + tail + std::to_string(i));
        out.push_back(std::move(t));
    }
    return out;
}

std::size_t draw(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Tokens sample_section(const std::vector<SynthTopic>& topics, std::size_t topic,
                      std::vector<Tokens> SynthTopic::*section, std::size_t lo, std::size_t hi, double noise,
                      std::mt19937_64& rng) {
    const auto& own = topics[topic].*section;
    std::vector<std::size_t> order(own.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t m = draw(rng, lo, std::min(hi, own.size()));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Tokens tokens;
    for (std::size_t i = 0; i < m; ++i) {
        const Tokens* concept_tokens = &own[order[i]];
        if (noise > 0.0 && uni(rng) < noise) {
            std::size_t other = draw(rng, 0, topics.size() - 2);
            if (other >= topic) ++other;
            const auto& foreign = topics[other].*section;
            concept_tokens = &foreign[draw(rng, 0, foreign.size() - 1)];
        }
        tokens.insert(tokens.end(), concept_tokens->begin(), concept_tokens->end());
    }
    return tokens;
}

}  // namespace

std::vector<SynthTopic> synth_vocabulary(const SynthSpec& spec) {
    spec.validate();
    std::vector<SynthTopic> topics;
    for (std::size_t t = 0; t < spec.n_topics; ++t) {
        topics.push_back({make_concepts(t, "sym", "site", spec.interview_concepts),
                          make_concepts(t, "sign", "area", spec.examination_concepts),
                          make_concepts(t, "rx", "plan", spec.recommendation_terms)});
    }
    return topics;
}

std::vector<Visit> generate_synthetic(const SynthSpec& spec) {
    const auto topics = synth_vocabulary(spec);
    std::mt19937_64 rng(spec.seed);
    std::vector<Visit> visits;
    visits.reserve(spec.n_visits);
    const std::size_t width = std::to_string(spec.n_visits).size();
    for (std::size_t v = 0; v < spec.n_visits; ++v) {
        const std::size_t topic = draw(rng, 0, spec.n_topics - 1);
        Visit visit;
        std::string num = std::to_string(v + 1);
        visit.visit_id = "v" + std::string(width - num.size(), '0') + num;
        visit.doctor_id = "d" + std::to_string(topic * spec.doctors_per_topic + draw(rng, 0, spec.doctors_per_topic - 1));
        visit.specialty = "synthetic";
        visit.icd10 = "T" + std::to_string(topic);
        visit.interview = sample_section(topics, topic, &SynthTopic::interview, 3, 6, spec.noise, rng);
        visit.examination = sample_section(topics, topic, &SynthTopic::examination, 2, 5, spec.noise, rng);
        visit.recommendation = sample_section(topics, topic, &SynthTopic::recommendation, 1, 3, 0.0, rng);
        visits.push_back(std::move(visit));
    }
    return visits;
}

}  // namespace medseg
