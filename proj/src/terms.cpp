#include "medseg/terms.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

namespace medseg {

namespace {

bool digit_only(const std::string& token) {
    return !token.empty() &&
           std::all_of(token.begin(), token.end(), [](unsigned char c) { return c >= '0' && c <= '9'; });
}

using Counts = std::unordered_map<std::string, std::size_t>;

void count_section(const Tokens& tokens, const CandidateOptions& opt, Counts& counts) {
    for (std::size_t start = 0; start < tokens.size(); ++start) {
        if (opt.stopwords.count(tokens[start])) continue;
        std::string key;
        for (std::size_t len = 1; len <= opt.max_len && start + len <= tokens.size(); ++len) {
            const std::string& last = tokens[start + len - 1];
            if (digit_only(last)) break;
            if (len > 1) key += ' ';
            key += last;
            if (opt.stopwords.count(last)) continue;
            ++counts[key];
        }
    }
}

}  // namespace

std::vector<Candidate> extract_candidates(const std::vector<Visit>& visits,
                                          const CandidateOptions& options) {
    if (options.max_len < 1) throw Error("max_len must be >= 1");
    if (options.min_freq < 1) throw Error("min_freq must be >= 1");

    const std::size_t shards = std::max<std::size_t>(1, shard_count(visits.size(), options.workers));
    std::vector<Counts> partial(shards);
    parallel_shards(visits.size(), options.workers, [&](std::size_t shard, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            for (Section s : options.sections) count_section(visits[i].section(s), options, partial[shard]);
        }
    });
    Counts counts = std::move(partial[0]);
    for (std::size_t s = 1; s < shards; ++s) {
        for (auto& [k, v] : partial[s]) counts[k] += v;
    }

    std::vector<Candidate> out;
    for (auto& [key, freq] : counts) {
        if (freq < options.min_freq) continue;
        out.push_back(Candidate{split_whitespace(key), freq, {}});
    }
    std::sort(out.begin(), out.end(),
              [](const Candidate& a, const Candidate& b) { return a.tokens < b.tokens; });

    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < out.size(); ++i) index.emplace(out[i].id(), i);
    for (std::size_t b = 0; b < out.size(); ++b) {
        const Tokens& longer = out[b].tokens;
        std::set<std::size_t> contained;
        for (std::size_t start = 0; start < longer.size(); ++start) {
            std::string key;
            for (std::size_t len = 1; start + len <= longer.size() && len < longer.size(); ++len) {
                if (len > 1) key += ' ';
                key += longer[start + len - 1];
                auto it = index.find(key);
                if (it != index.end()) contained.insert(it->second);
            }
        }
        for (std::size_t a : contained) out[a].nested_in.push_back(b);
    }
    return out;
}

double c_value(const Candidate& candidate, std::span<const Candidate> all) {
    const double weight = std::log2(static_cast<double>(candidate.tokens.size()) + 1.0);
    double f = static_cast<double>(candidate.freq);
    if (!candidate.nested_in.empty()) {
        double sum = 0.0;
        for (std::size_t b : candidate.nested_in) {
            if (b >= all.size()) throw Error("nested_in index out of range for '" + candidate.id() + "'");
            sum += static_cast<double>(all[b].freq);
        }
        f -= sum / static_cast<double>(candidate.nested_in.size());
    }
    return weight * f;
}

Lexicon build_lexicon(std::span<const Candidate> candidates, double cvalue_threshold,
                      const std::optional<LabelMap>& labels) {
    if (!(cvalue_threshold >= 0.0)) throw Error("C-value threshold must be >= 0");
    std::vector<LexiconEntry> entries;
    for (const auto& c : candidates) {
        const double score = c_value(c, candidates);
        if (score < cvalue_threshold) continue;
        LexiconEntry e{c.tokens, {"term"}, score};
        if (labels) {
            auto it = labels->find(c.id());
            if (it != labels->end() && !it->second.empty()) e.labels = it->second;
        }
        entries.push_back(std::move(e));
    }
    std::sort(entries.begin(), entries.end(), [](const LexiconEntry& a, const LexiconEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id() < b.id();
    });
    if (labels) {
        std::set<std::string> kept;
        for (const auto& e : entries) kept.insert(e.id());
        for (const auto& [term, _] : *labels) {
            if (!kept.count(term)) warn("label file references unknown term '" + term + "'");
        }
    }
    return Lexicon(std::move(entries));
}

std::set<std::string> load_stopwords(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        for (auto& tok : split_whitespace(line)) words.insert(to_lower_utf8(tok));
    }
    return words;
}

LabelMap load_label_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    LabelMap labels;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split(line, '\t');
        if (fields.size() < 2) {
            throw Error(path.string() + ":" + std::to_string(number) + ": expected term<TAB>labels");
        }
        auto& set = labels[join(split_whitespace(to_lower_utf8(fields[0])))];
        for (auto& l : split(fields[1], ',')) {
            if (!l.empty()) set.insert(l);
        }
    }
    return labels;
}

}  // namespace medseg
