#include "medseg/analogy.hpp"

#include <algorithm>
#include <fstream>

namespace medseg {

void AnalogyCategory::validate() const {
    if (pairs.size() < 2) {
        throw Error("analogy category '" + name + "' needs at least 2 pairs, has " +
                    std::to_string(pairs.size()));
    }
    for (const auto& [a, b] : pairs) {
        if (a == b) throw Error("analogy category '" + name + "' pairs '" + a + "' with itself");
    }
}

std::vector<AnalogyQuestion> make_questions(const AnalogyCategory& category) {
    category.validate();
    std::vector<AnalogyQuestion> out;
    const auto& p = category.pairs;
    out.reserve(p.size() * (p.size() - 1));
    for (std::size_t x = 0; x < p.size(); ++x) {
        for (std::size_t y = x + 1; y < p.size(); ++y) {
            out.push_back({p[x].first, p[x].second, p[y].first, p[y].second});
            out.push_back({p[y].first, p[y].second, p[x].first, p[x].second});
        }
    }
    return out;
}

namespace {

// Rank of `target_row` among all rows not in `excluded`, by cosine to `query`
// (descending, ties by concept id).
std::size_t rank_of(const EmbeddingModel& model, std::span<const double> query, std::size_t target_row,
                    std::initializer_list<std::size_t> excluded) {
    const double target_cos = cosine(query, model.vector(target_row));
    const auto& target_id = model.vocab()[target_row];
    std::size_t rank = 1;
    for (std::size_t i = 0; i < model.size(); ++i) {
        if (i == target_row || std::find(excluded.begin(), excluded.end(), i) != excluded.end()) continue;
        const double c = cosine(query, model.vector(i));
        if (c > target_cos || (c == target_cos && model.vocab()[i] < target_id)) ++rank;
    }
    return rank;
}

}  // namespace

std::optional<std::size_t> answer_rank(const EmbeddingModel& model, const AnalogyQuestion& q) {
    const auto ia = model.index(q.a), ib = model.index(q.b), ic = model.index(q.c), id = model.index(q.d);
    if (!ia || !ib || !ic || !id) return std::nullopt;
    // d coinciding with an input term can never be produced.
    if (*id == *ia || *id == *ib || *id == *ic) return model.size() + 1;
    std::vector<double> target(model.dim());
    auto va = model.vector(*ia), vb = model.vector(*ib), vc = model.vector(*ic);
    for (std::size_t d = 0; d < model.dim(); ++d) target[d] = vb[d] - va[d] + vc[d];
    return rank_of(model, target, *id, {*ia, *ib, *ic});
}

std::optional<bool> answer(const EmbeddingModel& model, const AnalogyQuestion& q, std::size_t k) {
    if (k < 1) throw Error("k must be >= 1");
    auto rank = answer_rank(model, q);
    if (!rank) return std::nullopt;
    return *rank <= k;
}

namespace {

struct SynonymRanks {
    std::vector<std::size_t> ranks;
    std::size_t skipped = 0;
};

SynonymRanks synonym_ranks(const EmbeddingModel& model, const std::vector<TermPair>& pairs) {
    SynonymRanks out;
    for (const auto& [t1, t2] : pairs) {
        auto i1 = model.index(t1), i2 = model.index(t2);
        if (!i1 || !i2 || *i1 == *i2) {
            ++out.skipped;
            continue;
        }
        out.ranks.push_back(rank_of(model, model.vector(*i1), *i2, {*i1}));
    }
    return out;
}

double fraction_within(const std::vector<std::size_t>& ranks, std::size_t k) {
    const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](std::size_t r) { return r <= k; });
    return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

std::vector<double> mean_over(const std::vector<const CategoryResult*>& results, std::size_t nk) {
    std::vector<double> mean(nk, 0.0);
    std::size_t used = 0;
    for (const auto* r : results) {
        if (r->accuracy.empty()) continue;
        for (std::size_t k = 0; k < nk; ++k) mean[k] += r->accuracy[k];
        ++used;
    }
    if (used == 0) return {};
    for (auto& m : mean) m /= static_cast<double>(used);
    return mean;
}

}  // namespace

double synonym_check(const EmbeddingModel& model, const std::vector<TermPair>& pairs, std::size_t k) {
    if (pairs.empty()) throw Error("synonym check needs at least one pair");
    if (k < 1) throw Error("k must be >= 1");
    auto r = synonym_ranks(model, pairs);
    if (r.ranks.empty()) throw Error("vocabulary mismatch: no synonym pair is fully in vocabulary");
    return fraction_within(r.ranks, k);
}

AnalogyReport evaluate(const EmbeddingModel& model, const std::vector<AnalogyCategory>& categories,
                       const std::vector<std::size_t>& ks, const std::vector<TermPair>& synonym_pairs) {
    if (ks.empty()) throw Error("evaluate needs at least one neighbourhood size");
    for (auto k : ks) {
        if (k < 1) throw Error("neighbourhood sizes must be >= 1");
    }
    AnalogyReport report;
    report.ks = ks;
    std::size_t answered_total = 0;
    for (const auto& cat : categories) {
        CategoryResult res{cat.name, 0, 0, {}};
        std::vector<std::size_t> ranks;
        for (const auto& q : make_questions(cat)) {
            ++res.questions;
            if (auto r = answer_rank(model, q)) {
                ranks.push_back(*r);
            } else {
                ++res.skipped;
            }
        }
        if (!ranks.empty()) {
            for (auto k : ks) res.accuracy.push_back(fraction_within(ranks, k));
        } else {
            warn("analogy category '" + cat.name + "' is entirely out of vocabulary");
        }
        answered_total += ranks.size();
        report.categories.push_back(std::move(res));
    }
    if (!synonym_pairs.empty()) {
        auto r = synonym_ranks(model, synonym_pairs);
        CategoryResult res{"synonym", synonym_pairs.size(), r.skipped, {}};
        if (!r.ranks.empty()) {
            for (auto k : ks) res.accuracy.push_back(fraction_within(r.ranks, k));
        }
        answered_total += r.ranks.size();
        report.synonym = std::move(res);
    }
    if (answered_total == 0) throw Error("vocabulary mismatch: every question was skipped");

    std::vector<const CategoryResult*> analogies;
    for (const auto& c : report.categories) analogies.push_back(&c);
    report.mean = mean_over(analogies, ks.size());
    if (report.synonym) analogies.push_back(&*report.synonym);
    report.mean_with_synonym = mean_over(analogies, ks.size());
    return report;
}

PairsFile load_pairs(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    PairsFile out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto f = split(line, '\t');
        if (f.size() != 3) {
            throw Error(path.string() + ":" + std::to_string(number) + ": expected category, term_a, term_b");
        }
        TermPair pair{join(split_whitespace(to_lower_utf8(f[1]))), join(split_whitespace(to_lower_utf8(f[2])))};
        if (f[0] == "synonym") {
            out.synonyms.push_back(std::move(pair));
            continue;
        }
        auto it = std::find_if(out.categories.begin(), out.categories.end(),
                               [&](const AnalogyCategory& c) { return c.name == f[0]; });
        if (it == out.categories.end()) {
            out.categories.push_back({f[0], {}});
            it = std::prev(out.categories.end());
        }
        it->pairs.push_back(std::move(pair));
    }
    for (const auto& c : out.categories) {
        try {
            c.validate();
        } catch (const Error& e) {
            throw Error(path.string() + ": " + e.what());
        }
    }
    return out;
}

void write_analogy_report(const std::filesystem::path& path, const AnalogyReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "category\tquestions\tskipped";
    for (auto k : report.ks) out << "\tk=" << k;
    out << '\n';
    auto row = [&](const std::string& name, std::size_t q, std::size_t s, const std::vector<double>& acc) {
        out << name << '\t' << q << '\t' << s;
        for (std::size_t i = 0; i < report.ks.size(); ++i) {
            out << '\t' << (acc.empty() ? std::string("NA") : format_fixed(acc[i], 4));
        }
        out << '\n';
    };
    for (const auto& c : report.categories) row(c.name, c.questions, c.skipped, c.accuracy);
    if (report.synonym) row(report.synonym->name, report.synonym->questions, report.synonym->skipped,
                            report.synonym->accuracy);
    row("mean", 0, 0, report.mean);
    if (report.synonym) row("mean_with_synonym", 0, 0, report.mean_with_synonym);
}

}  // namespace medseg
