#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "medseg/analogy.hpp"
#include "support.hpp"

using namespace medseg;

namespace {

AnalogyCategory numbered(const std::string& name, std::size_t n) {
    AnalogyCategory c{name, {}};
    for (std::size_t i = 0; i < n; ++i) c.pairs.push_back({"x" + std::to_string(i), "y" + std::to_string(i)});
    return c;
}

// x_i random, y_i = x_i + offset, plus unrelated distractors.
EmbeddingModel offset_model(std::size_t pairs, std::size_t distractors, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    const std::size_t dim = 8;
    std::vector<double> offset(dim);
    for (auto& o : offset) o = 2.0 * g(rng);
    std::vector<std::string> vocab;
    std::vector<double> vecs;
    for (std::size_t i = 0; i < pairs; ++i) {
        std::vector<double> x(dim);
        for (auto& v : x) v = g(rng);
        vocab.push_back("x" + std::to_string(i));
        vecs.insert(vecs.end(), x.begin(), x.end());
        vocab.push_back("y" + std::to_string(i));
        for (std::size_t d = 0; d < dim; ++d) vecs.push_back(x[d] + offset[d]);
    }
    for (std::size_t i = 0; i < distractors; ++i) {
        vocab.push_back("n" + std::to_string(i));
        for (std::size_t d = 0; d < dim; ++d) vecs.push_back(g(rng));
    }
    return EmbeddingModel(vocab, dim, vecs);
}

double cos_oracle(const std::vector<double>& a, std::span<const double> b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t d = 0; d < a.size(); ++d) {
        dot += a[d] * b[d];
        na += a[d] * a[d];
        nb += b[d] * b[d];
    }
    return dot / std::sqrt(na * nb);
}

}  // namespace

TEST(Questions, CountIsNTimesNMinusOne) {
    EXPECT_EQ(make_questions(numbered("c", 2)).size(), 2u);
    EXPECT_EQ(make_questions(numbered("Body part - Pain", 22)).size(), 462u);
    EXPECT_EQ(make_questions(numbered("Specialty - Adjective", 7)).size(), 42u);
    const auto q = make_questions(numbered("c", 2));
    EXPECT_EQ(q[0].a, "x0");
    EXPECT_EQ(q[0].d, "y1");
    EXPECT_EQ(q[1].a, "x1");
    EXPECT_EQ(q[1].d, "y0");
}

TEST(Questions, InvalidCategories) {
    EXPECT_THROW(make_questions(numbered("c", 1)), Error);
    AnalogyCategory same{"c", {{"a", "b"}, {"c", "c"}}};
    EXPECT_THROW(make_questions(same), Error);
}

TEST(Answer, PerfectOffsetIsAlwaysRight) {
    const auto model = offset_model(6, 10, 4);
    const auto report = evaluate(model, {numbered("offset", 6)}, {1, 3, 5});
    ASSERT_EQ(report.categories.size(), 1u);
    EXPECT_EQ(report.categories[0].questions, 30u);
    EXPECT_EQ(report.categories[0].accuracy, (std::vector<double>{1.0, 1.0, 1.0}));
    EXPECT_EQ(report.mean, (std::vector<double>{1.0, 1.0, 1.0}));
}

TEST(Answer, MatchesFullCosineSort) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g;
    std::vector<std::string> vocab;
    std::vector<double> vecs;
    for (int i = 0; i < 10; ++i) {
        vocab.push_back("t" + std::to_string(i));
        for (int d = 0; d < 3; ++d) vecs.push_back(g(rng));
    }
    EmbeddingModel model(vocab, 3, vecs);
    for (int a = 0; a < 10; ++a) {
        for (int b = 0; b < 10; ++b) {
            for (int c = 0; c < 10; ++c) {
                if (a == b || b == c || a == c) continue;
                std::vector<double> target(3);
                for (int d = 0; d < 3; ++d) target[d] = vecs[b * 3 + d] - vecs[a * 3 + d] + vecs[c * 3 + d];
                std::vector<std::pair<double, int>> ranked;
                for (int i = 0; i < 10; ++i) {
                    if (i == a || i == b || i == c) continue;
                    ranked.emplace_back(-cos_oracle(target, model.vector(i)), i);
                }
                std::sort(ranked.begin(), ranked.end());
                for (std::size_t pos = 0; pos < ranked.size(); ++pos) {
                    AnalogyQuestion q{vocab[a], vocab[b], vocab[c], vocab[ranked[pos].second]};
                    for (std::size_t k : {1u, 3u, 5u}) EXPECT_EQ(*answer(model, q, k), pos < k);
                }
            }
        }
    }
}

TEST(Answer, InputTermCanNeverBeTheAnswer) {
    // a : b :: c : a with six terms. The target is closest to a itself, but a is excluded.
    EmbeddingModel model({"a", "b", "c", "p", "q", "r"}, 2, {1, 0, 1, 0.1, 0.9, 0, 0, 1, -1, 0, 0, -1});
    AnalogyQuestion q{"a", "b", "c", "a"};
    EXPECT_FALSE(*answer(model, q, 5));
    EXPECT_FALSE(answer(model, {"a", "b", "c", "zz"}, 1).has_value());
    EXPECT_THROW(answer(model, q, 0), Error);
}

TEST(Answer, InvariantUnderPositiveScaling) {
    const auto model = offset_model(4, 6, 10);
    std::vector<double> scaled;
    for (std::size_t i = 0; i < model.size(); ++i) {
        for (double v : model.vector(i)) scaled.push_back(3.5 * v);
    }
    EmbeddingModel big(model.vocab(), model.dim(), scaled);
    std::vector<AnalogyQuestion> qs;
    for (std::size_t a = 0; a < 6; ++a) {
        for (std::size_t b = 0; b < 6; ++b) {
            for (std::size_t c = 0; c < 6; ++c) {
                qs.push_back({model.vocab()[a], model.vocab()[b + 3], model.vocab()[c + 6], model.vocab()[a + 4]});
            }
        }
    }
    for (const auto& q : qs) EXPECT_EQ(answer_rank(model, q), answer_rank(big, q));
}

TEST(Evaluate, OovCategoryIsSkippedAndExcludedFromMean) {
    const auto model = offset_model(3, 5, 1);
    AnalogyCategory ghost{"ghost", {{"g1", "g2"}, {"g3", "g4"}}};
    medseg::testing::WarningCapture capture;
    const auto report = evaluate(model, {numbered("offset", 3), ghost}, {1, 5});
    EXPECT_TRUE(capture.contains("ghost"));
    EXPECT_EQ(report.categories[1].skipped, 2u);
    EXPECT_TRUE(report.categories[1].accuracy.empty());
    EXPECT_EQ(report.mean, (std::vector<double>{1.0, 1.0}));
    EXPECT_THROW(evaluate(model, {ghost}, {1}), Error);
    EXPECT_THROW(evaluate(model, {numbered("offset", 3)}, {}), Error);
}

TEST(Evaluate, AccuracyNonDecreasingInK) {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> g;
    std::vector<std::string> vocab;
    std::vector<double> vecs;
    for (int i = 0; i < 30; ++i) {
        vocab.push_back(i < 12 ? (i % 2 ? "y" : "x") + std::to_string(i / 2) : "n" + std::to_string(i));
        for (int d = 0; d < 4; ++d) vecs.push_back(g(rng));
    }
    EmbeddingModel model(vocab, 4, vecs);
    const auto report = evaluate(model, {numbered("c", 6)}, {1, 2, 3, 5, 10, 27});
    const auto& acc = report.categories[0].accuracy;
    for (std::size_t i = 1; i < acc.size(); ++i) EXPECT_LE(acc[i - 1], acc[i]);
    EXPECT_EQ(acc.back(), 1.0);
}

TEST(Evaluate, ReportsMeansWithAndWithoutSynonyms) {
    EmbeddingModel model({"x0", "y0", "x1", "y1", "s", "t", "u"}, 2,
                         {1, 0, 1, 1, 2, 0, 2, 1, 0, -1, 0, 1, 0.9, 0.1});
    const auto report = evaluate(model, {numbered("c", 2)}, {1}, {{"s", "t"}});
    ASSERT_TRUE(report.synonym.has_value());
    EXPECT_EQ(report.synonym->accuracy, std::vector<double>{0.0});
    EXPECT_EQ(report.mean_with_synonym.size(), 1u);
    EXPECT_DOUBLE_EQ(report.mean_with_synonym[0], report.mean[0] / 2.0);
}

TEST(Synonym, IdenticalAndOrthogonal) {
    EmbeddingModel same({"a", "b", "c"}, 2, {1, 2, 1, 2, -1, 0.3});
    EXPECT_EQ(synonym_check(same, {{"a", "b"}}, 1), 1.0);
    std::vector<std::string> vocab = {"q", "orth"};
    std::vector<double> vecs = {1, 0, 0, 1};
    for (int i = 0; i < 5; ++i) {
        vocab.push_back("n" + std::to_string(i));
        vecs.push_back(1.0);
        vecs.push_back(0.1 * (i + 1));
    }
    EmbeddingModel crowded(vocab, 2, vecs);
    EXPECT_EQ(synonym_check(crowded, {{"q", "orth"}}, 1), 0.0);
    EXPECT_THROW(synonym_check(crowded, {}, 1), Error);
    EXPECT_THROW(synonym_check(crowded, {{"zz", "q"}}, 1), Error);
}

TEST(Synonym, MatchesBruteForceNeighbours) {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> g;
    std::vector<std::string> vocab;
    std::vector<double> vecs;
    for (int i = 0; i < 12; ++i) {
        vocab.push_back("w" + std::to_string(i));
        for (int d = 0; d < 3; ++d) vecs.push_back(g(rng));
    }
    EmbeddingModel model(vocab, 3, vecs);
    std::vector<TermPair> pairs;
    for (int i = 0; i < 12; i += 2) pairs.push_back({vocab[i], vocab[(i * 5 + 3) % 12]});
    for (std::size_t k : {1u, 2u, 4u}) {
        double hits = 0;
        for (const auto& [t1, t2] : pairs) {
            const auto i1 = *model.index(t1);
            std::vector<double> q(model.vector(i1).begin(), model.vector(i1).end());
            std::vector<std::pair<double, std::string>> all;
            for (std::size_t i = 0; i < 12; ++i) {
                if (i != i1) all.emplace_back(-cos_oracle(q, model.vector(i)), vocab[i]);
            }
            std::sort(all.begin(), all.end());
            for (std::size_t r = 0; r < k; ++r) hits += all[r].second == t2;
        }
        EXPECT_DOUBLE_EQ(synonym_check(model, pairs, k), hits / static_cast<double>(pairs.size()));
    }
}

TEST(PairsFile, CategoriesAndSynonyms) {
    medseg::testing::TempDir dir;
    medseg::testing::write_file(dir / "p.tsv",
                                "# comment\nside\tLeft Hand\thand\nside\tleft foot\tfoot\nsynonym\tból głowy\tgłowa "
                                "ból\n");
    const auto p = load_pairs(dir / "p.tsv");
    ASSERT_EQ(p.categories.size(), 1u);
    EXPECT_EQ(p.categories[0].pairs[0], (TermPair{"left hand", "hand"}));
    ASSERT_EQ(p.synonyms.size(), 1u);
    EXPECT_EQ(p.synonyms[0].second, "głowa ból");
    medseg::testing::write_file(dir / "bad.tsv", "side\ta\tb\n");
    EXPECT_THROW(load_pairs(dir / "bad.tsv"), Error);
}
