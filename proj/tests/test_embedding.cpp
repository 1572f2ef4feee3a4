#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "medseg/embedding.hpp"
#include "medseg/synth.hpp"
#include "support.hpp"

using namespace medseg;

namespace {

AnnotatedVisit av(const std::string& id, std::vector<std::string> interview, std::vector<std::string> exam = {}) {
    AnnotatedVisit a;
    a.visit_id = id;
    a.interview_concepts = std::move(interview);
    a.examination_concepts = std::move(exam);
    return a;
}

CoocMatrix random_cooc(std::size_t n, std::mt19937_64& rng) {
    CoocMatrix c;
    for (std::size_t i = 0; i < n; ++i) c.vocab.push_back("c" + std::to_string(i));
    std::uniform_real_distribution<double> count(1.0, 150.0);
    std::bernoulli_distribution keep(0.6);
    for (std::uint32_t i = 0; i < n; ++i) {
        for (std::uint32_t j = i + 1; j < n; ++j) {
            if (keep(rng)) c.entries.push_back({i, j, std::round(count(rng))});
        }
    }
    return c;
}

}  // namespace

TEST(Cooc, RepeatsWithinVisitCountOnce) {
    const auto c = build_cooc({av("v", {"a", "b", "a"})}, Section::Interview, 1);
    ASSERT_EQ(c.entries.size(), 1u);
    EXPECT_EQ(c.at(0, 1), 1.0);
}

TEST(Cooc, TwoVisitsAccumulate) {
    const auto c = build_cooc({av("1", {"a", "b"}), av("2", {"b", "a"})}, Section::Interview, 1);
    EXPECT_EQ(c.at(0, 1), 2.0);
    EXPECT_EQ(c.at(1, 0), 2.0);
    EXPECT_EQ(c.at(0, 0), 0.0);
}

TEST(Cooc, VocabularyOrderedByVisitCountThenId) {
    const auto c = build_cooc({av("1", {"z", "y"}), av("2", {"z", "x"}), av("3", {"y", "z"})}, Section::Interview, 1);
    EXPECT_EQ(c.vocab, (std::vector<std::string>{"z", "y", "x"}));
}

TEST(Cooc, MinCountAndDegenerate) {
    std::vector<AnnotatedVisit> visits = {av("1", {"a", "b"}), av("2", {"a", "c"}), av("3", {"a", "b"}), av("4", {"d"})};
    const auto c = build_cooc(visits, Section::Interview, 2);
    EXPECT_EQ(c.vocab, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(c.at(0, 1), 2.0);
    try {
        build_cooc(visits, Section::Interview, 3);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("degenerate co-occurrence"), std::string::npos);
    }
}

TEST(Cooc, MatchesNestedLoopOracleAndIsOrderInvariant) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> concept_id(0, 11), len(0, 6);
    std::vector<AnnotatedVisit> visits;
    for (int v = 0; v < 30; ++v) {
        std::vector<std::string> concepts;
        for (int k = len(rng); k > 0; --k) concepts.push_back("k" + std::to_string(concept_id(rng)));
        visits.push_back(av("v" + std::to_string(v), concepts));
    }
    const std::size_t min_count = 3;
    const auto c = build_cooc(visits, Section::Interview, min_count, 2);

    // Oracle: visit counts, then every ordered pair of distinct concepts of every visit.
    std::map<std::string, int> vc;
    for (const auto& a : visits) {
        std::set<std::string> u(a.interview_concepts.begin(), a.interview_concepts.end());
        for (const auto& x : u) vc[x]++;
    }
    std::map<std::pair<std::string, std::string>, double> expected;
    for (const auto& a : visits) {
        std::set<std::string> u(a.interview_concepts.begin(), a.interview_concepts.end());
        for (const auto& x : u) {
            for (const auto& y : u) {
                if (x != y && vc[x] >= static_cast<int>(min_count) && vc[y] >= static_cast<int>(min_count)) {
                    expected[{x, y}] += 1.0;
                }
            }
        }
    }
    std::size_t in_vocab = 0;
    for (const auto& [x, n] : vc) in_vocab += n >= static_cast<int>(min_count);
    ASSERT_EQ(c.vocab.size(), in_vocab);
    for (std::size_t i = 0; i < c.vocab.size(); ++i) {
        for (std::size_t j = 0; j < c.vocab.size(); ++j) {
            auto it = expected.find({c.vocab[i], c.vocab[j]});
            EXPECT_EQ(c.at(i, j), it == expected.end() ? 0.0 : it->second);
        }
    }

    auto shuffled = visits;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    for (auto& a : shuffled) std::shuffle(a.interview_concepts.begin(), a.interview_concepts.end(), rng);
    const auto c2 = build_cooc(shuffled, Section::Interview, min_count, 1);
    EXPECT_EQ(c2.vocab, c.vocab);
    ASSERT_EQ(c2.entries.size(), c.entries.size());
    for (std::size_t k = 0; k < c.entries.size(); ++k) {
        EXPECT_EQ(c2.entries[k].i, c.entries[k].i);
        EXPECT_EQ(c2.entries[k].j, c.entries[k].j);
        EXPECT_EQ(c2.entries[k].count, c.entries[k].count);
    }
}

TEST(Cooc, TsvRoundTrip) {
    medseg::testing::TempDir dir;
    const auto c = build_cooc({av("1", {"a b", "c"}), av("2", {"a b", "c", "d"})}, Section::Interview, 1);
    write_cooc(dir / "c.tsv", c);
    EXPECT_TRUE(std::filesystem::exists(dir / "c.vocab"));
    const auto back = load_cooc(dir / "c.tsv");
    EXPECT_EQ(back.vocab, c.vocab);
    ASSERT_EQ(back.entries.size(), c.entries.size());
    for (std::size_t i = 0; i < c.vocab.size(); ++i) {
        for (std::size_t j = 0; j < c.vocab.size(); ++j) EXPECT_EQ(back.at(i, j), c.at(i, j));
    }
}

TEST(Glove, WeightFunction) {
    EXPECT_DOUBLE_EQ(glove_weight(100.0, 100.0, 0.75), 1.0);
    EXPECT_DOUBLE_EQ(glove_weight(500.0, 100.0, 0.75), 1.0);
    EXPECT_DOUBLE_EQ(glove_weight(10.0, 100.0, 0.75), std::pow(0.1, 0.75));
}

TEST(Glove, InitWithinRange) {
    GloveOptions opt;
    opt.dim = 8;
    const auto s = glove_init(5, opt);
    for (double x : s.main) {
        EXPECT_LE(std::abs(x), 0.5 / 8);
    }
    const auto again = glove_init(5, opt);
    EXPECT_EQ(s.main, again.main);
}

TEST(Glove, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(11);
    const auto cooc = random_cooc(10, rng);
    GloveOptions opt;
    opt.dim = 5;
    GloveState s(10, 5);
    std::normal_distribution<double> g(0.0, 0.3);
    for (auto* v : {&s.main, &s.context, &s.main_bias, &s.context_bias}) {
        for (auto& x : *v) x = g(rng);
    }
    const auto grad = glove_gradient(cooc, s, opt);
    const double h = 1e-5;
    auto check = [&](std::vector<double>& param, const std::vector<double>& analytic) {
        for (std::size_t k = 0; k < param.size(); ++k) {
            const double saved = param[k];
            param[k] = saved + h;
            const double up = glove_loss(cooc, s, opt);
            param[k] = saved - h;
            const double down = glove_loss(cooc, s, opt);
            param[k] = saved;
            const double numeric = (up - down) / (2 * h);
            const double scale = std::max({std::abs(numeric), std::abs(analytic[k]), 1e-6});
            EXPECT_LT(std::abs(numeric - analytic[k]) / scale, 1e-4);
        }
    };
    check(s.main, grad.main);
    check(s.context, grad.context);
    check(s.main_bias, grad.main_bias);
    check(s.context_bias, grad.context_bias);
}

TEST(Glove, SinglePairConverges) {
    CoocMatrix c;
    c.vocab = {"a", "b"};
    c.entries = {{0, 1, std::exp(1.0)}};
    GloveOptions opt;
    opt.dim = 4;
    opt.epochs = 3000;
    const auto model = train_glove(c, opt);
    const auto& p = model.params;
    double pred = p.main_bias[0] + p.context_bias[1];
    for (std::size_t d = 0; d < 4; ++d) pred += p.main[d] * p.context[4 + d];
    EXPECT_NEAR(pred, 1.0, 1e-3);
}

TEST(Glove, LossDropsOnTinyCorpus) {
    std::mt19937_64 rng(5);
    const auto cooc = random_cooc(10, rng);
    GloveOptions opt;
    opt.dim = 5;
    opt.epochs = 50;
    const auto model = train_glove(cooc, opt);
    ASSERT_EQ(model.loss_history.size(), 51u);
    for (double l : model.loss_history) {
        EXPECT_TRUE(std::isfinite(l));
        EXPECT_GE(l, 0.0);
    }
    EXPECT_LT(model.loss_history.back(), 0.1 * model.loss_history.front());
    EXPECT_LT(model.loss_history[1], model.loss_history[0]);
}

TEST(Glove, ExportsMainPlusContextAndIsSeeded) {
    std::mt19937_64 rng(9);
    const auto cooc = random_cooc(8, rng);
    GloveOptions opt;
    opt.dim = 3;
    opt.epochs = 5;
    const auto a = train_glove(cooc, opt);
    const auto b = train_glove(cooc, opt);
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t d = 0; d < 3; ++d) {
            EXPECT_DOUBLE_EQ(a.vector(i)[d], a.params.main[i * 3 + d] + a.params.context[i * 3 + d]);
            EXPECT_EQ(a.vector(i)[d], b.vector(i)[d]);
        }
    }
    opt.seed = 43;
    const auto c = train_glove(cooc, opt);
    EXPECT_NE(c.vector(0)[0], a.vector(0)[0]);
}

TEST(Glove, DivergenceIsReported) {
    std::mt19937_64 rng(1);
    const auto cooc = random_cooc(6, rng);
    GloveOptions opt;
    opt.learning_rate = 1e300;
    try {
        train_glove(cooc, opt);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("diverged"), std::string::npos);
    }
}

TEST(EmbeddingFile, RoundTripWithMultiwordIds) {
    medseg::testing::TempDir dir;
    EmbeddingModel m({"left hand", "cough"}, 2, {0.1, -0.2, 1.0 / 3.0, 4.0});
    write_embedding(dir / "e.txt", m);
    const auto text = medseg::testing::read_file(dir / "e.txt");
    EXPECT_EQ(text.substr(0, 4), "2 2\n");
    EXPECT_NE(text.find("left_hand "), std::string::npos);
    const auto back = load_embedding(dir / "e.txt");
    EXPECT_EQ(back.vocab(), m.vocab());
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t d = 0; d < 2; ++d) EXPECT_EQ(back.vector(i)[d], m.vector(i)[d]);
    }
}

TEST(Nearest, DuplicateVectorRanksFirst) {
    EmbeddingModel m({"q", "dup", "other", "orth"}, 2, {1, 1, 1, 1, 1, 0.2, -1, 1});
    const auto nn = nearest_terms(m, "q", 3);
    ASSERT_EQ(nn.size(), 3u);
    EXPECT_EQ(nn[0].concept_id, "dup");
    EXPECT_NEAR(nn[0].cosine, 1.0, 1e-15);
    EXPECT_NEAR(nn[2].cosine, 0.0, 1e-15);
    EXPECT_THROW(nearest_terms(m, "missing", 1), Error);
}

TEST(Nearest, MatchesFullSort) {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> g;
    std::vector<std::string> vocab;
    std::vector<double> vecs;
    for (int i = 0; i < 20; ++i) {
        vocab.push_back("t" + std::to_string(i));
        for (int d = 0; d < 4; ++d) vecs.push_back(g(rng));
    }
    EmbeddingModel m(vocab, 4, vecs);
    for (std::size_t q = 0; q < 20; ++q) {
        std::vector<std::pair<double, std::string>> all;
        for (std::size_t i = 0; i < 20; ++i) {
            if (i == q) continue;
            double dot = 0, na = 0, nb = 0;
            for (int d = 0; d < 4; ++d) {
                dot += vecs[q * 4 + d] * vecs[i * 4 + d];
                na += vecs[q * 4 + d] * vecs[q * 4 + d];
                nb += vecs[i * 4 + d] * vecs[i * 4 + d];
            }
            all.emplace_back(-dot / std::sqrt(na * nb), vocab[i]);
        }
        std::sort(all.begin(), all.end());
        const auto nn = nearest_terms(m, vocab[q], 19);
        for (std::size_t r = 0; r < 19; ++r) {
            EXPECT_EQ(nn[r].concept_id, all[r].second);
            EXPECT_NEAR(nn[r].cosine, -all[r].first, 1e-12);
        }
    }
}

TEST(VisitVectors, MeanAndConcatenation) {
    EmbeddingModel im({"a", "b", "c"}, 2, {1, 0, 0, 1, 5, 5});
    EmbeddingModel em({"x"}, 2, {2, 4});
    medseg::testing::WarningCapture capture;
    const auto vv = embed_visits({av("1", {"a", "b", "a", "unknown"}), av("2", {"c"}, {"x"}), av("3", {"zz"}, {"yy"}),
                                  av("4", {}, {"x"})},
                                 im, em);
    ASSERT_EQ(vv.size(), 3u);
    EXPECT_EQ(vv[0].vector, (std::vector<double>{0.5, 0.5, 0, 0}));
    EXPECT_EQ(vv[1].vector, (std::vector<double>{5, 5, 2, 4}));
    EXPECT_EQ(vv[2].vector, (std::vector<double>{0, 0, 2, 4}));
    EXPECT_TRUE(capture.contains("'3'"));
}

TEST(VisitVectors, PermutationInvariantAndTsvRoundTrip) {
    EmbeddingModel im({"a", "b"}, 3, {0.1, 0.2, 0.3, -1, 2, 0.5});
    EmbeddingModel em({"x"}, 3, {1, 2, 3});
    const auto one = embed_visits({av("1", {"a", "b"})}, im, em);
    const auto two = embed_visits({av("1", {"b", "a", "b"})}, im, em);
    EXPECT_EQ(one[0].vector, two[0].vector);
    EXPECT_EQ(one[0].vector.size(), 6u);
    medseg::testing::TempDir dir;
    write_visit_vectors(dir / "v.tsv", one);
    const auto back = load_visit_vectors(dir / "v.tsv");
    EXPECT_EQ(back[0].visit_id, "1");
    EXPECT_EQ(back[0].vector, one[0].vector);
}
