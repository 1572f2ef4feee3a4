#include <gtest/gtest.h>

#include <sstream>

#include "medseg/corpus.hpp"
#include "support.hpp"

using namespace medseg;
using medseg::testing::TempDir;

namespace {

Lexicon lex(std::initializer_list<std::string> terms) {
    std::vector<LexiconEntry> entries;
    double score = 100.0;
    for (const auto& t : terms) entries.push_back({split_whitespace(t), {"term"}, score--});
    return Lexicon(std::move(entries));
}

Visit visit(std::string id, std::string interview, std::string examination = "", std::string recommendation = "") {
    Visit v;
    v.visit_id = std::move(id);
    v.doctor_id = "d";
    v.specialty = "s";
    v.interview = split_whitespace(interview);
    v.examination = split_whitespace(examination);
    v.recommendation = split_whitespace(recommendation);
    return v;
}

}  // namespace

TEST(LoadCorpus, ParsesAndLowercasesPolishText) {
    std::istringstream in(
        R"({"visit_id":"v1","doctor_id":"d1","specialty":"cardiology","icd10":"I10","interview":"Ból  GŁOWY","examination":"","recommendation":"dieta"})"
        "\n");
    const auto visits = parse_corpus(in);
    ASSERT_EQ(visits.size(), 1u);
    EXPECT_EQ(visits[0].interview, (Tokens{"ból", "głowy"}));
    EXPECT_TRUE(visits[0].examination.empty());
    EXPECT_EQ(visits[0].recommendation, (Tokens{"dieta"}));
    EXPECT_EQ(visits[0].icd10, std::optional<std::string>("I10"));
}

TEST(LoadCorpus, NullIcdAndBlankLines) {
    std::istringstream in(
        "\n"
        R"({"visit_id":"v1","doctor_id":"d1","specialty":"s","icd10":null,"interview":"a","examination":"b","recommendation":"c"})"
        "\n   \n");
    const auto visits = parse_corpus(in);
    ASSERT_EQ(visits.size(), 1u);
    EXPECT_FALSE(visits[0].icd10.has_value());
}

TEST(LoadCorpus, EmptyFileGivesNoVisits) {
    TempDir dir;
    medseg::testing::write_file(dir / "empty.jsonl", "");
    EXPECT_TRUE(load_corpus(dir / "empty.jsonl").empty());
}

TEST(LoadCorpus, DuplicateIdIsNamed) {
    std::istringstream in(
        R"({"visit_id":"v1","doctor_id":"d","specialty":"s","icd10":null,"interview":"","examination":"","recommendation":""})"
        "\n"
        R"({"visit_id":"v1","doctor_id":"d","specialty":"s","icd10":null,"interview":"","examination":"","recommendation":""})"
        "\n");
    try {
        parse_corpus(in);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("duplicate visit_id 'v1'"), std::string::npos);
    }
}

TEST(LoadCorpus, MalformedLineCarriesLineNumber) {
    std::istringstream in(
        R"({"visit_id":"v1","doctor_id":"d","specialty":"s","icd10":null,"interview":"","examination":"","recommendation":""})"
        "\n{not json\n");
    try {
        parse_corpus(in);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
    std::istringstream missing(R"({"visit_id":"v1","doctor_id":"d","specialty":"s"})");
    EXPECT_THROW(parse_corpus(missing), Error);
}

TEST(LoadCorpus, WriteThenLoadRoundTrips) {
    TempDir dir;
    std::vector<Visit> visits = {visit("a", "x y", "z", "w"), visit("b", "", "q", "")};
    visits[0].icd10 = "J20";
    write_corpus(dir / "c.jsonl", visits);
    const auto back = load_corpus(dir / "c.jsonl");
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].interview, visits[0].interview);
    EXPECT_EQ(back[0].icd10, visits[0].icd10);
    EXPECT_FALSE(back[1].icd10);
}

TEST(Utf8, LowercaseAndLength) {
    EXPECT_EQ(to_lower_utf8("ŻÓŁĆ ĄĘŚŹŃ Abc"), "żółć ąęśźń abc");
    EXPECT_EQ(utf8_length("głowy"), 5u);
    EXPECT_EQ(utf8_length(""), 0u);
}

TEST(Lexicon, RejectsInvalidEntries) {
    EXPECT_THROW(Lexicon({{{}, {"x"}, 1.0}}), Error);
    EXPECT_THROW(Lexicon({{{"a"}, {}, 1.0}}), Error);
    EXPECT_THROW(Lexicon({{{"a", "b"}, {"x"}, 1.0}, {{"a", "b"}, {"y"}, 0.5}}), Error);
}

TEST(Lexicon, TsvRoundTrip) {
    TempDir dir;
    Lexicon l({{{"left", "hand"}, {"anatomy", "side"}, 3.5}, {{"pain"}, {"term"}, 1.0}});
    write_lexicon(dir / "l.tsv", l);
    EXPECT_EQ(medseg::testing::read_file(dir / "l.tsv"), "left hand\tanatomy,side\t3.5\npain\tterm\t1\n");
    const auto back = load_lexicon(dir / "l.tsv");
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].labels, (std::set<std::string>{"anatomy", "side"}));
    EXPECT_EQ(back.find("pain"), std::optional<std::size_t>(1));
}

TEST(Annotate, LongestMatchDominates) {
    const auto a = annotate(visit("v", "left hand hurts"), lex({"left hand", "hand", "left"}));
    EXPECT_EQ(a.interview_concepts, (std::vector<std::string>{"left hand"}));
    EXPECT_EQ(a.coverage[0].tokens_covered, 2u);
    EXPECT_EQ(a.coverage[0].tokens_total, 3u);
}

TEST(Annotate, NoContiguousReverseMatch) {
    const auto a = annotate(visit("v", "hand left"), lex({"left hand", "hand", "left"}));
    EXPECT_EQ(a.interview_concepts, (std::vector<std::string>{"hand", "left"}));
}

TEST(Annotate, PrefixWithoutCompletionFallsBackToShorterTerm) {
    const auto a = annotate(visit("v", "left hand side x"), lex({"left hand side effect", "left hand", "side"}));
    EXPECT_EQ(a.interview_concepts, (std::vector<std::string>{"left hand", "side"}));
}

TEST(Annotate, CharacterCoverageCountsCodePoints) {
    const auto a = annotate(visit("v", "ból głowy silny"), lex({"ból głowy"}));
    EXPECT_EQ(a.coverage[0].chars_covered, 8u);
    EXPECT_EQ(a.coverage[0].chars_total, 13u);
}

TEST(Annotate, EmptyLexiconIsRejected) {
    EXPECT_THROW(annotate_all({visit("v", "a")}, Lexicon{}), Error);
}

// Ten hand-written sentences, six terms; expected counts tallied by hand.
TEST(Annotate, HandCountedCoverage) {
    const auto lexicon = lex({"chest pain", "pain", "blood pressure", "fever", "cough", "dry cough"});
    const std::vector<std::pair<std::string, std::size_t>> sentences = {
        {"patient reports chest pain", 2},          // chest pain
        {"dry cough and fever", 3},                 // dry cough, fever
        {"no fever", 1},                            // fever
        {"pain in chest", 1},                       // pain
        {"blood pressure high", 2},                 // blood pressure
        {"cough cough", 2},                         // cough, cough
        {"chest", 0},                               //
        {"high blood pressure and chest pain", 4},  // blood pressure, chest pain
        {"pressure blood", 0},                      //
        {"dry dry cough pain", 3},                  // dry cough, pain
    };
    std::vector<Visit> visits;
    for (std::size_t i = 0; i < sentences.size(); ++i) visits.push_back(visit("v" + std::to_string(i), sentences[i].first));
    const auto annotated = annotate_all(visits, lexicon, 3);
    double ratio_sum = 0.0;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        const auto& cov = annotated[i].coverage[0];
        EXPECT_EQ(cov.tokens_covered, sentences[i].second) << sentences[i].first;
        EXPECT_EQ(cov.tokens_total, split_whitespace(sentences[i].first).size());
        ratio_sum += static_cast<double>(cov.tokens_covered) / cov.tokens_total;
    }
    const auto report = coverage_report(annotated);
    ASSERT_TRUE(report[Section::Interview].token_ratio);
    EXPECT_DOUBLE_EQ(*report[Section::Interview].token_ratio, ratio_sum / 10.0);
    EXPECT_FALSE(report[Section::Examination].token_ratio);  // every examination empty
}

TEST(Annotate, DeterministicAcrossWorkerCounts) {
    std::vector<Visit> visits;
    for (int i = 0; i < 50; ++i) visits.push_back(visit("v" + std::to_string(i), "dry cough and fever chest pain", "pain"));
    const auto lexicon = lex({"chest pain", "pain", "fever", "dry cough"});
    const auto one = annotate_all(visits, lexicon, 1);
    const auto four = annotate_all(visits, lexicon, 4);
    for (std::size_t i = 0; i < visits.size(); ++i) {
        EXPECT_EQ(one[i].interview_concepts, four[i].interview_concepts);
        EXPECT_EQ(one[i].examination_concepts, four[i].examination_concepts);
    }
}

TEST(Annotate, UnigramLexiconCoverageEqualsMembershipCount) {
    const auto lexicon = lex({"a", "c", "e"});
    const auto a = annotate(visit("v", "a b c d e a"), lexicon);
    EXPECT_EQ(a.coverage[0].tokens_covered, 4u);
}

TEST(Coverage, MeanOfRatios) {
    AnnotatedVisit a, b;
    a.coverage[0] = {2, 2, 4, 4};
    b.coverage[0] = {1, 2, 1, 4};
    const auto report = coverage_report({a, b});
    EXPECT_DOUBLE_EQ(*report[Section::Interview].token_ratio, 0.75);
    EXPECT_DOUBLE_EQ(*report[Section::Interview].char_ratio, 0.625);
}

TEST(Coverage, SingleVisitHalf) {
    AnnotatedVisit a;
    a.coverage[0] = {2, 4, 2, 8};
    EXPECT_DOUBLE_EQ(*coverage_report({a})[Section::Interview].token_ratio, 0.5);
}

TEST(Coverage, AllEmptyIsAnError) {
    try {
        coverage_report({AnnotatedVisit{}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_STREQ(e.what(), "no annotatable text");
    }
}

TEST(Filter, RequiresRecommendationAndOneDescription) {
    AnnotatedVisit only_rec, full, no_rec, exam_rec;
    only_rec.visit_id = "a";
    only_rec.recommendation_concepts = {"r"};
    full.visit_id = "b";
    full.interview_concepts = {"i"};
    full.recommendation_concepts = {"r"};
    no_rec.visit_id = "c";
    no_rec.interview_concepts = {"i"};
    exam_rec.visit_id = "d";
    exam_rec.examination_concepts = {"e"};
    exam_rec.recommendation_concepts = {"r"};
    const auto kept = filter_for_clustering({only_rec, full, no_rec, exam_rec});
    ASSERT_EQ(kept.size(), 2u);
    EXPECT_EQ(kept[0].visit_id, "b");
    EXPECT_EQ(kept[1].visit_id, "d");
}

TEST(Annotated, JsonlRoundTrip) {
    TempDir dir;
    std::vector<Visit> visits = {visit("v1", "chest pain now", "fever", "rest"), visit("v2", "", "", "")};
    const auto lexicon = lex({"chest pain", "fever", "rest"});
    const auto annotated = annotate_all(visits, lexicon);
    write_annotated(dir / "a.jsonl", visits, annotated);
    const auto back = load_annotated(dir / "a.jsonl");
    ASSERT_EQ(back.annotated.size(), 2u);
    EXPECT_EQ(back.visits[0].interview, visits[0].interview);
    for (std::size_t i = 0; i < 2; ++i) {
        for (auto s : kAllSections) {
            EXPECT_EQ(back.annotated[i].concepts(s), annotated[i].concepts(s));
            EXPECT_EQ(back.annotated[i].section_coverage(s).tokens_covered,
                      annotated[i].section_coverage(s).tokens_covered);
            EXPECT_EQ(back.annotated[i].section_coverage(s).chars_total,
                      annotated[i].section_coverage(s).chars_total);
        }
    }
}
