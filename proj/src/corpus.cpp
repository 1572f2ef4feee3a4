#include "medseg/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <utility>

#include <json.hpp>

namespace medseg {

using ordered_json = nlohmann::ordered_json;

std::string_view section_name(Section s) {
    switch (s) {
        case Section::Interview: return "interview";
        case Section::Examination: return "examination";
        case Section::Recommendation: return "recommendation";
    }
    return "?";
}

Section parse_section(std::string_view name) {
    for (Section s : kAllSections) {
        if (section_name(s) == name) return s;
    }
    throw Error("unknown section '" + std::string(name) +
                "' (expected interview, examination or recommendation)");
}

const Tokens& Visit::section(Section s) const {
    switch (s) {
        case Section::Interview: return interview;
        case Section::Examination: return examination;
        case Section::Recommendation: return recommendation;
    }
    return interview;
}

namespace {

char32_t lower_code_point(char32_t c) {
    if (c < 0x80) return (c >= 'A' && c <= 'Z') ? c + 32 : c;
    if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 0x20;
    if ((c >= 0x100 && c <= 0x12F) || (c >= 0x132 && c <= 0x137) ||
        (c >= 0x14A && c <= 0x177)) {
        return (c % 2 == 0) ? c + 1 : c;
    }
    if ((c >= 0x139 && c <= 0x148) || (c >= 0x179 && c <= 0x17E)) {
        return (c % 2 == 1) ? c + 1 : c;
    }
    if (c == 0x178) return 0xFF;
    return c;
}

void append_utf8(std::string& out, char32_t c) {
    if (c < 0x80) {
        out += static_cast<char>(c);
    } else if (c < 0x800) {
        out += static_cast<char>(0xC0 | (c >> 6));
        out += static_cast<char>(0x80 | (c & 0x3F));
    } else if (c < 0x10000) {
        out += static_cast<char>(0xE0 | (c >> 12));
        out += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (c & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (c >> 18));
        out += static_cast<char>(0x80 | ((c >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (c & 0x3F));
    }
}

}  // namespace

std::string to_lower_utf8(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        const auto b = static_cast<unsigned char>(text[i]);
        std::size_t len = b < 0x80 ? 1 : (b >> 5) == 0x6 ? 2 : (b >> 4) == 0xE ? 3 : (b >> 3) == 0x1E ? 4 : 0;
        if (len == 0 || i + len > text.size()) {
            // Invalid byte: copy through untouched.
            out += text[i++];
            continue;
        }
        char32_t c = len == 1 ? b : len == 2 ? (b & 0x1F) : len == 3 ? (b & 0x0F) : (b & 0x07);
        for (std::size_t k = 1; k < len; ++k) {
            c = (c << 6) | (static_cast<unsigned char>(text[i + k]) & 0x3F);
        }
        append_utf8(out, lower_code_point(c));
        i += len;
    }
    return out;
}

std::size_t utf8_length(std::string_view text) {
    return static_cast<std::size_t>(std::count_if(text.begin(), text.end(), [](char ch) {
        return (static_cast<unsigned char>(ch) & 0xC0) != 0x80;
    }));
}

namespace {

Tokens tokenize(const std::string& text) {
    Tokens tokens = split_whitespace(text);
    for (auto& t : tokens) t = to_lower_utf8(t);
    return tokens;
}

std::string required_string(const ordered_json& obj, const char* field, std::size_t line) {
    auto it = obj.find(field);
    if (it == obj.end() || !it->is_string()) {
        throw Error("line " + std::to_string(line) + ": field '" + field +
                    "' missing or not a string");
    }
    return it->get<std::string>();
}

Visit parse_visit_object(const ordered_json& obj, std::size_t line) {
    if (!obj.is_object()) throw Error("line " + std::to_string(line) + ": expected a JSON object");
    Visit v;
    v.visit_id = required_string(obj, "visit_id", line);
    if (v.visit_id.empty()) throw Error("line " + std::to_string(line) + ": empty visit_id");
    v.doctor_id = required_string(obj, "doctor_id", line);
    v.specialty = required_string(obj, "specialty", line);
    auto icd = obj.find("icd10");
    if (icd != obj.end() && !icd->is_null()) {
        if (!icd->is_string()) {
            throw Error("line " + std::to_string(line) + ": field 'icd10' must be a string or null");
        }
        v.icd10 = icd->get<std::string>();
    }
    v.interview = tokenize(required_string(obj, "interview", line));
    v.examination = tokenize(required_string(obj, "examination", line));
    v.recommendation = tokenize(required_string(obj, "recommendation", line));
    return v;
}

ordered_json visit_to_json(const Visit& v) {
    ordered_json obj;
    obj["visit_id"] = v.visit_id;
    obj["doctor_id"] = v.doctor_id;
    obj["specialty"] = v.specialty;
    obj["icd10"] = v.icd10 ? ordered_json(*v.icd10) : ordered_json(nullptr);
    obj["interview"] = join(v.interview);
    obj["examination"] = join(v.examination);
    obj["recommendation"] = join(v.recommendation);
    return obj;
}

template <typename Fn>
void for_each_line(std::istream& in, Fn&& fn) {
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        fn(line, number);
    }
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    return out;
}

}  // namespace

std::vector<Visit> parse_corpus(std::istream& in) {
    std::vector<Visit> visits;
    std::set<std::string> seen;
    for_each_line(in, [&](const std::string& line, std::size_t number) {
        ordered_json obj;
        try {
            obj = ordered_json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error("line " + std::to_string(number) + ": malformed JSON: " + e.what());
        }
        Visit v = parse_visit_object(obj, number);
        if (!seen.insert(v.visit_id).second) {
            throw Error("line " + std::to_string(number) + ": duplicate visit_id '" + v.visit_id +
                        "'");
        }
        visits.push_back(std::move(v));
    });
    return visits;
}

std::vector<Visit> load_corpus(const std::filesystem::path& path) {
    auto in = open_input(path);
    try {
        return parse_corpus(in);
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

void write_corpus(const std::filesystem::path& path, const std::vector<Visit>& visits) {
    auto out = open_output(path);
    for (const auto& v : visits) out << visit_to_json(v).dump() << '\n';
}

// --- Lexicon -----------------------------------------------------------------

Lexicon::Lexicon(std::vector<LexiconEntry> entries) : entries_(std::move(entries)) {
    trie_.emplace_back();
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& e = entries_[i];
        if (e.term.empty()) throw Error("lexicon entry " + std::to_string(i) + " has no tokens");
        if (e.labels.empty()) throw Error("lexicon term '" + e.id() + "' has no labels");
        if (!by_id_.emplace(e.id(), i).second) {
            throw Error("duplicate lexicon term '" + e.id() + "'");
        }
        std::size_t node = 0;
        for (const auto& tok : e.term) {
            auto it = trie_[node].children.find(tok);
            if (it == trie_[node].children.end()) {
                trie_.emplace_back();
                it = trie_[node].children.emplace(tok, trie_.size() - 1).first;
            }
            node = it->second;
        }
        trie_[node].entry = i;
    }
}

std::optional<std::size_t> Lexicon::find(const std::string& concept_id) const {
    auto it = by_id_.find(concept_id);
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

std::optional<std::pair<std::size_t, std::size_t>> Lexicon::longest_match(const Tokens& tokens,
                                                                         std::size_t pos) const {
    if (trie_.empty()) return std::nullopt;
    std::optional<std::pair<std::size_t, std::size_t>> best;
    std::size_t node = 0;
    for (std::size_t i = pos; i < tokens.size(); ++i) {
        auto it = trie_[node].children.find(tokens[i]);
        if (it == trie_[node].children.end()) break;
        node = it->second;
        if (trie_[node].entry) best = std::make_pair(i - pos + 1, *trie_[node].entry);
    }
    return best;
}

Lexicon load_lexicon(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::vector<LexiconEntry> entries;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split(line, '\t');
        if (fields.size() != 3) {
            throw Error(path.string() + ":" + std::to_string(number) +
                        ": expected 3 tab-separated columns (term, labels, score)");
        }
        LexiconEntry e;
        e.term = split_whitespace(fields[0]);
        for (auto& label : split(fields[1], ',')) {
            if (!label.empty()) e.labels.insert(label);
        }
        e.score = parse_double(fields[2], "lexicon score");
        entries.push_back(std::move(e));
    }
    try {
        return Lexicon(std::move(entries));
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

void write_lexicon(const std::filesystem::path& path, const Lexicon& lexicon) {
    auto out = open_output(path);
    for (const auto& e : lexicon.entries()) {
        std::string labels;
        for (const auto& l : e.labels) {
            if (!labels.empty()) labels += ',';
            labels += l;
        }
        out << e.id() << '\t' << labels << '\t' << format_double(e.score) << '\n';
    }
}

// --- Annotation ----------------------------------------------------------------

const std::vector<std::string>& AnnotatedVisit::concepts(Section s) const {
    switch (s) {
        case Section::Interview: return interview_concepts;
        case Section::Examination: return examination_concepts;
        case Section::Recommendation: return recommendation_concepts;
    }
    return interview_concepts;
}

std::vector<std::string>& AnnotatedVisit::concepts(Section s) {
    return const_cast<std::vector<std::string>&>(std::as_const(*this).concepts(s));
}

AnnotatedVisit annotate(const Visit& visit, const Lexicon& lexicon) {
    AnnotatedVisit out;
    out.visit_id = visit.visit_id;
    for (Section s : kAllSections) {
        const Tokens& tokens = visit.section(s);
        auto& concepts = out.concepts(s);
        auto& cov = out.coverage[static_cast<std::size_t>(s)];
        cov.tokens_total = tokens.size();
        for (const auto& t : tokens) cov.chars_total += utf8_length(t);
        std::size_t pos = 0;
        while (pos < tokens.size()) {
            auto match = lexicon.longest_match(tokens, pos);
            if (!match) {
                ++pos;
                continue;
            }
            const auto [len, entry] = *match;
            concepts.push_back(lexicon[entry].id());
            cov.tokens_covered += len;
            for (std::size_t k = pos; k < pos + len; ++k) cov.chars_covered += utf8_length(tokens[k]);
            pos += len;
        }
    }
    return out;
}

std::vector<AnnotatedVisit> annotate_all(const std::vector<Visit>& visits, const Lexicon& lexicon,
                                         int workers) {
    if (lexicon.empty()) throw Error("cannot annotate with an empty lexicon");
    std::vector<AnnotatedVisit> out(visits.size());
    parallel_for(visits.size(), workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) out[i] = annotate(visits[i], lexicon);
    });
    return out;
}

CoverageReport coverage_report(const std::vector<AnnotatedVisit>& annotated) {
    if (annotated.empty()) throw Error("coverage report needs at least one visit");
    CoverageReport report;
    bool any = false;
    for (Section s : kAllSections) {
        double token_sum = 0.0;
        double char_sum = 0.0;
        std::size_t n = 0;
        for (const auto& a : annotated) {
            const auto& cov = a.section_coverage(s);
            if (cov.tokens_total == 0) continue;
            token_sum += static_cast<double>(cov.tokens_covered) / cov.tokens_total;
            char_sum += cov.chars_total ? static_cast<double>(cov.chars_covered) / cov.chars_total : 0.0;
            ++n;
        }
        auto& mean = report.sections[static_cast<std::size_t>(s)];
        mean.visits = n;
        if (n > 0) {
            any = true;
            mean.token_ratio = token_sum / n;
            mean.char_ratio = char_sum / n;
        }
    }
    if (!any) throw Error("no annotatable text");
    return report;
}

std::vector<AnnotatedVisit> filter_for_clustering(const std::vector<AnnotatedVisit>& annotated) {
    std::vector<AnnotatedVisit> out;
    for (const auto& a : annotated) {
        if (a.recommendation_concepts.empty()) continue;
        if (a.interview_concepts.empty() && a.examination_concepts.empty()) continue;
        out.push_back(a);
    }
    return out;
}

void write_annotated(const std::filesystem::path& path, const std::vector<Visit>& visits,
                     const std::vector<AnnotatedVisit>& annotated) {
    if (visits.size() != annotated.size()) throw Error("visit/annotation count mismatch");
    auto out = open_output(path);
    for (std::size_t i = 0; i < visits.size(); ++i) {
        auto obj = visit_to_json(visits[i]);
        const auto& a = annotated[i];
        ordered_json coverage;
        for (Section s : kAllSections) {
            obj[std::string(section_name(s)) + "_concepts"] = a.concepts(s);
            const auto& c = a.section_coverage(s);
            coverage[std::string(section_name(s))] = {{"tokens_covered", c.tokens_covered},
                                                      {"tokens_total", c.tokens_total},
                                                      {"chars_covered", c.chars_covered},
                                                      {"chars_total", c.chars_total}};
        }
        obj["coverage"] = std::move(coverage);
        out << obj.dump() << '\n';
    }
}

AnnotatedCorpus load_annotated(const std::filesystem::path& path) {
    auto in = open_input(path);
    AnnotatedCorpus corpus;
    for_each_line(in, [&](const std::string& line, std::size_t number) {
        ordered_json obj;
        try {
            obj = ordered_json::parse(line);
            corpus.visits.push_back(parse_visit_object(obj, number));
            AnnotatedVisit a;
            a.visit_id = corpus.visits.back().visit_id;
            for (Section s : kAllSections) {
                const std::string name(section_name(s));
                a.concepts(s) = obj.at(name + "_concepts").get<std::vector<std::string>>();
                const auto& c = obj.at("coverage").at(name);
                auto& cov = a.coverage[static_cast<std::size_t>(s)];
                cov.tokens_covered = c.at("tokens_covered").get<std::size_t>();
                cov.tokens_total = c.at("tokens_total").get<std::size_t>();
                cov.chars_covered = c.at("chars_covered").get<std::size_t>();
                cov.chars_total = c.at("chars_total").get<std::size_t>();
            }
            corpus.annotated.push_back(std::move(a));
        } catch (const nlohmann::json::exception& e) {
            throw Error(path.string() + ":" + std::to_string(number) +
                        ": malformed annotated record: " + e.what());
        }
    });
    return corpus;
}

}  // namespace medseg
