#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "medseg/pipeline.hpp"

namespace {

using medseg::PipelineConfig;

struct CliState {
    PipelineConfig cfg;
    std::string corpus, out_dir, stopwords, labels, pairs;
    std::vector<std::string> term_sections = {"interview", "examination", "recommendation"};
    std::string analogy_section = "interview";
    std::string method = "ward";
    std::string k = "auto";
    std::vector<std::size_t> ks = {1, 3, 5};
    std::vector<std::string> groups;
    bool no_compare = false;
    bool no_interpret = false;

    // generate
    medseg::SynthSpec synth;
    std::string synth_output = "synthetic.jsonl";

    // compare / nearest
    std::string compare_a, compare_b;
    std::string query;
    std::size_t top = 10;

    PipelineConfig finish() {
        PipelineConfig c = cfg;
        c.corpus = corpus;
        c.out_dir = out_dir;
        if (!stopwords.empty()) c.stopwords = stopwords;
        if (!labels.empty()) c.labels = labels;
        if (!pairs.empty()) c.pairs = pairs;
        c.term_sections.clear();
        for (const auto& s : term_sections) c.term_sections.push_back(medseg::parse_section(s));
        c.analogy_section = medseg::parse_section(analogy_section);
        c.method = medseg::parse_method(method);
        if (k == "auto") {
            c.k.reset();
        } else {
            const auto v = medseg::parse_int(k, "k");
            if (v < 2) throw medseg::Error("k must be >= 2 or auto");
            c.k = static_cast<std::size_t>(v);
        }
        c.ks = ks;
        c.profile_groups = groups;
        c.compare_methods = !no_compare;
        c.interpret = !no_interpret;
        c.validate();
        return c;
    }
};

void add_global_options(CLI::App& app, CliState& st) {
    auto& c = st.cfg;
    st.out_dir = c.out_dir.string();
    app.add_option("--corpus", st.corpus, "Visit corpus (JSON Lines)");
    app.add_option("--out", st.out_dir, "Directory holding every stage artifact")->capture_default_str();
    app.add_option("--stopwords", st.stopwords, "Stopword list, one token per line");
    app.add_option("--labels", st.labels, "Term label file (TSV term, comma-separated labels)");
    app.add_option("--pairs", st.pairs, "Analogy pairs (TSV category, term_a, term_b)");

    app.add_option("--max-len", c.max_len, "Longest candidate n-gram")->capture_default_str();
    app.add_option("--min-freq", c.min_freq, "Minimum candidate frequency")->capture_default_str();
    app.add_option("--cvalue-threshold", c.cvalue_threshold, "Minimum C-value kept in the lexicon")
        ->capture_default_str();
    app.add_option("--term-sections", st.term_sections, "Sections scanned for term candidates")
        ->delimiter(',')
        ->capture_default_str();

    app.add_option("--min-count", c.min_count, "Minimum visit count for a concept to get an embedding")
        ->capture_default_str();
    app.add_option("--dim", c.dim, "Embedding dimension")->capture_default_str();
    app.add_option("--epochs", c.epochs, "GloVe epochs")->capture_default_str();
    app.add_option("--alpha", c.alpha, "GloVe weighting exponent")->capture_default_str();
    app.add_option("--x-max", c.x_max, "GloVe weighting cutoff")->capture_default_str();
    app.add_option("--lr", c.learning_rate, "GloVe learning rate")->capture_default_str();

    app.add_option("--analogy-section", st.analogy_section, "Embedding used by analogy and nearest")
        ->capture_default_str();
    app.add_option("--ks", st.ks, "Analogy cutoffs")->delimiter(',')->capture_default_str();

    app.add_option("--method", st.method, "Clustering method: ward or kmeans")->capture_default_str();
    app.add_option("--k", st.k, "Number of clusters, or auto for the elbow rule")->capture_default_str();
    app.add_option("--k-min", c.k_min, "Smallest k tried by the elbow rule")->capture_default_str();
    app.add_option("--k-max", c.k_max, "Largest k tried by the elbow rule")->capture_default_str();
    app.add_option("--tau", c.tau, "Elbow rule: relative WCSS drop counted as relevant")->capture_default_str();
    app.add_option("--restarts", c.restarts, "k-means restarts")->capture_default_str();
    app.add_flag("--no-compare", st.no_compare, "Skip clustering with the other method and its ARI");

    app.add_option("--top-n", c.top_n, "Profile terms per cluster (or per group)")->capture_default_str();
    app.add_option("--groups", st.groups, "Lexicon labels used to group profile rows")->delimiter(',');
    app.add_option("--field", c.contingency_field, "Contingency column: doctor_id, specialty or icd10")
        ->capture_default_str();
    app.add_option("--projection", c.projection_method, "Projection method: tsne or pca")->capture_default_str();
    app.add_option("--target", c.projection_target, "Projected items: visits, interview or examination")
        ->capture_default_str();
    app.add_option("--perplexity", c.perplexity, "t-SNE perplexity")->capture_default_str();
    app.add_option("--tsne-iterations", c.tsne_iterations, "t-SNE iterations")->capture_default_str();
    app.add_flag("--no-interpret", st.no_interpret, "pipeline: stop after clustering");

    app.add_option("--seed", c.seed, "Random seed")->capture_default_str();
    app.add_option("--workers", c.workers, "Worker threads (1 is deterministic)")->capture_default_str();
}

void print(const medseg::StageReport& r) {
    for (const auto& line : r.lines) std::cout << line << '\n';
    for (const auto& p : r.written) std::cout << "wrote " << p.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CliState st;
    CLI::App app{"Segmentation of free-text medical visits from concept embeddings"};
    app.set_config("--config", "", "Flat key=value file; command-line flags take precedence");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.require_subcommand(1);
    add_global_options(app, st);

    struct Stage {
        const char* name;
        const char* help;
        medseg::StageReport (*run)(const PipelineConfig&);
    };
    const std::vector<Stage> stages = {
        {"extract-terms", "Rank n-gram candidates by C-value and write the lexicon", medseg::run_extract_terms},
        {"annotate", "Annotate visits by longest match and report coverage", medseg::run_annotate},
        {"cooccur", "Build interview and examination co-occurrence matrices", medseg::run_cooccur},
        {"train", "Train one GloVe model per section", medseg::run_train},
        {"analogy", "Evaluate analogy questions and synonym pairs", medseg::run_analogy},
        {"embed-visits", "Average concept vectors into visit vectors", medseg::run_embed_visits},
        {"cluster", "Cluster visit vectors and write assignments and stats", medseg::run_cluster},
        {"elbow", "Write the WCSS curve and the elbow choice of k", medseg::run_elbow},
        {"profile", "Recommendation term profiles per cluster", medseg::run_profile},
        {"contingency", "Cluster x metadata contingency table", medseg::run_contingency},
        {"ca", "Correspondence analysis of the contingency table", medseg::run_ca},
        {"project", "2-D projection (t-SNE or PCA) as TSV and SVG", medseg::run_project},
        {"pipeline", "Run every stage from term extraction to interpretation", medseg::run_pipeline},
    };
    std::vector<std::pair<CLI::App*, const Stage*>> stage_apps;
    for (const auto& s : stages) stage_apps.emplace_back(app.add_subcommand(s.name, s.help)->fallthrough(), &s);

    auto* generate = app.add_subcommand("generate", "Write a synthetic planted-topic corpus")->fallthrough();
    generate->add_option("--output,-o", st.synth_output, "Corpus path")->capture_default_str();
    generate->add_option("--visits", st.synth.n_visits, "Number of visits")->capture_default_str();
    generate->add_option("--topics", st.synth.n_topics, "Number of planted topics")->capture_default_str();
    generate->add_option("--noise", st.synth.noise, "Chance a concept comes from another topic")
        ->capture_default_str();
    generate->add_option("--doctors-per-topic", st.synth.doctors_per_topic, "Doctors per topic")
        ->capture_default_str();

    auto* compare = app.add_subcommand("compare", "Adjusted Rand index between two assignment files");
    compare->add_option("first", st.compare_a, "Assignments TSV")->required();
    compare->add_option("second", st.compare_b, "Assignments TSV")->required();

    auto* nearest = app.add_subcommand("nearest", "Nearest concepts by cosine")->fallthrough();
    nearest->add_option("term", st.query, "Concept id (tokens joined by spaces)")->required();
    nearest->add_option("--top", st.top, "Number of neighbours")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (generate->parsed()) {
            st.synth.seed = st.cfg.seed;
            print(medseg::run_generate(st.synth, st.synth_output));
            return 0;
        }
        if (compare->parsed()) {
            const double ari = medseg::compare_assignments(st.compare_a, st.compare_b);
            std::cout << "ARI " << medseg::format_fixed(ari, 6) << '\n';
            return 0;
        }
        const auto cfg = st.finish();
        if (nearest->parsed()) {
            print(medseg::run_nearest(cfg, st.query, st.top));
            return 0;
        }
        for (const auto& [sub, stage] : stage_apps) {
            if (sub->parsed()) {
                print(stage->run(cfg));
                return 0;
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
