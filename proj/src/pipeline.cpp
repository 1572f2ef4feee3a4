#include "medseg/pipeline.hpp"

#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

namespace medseg {

namespace fs = std::filesystem;

void PipelineConfig::validate() const {
    if (max_len < 1) throw Error("max_len must be >= 1");
    if (min_freq < 1) throw Error("min_freq must be >= 1");
    if (!(cvalue_threshold >= 0.0)) throw Error("cvalue_threshold must be >= 0");
    if (term_sections.empty()) throw Error("term_sections must name at least one section");
    if (min_count < 1) throw Error("min_count must be >= 1");
    if (dim < 1) throw Error("dim must be >= 1");
    if (epochs < 1) throw Error("epochs must be >= 1");
    if (!(alpha > 0.0)) throw Error("alpha must be > 0");
    if (!(x_max > 0.0)) throw Error("x_max must be > 0");
    if (!(learning_rate > 0.0)) throw Error("learning rate must be > 0");
    if (ks.empty()) throw Error("ks must list at least one k");
    for (auto k : ks) {
        if (k < 1) throw Error("every analogy k must be >= 1");
    }
    if (k && *k < 2) throw Error("k must be >= 2 (or auto)");
    if (k_min < 2 || k_max < k_min) throw Error("k range must satisfy 2 <= k_min <= k_max");
    if (!(tau > 0.0 && tau < 1.0)) throw Error("tau must lie in (0, 1)");
    if (restarts < 1) throw Error("restarts must be >= 1");
    if (top_n < 1) throw Error("top_n must be >= 1");
    if (contingency_field != "doctor_id" && contingency_field != "specialty" && contingency_field != "icd10") {
        throw Error("field must be doctor_id, specialty or icd10");
    }
    if (projection_method != "tsne" && projection_method != "pca") {
        throw Error("projection method must be tsne or pca");
    }
    if (projection_target != "visits" && projection_target != "interview" && projection_target != "examination") {
        throw Error("projection target must be visits, interview or examination");
    }
    if (!(perplexity > 0.0)) throw Error("perplexity must be > 0");
    if (tsne_iterations < 1) throw Error("tsne iterations must be >= 1");
    if (workers < 1) throw Error("workers must be >= 1");
}

namespace {

void require(const fs::path& artifact, std::string_view stage) {
    if (!fs::exists(artifact)) {
        throw Error("missing " + artifact.string() + " (produced by the '" + std::string(stage) + "' stage)");
    }
}

void require_corpus(const PipelineConfig& cfg) {
    if (cfg.corpus.empty()) throw Error("no corpus given (--corpus)");
    if (!fs::exists(cfg.corpus)) throw Error("corpus not found: " + cfg.corpus.string());
}

Artifacts prepare(const PipelineConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.out_dir);
    return Artifacts{cfg.out_dir};
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    return out;
}

std::string percent(const std::optional<double>& ratio) {
    return ratio ? format_fixed(100.0 * *ratio, 2) : "NA";
}

const std::vector<AnnotatedVisit> clustering_visits(const Artifacts& a) {
    require(a.annotated(), "annotate");
    auto kept = filter_for_clustering(load_annotated(a.annotated()).annotated);
    if (kept.empty()) throw Error("no visit has both recommendation and interview/examination concepts");
    return kept;
}

EmbeddingModel section_model(const Artifacts& a, Section s) {
    require(a.embedding(s), "train");
    return load_embedding(a.embedding(s));
}

Clustering run_method(ClusterMethod m, const PointSet& points, std::size_t k, const PipelineConfig& cfg,
                      Dendrogram* dendrogram) {
    if (m == ClusterMethod::KMeans) {
        return kmeans(points, KMeansOptions{k, cfg.restarts, cfg.seed, 300, cfg.workers});
    }
    auto [clustering, tree] = ward(points, k);
    if (dendrogram) *dendrogram = std::move(tree);
    return clustering;
}

ElbowResult run_elbow_curve(const PointSet& points, const PipelineConfig& cfg) {
    ElbowOptions opt;
    opt.k_min = cfg.k_min;
    opt.k_max = std::min(cfg.k_max, points.size());
    if (opt.k_max < cfg.k_max) {
        warn("k range clipped to " + std::to_string(opt.k_min) + ".." + std::to_string(opt.k_max) + " (only " +
             std::to_string(points.size()) + " visits)");
    }
    opt.method = cfg.method;
    opt.tau = cfg.tau;
    opt.kmeans = KMeansOptions{2, cfg.restarts, cfg.seed, 300, cfg.workers};
    return elbow_k(points, opt);
}

void write_elbow(const fs::path& path, const ElbowResult& elbow) {
    auto out = open_out(path);
    out << "k\twcss\n";
    for (std::size_t i = 0; i < elbow.curve.ks.size(); ++i) {
        out << elbow.curve.ks[i] << '\t' << format_double(elbow.curve.wcss[i]) << '\n';
    }
}

nlohmann::ordered_json clustering_json(const Clustering& c) {
    nlohmann::ordered_json j;
    j["method"] = std::string(method_name(c.method));
    j["k"] = c.k;
    j["sizes"] = c.sizes;
    j["wcss"] = c.wcss;
    if (c.seed) j["seed"] = *c.seed; else j["seed"] = nullptr;
    return j;
}

std::map<std::string, std::string> metadata_field(const std::vector<Visit>& visits, const std::string& field) {
    std::map<std::string, std::string> out;
    for (const auto& v : visits) {
        if (field == "doctor_id") {
            if (!v.doctor_id.empty()) out[v.visit_id] = v.doctor_id;
        } else if (field == "specialty") {
            if (!v.specialty.empty()) out[v.visit_id] = v.specialty;
        } else if (v.icd10) {
            out[v.visit_id] = *v.icd10;
        }
    }
    return out;
}

std::string first_label(const LexiconEntry& e) { return e.labels.empty() ? "" : *e.labels.begin(); }

}  // namespace

StageReport run_generate(const SynthSpec& spec, const fs::path& output) {
    const auto visits = generate_synthetic(spec);
    if (output.has_parent_path()) fs::create_directories(output.parent_path());
    write_corpus(output, visits);
    return {{output}, {"generated " + std::to_string(visits.size()) + " visits over " +
                       std::to_string(spec.n_topics) + " topics"}};
}

StageReport run_extract_terms(const PipelineConfig& cfg) {
    const auto a = prepare(cfg);
    require_corpus(cfg);
    const auto visits = load_corpus(cfg.corpus);
    CandidateOptions opt;
    opt.max_len = cfg.max_len;
    opt.min_freq = cfg.min_freq;
    opt.sections = cfg.term_sections;
    opt.workers = cfg.workers;
    if (cfg.stopwords) opt.stopwords = load_stopwords(*cfg.stopwords);
    std::optional<LabelMap> labels;
    if (cfg.labels) labels = load_label_file(*cfg.labels);
    const auto candidates = extract_candidates(visits, opt);
    const auto lexicon = build_lexicon(candidates, cfg.cvalue_threshold, labels);
    if (lexicon.empty()) warn("no candidate reached the C-value threshold; the lexicon is empty");
    write_lexicon(a.lexicon(), lexicon);
    return {{a.lexicon()},
            {std::to_string(candidates.size()) + " candidates, " + std::to_string(lexicon.size()) + " terms kept"}};
}

StageReport run_annotate(const PipelineConfig& cfg) {
    const auto a = prepare(cfg);
    require_corpus(cfg);
    require(a.lexicon(), "extract-terms");
    const auto visits = load_corpus(cfg.corpus);
    const auto lexicon = load_lexicon(a.lexicon());
    const auto annotated = annotate_all(visits, lexicon, cfg.workers);
    write_annotated(a.annotated(), visits, annotated);
    const auto report = coverage_report(annotated);
    StageReport r{{a.annotated(), a.coverage()}, {}};
    auto out = open_out(a.coverage());
    out << "section\tvisits\ttoken_coverage_pct\tchar_coverage_pct\n";
    for (auto s : kAllSections) {
        const auto& m = report[s];
        out << section_name(s) << '\t' << m.visits << '\t' << percent(m.token_ratio) << '\t'
            << percent(m.char_ratio) << '\n';
        r.lines.push_back(std::string(section_name(s)) + ": " + percent(m.token_ratio) + "% of tokens, " +
                          percent(m.char_ratio) + "% of characters covered");
    }
    const auto kept = filter_for_clustering(annotated);
    r.lines.push_back(std::to_string(kept.size()) + " of " + std::to_string(annotated.size()) +
                      " visits usable for clustering");
    return r;
}

StageReport run_cooccur(const PipelineConfig& cfg) {
    const auto a = prepare(cfg);
    const auto kept = clustering_visits(a);
    StageReport r;
    for (auto s : {Section::Interview, Section::Examination}) {
        const auto cooc = build_cooc(kept, s, cfg.min_count, cfg.workers);
        write_cooc(a.cooc(s), cooc);
        r.written.push_back(a.cooc(s));
        r.written.push_back(cooc_vocab_path(a.cooc(s)));
        r.lines.push_back(std::string(section_name(s)) + ": " + std::to_string(cooc.vocab.size()) +
                          " concepts, " + std::to_string(cooc.entries.size()) + " nonzero pairs");
    }
    return r;
}

StageReport run_train(const PipelineConfig& cfg) {
    const auto a = prepare(cfg);
    StageReport r;
    for (auto s : {Section::Interview, Section::Examination}) {
        require(a.cooc(s), "cooccur");
        const auto cooc = load_cooc(a.cooc(s));
        GloveOptions opt;
        opt.dim = cfg.dim;
        opt.epochs = cfg.epochs;
        opt.alpha = cfg.alpha;
        opt.x_max = cfg.x_max;
        opt.learning_rate = cfg.learning_rate;
        opt.seed = cfg.seed;
        opt.workers = cfg.workers;
        const auto model = train_glove(cooc, opt);
        write_embedding(a.embedding(s), model);
        auto out = open_out(a.loss(s));
        out << "epoch\tloss\n";
        for (std::size_t e = 0; e < model.loss_history.size(); ++e) {
            out << e << '\t' << format_double(model.loss_history[e]) << '\n';
        }
        r.written.push_back(a.embedding(s));
        r.written.push_back(a.loss(s));
        r.lines.push_back(std::string(section_name(s)) + ": loss " + format_fixed(model.loss_history.front(), 4) +
                          " -> " + format_fixed(model.loss_history.back(), 4));
    }
    return r;
}

StageReport run_analogy(const PipelineConfig& cfg) {
    const auto a = prepare(cfg);
    if (!cfg.pairs) throw Error("the analogy stage needs a pairs file (--pairs)");
    const auto model = section_model(a, cfg.analogy_section);
    const auto pairs = load_pairs(*cfg.pairs);
    const auto report = evaluate(model, pairs.categories, cfg.ks, pairs.synonyms);
    write_analogy_report(a.analogy(), report);
    StageReport r{{a.analogy()}, {}};
    for (const auto& c : report.categories) {
        std::string line = c.name + " (" + std::to_string(c.questions - c.skipped) + "/" +
                           std::to_string(c.questions) + " answered):";
        for (std::size_t i = 0; i < c.accuracy.size(); ++i) {
            line += " @" + std::to_string(report.ks[i]) + "=" + format_fixed(c.accuracy[i], 3);
        }
        r.lines.push_back(line);
    }
    return r;
}

StageReport run_embed_visits(const PipelineConfig& cfg) {
    const auto a = prepare(cfg);
    const auto kept = clustering_visits(a);
    const auto vectors =
        embed_visits(kept, section_model(a, Section::Interview), section_model(a, Section::Examination));
    write_visit_vectors(a.visit_vectors(), vectors);
    return {{a.visit_vectors()}, {std::to_string(vectors.size()) + " visit vectors"}};
}

StageReport run_elbow(const PipelineConfig& cfg) {
    const auto a = prepare(cfg);
    require(a.visit_vectors(), "embed-visits");
    const auto points = PointSet::from(load_visit_vectors(a.visit_vectors()));
    const auto elbow = run_elbow_curve(points, cfg);
    write_elbow(a.elbow(), elbow);
    return {{a.elbow()},
            {"elbow chooses k = " + std::to_string(elbow.choice.k) +
             (elbow.choice.fallback ? " (largest second difference)" : "")}};
}

StageReport run_cluster(const PipelineConfig& cfg) {
    const auto a = prepare(cfg);
    require(a.visit_vectors(), "embed-visits");
    const auto points = PointSet::from(load_visit_vectors(a.visit_vectors()));
    StageReport r;

    nlohmann::ordered_json stats;
    std::size_t k = 0;
    nlohmann::ordered_json selection;
    if (cfg.k) {
        k = *cfg.k;
        selection["mode"] = "fixed";
    } else {
        const auto elbow = run_elbow_curve(points, cfg);
        write_elbow(a.elbow(), elbow);
        r.written.push_back(a.elbow());
        k = elbow.choice.k;
        selection["mode"] = "elbow";
        selection["method"] = std::string(method_name(cfg.method));
        selection["tau"] = cfg.tau;
        selection["k_min"] = elbow.curve.ks.front();
        selection["k_max"] = elbow.curve.ks.back();
        selection["fallback"] = elbow.choice.fallback;
        selection["degenerate"] = elbow.choice.degenerate;
        nlohmann::ordered_json curve = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < elbow.curve.ks.size(); ++i) {
            curve.push_back({{"k", elbow.curve.ks[i]}, {"wcss", elbow.curve.wcss[i]}});
        }
        selection["curve"] = curve;
    }
    selection["chosen_k"] = k;

    Dendrogram tree;
    const auto primary = run_method(cfg.method, points, k, cfg, &tree);
    write_assignments(a.assignments(), primary);
    r.written.push_back(a.assignments());
    if (cfg.method == ClusterMethod::Ward) {
        write_dendrogram(a.dendrogram(), tree);
        r.written.push_back(a.dendrogram());
    }
    stats = clustering_json(primary);
    stats["n_visits"] = points.size();
    stats["k_selection"] = selection;
    r.lines.push_back(std::string(method_name(primary.method)) + " with k = " + std::to_string(k) +
                      ", WCSS " + format_fixed(primary.wcss, 4));

    if (cfg.compare_methods) {
        const auto other_method = cfg.method == ClusterMethod::Ward ? ClusterMethod::KMeans : ClusterMethod::Ward;
        const auto other = run_method(other_method, points, k, cfg, nullptr);
        write_assignments(a.assignments(other_method), other);
        r.written.push_back(a.assignments(other_method));
        const double ari = adjusted_rand(primary, other);
        auto cmp = clustering_json(other);
        cmp["ari"] = ari;
        stats["comparison"] = cmp;
        r.lines.push_back("ARI(" + std::string(method_name(primary.method)) + ", " +
                          std::string(method_name(other_method)) + ") = " + format_fixed(ari, 4));
    }

    auto out = open_out(a.stats());
    out << stats.dump(2) << '\n';
    r.written.push_back(a.stats());
    return r;
}

StageReport run_profile(const PipelineConfig& cfg) {
    const auto a = prepare(cfg);
    require(a.assignments(), "cluster");
    const auto clustering = load_assignments(a.assignments());
    const auto kept = clustering_visits(a);
    std::vector<AnnotatedVisit> clustered;
    for (const auto& v : kept) {
        if (clustering.label_of(v.visit_id)) clustered.push_back(v);
    }
    ProfileOptions opt;
    opt.top_n = cfg.top_n;
    opt.groups = cfg.profile_groups;
    Lexicon lexicon;
    if (!opt.groups.empty()) {
        require(a.lexicon(), "extract-terms");
        lexicon = load_lexicon(a.lexicon());
        opt.lexicon = &lexicon;
    }
    const auto profile = cluster_profile(clustering, clustered, opt);
    write_profile(a.profile(), profile);
    return {{a.profile()},
            {std::to_string(profile.clusters.size()) + " cluster profiles, " +
             std::to_string(profile.filtered.size()) + " common terms filtered"}};
}

StageReport run_contingency(const PipelineConfig& cfg) {
    const auto a = prepare(cfg);
    require(a.assignments(), "cluster");
    require(a.annotated(), "annotate");
    const auto clustering = load_assignments(a.assignments());
    const auto corpus = load_annotated(a.annotated());
    const auto table = contingency(clustering, metadata_field(corpus.visits, cfg.contingency_field));
    write_contingency(a.contingency(cfg.contingency_field), table);
    return {{a.contingency(cfg.contingency_field)},
            {std::to_string(table.rows.size()) + " x " + std::to_string(table.cols.size()) + " table over " +
             std::to_string(table.total()) + " visits"}};
}

StageReport run_ca(const PipelineConfig& cfg) {
    const auto a = prepare(cfg);
    const auto& field = cfg.contingency_field;
    require(a.contingency(field), "contingency");
    const auto ca = correspondence_analysis(load_contingency(a.contingency(field)));
    write_correspondence(a.ca(field), ca);

    Projection2D biplot;
    for (std::size_t i = 0; i < ca.row_labels.size(); ++i) {
        biplot.ids.push_back("cluster " + ca.row_labels[i]);
        biplot.coords.push_back({ca.row_coords(i, 0), ca.row_coords(i, 1)});
        biplot.color_key.push_back("cluster");
    }
    for (std::size_t j = 0; j < ca.col_labels.size(); ++j) {
        biplot.ids.push_back(ca.col_labels[j]);
        biplot.coords.push_back({ca.col_coords(j, 0), ca.col_coords(j, 1)});
        biplot.color_key.push_back(field);
    }
    SvgOptions svg;
    svg.title = "Correspondence analysis: clusters x " + field;
    const double t = ca.total_inertia > 0.0 ? ca.total_inertia : 1.0;
    auto share = [&](std::size_t d) {
        return d < ca.inertias.size() ? format_fixed(100.0 * ca.inertias[d] / t, 1) + "%" : std::string("0%");
    };
    svg.x_label = "dim 1 (" + share(0) + ")";
    svg.y_label = "dim 2 (" + share(1) + ")";
    svg.label_points = true;
    emit_svg(biplot, a.ca_svg(field), svg);
    return {{a.ca(field), a.ca_svg(field)}, {"total inertia " + format_fixed(ca.total_inertia, 6)}};
}

StageReport run_project(const PipelineConfig& cfg) {
    const auto a = prepare(cfg);
    PointSet points;
    std::vector<std::string> colors;
    std::string title;
    if (cfg.projection_target == "visits") {
        require(a.visit_vectors(), "embed-visits");
        points = PointSet::from(load_visit_vectors(a.visit_vectors()));
        if (fs::exists(a.assignments())) {
            const auto clustering = load_assignments(a.assignments());
            for (const auto& id : points.ids) {
                const auto label = clustering.label_of(id);
                colors.push_back(label ? "cluster " + std::to_string(*label) : std::string(kMissingLabel));
            }
        }
        title = "Visit embeddings";
    } else {
        const auto section = parse_section(cfg.projection_target);
        const auto model = section_model(a, section);
        points.dim = model.dim();
        for (std::size_t i = 0; i < model.size(); ++i) {
            points.ids.push_back(model.vocab()[i]);
            const auto v = model.vector(i);
            points.coords.insert(points.coords.end(), v.begin(), v.end());
        }
        if (fs::exists(a.lexicon())) {
            const auto lexicon = load_lexicon(a.lexicon());
            for (const auto& id : points.ids) {
                const auto e = lexicon.find(id);
                colors.push_back(e ? first_label(lexicon[*e]) : std::string(kMissingLabel));
            }
        }
        title = std::string(section_name(section)) + " concept embeddings";
    }

    Projection2D projection;
    std::string detail;
    if (cfg.projection_method == "pca") {
        const auto pca = pca_2d(points);
        projection = pca.projection;
        detail = "explained variance " + format_fixed(100.0 * pca.explained_ratio[0], 1) + "% + " +
                 format_fixed(100.0 * pca.explained_ratio[1], 1) + "%";
    } else {
        TsneOptions opt;
        opt.perplexity = cfg.perplexity;
        opt.iterations = cfg.tsne_iterations;
        opt.seed = cfg.seed;
        opt.workers = cfg.workers;
        const auto tsne = tsne_2d(points, opt);
        projection = tsne.projection;
        detail = "final KL " + format_fixed(tsne.kl_history.back().second, 4);
    }
    projection.color_key = colors;

    const auto tsv = a.projection(cfg.projection_target, cfg.projection_method);
    const auto svg_path = a.projection_svg(cfg.projection_target, cfg.projection_method);
    write_projection(tsv, projection);
    SvgOptions svg;
    svg.title = title + " (" + cfg.projection_method + ")";
    svg.label_points = cfg.projection_target != "visits";
    emit_svg(projection, svg_path, svg);
    return {{tsv, svg_path}, {std::to_string(projection.size()) + " points, " + detail}};
}

StageReport run_nearest(const PipelineConfig& cfg, const std::string& concept_id, std::size_t k) {
    const auto a = prepare(cfg);
    const auto model = section_model(a, cfg.analogy_section);
    StageReport r;
    for (const auto& n : nearest_terms(model, concept_id, k)) {
        r.lines.push_back(n.concept_id + "\t" + format_fixed(n.cosine, 4));
    }
    return r;
}

StageReport run_pipeline(const PipelineConfig& cfg) {
    StageReport all;
    auto add = [&](StageReport r) {
        all.written.insert(all.written.end(), r.written.begin(), r.written.end());
        all.lines.insert(all.lines.end(), r.lines.begin(), r.lines.end());
    };
    add(run_extract_terms(cfg));
    add(run_annotate(cfg));
    add(run_cooccur(cfg));
    add(run_train(cfg));
    if (cfg.pairs) add(run_analogy(cfg));
    add(run_embed_visits(cfg));
    add(run_cluster(cfg));
    if (cfg.interpret) {
        add(run_profile(cfg));
        add(run_contingency(cfg));
        add(run_ca(cfg));
        PipelineConfig visits = cfg;
        visits.projection_target = "visits";
        add(run_project(visits));
        for (const char* section : {"interview", "examination"}) {
            PipelineConfig terms = cfg;
            terms.projection_target = section;
            terms.projection_method = "pca";
            add(run_project(terms));
        }
    }
    return all;
}

double compare_assignments(const fs::path& a, const fs::path& b) {
    if (!fs::exists(a)) throw Error("assignments not found: " + a.string());
    if (!fs::exists(b)) throw Error("assignments not found: " + b.string());
    return adjusted_rand(load_assignments(a), load_assignments(b));
}

}  // namespace medseg
