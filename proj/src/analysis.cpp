#include "medseg/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

namespace medseg {

// --- Profiles --------------------------------------------------------------------

namespace {

struct Ranked {
    std::string concept_id;
    std::size_t visits;
};

std::vector<Ranked> rank_concepts(const std::map<std::string, std::size_t>& counts) {
    std::vector<Ranked> out;
    for (const auto& [c, n] : counts) out.push_back({c, n});
    std::stable_sort(out.begin(), out.end(), [](const Ranked& a, const Ranked& b) { return a.visits > b.visits; });
    return out;
}

}  // namespace

ProfileResult cluster_profile(const Clustering& clustering, const std::vector<AnnotatedVisit>& annotated,
                              const ProfileOptions& options) {
    if (!options.groups.empty() && options.lexicon == nullptr) {
        throw Error("grouped profiles need a lexicon");
    }
    std::unordered_map<std::string, const AnnotatedVisit*> by_id;
    for (const auto& a : annotated) by_id.emplace(a.visit_id, &a);

    std::map<int, std::size_t> sizes;
    std::map<int, std::map<std::string, std::size_t>> counts;
    for (std::size_t i = 0; i < clustering.ids.size(); ++i) {
        auto it = by_id.find(clustering.ids[i]);
        if (it == by_id.end()) throw Error("clustered visit '" + clustering.ids[i] + "' has no annotation");
        const int cl = clustering.labels[i];
        ++sizes[cl];
        std::set<std::string> unique(it->second->recommendation_concepts.begin(),
                                     it->second->recommendation_concepts.end());
        auto& cc = counts[cl];
        for (const auto& c : unique) ++cc[c];
    }

    std::map<int, std::vector<Ranked>> ranked;
    std::map<std::string, std::size_t> common_in;
    for (const auto& [cl, _] : sizes) {
        ranked[cl] = rank_concepts(counts[cl]);
        const auto& r = ranked[cl];
        for (std::size_t i = 0; i < r.size() && i < options.filter_top; ++i) ++common_in[r[i].concept_id];
    }

    ProfileResult result;
    for (const auto& [c, n] : common_in) {
        if (n >= options.filter_min_clusters) result.filtered.insert(c);
    }

    auto group_of = [&](const std::string& concept_id) -> std::optional<std::string> {
        if (options.groups.empty()) return std::string();
        auto idx = options.lexicon->find(concept_id);
        if (!idx) return std::nullopt;
        const auto& labels = (*options.lexicon)[*idx].labels;
        for (const auto& g : options.groups) {
            if (labels.count(g)) return g;
        }
        return std::nullopt;
    };

    for (const auto& [cl, size] : sizes) {
        ClusterProfile prof{cl, size, {}};
        std::map<std::string, std::size_t> taken;
        for (const auto& r : ranked[cl]) {
            if (result.filtered.count(r.concept_id)) continue;
            auto g = group_of(r.concept_id);
            if (!g) continue;
            if (taken[*g] >= options.top_n) continue;
            ++taken[*g];
            prof.rows.push_back({*g, r.concept_id, r.visits,
                                 100.0 * static_cast<double>(r.visits) / static_cast<double>(size)});
        }
        if (counts[cl].empty()) warn("cluster " + std::to_string(cl) + " has no recommendation concepts");
        if (!options.groups.empty()) {
            std::stable_sort(prof.rows.begin(), prof.rows.end(), [&](const ProfileRow& a, const ProfileRow& b) {
                auto pos = [&](const std::string& g) {
                    return std::find(options.groups.begin(), options.groups.end(), g) - options.groups.begin();
                };
                return pos(a.group) < pos(b.group);
            });
        }
        result.clusters.push_back(std::move(prof));
    }
    return result;
}

void write_profile(const std::filesystem::path& path, const ProfileResult& profile) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "cluster\tsize\tgroup\tconcept\tvisits\tpercent\n";
    for (const auto& c : profile.clusters) {
        for (const auto& r : c.rows) {
            out << c.cluster << '\t' << c.size << '\t' << r.group << '\t' << r.concept_id << '\t' << r.visits
                << '\t' << format_fixed(r.percent, 1) << '\n';
        }
    }
}

// --- Contingency -----------------------------------------------------------------

long long ContingencyTable::total() const {
    long long t = 0;
    for (const auto& row : counts) {
        for (auto c : row) t += c;
    }
    return t;
}

ContingencyTable contingency(const Clustering& clustering, const std::map<std::string, std::string>& labels) {
    std::set<std::string> cols;
    std::vector<std::string> label_of(clustering.ids.size());
    for (std::size_t i = 0; i < clustering.ids.size(); ++i) {
        auto it = labels.find(clustering.ids[i]);
        label_of[i] = it == labels.end() ? std::string(kMissingLabel) : it->second;
        cols.insert(label_of[i]);
    }
    std::set<int> rows(clustering.labels.begin(), clustering.labels.end());

    ContingencyTable t;
    t.cols.assign(cols.begin(), cols.end());
    std::map<int, std::size_t> row_index;
    for (int r : rows) {
        row_index[r] = t.rows.size();
        t.rows.push_back(std::to_string(r));
    }
    std::map<std::string, std::size_t> col_index;
    for (std::size_t j = 0; j < t.cols.size(); ++j) col_index[t.cols[j]] = j;
    t.counts.assign(t.rows.size(), std::vector<long long>(t.cols.size(), 0));
    for (std::size_t i = 0; i < clustering.ids.size(); ++i) {
        ++t.counts[row_index[clustering.labels[i]]][col_index[label_of[i]]];
    }
    return t;
}

void write_contingency(const std::filesystem::path& path, const ContingencyTable& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "cluster";
    for (const auto& c : table.cols) out << '\t' << c;
    out << '\n';
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        out << table.rows[i];
        for (auto c : table.counts[i]) out << '\t' << c;
        out << '\n';
    }
}

ContingencyTable load_contingency(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    ContingencyTable t;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto f = split(line, '\t');
        if (number == 1) {
            t.cols.assign(f.begin() + 1, f.end());
            continue;
        }
        if (f.size() != t.cols.size() + 1) {
            throw Error(path.string() + ":" + std::to_string(number) + ": row width differs from header");
        }
        t.rows.push_back(f[0]);
        std::vector<long long> row;
        for (std::size_t j = 1; j < f.size(); ++j) {
            const auto v = parse_int(f[j], "count");
            if (v < 0) throw Error(path.string() + ":" + std::to_string(number) + ": negative count");
            row.push_back(v);
        }
        t.counts.push_back(std::move(row));
    }
    return t;
}

// --- Correspondence analysis -------------------------------------------------------

CorrespondenceResult correspondence_analysis(const ContingencyTable& table) {
    const std::size_t nr = table.rows.size();
    const std::size_t nc = table.cols.size();
    std::vector<std::size_t> keep_rows, keep_cols;
    for (std::size_t i = 0; i < nr; ++i) {
        long long s = 0;
        for (std::size_t j = 0; j < nc; ++j) s += table.counts[i][j];
        if (s > 0) keep_rows.push_back(i);
        else warn("dropping all-zero row '" + table.rows[i] + "' from correspondence analysis");
    }
    for (std::size_t j = 0; j < nc; ++j) {
        long long s = 0;
        for (std::size_t i = 0; i < nr; ++i) s += table.counts[i][j];
        if (s > 0) keep_cols.push_back(j);
        else warn("dropping all-zero column '" + table.cols[j] + "' from correspondence analysis");
    }
    if (keep_rows.empty() || keep_cols.empty()) throw Error("contingency table has zero grand total");

    const auto R = static_cast<Eigen::Index>(keep_rows.size());
    const auto C = static_cast<Eigen::Index>(keep_cols.size());
    Eigen::MatrixXd P(R, C);
    for (Eigen::Index i = 0; i < R; ++i) {
        for (Eigen::Index j = 0; j < C; ++j) {
            P(i, j) = static_cast<double>(table.counts[keep_rows[i]][keep_cols[j]]);
        }
    }
    P /= P.sum();
    const Eigen::VectorXd r = P.rowwise().sum();
    const Eigen::VectorXd c = P.colwise().sum().transpose();
    const Eigen::VectorXd r_isqrt = r.array().rsqrt();
    const Eigen::VectorXd c_isqrt = c.array().rsqrt();
    const Eigen::MatrixXd S = r_isqrt.asDiagonal() * (P - r * c.transpose()) * c_isqrt.asDiagonal();

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(S, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::MatrixXd U = svd.matrixU();
    Eigen::MatrixXd V = svd.matrixV();
    const Eigen::VectorXd sigma = svd.singularValues();

    CorrespondenceResult out;
    for (auto i : keep_rows) out.row_labels.push_back(table.rows[i]);
    for (auto j : keep_cols) out.col_labels.push_back(table.cols[j]);
    out.row_masses = r;
    out.col_masses = c;
    out.total_inertia = S.squaredNorm();
    for (Eigen::Index k = 0; k < sigma.size(); ++k) out.inertias.push_back(sigma(k) * sigma(k));

    out.row_coords = Eigen::MatrixXd::Zero(R, 2);
    out.col_coords = Eigen::MatrixXd::Zero(C, 2);
    // Negligible singular values belong to the numerical null space.
    const double tiny = 1e-12 * std::max(1.0, sigma.size() ? sigma(0) : 0.0);
    bool any = false;
    for (Eigen::Index k = 0; k < std::min<Eigen::Index>(2, sigma.size()); ++k) {
        if (sigma(k) <= tiny) continue;
        any = true;
        // Sign convention: the largest-magnitude entry of each row singular vector is positive.
        Eigen::Index arg = 0;
        U.col(k).cwiseAbs().maxCoeff(&arg);
        if (U(arg, k) < 0) {
            U.col(k) *= -1.0;
            V.col(k) *= -1.0;
        }
        out.row_coords.col(k) = r_isqrt.cwiseProduct(U.col(k)) * sigma(k);
        out.col_coords.col(k) = c_isqrt.cwiseProduct(V.col(k)) * sigma(k);
    }
    if (!any) warn("contingency table shows exact independence; correspondence coordinates are zero");
    return out;
}

void write_correspondence(const std::filesystem::path& path, const CorrespondenceResult& ca) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "# inertia";
    for (std::size_t k = 0; k < 2; ++k) out << '\t' << format_double(k < ca.inertias.size() ? ca.inertias[k] : 0.0);
    out << "\ttotal\t" << format_double(ca.total_inertia) << '\n';
    out << "point_type\tlabel\tdim1\tdim2\n";
    for (Eigen::Index i = 0; i < ca.row_coords.rows(); ++i) {
        out << "row\t" << ca.row_labels[static_cast<std::size_t>(i)] << '\t' << format_double(ca.row_coords(i, 0))
            << '\t' << format_double(ca.row_coords(i, 1)) << '\n';
    }
    for (Eigen::Index j = 0; j < ca.col_coords.rows(); ++j) {
        out << "col\t" << ca.col_labels[static_cast<std::size_t>(j)] << '\t' << format_double(ca.col_coords(j, 0))
            << '\t' << format_double(ca.col_coords(j, 1)) << '\n';
    }
}

}  // namespace medseg
