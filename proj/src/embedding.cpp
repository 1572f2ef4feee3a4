#include "medseg/embedding.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace medseg {

// --- Co-occurrence -------------------------------------------------------------

double CoocMatrix::at(std::size_t i, std::size_t j) const {
    if (i == j) return 0.0;
    if (i > j) std::swap(i, j);
    auto it = std::lower_bound(entries.begin(), entries.end(), std::pair{i, j},
                               [](const CoocEntry& e, const std::pair<std::size_t, std::size_t>& key) {
                                   return std::pair<std::size_t, std::size_t>{e.i, e.j} < key;
                               });
    if (it != entries.end() && it->i == i && it->j == j) return it->count;
    return 0.0;
}

namespace {

std::vector<std::string> unique_concepts(const std::vector<std::string>& concepts) {
    std::vector<std::string> u = concepts;
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end()), u.end());
    return u;
}

std::uint64_t pair_key(std::uint32_t i, std::uint32_t j) {
    return (static_cast<std::uint64_t>(i) << 32) | j;
}

}  // namespace

CoocMatrix build_cooc(const std::vector<AnnotatedVisit>& annotated, Section section,
                      std::size_t min_count, int workers) {
    if (min_count < 1) throw Error("min_count must be >= 1");

    std::map<std::string, std::size_t> visit_counts;
    for (const auto& a : annotated) {
        for (const auto& c : unique_concepts(a.concepts(section))) ++visit_counts[c];
    }
    std::vector<std::pair<std::string, std::size_t>> ranked;
    for (const auto& [c, n] : visit_counts) {
        if (n >= min_count) ranked.emplace_back(c, n);
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    CoocMatrix cooc;
    std::unordered_map<std::string, std::uint32_t> index;
    for (const auto& [c, n] : ranked) {
        index.emplace(c, static_cast<std::uint32_t>(cooc.vocab.size()));
        cooc.vocab.push_back(c);
    }

    const std::size_t shards = std::max<std::size_t>(1, shard_count(annotated.size(), workers));
    std::vector<std::unordered_map<std::uint64_t, double>> partial(shards);
    std::vector<char> informative(shards, 0);
    parallel_shards(annotated.size(), workers, [&](std::size_t shard, std::size_t begin, std::size_t end) {
        std::vector<std::uint32_t> ids;
        for (std::size_t v = begin; v < end; ++v) {
            ids.clear();
            for (const auto& c : unique_concepts(annotated[v].concepts(section))) {
                auto it = index.find(c);
                if (it != index.end()) ids.push_back(it->second);
            }
            if (ids.size() >= 2) informative[shard] = 1;
            std::sort(ids.begin(), ids.end());
            for (std::size_t a = 0; a < ids.size(); ++a) {
                for (std::size_t b = a + 1; b < ids.size(); ++b) partial[shard][pair_key(ids[a], ids[b])] += 1.0;
            }
        }
    });
    if (std::none_of(informative.begin(), informative.end(), [](char c) { return c != 0; })) {
        throw Error("degenerate co-occurrence: no visit has two in-vocabulary " +
                    std::string(section_name(section)) + " concepts");
    }
    std::map<std::uint64_t, double> merged;
    for (const auto& p : partial) {
        for (const auto& [k, v] : p) merged[k] += v;
    }
    cooc.entries.reserve(merged.size());
    for (const auto& [k, v] : merged) {
        cooc.entries.push_back({static_cast<std::uint32_t>(k >> 32), static_cast<std::uint32_t>(k & 0xffffffffu), v});
    }
    return cooc;
}

std::filesystem::path cooc_vocab_path(const std::filesystem::path& tsv_path) {
    auto p = tsv_path;
    p.replace_extension(".vocab");
    return p;
}

void write_cooc(const std::filesystem::path& tsv_path, const CoocMatrix& cooc) {
    std::ofstream out(tsv_path, std::ios::binary);
    if (!out) throw Error("cannot write " + tsv_path.string());
    for (const auto& e : cooc.entries) out << e.i << '\t' << e.j << '\t' << format_double(e.count) << '\n';
    std::ofstream vocab(cooc_vocab_path(tsv_path), std::ios::binary);
    if (!vocab) throw Error("cannot write " + cooc_vocab_path(tsv_path).string());
    for (const auto& v : cooc.vocab) vocab << v << '\n';
}

CoocMatrix load_cooc(const std::filesystem::path& tsv_path) {
    CoocMatrix cooc;
    std::ifstream vocab(cooc_vocab_path(tsv_path));
    if (!vocab) throw Error("cannot open " + cooc_vocab_path(tsv_path).string());
    std::string line;
    while (std::getline(vocab, line)) {
        if (!line.empty()) cooc.vocab.push_back(line);
    }
    std::ifstream in(tsv_path);
    if (!in) throw Error("cannot open " + tsv_path.string());
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty()) continue;
        auto f = split(line, '\t');
        if (f.size() != 3) throw Error(tsv_path.string() + ":" + std::to_string(number) + ": expected i, j, count");
        CoocEntry e{static_cast<std::uint32_t>(parse_int(f[0], "row index")),
                    static_cast<std::uint32_t>(parse_int(f[1], "column index")),
                    parse_double(f[2], "count")};
        if (e.i >= e.j || e.j >= cooc.vocab.size() || !(e.count > 0.0)) {
            throw Error(tsv_path.string() + ":" + std::to_string(number) + ": invalid entry");
        }
        cooc.entries.push_back(e);
    }
    std::sort(cooc.entries.begin(), cooc.entries.end(),
              [](const CoocEntry& a, const CoocEntry& b) { return std::tie(a.i, a.j) < std::tie(b.i, b.j); });
    return cooc;
}

// --- GloVe ---------------------------------------------------------------------

GloveState::GloveState(std::size_t r, std::size_t d)
    : rows(r), dim(d), main(r * d, 0.0), context(r * d, 0.0), main_bias(r, 0.0), context_bias(r, 0.0) {}

double glove_weight(double x, double x_max, double alpha) {
    return x < x_max ? std::pow(x / x_max, alpha) : 1.0;
}

namespace {

struct Cell {
    std::uint32_t row;  // main-vector index
    std::uint32_t col;  // context-vector index
    double log_count;
    double weight;
};

std::vector<Cell> cells_of(const CoocMatrix& cooc, const GloveOptions& opt) {
    std::vector<Cell> cells;
    cells.reserve(cooc.entries.size() * 2);
    for (const auto& e : cooc.entries) {
        const double lx = std::log(e.count);
        const double f = glove_weight(e.count, opt.x_max, opt.alpha);
        cells.push_back({e.i, e.j, lx, f});
        cells.push_back({e.j, e.i, lx, f});
    }
    return cells;
}

double residual(const GloveState& s, const Cell& c) {
    const double* w = s.main.data() + c.row * s.dim;
    const double* wt = s.context.data() + c.col * s.dim;
    double dot = 0.0;
    for (std::size_t d = 0; d < s.dim; ++d) dot += w[d] * wt[d];
    return dot + s.main_bias[c.row] + s.context_bias[c.col] - c.log_count;
}

void check_shape(const CoocMatrix& cooc, const GloveState& s) {
    if (s.rows != cooc.vocab.size()) throw Error("GloVe state does not match co-occurrence vocabulary");
}

// Unsynchronized (hogwild) access: relaxed atomics keep concurrent updates
// well-defined; with one worker they compile to plain loads and stores.
double load(double& x) { return std::atomic_ref<double>(x).load(std::memory_order_relaxed); }
void store(double& x, double v) { std::atomic_ref<double>(x).store(v, std::memory_order_relaxed); }

struct Accumulators {
    std::vector<double> main, context, main_bias, context_bias;
};

void sgd_step(GloveState& s, Accumulators& acc, const Cell& c, double lr, std::vector<double>& scratch) {
    const std::size_t dim = s.dim;
    double* w = s.main.data() + c.row * dim;
    double* wt = s.context.data() + c.col * dim;
    double* gw = acc.main.data() + c.row * dim;
    double* gwt = acc.context.data() + c.col * dim;

    double diff = load(s.main_bias[c.row]) + load(s.context_bias[c.col]) - c.log_count;
    for (std::size_t d = 0; d < dim; ++d) diff += load(w[d]) * load(wt[d]);
    const double g = 2.0 * c.weight * diff;  // dJ/d(prediction) for this cell

    scratch.resize(dim);
    for (std::size_t d = 0; d < dim; ++d) {
        const double gw_d = g * load(wt[d]);
        const double gwt_d = g * load(w[d]);
        scratch[d] = gwt_d;
        store(w[d], load(w[d]) - lr * gw_d / std::sqrt(load(gw[d])));
        store(gw[d], load(gw[d]) + gw_d * gw_d);
    }
    for (std::size_t d = 0; d < dim; ++d) {
        store(wt[d], load(wt[d]) - lr * scratch[d] / std::sqrt(load(gwt[d])));
        store(gwt[d], load(gwt[d]) + scratch[d] * scratch[d]);
    }
    store(s.main_bias[c.row], load(s.main_bias[c.row]) - lr * g / std::sqrt(load(acc.main_bias[c.row])));
    store(acc.main_bias[c.row], load(acc.main_bias[c.row]) + g * g);
    store(s.context_bias[c.col],
          load(s.context_bias[c.col]) - lr * g / std::sqrt(load(acc.context_bias[c.col])));
    store(acc.context_bias[c.col], load(acc.context_bias[c.col]) + g * g);
}

}  // namespace

double glove_loss(const CoocMatrix& cooc, const GloveState& state, const GloveOptions& options) {
    check_shape(cooc, state);
    double total = 0.0;
    for (const auto& c : cells_of(cooc, options)) {
        const double r = residual(state, c);
        total += c.weight * r * r;
    }
    return total;
}

GloveState glove_gradient(const CoocMatrix& cooc, const GloveState& state, const GloveOptions& options) {
    check_shape(cooc, state);
    GloveState grad(state.rows, state.dim);
    for (const auto& c : cells_of(cooc, options)) {
        const double g = 2.0 * c.weight * residual(state, c);
        auto w = state.main_row(c.row);
        auto wt = state.context_row(c.col);
        auto gw = grad.main_row(c.row);
        auto gwt = grad.context_row(c.col);
        for (std::size_t d = 0; d < state.dim; ++d) {
            gw[d] += g * wt[d];
            gwt[d] += g * w[d];
        }
        grad.main_bias[c.row] += g;
        grad.context_bias[c.col] += g;
    }
    return grad;
}

GloveState glove_init(std::size_t rows, const GloveOptions& options) {
    GloveState s(rows, options.dim);
    std::mt19937_64 rng(options.seed);
    const double half = 0.5 / static_cast<double>(options.dim);
    std::uniform_real_distribution<double> uni(-half, half);
    for (auto& x : s.main) x = uni(rng);
    for (auto& x : s.context) x = uni(rng);
    for (auto& x : s.main_bias) x = uni(rng);
    for (auto& x : s.context_bias) x = uni(rng);
    return s;
}

EmbeddingModel::EmbeddingModel(std::vector<std::string> vocab, std::size_t dim, std::vector<double> vectors)
    : vocab_(std::move(vocab)), dim_(dim), vectors_(std::move(vectors)) {
    if (vectors_.size() != vocab_.size() * dim_) throw Error("embedding matrix shape mismatch");
    for (double x : vectors_) {
        if (!std::isfinite(x)) throw Error("embedding contains a non-finite value");
    }
    for (std::size_t i = 0; i < vocab_.size(); ++i) {
        if (!index_.emplace(vocab_[i], i).second) throw Error("duplicate embedding entry '" + vocab_[i] + "'");
    }
}

std::optional<std::size_t> EmbeddingModel::index(const std::string& concept_id) const {
    auto it = index_.find(concept_id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::size_t EmbeddingModel::require(const std::string& concept_id) const {
    auto i = index(concept_id);
    if (!i) throw Error("concept '" + concept_id + "' is not in the embedding vocabulary");
    return *i;
}

EmbeddingModel train_glove(const CoocMatrix& cooc, const GloveOptions& options) {
    if (options.dim < 1) throw Error("dim must be >= 1");
    if (options.epochs < 1) throw Error("epochs must be >= 1");
    if (cooc.entries.empty()) throw Error("degenerate co-occurrence: no nonzero entries");

    GloveState state = glove_init(cooc.vocab.size(), options);
    Accumulators acc{std::vector<double>(state.main.size(), options.accumulator_init),
                     std::vector<double>(state.context.size(), options.accumulator_init),
                     std::vector<double>(state.rows, options.accumulator_init),
                     std::vector<double>(state.rows, options.accumulator_init)};
    auto cells = cells_of(cooc, options);
    // Separate stream from initialization so the shuffle order does not depend on dim.
    std::mt19937_64 rng(options.seed ^ 0x9E3779B97F4A7C15ull);

    std::vector<double> history;
    history.push_back(glove_loss(cooc, state, options));
    for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
        std::shuffle(cells.begin(), cells.end(), rng);
        parallel_for(cells.size(), options.workers, [&](std::size_t begin, std::size_t end) {
            std::vector<double> scratch;
            for (std::size_t k = begin; k < end; ++k) sgd_step(state, acc, cells[k], options.learning_rate, scratch);
        });
        const double loss = glove_loss(cooc, state, options);
        if (!std::isfinite(loss)) {
            throw Error("diverged: non-finite GloVe loss at epoch " + std::to_string(epoch));
        }
        history.push_back(loss);
    }

    std::vector<double> combined(state.main.size());
    for (std::size_t k = 0; k < combined.size(); ++k) combined[k] = state.main[k] + state.context[k];
    EmbeddingModel model(cooc.vocab, options.dim, std::move(combined));
    model.params = std::move(state);
    model.loss_history = std::move(history);
    return model;
}

namespace {
std::string encode_id(std::string id) {
    std::replace(id.begin(), id.end(), ' ', '_');
    return id;
}
std::string decode_id(std::string id) {
    std::replace(id.begin(), id.end(), '_', ' ');
    return id;
}
}  // namespace

void write_embedding(const std::filesystem::path& path, const EmbeddingModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << model.size() << ' ' << model.dim() << '\n';
    for (std::size_t i = 0; i < model.size(); ++i) {
        out << encode_id(model.vocab()[i]);
        for (double x : model.vector(i)) out << ' ' << format_double(x);
        out << '\n';
    }
}

EmbeddingModel load_embedding(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw Error(path.string() + ": empty embedding file");
    auto header = split_whitespace(line);
    if (header.size() != 2) throw Error(path.string() + ": header must be '<vocab_size> <dim>'");
    const auto n = static_cast<std::size_t>(parse_int(header[0], "vocabulary size"));
    const auto dim = static_cast<std::size_t>(parse_int(header[1], "dimension"));
    std::vector<std::string> vocab;
    std::vector<double> vectors;
    vectors.reserve(n * dim);
    std::size_t number = 1;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty()) continue;
        auto f = split_whitespace(line);
        if (f.size() != dim + 1) {
            throw Error(path.string() + ":" + std::to_string(number) + ": expected id and " +
                        std::to_string(dim) + " values");
        }
        vocab.push_back(decode_id(f[0]));
        for (std::size_t d = 1; d <= dim; ++d) vectors.push_back(parse_double(f[d], "embedding value"));
    }
    if (vocab.size() != n) throw Error(path.string() + ": header promises " + std::to_string(n) + " rows");
    return EmbeddingModel(std::move(vocab), dim, std::move(vectors));
}

double cosine(std::span<const double> a, std::span<const double> b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t d = 0; d < a.size(); ++d) {
        dot += a[d] * b[d];
        na += a[d] * a[d];
        nb += b[d] * b[d];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<Neighbor> nearest_terms(const EmbeddingModel& model, const std::string& concept_id,
                                    std::size_t k) {
    if (k < 1) throw Error("k must be >= 1");
    const std::size_t q = model.require(concept_id);
    std::vector<Neighbor> all;
    all.reserve(model.size());
    for (std::size_t i = 0; i < model.size(); ++i) {
        if (i == q) continue;
        all.push_back({model.vocab()[i], cosine(model.vector(q), model.vector(i))});
    }
    const std::size_t keep = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(),
                      [](const Neighbor& a, const Neighbor& b) {
                          if (a.cosine != b.cosine) return a.cosine > b.cosine;
                          return a.concept_id < b.concept_id;
                      });
    all.resize(keep);
    return all;
}

namespace {

bool section_mean(const std::vector<std::string>& concepts, const EmbeddingModel& model,
                  std::vector<double>& out) {
    std::set<std::size_t> rows;
    for (const auto& c : concepts) {
        if (auto i = model.index(c)) rows.insert(*i);
    }
    if (rows.empty()) return false;
    for (std::size_t r : rows) {
        auto v = model.vector(r);
        for (std::size_t d = 0; d < model.dim(); ++d) out[d] += v[d];
    }
    for (auto& x : out) x /= static_cast<double>(rows.size());
    return true;
}

}  // namespace

std::vector<VisitVector> embed_visits(const std::vector<AnnotatedVisit>& annotated,
                                      const EmbeddingModel& interview_model,
                                      const EmbeddingModel& examination_model) {
    std::vector<VisitVector> out;
    const std::size_t di = interview_model.dim();
    const std::size_t de = examination_model.dim();
    for (const auto& a : annotated) {
        std::vector<double> iv(di, 0.0), ev(de, 0.0);
        const bool has_i = section_mean(a.interview_concepts, interview_model, iv);
        const bool has_e = section_mean(a.examination_concepts, examination_model, ev);
        if (!has_i && !has_e) {
            warn("visit '" + a.visit_id + "' has no in-vocabulary concepts; dropped");
            continue;
        }
        VisitVector v{a.visit_id, std::move(iv)};
        v.vector.insert(v.vector.end(), ev.begin(), ev.end());
        out.push_back(std::move(v));
    }
    return out;
}

void write_visit_vectors(const std::filesystem::path& path, const std::vector<VisitVector>& vectors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& v : vectors) {
        out << v.visit_id;
        for (double x : v.vector) out << '\t' << format_double(x);
        out << '\n';
    }
}

std::vector<VisitVector> load_visit_vectors(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<VisitVector> out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty()) continue;
        auto f = split(line, '\t');
        VisitVector v{f[0], {}};
        for (std::size_t k = 1; k < f.size(); ++k) v.vector.push_back(parse_double(f[k], "vector value"));
        if (!out.empty() && v.vector.size() != out.front().vector.size()) {
            throw Error(path.string() + ":" + std::to_string(number) + ": inconsistent vector length");
        }
        out.push_back(std::move(v));
    }
    return out;
}

}  // namespace medseg
