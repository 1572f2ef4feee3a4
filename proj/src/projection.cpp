#include "medseg/projection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include <Eigen/Dense>

namespace medseg {

// --- PCA -------------------------------------------------------------------------

PcaResult pca_2d(const PointSet& points) {
    const auto n = static_cast<Eigen::Index>(points.size());
    const auto d = static_cast<Eigen::Index>(points.dim);
    if (n < 3) throw Error("PCA needs at least 3 vectors");
    Eigen::MatrixXd X = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        points.coords.data(), n, d);
    X.rowwise() -= X.colwise().mean();
    const double total = X.squaredNorm();
    if (!(total > 0.0)) throw Error("PCA input has zero variance");

    Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinV);
    Eigen::MatrixXd V = svd.matrixV();
    const Eigen::VectorXd sigma = svd.singularValues();

    PcaResult out;
    out.projection.ids = points.ids;
    out.projection.coords.assign(points.size(), {0.0, 0.0});
    for (Eigen::Index k = 0; k < 2; ++k) {
        out.loadings[k].assign(points.dim, 0.0);
        if (k >= sigma.size()) continue;
        const double cutoff = 1e-12 * V.col(k).cwiseAbs().maxCoeff();
        for (Eigen::Index j = 0; j < d; ++j) {
            if (std::abs(V(j, k)) > cutoff) {
                if (V(j, k) < 0) V.col(k) *= -1.0;
                break;
            }
        }
        const Eigen::VectorXd proj = X * V.col(k);
        for (Eigen::Index i = 0; i < n; ++i) out.projection.coords[static_cast<std::size_t>(i)][k] = proj(i);
        for (Eigen::Index j = 0; j < d; ++j) out.loadings[k][static_cast<std::size_t>(j)] = V(j, k);
        out.explained_ratio[k] = sigma(k) * sigma(k) / total;
    }
    return out;
}

// --- t-SNE -----------------------------------------------------------------------

namespace {

struct RowCalibration {
    double entropy;
    double beta;
    bool converged;
};

// Probabilities proportional to exp(-beta * shifted[j]); returns the entropy.
double row_entropy(const std::vector<double>& shifted, std::size_t self, double beta, std::vector<double>& p) {
    double z = 0.0;
    double weighted = 0.0;
    for (std::size_t j = 0; j < shifted.size(); ++j) {
        if (j == self) {
            p[j] = 0.0;
            continue;
        }
        p[j] = std::exp(-beta * shifted[j]);
        z += p[j];
        weighted += p[j] * shifted[j];
    }
    for (auto& x : p) x /= z;
    return std::log(z) + beta * weighted / z;
}

RowCalibration calibrate_row(const std::vector<double>& dist, std::size_t self, double target,
                             std::vector<double>& p) {
    const std::size_t n = dist.size();
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
        if (j != self) dmin = std::min(dmin, dist[j]);
    }
    std::vector<double> shifted(n);
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        shifted[j] = j == self ? 0.0 : dist[j] - dmin;
        mean += shifted[j];
    }
    mean /= static_cast<double>(n - 1);
    if (mean <= 0.0) {
        // All neighbours equidistant: the distribution is uniform for every beta.
        const double h = row_entropy(shifted, self, 1.0, p);
        return {h, 1.0, std::abs(h - target) <= kEntropyTolerance};
    }

    // Bracket log(beta) so that H(lo) >= target >= H(hi), then bisect.
    double lo = std::log(1.0 / mean) - 30.0;
    double hi = std::log(1.0 / mean) + 30.0;
    for (int e = 0; e < 40 && row_entropy(shifted, self, std::exp(lo), p) < target; ++e) lo -= 30.0;
    for (int e = 0; e < 40 && row_entropy(shifted, self, std::exp(hi), p) > target; ++e) hi += 30.0;

    double mid = 0.5 * (lo + hi);
    double h = 0.0;
    for (std::size_t step = 0; step < kMaxBisectionSteps; ++step) {
        mid = 0.5 * (lo + hi);
        h = row_entropy(shifted, self, std::exp(mid), p);
        if (std::abs(h - target) <= kEntropyTolerance) return {h, std::exp(mid), true};
        if (h > target) lo = mid;
        else hi = mid;
    }
    return {h, std::exp(mid), std::abs(h - target) <= kEntropyTolerance};
}

}  // namespace

Affinities calibrate_affinities(const PointSet& points, double perplexity, int workers) {
    const std::size_t n = points.size();
    if (n < 2) throw Error("affinities need at least 2 points");
    if (!(perplexity > 0.0)) throw Error("perplexity must be positive");
    Affinities a;
    a.n = n;
    a.target_entropy = std::log(perplexity);
    a.conditional.assign(n * n, 0.0);
    a.entropy.assign(n, 0.0);
    a.beta.assign(n, 0.0);
    std::vector<char> ok(n, 0);
    parallel_for(n, workers, [&](std::size_t begin, std::size_t end) {
        std::vector<double> dist(n), p(n);
        for (std::size_t i = begin; i < end; ++i) {
            for (std::size_t j = 0; j < n; ++j) dist[j] = squared_distance(points.row(i), points.row(j));
            const auto cal = calibrate_row(dist, i, a.target_entropy, p);
            std::copy(p.begin(), p.end(), a.conditional.begin() + static_cast<std::ptrdiff_t>(i * n));
            a.entropy[i] = cal.entropy;
            a.beta[i] = cal.beta;
            ok[i] = cal.converged;
        }
    });
    a.converged.assign(ok.begin(), ok.end());
    return a;
}

std::vector<double> symmetrize(const Affinities& a) {
    const std::size_t n = a.n;
    std::vector<double> joint(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            joint[i * n + j] = (a.conditional[i * n + j] + a.conditional[j * n + i]) / (2.0 * static_cast<double>(n));
        }
    }
    return joint;
}

namespace {

// Student-t kernel matrix and its off-diagonal sum.
double student_kernel(const std::vector<std::array<double, 2>>& y, std::vector<double>& num, int workers) {
    const std::size_t n = y.size();
    num.assign(n * n, 0.0);
    parallel_for(n, workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const double dx = y[i][0] - y[j][0];
                const double dy = y[i][1] - y[j][1];
                num[i * n + j] = 1.0 / (1.0 + dx * dx + dy * dy);
            }
        }
    });
    double z = 0.0;
    for (double v : num) z += v;
    return z;
}

double kl_from_kernel(const std::vector<double>& p, const std::vector<double>& num, double z) {
    double kl = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (p[k] <= 0.0) continue;
        const double q = std::max(num[k] / z, std::numeric_limits<double>::min());
        kl += p[k] * std::log(p[k] / q);
    }
    return kl;
}

}  // namespace

double tsne_kl(const std::vector<double>& joint_p, const std::vector<std::array<double, 2>>& layout) {
    std::vector<double> num;
    const double z = student_kernel(layout, num, 1);
    return kl_from_kernel(joint_p, num, z);
}

TsneResult tsne_2d(const PointSet& points, const TsneOptions& options) {
    const std::size_t n = points.size();
    if (n < 4) throw Error("t-SNE needs at least 4 points");
    TsneResult result;
    double perplexity = options.perplexity;
    const double max_perplexity = static_cast<double>(n - 1) / 3.0;
    if (perplexity > max_perplexity) {
        warn("perplexity " + format_fixed(perplexity, 2) + " too large for " + std::to_string(n) +
             " points; lowered to " + format_fixed(max_perplexity, 2));
        perplexity = max_perplexity;
    }
    if (perplexity < 1.0) {
        warn("perplexity below 1 raised to 1");
        perplexity = 1.0;
    }
    result.perplexity = perplexity;
    result.affinities = calibrate_affinities(points, perplexity, options.workers);
    const auto p = symmetrize(result.affinities);

    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> normal(0.0, 1e-4);
    std::vector<std::array<double, 2>> y(n), update(n, {0.0, 0.0}), gains(n, {1.0, 1.0}), grad(n);
    for (auto& row : y) row = {normal(rng), normal(rng)};

    std::vector<double> num;
    for (std::size_t iter = 0; iter < options.iterations; ++iter) {
        const double exaggeration = iter < options.exaggeration_iterations ? options.exaggeration : 1.0;
        const double momentum = iter < options.momentum_switch ? options.initial_momentum : options.final_momentum;
        const double z = student_kernel(y, num, options.workers);
        parallel_for(n, options.workers, [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                double gx = 0.0, gy = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    if (i == j) continue;
                    const double w = num[i * n + j];
                    const double m = (exaggeration * p[i * n + j] - w / z) * w;
                    gx += m * (y[i][0] - y[j][0]);
                    gy += m * (y[i][1] - y[j][1]);
                }
                grad[i] = {4.0 * gx, 4.0 * gy};
            }
        });
        for (std::size_t i = 0; i < n; ++i) {
            for (int d = 0; d < 2; ++d) {
                // Delta-bar-delta gains as in the reference implementation.
                const bool same_sign = (grad[i][d] > 0.0) == (update[i][d] > 0.0);
                gains[i][d] = same_sign ? gains[i][d] * 0.8 : gains[i][d] + 0.2;
                gains[i][d] = std::max(gains[i][d], 0.01);
                update[i][d] = momentum * update[i][d] - options.learning_rate * gains[i][d] * grad[i][d];
                y[i][d] += update[i][d];
            }
        }
        std::array<double, 2> mean{0.0, 0.0};
        for (const auto& row : y) {
            mean[0] += row[0];
            mean[1] += row[1];
        }
        for (auto& row : y) {
            row[0] -= mean[0] / static_cast<double>(n);
            row[1] -= mean[1] / static_cast<double>(n);
        }
        if (options.kl_every > 0 && (iter + 1) % options.kl_every == 0) {
            const double zk = student_kernel(y, num, options.workers);
            const double kl = kl_from_kernel(p, num, zk);
            if (!std::isfinite(kl)) throw Error("diverged: non-finite KL at t-SNE iteration " + std::to_string(iter + 1));
            result.kl_history.emplace_back(iter + 1, kl);
        }
    }
    result.projection.ids = points.ids;
    result.projection.coords = std::move(y);
    return result;
}

void write_projection(const std::filesystem::path& path, const Projection2D& projection) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "id\tx\ty\tcolor\n";
    for (std::size_t i = 0; i < projection.size(); ++i) {
        out << projection.ids[i] << '\t' << format_double(projection.coords[i][0]) << '\t'
            << format_double(projection.coords[i][1]) << '\t'
            << (projection.color_key.empty() ? std::string() : projection.color_key[i]) << '\n';
    }
}

// --- SVG -------------------------------------------------------------------------

namespace {

constexpr std::array<const char*, 10> kPalette = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::vector<double> nice_ticks(double lo, double hi, int target) {
    const double range = hi - lo;
    const double raw = range / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double norm = raw / mag;
    const double step = (norm < 1.5 ? 1.0 : norm < 3.0 ? 2.0 : norm < 7.0 ? 5.0 : 10.0) * mag;
    std::vector<double> ticks;
    for (double t = std::ceil(lo / step) * step; t <= hi + step * 1e-9; t += step) {
        ticks.push_back(std::abs(t) < step * 1e-9 ? 0.0 : t);
    }
    return ticks;
}

std::string tick_label(double v, double span) {
    const int digits = span >= 10 ? 0 : span >= 1 ? 1 : span >= 0.1 ? 2 : span >= 0.01 ? 3 : 4;
    return format_fixed(v, digits);
}

std::vector<std::string> category_order(const std::vector<std::string>& keys) {
    std::vector<std::string> cats(keys.begin(), keys.end());
    std::sort(cats.begin(), cats.end());
    cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
    const bool numeric = std::all_of(cats.begin(), cats.end(), [](const std::string& s) {
        return !s.empty() && s.size() < 18 && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
    });
    if (numeric) {
        std::sort(cats.begin(), cats.end(),
                  [](const std::string& a, const std::string& b) { return std::stoll(a) < std::stoll(b); });
    }
    return cats;
}

}  // namespace

std::string render_svg(const Projection2D& projection, const SvgOptions& options) {
    if (projection.ids.size() != projection.coords.size()) throw Error("projection ids and coordinates differ in count");
    if (!projection.color_key.empty() && projection.color_key.size() != projection.ids.size()) {
        throw Error("projection color key has the wrong length");
    }
    for (const auto& c : projection.coords) {
        if (!std::isfinite(c[0]) || !std::isfinite(c[1])) throw Error("projection has non-finite coordinates");
    }

    const auto categories = category_order(projection.color_key);
    std::map<std::string, std::size_t> color_index;
    for (std::size_t i = 0; i < categories.size(); ++i) color_index[categories[i]] = i;

    const double W = options.width, H = options.height;
    const double left = 70, right = categories.empty() ? 30 : 170, top = options.title.empty() ? 30 : 50, bottom = 60;
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (!projection.coords.empty()) {
        xmin = ymin = std::numeric_limits<double>::infinity();
        xmax = ymax = -std::numeric_limits<double>::infinity();
        for (const auto& c : projection.coords) {
            xmin = std::min(xmin, c[0]);
            xmax = std::max(xmax, c[0]);
            ymin = std::min(ymin, c[1]);
            ymax = std::max(ymax, c[1]);
        }
    }
    auto pad = [](double& lo, double& hi) {
        const double span = hi - lo;
        const double m = span > 0 ? 0.05 * span : std::max(1.0, std::abs(lo) * 0.1);
        lo -= m;
        hi += m;
    };
    pad(xmin, xmax);
    pad(ymin, ymax);
    const double pw = W - left - right, ph = H - top - bottom;
    auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
    auto sy = [&](double y) { return top + ph - (y - ymin) / (ymax - ymin) * ph; };
    auto f = [](double v) { return format_fixed(v, 2); };

    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << options.width << "\" height=\"" << options.height
        << "\" viewBox=\"0 0 " << options.width << ' ' << options.height << "\" font-family=\"sans-serif\">\n";
    svg << "<rect x=\"0\" y=\"0\" width=\"" << options.width << "\" height=\"" << options.height
        << "\" fill=\"white\"/>\n";
    if (!options.title.empty()) {
        svg << "<text x=\"" << f(left + pw / 2) << "\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">"
            << xml_escape(options.title) << "</text>\n";
    }
    svg << "<g class=\"axes\" stroke=\"#333\" stroke-width=\"1\">\n";
    svg << "<line x1=\"" << f(left) << "\" y1=\"" << f(top + ph) << "\" x2=\"" << f(left + pw) << "\" y2=\""
        << f(top + ph) << "\"/>\n";
    svg << "<line x1=\"" << f(left) << "\" y1=\"" << f(top) << "\" x2=\"" << f(left) << "\" y2=\"" << f(top + ph)
        << "\"/>\n";
    for (double t : nice_ticks(xmin, xmax, 5)) {
        svg << "<line x1=\"" << f(sx(t)) << "\" y1=\"" << f(top + ph) << "\" x2=\"" << f(sx(t)) << "\" y2=\""
            << f(top + ph + 5) << "\"/>\n";
    }
    for (double t : nice_ticks(ymin, ymax, 5)) {
        svg << "<line x1=\"" << f(left - 5) << "\" y1=\"" << f(sy(t)) << "\" x2=\"" << f(left) << "\" y2=\""
            << f(sy(t)) << "\"/>\n";
    }
    svg << "</g>\n<g class=\"tick-labels\" font-size=\"11\" fill=\"#333\">\n";
    for (double t : nice_ticks(xmin, xmax, 5)) {
        svg << "<text x=\"" << f(sx(t)) << "\" y=\"" << f(top + ph + 18) << "\" text-anchor=\"middle\">"
            << tick_label(t, xmax - xmin) << "</text>\n";
    }
    for (double t : nice_ticks(ymin, ymax, 5)) {
        svg << "<text x=\"" << f(left - 8) << "\" y=\"" << f(sy(t) + 4) << "\" text-anchor=\"end\">"
            << tick_label(t, ymax - ymin) << "</text>\n";
    }
    svg << "<text x=\"" << f(left + pw / 2) << "\" y=\"" << f(H - 15) << "\" text-anchor=\"middle\" font-size=\"13\">"
        << xml_escape(options.x_label) << "</text>\n";
    svg << "<text x=\"18\" y=\"" << f(top + ph / 2) << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
        << f(top + ph / 2) << ")\">" << xml_escape(options.y_label) << "</text>\n";
    svg << "</g>\n<g class=\"points\" fill-opacity=\"0.8\">\n";
    for (std::size_t i = 0; i < projection.size(); ++i) {
        const char* color = projection.color_key.empty()
                                ? kPalette[0]
                                : kPalette[color_index[projection.color_key[i]] % kPalette.size()];
        svg << "<circle cx=\"" << f(sx(projection.coords[i][0])) << "\" cy=\"" << f(sy(projection.coords[i][1]))
            << "\" r=\"" << (options.label_points ? 5 : 3) << "\" fill=\"" << color << "\"><title>"
            << xml_escape(projection.ids[i]) << "</title></circle>\n";
    }
    svg << "</g>\n";
    if (options.label_points) {
        svg << "<g class=\"point-labels\" font-size=\"11\" fill=\"#222\">\n";
        for (std::size_t i = 0; i < projection.size(); ++i) {
            svg << "<text x=\"" << f(sx(projection.coords[i][0]) + 7) << "\" y=\"" << f(sy(projection.coords[i][1]) + 4)
                << "\">" << xml_escape(projection.ids[i]) << "</text>\n";
        }
        svg << "</g>\n";
    }
    if (!categories.empty()) {
        svg << "<g class=\"legend\" font-size=\"12\">\n";
        for (std::size_t c = 0; c < categories.size(); ++c) {
            const double y = top + 10 + 20.0 * static_cast<double>(c);
            svg << "<rect x=\"" << f(W - right + 20) << "\" y=\"" << f(y - 9) << "\" width=\"12\" height=\"12\" fill=\""
                << kPalette[c % kPalette.size()] << "\"/>\n";
            svg << "<text x=\"" << f(W - right + 38) << "\" y=\"" << f(y + 1) << "\">" << xml_escape(categories[c])
                << "</text>\n";
        }
        svg << "</g>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

void emit_svg(const Projection2D& projection, const std::filesystem::path& path, const SvgOptions& options) {
    const auto text = render_svg(projection, options);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("failed writing " + path.string());
}

}  // namespace medseg
