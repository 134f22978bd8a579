#include "reglgc/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "reglgc/errors.hpp"
#include "reglgc/optim.hpp"
#include "reglgc/parallel.hpp"
#include "reglgc/rng.hpp"
#include "reglgc/stats.hpp"

namespace reglgc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;

struct StateDensity {
    Eigen::Vector2d mean;
    Eigen::Matrix2d inv;
    double log_norm;  // -log(2*pi) - 0.5*log|Sigma|
    bool ok;
};

StateDensity make_density(const Eigen::Vector2d& mean, const Eigen::Matrix2d& cov) {
    StateDensity d;
    d.mean = mean;
    const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
    d.ok = std::isfinite(det) && det > 0.0 && cov(0, 0) > 0.0;
    if (!d.ok) return d;
    d.inv << cov(1, 1) / det, -cov(0, 1) / det, -cov(1, 0) / det, cov(0, 0) / det;
    d.log_norm = -kLog2Pi - 0.5 * std::log(det);
    d.ok = d.inv.allFinite() && std::isfinite(d.log_norm);
    return d;
}

inline double log_density(const StateDensity& d, double a, double b) {
    const double da = a - d.mean[0];
    const double db = b - d.mean[1];
    const double q = da * (d.inv(0, 0) * da + d.inv(0, 1) * db) +
                     db * (d.inv(1, 0) * da + d.inv(1, 1) * db);
    return d.log_norm - 0.5 * q;
}

std::vector<StateDensity> make_densities(const HmmModel& m) {
    std::vector<StateDensity> out;
    out.reserve(static_cast<std::size_t>(m.n_regimes));
    for (int i = 0; i < m.n_regimes; ++i) {
        out.push_back(make_density(m.means[static_cast<std::size_t>(i)],
                                   m.covariances[static_cast<std::size_t>(i)]));
        if (!out.back().ok) return {};
    }
    return out;
}

// Per-row log state densities with the row maximum split off, so the
// recursions can work with exp(logp - m) in [0, 1].
void row_weights(const std::vector<StateDensity>& dens, const ReturnSeries& data, std::size_t t,
                 Eigen::VectorXd& w, double& shift) {
    const int c = static_cast<int>(dens.size());
    if (data.is_missing(t)) {
        w.setOnes(c);
        shift = 0.0;
        return;
    }
    double m = -kInf;
    for (int i = 0; i < c; ++i) {
        const double lp = log_density(dens[static_cast<std::size_t>(i)], data.a[t], data.b[t]);
        w[i] = lp;
        if (lp > m) m = lp;
    }
    shift = m;
    for (int i = 0; i < c; ++i) w[i] = std::exp(w[i] - m);
}

double forward_loglik(const std::vector<StateDensity>& dens, const Eigen::MatrixXd& tpm,
                      const Eigen::VectorXd& initial, const ReturnSeries& data,
                      Eigen::MatrixXd* phi_out = nullptr) {
    const int c = static_cast<int>(dens.size());
    const std::size_t n = data.size();
    Eigen::VectorXd phi = initial;
    Eigen::VectorXd w(c), u(c);
    double loglik = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        double shift;
        row_weights(dens, data, t, w, shift);
        if (t == 0)
            u = phi.cwiseProduct(w);
        else
            u = (tpm.transpose() * phi).cwiseProduct(w);
        const double norm = u.sum();
        if (!(norm > 0.0) || !std::isfinite(norm)) return -kInf;
        loglik += std::log(norm) + shift;
        phi = u / norm;
        if (phi_out != nullptr) phi_out->row(static_cast<Eigen::Index>(t)) = phi.transpose();
    }
    return loglik;
}

}  // namespace

void HmmModel::validate() const {
    if (n_regimes < 1) throw ValidationError("hmm: need at least one regime");
    const auto c = static_cast<std::size_t>(n_regimes);
    if (means.size() != c || covariances.size() != c)
        throw ValidationError("hmm: mean/covariance count must match n_regimes");
    if (tpm.rows() != n_regimes || tpm.cols() != n_regimes)
        throw ValidationError("hmm: transition matrix must be n_regimes x n_regimes");
    if (initial.size() != n_regimes)
        throw ValidationError("hmm: initial distribution must have n_regimes entries");
    for (const auto& mu : means)
        if (!mu.allFinite()) throw ValidationError("hmm: non-finite mean");
    for (const auto& cov : covariances) {
        if (!cov.allFinite()) throw ValidationError("hmm: non-finite covariance");
        if (std::fabs(cov(0, 1) - cov(1, 0)) > 1e-12 * (1.0 + std::fabs(cov(0, 1))))
            throw ValidationError("hmm: covariance not symmetric");
        const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
        if (!(cov(0, 0) > 0.0) || !(det > 0.0))
            throw ValidationError("hmm: covariance not positive definite");
    }
    for (int i = 0; i < n_regimes; ++i) {
        double row = 0.0;
        for (int j = 0; j < n_regimes; ++j) {
            if (!(tpm(i, j) >= 0.0)) throw ValidationError("hmm: negative transition probability");
            row += tpm(i, j);
        }
        if (std::fabs(row - 1.0) > 1e-8)
            throw ValidationError("hmm: transition matrix row " + std::to_string(i + 1) +
                                  " does not sum to 1");
    }
    double tot = 0.0;
    for (int i = 0; i < n_regimes; ++i) {
        if (!(initial[i] >= 0.0)) throw ValidationError("hmm: negative initial probability");
        tot += initial[i];
    }
    if (std::fabs(tot - 1.0) > 1e-8)
        throw ValidationError("hmm: initial distribution does not sum to 1");
}

double hmm_loglik(const HmmModel& model, const ReturnSeries& data) {
    model.validate();
    data.validate();
    if (data.size() == 0) throw ValidationError("hmm: empty series");
    const auto dens = make_densities(model);
    if (dens.empty()) throw NumericalError("hmm: covariance not usable");
    const double ll = forward_loglik(dens, model.tpm, model.initial, data);
    if (!std::isfinite(ll)) throw NumericalError("hmm: likelihood underflow");
    return ll;
}

double hmm_loglik_backward(const HmmModel& model, const ReturnSeries& data) {
    model.validate();
    data.validate();
    const std::size_t n = data.size();
    if (n == 0) throw ValidationError("hmm: empty series");
    const auto dens = make_densities(model);
    if (dens.empty()) throw NumericalError("hmm: covariance not usable");
    const int c = model.n_regimes;

    Eigen::VectorXd beta = Eigen::VectorXd::Ones(c);
    Eigen::VectorXd w(c);
    double logc = 0.0;
    for (std::size_t t = n - 1; t > 0; --t) {
        double shift;
        row_weights(dens, data, t, w, shift);
        beta = model.tpm * w.cwiseProduct(beta);
        logc += shift;
        const double norm = beta.sum();
        if (!(norm > 0.0) || !std::isfinite(norm))
            throw NumericalError("hmm: likelihood underflow");
        beta /= norm;
        logc += std::log(norm);
    }
    double shift;
    row_weights(dens, data, 0, w, shift);
    const double head = model.initial.dot(w.cwiseProduct(beta));
    if (!(head > 0.0) || !std::isfinite(head)) throw NumericalError("hmm: likelihood underflow");
    return logc + shift + std::log(head);
}

HmmSmoothing hmm_smooth(const HmmModel& model, const ReturnSeries& data) {
    model.validate();
    data.validate();
    const std::size_t n = data.size();
    if (n == 0) throw ValidationError("hmm: empty series");
    const auto dens = make_densities(model);
    if (dens.empty()) throw NumericalError("hmm: covariance not usable");
    const int c = model.n_regimes;

    Eigen::MatrixXd phi(n, c);
    if (!std::isfinite(forward_loglik(dens, model.tpm, model.initial, data, &phi)))
        throw NumericalError("hmm: likelihood underflow");

    HmmSmoothing out;
    out.prob.resize(static_cast<Eigen::Index>(n), c);
    out.labels.resize(n);

    // Backward pass; beta is renormalized at each step, which cancels in
    // the smoothing ratio.
    Eigen::VectorXd beta = Eigen::VectorXd::Ones(c);
    Eigen::VectorXd w(c);
    for (std::size_t t = n; t-- > 0;) {
        Eigen::VectorXd prod =
            phi.row(static_cast<Eigen::Index>(t)).transpose().cwiseProduct(beta);
        const double norm = prod.sum();
        if (!(norm > 0.0)) throw NumericalError("hmm: smoothing underflow");
        prod /= norm;
        out.prob.row(static_cast<Eigen::Index>(t)) = prod.transpose();
        int best = 0;
        for (int i = 1; i < c; ++i)
            if (prod[i] > prod[best]) best = i;
        out.labels[t] = best + 1;
        if (t > 0) {
            double shift;
            row_weights(dens, data, t, w, shift);
            beta = model.tpm * w.cwiseProduct(beta);
            const double bnorm = beta.sum();
            if (!(bnorm > 0.0)) throw NumericalError("hmm: smoothing underflow");
            beta /= bnorm;
        }
    }
    return out;
}

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& tpm) {
    const auto c = tpm.rows();
    if (c != tpm.cols() || c < 1) throw ValidationError("stationary: square matrix required");
    if (c == 1) return Eigen::VectorXd::Ones(1);
    // delta' (I - Gamma + 1) = 1' ; see Zucchini & MacDonald style trick.
    Eigen::MatrixXd a =
        (Eigen::MatrixXd::Identity(c, c) - tpm + Eigen::MatrixXd::Ones(c, c)).transpose();
    Eigen::VectorXd delta = a.partialPivLu().solve(Eigen::VectorXd::Ones(c));
    if (!delta.allFinite()) throw NumericalError("stationary: singular system");
    // Clip tiny negative round-off and renormalize.
    for (Eigen::Index i = 0; i < c; ++i) {
        if (delta[i] < -1e-9) throw NumericalError("stationary: negative solution entry");
        delta[i] = std::max(delta[i], 0.0);
    }
    const double s = delta.sum();
    if (!(s > 0.0)) throw NumericalError("stationary: degenerate solution");
    return delta / s;
}

namespace hmm_param {

int count(int n_regimes, bool include_initial) {
    const int c = n_regimes;
    return 2 * c + 3 * c + c * (c - 1) + (include_initial ? c - 1 : 0);
}

Eigen::VectorXd pack(const HmmModel& model, bool include_initial) {
    model.validate();
    const int c = model.n_regimes;
    Eigen::VectorXd w(count(c, include_initial));
    int k = 0;
    for (int i = 0; i < c; ++i) {
        w[k++] = model.means[static_cast<std::size_t>(i)][0];
        w[k++] = model.means[static_cast<std::size_t>(i)][1];
    }
    for (int i = 0; i < c; ++i) {
        const Eigen::Matrix2d& cov = model.covariances[static_cast<std::size_t>(i)];
        // Cholesky of a 2x2 SPD matrix, done in closed form.
        const double l11 = std::sqrt(cov(0, 0));
        const double l21 = cov(0, 1) / l11;
        const double l22 = std::sqrt(cov(1, 1) - l21 * l21);
        w[k++] = std::log(l11);
        w[k++] = l21;
        w[k++] = std::log(l22);
    }
    for (int i = 0; i < c; ++i) {
        const double diag = model.tpm(i, i);
        if (!(diag > 0.0)) throw ValidationError("hmm pack: zero diagonal transition probability");
        for (int j = 0; j < c; ++j) {
            if (j == i) continue;
            const double off = model.tpm(i, j);
            if (!(off > 0.0))
                throw ValidationError("hmm pack: zero off-diagonal transition probability");
            w[k++] = std::log(off / diag);
        }
    }
    if (include_initial) {
        if (!(model.initial[0] > 0.0))
            throw ValidationError("hmm pack: zero initial probability for state 1");
        for (int i = 1; i < c; ++i) {
            if (!(model.initial[i] > 0.0))
                throw ValidationError("hmm pack: zero initial probability");
            w[k++] = std::log(model.initial[i] / model.initial[0]);
        }
    }
    return w;
}

HmmModel unpack(const Eigen::VectorXd& w, int n_regimes, bool include_initial) {
    const int c = n_regimes;
    if (w.size() != count(c, include_initial))
        throw ValidationError("hmm unpack: wrong working vector length");
    HmmModel m;
    m.n_regimes = c;
    int k = 0;
    m.means.resize(static_cast<std::size_t>(c));
    for (int i = 0; i < c; ++i) {
        m.means[static_cast<std::size_t>(i)][0] = w[k++];
        m.means[static_cast<std::size_t>(i)][1] = w[k++];
    }
    m.covariances.resize(static_cast<std::size_t>(c));
    for (int i = 0; i < c; ++i) {
        const double l11 = std::exp(w[k++]);
        const double l21 = w[k++];
        const double l22 = std::exp(w[k++]);
        Eigen::Matrix2d cov;
        cov(0, 0) = l11 * l11;
        cov(0, 1) = cov(1, 0) = l11 * l21;
        cov(1, 1) = l21 * l21 + l22 * l22;
        m.covariances[static_cast<std::size_t>(i)] = cov;
    }
    m.tpm.resize(c, c);
    for (int i = 0; i < c; ++i) {
        // Row softmax over (0 for the diagonal, tau_ij elsewhere).
        double mx = 0.0;
        std::vector<double> logits(static_cast<std::size_t>(c), 0.0);
        for (int j = 0; j < c; ++j) {
            if (j == i) continue;
            logits[static_cast<std::size_t>(j)] = w[k++];
            mx = std::max(mx, logits[static_cast<std::size_t>(j)]);
        }
        double denom = 0.0;
        for (int j = 0; j < c; ++j) denom += std::exp(logits[static_cast<std::size_t>(j)] - mx);
        for (int j = 0; j < c; ++j)
            m.tpm(i, j) = std::exp(logits[static_cast<std::size_t>(j)] - mx) / denom;
    }
    if (include_initial) {
        std::vector<double> logits(static_cast<std::size_t>(c), 0.0);
        double mx = 0.0;
        for (int i = 1; i < c; ++i) {
            logits[static_cast<std::size_t>(i)] = w[k++];
            mx = std::max(mx, logits[static_cast<std::size_t>(i)]);
        }
        double denom = 0.0;
        for (int i = 0; i < c; ++i) denom += std::exp(logits[static_cast<std::size_t>(i)] - mx);
        m.initial.resize(c);
        for (int i = 0; i < c; ++i)
            m.initial[i] = std::exp(logits[static_cast<std::size_t>(i)] - mx) / denom;
    } else {
        m.initial = stationary_distribution(m.tpm);
    }
    return m;
}

}  // namespace hmm_param

namespace {

// Deterministic k-means++ on the observed rows.
struct KmeansResult {
    std::vector<Eigen::Vector2d> centers;
    std::vector<int> assign;
};

KmeansResult kmeans(const std::vector<Eigen::Vector2d>& pts, int k, Rng& rng) {
    const std::size_t n = pts.size();
    KmeansResult res;
    res.centers.reserve(static_cast<std::size_t>(k));
    // k-means++ seeding.
    res.centers.push_back(pts[rng.below(n)]);
    std::vector<double> d2(n);
    while (res.centers.size() < static_cast<std::size_t>(k)) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = kInf;
            for (const auto& ctr : res.centers) best = std::min(best, (pts[i] - ctr).squaredNorm());
            d2[i] = best;
            total += best;
        }
        if (!(total > 0.0)) {
            // All points coincide with existing centers; spread arbitrarily.
            res.centers.push_back(pts[rng.below(n)]);
            continue;
        }
        double target = rng.uniform() * total;
        std::size_t pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
            target -= d2[i];
            if (target <= 0.0) {
                pick = i;
                break;
            }
        }
        res.centers.push_back(pts[pick]);
    }
    res.assign.assign(n, 0);
    for (int iter = 0; iter < 50; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double bestd = (pts[i] - res.centers[0]).squaredNorm();
            for (int j = 1; j < k; ++j) {
                const double d = (pts[i] - res.centers[static_cast<std::size_t>(j)]).squaredNorm();
                if (d < bestd) {
                    bestd = d;
                    best = j;
                }
            }
            if (res.assign[i] != best) {
                res.assign[i] = best;
                changed = true;
            }
        }
        for (int j = 0; j < k; ++j) {
            Eigen::Vector2d sum = Eigen::Vector2d::Zero();
            std::size_t cnt = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (res.assign[i] == j) {
                    sum += pts[i];
                    ++cnt;
                }
            }
            if (cnt > 0) res.centers[static_cast<std::size_t>(j)] = sum / static_cast<double>(cnt);
        }
        if (!changed) break;
    }
    return res;
}

HmmModel initial_model_from_kmeans(const std::vector<Eigen::Vector2d>& pts, int c, Rng& rng) {
    const KmeansResult km = kmeans(pts, c, rng);
    HmmModel m;
    m.n_regimes = c;
    m.means.resize(static_cast<std::size_t>(c));
    m.covariances.resize(static_cast<std::size_t>(c));

    Eigen::Matrix2d pooled = Eigen::Matrix2d::Zero();
    Eigen::Vector2d overall = Eigen::Vector2d::Zero();
    for (const auto& p : pts) overall += p;
    overall /= static_cast<double>(pts.size());
    for (const auto& p : pts) pooled += (p - overall) * (p - overall).transpose();
    pooled /= static_cast<double>(pts.size());

    for (int j = 0; j < c; ++j) {
        Eigen::Vector2d mean = Eigen::Vector2d::Zero();
        std::size_t cnt = 0;
        for (std::size_t i = 0; i < pts.size(); ++i)
            if (km.assign[i] == j) {
                mean += pts[i];
                ++cnt;
            }
        if (cnt < 4) {
            // Degenerate cluster; fall back to pooled moments with jitter.
            m.means[static_cast<std::size_t>(j)] =
                overall + Eigen::Vector2d(rng.normal(), rng.normal()) * 0.25 *
                              std::sqrt(std::max(pooled(0, 0), pooled(1, 1)));
            m.covariances[static_cast<std::size_t>(j)] = pooled;
            continue;
        }
        mean /= static_cast<double>(cnt);
        Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
        for (std::size_t i = 0; i < pts.size(); ++i)
            if (km.assign[i] == j) cov += (pts[i] - mean) * (pts[i] - mean).transpose();
        cov /= static_cast<double>(cnt);
        // Ridge keeps the log-Cholesky transform well defined.
        const double ridge = 1e-6 * (pooled(0, 0) + pooled(1, 1)) + 1e-12;
        cov(0, 0) += ridge;
        cov(1, 1) += ridge;
        const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
        if (!(det > 0.0)) {
            cov(0, 1) = cov(1, 0) = 0.0;
        }
        m.means[static_cast<std::size_t>(j)] = mean;
        m.covariances[static_cast<std::size_t>(j)] = cov;
    }

    m.tpm.resize(c, c);
    const double off = c > 1 ? 0.1 / static_cast<double>(c - 1) : 0.0;
    for (int i = 0; i < c; ++i)
        for (int j = 0; j < c; ++j) m.tpm(i, j) = i == j ? 0.9 : off;
    m.initial = stationary_distribution(m.tpm);
    return m;
}

// Deterministic start: split points into c shells by squared Mahalanobis
// distance from the pooled mean, innermost shell first. Variance-ordered
// regimes are the common case in return data, and a distance-quantile split
// assigns every shell a meaningful share of the sample, unlike k-means++,
// whose d^2-weighted seeding likes to hand a center to a few outliers.
HmmModel initial_model_from_shells(const std::vector<Eigen::Vector2d>& pts, int c) {
    const std::size_t n = pts.size();
    HmmModel m;
    m.n_regimes = c;
    m.means.resize(static_cast<std::size_t>(c));
    m.covariances.resize(static_cast<std::size_t>(c));

    Eigen::Matrix2d pooled = Eigen::Matrix2d::Zero();
    Eigen::Vector2d overall = Eigen::Vector2d::Zero();
    for (const auto& p : pts) overall += p;
    overall /= static_cast<double>(n);
    for (const auto& p : pts) pooled += (p - overall) * (p - overall).transpose();
    pooled /= static_cast<double>(n);

    Eigen::Matrix2d metric = Eigen::Matrix2d::Identity();
    const double pdet = pooled(0, 0) * pooled(1, 1) - pooled(0, 1) * pooled(1, 0);
    if (pdet > 0.0 && pooled.allFinite()) metric = pooled.inverse();

    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector2d d = pts[i] - overall;
        d2[i] = d.dot(metric * d);
    }
    std::vector<double> sorted = d2;
    std::sort(sorted.begin(), sorted.end());

    std::vector<int> assign(n);
    for (std::size_t i = 0; i < n; ++i) {
        // Shell index of d2[i] among the sorted distances.
        const std::size_t rank = static_cast<std::size_t>(
            std::lower_bound(sorted.begin(), sorted.end(), d2[i]) - sorted.begin());
        int shell = static_cast<int>((rank * static_cast<std::size_t>(c)) / n);
        assign[i] = std::min(shell, c - 1);
    }

    for (int j = 0; j < c; ++j) {
        Eigen::Vector2d mean = Eigen::Vector2d::Zero();
        std::size_t cnt = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (assign[i] == j) {
                mean += pts[i];
                ++cnt;
            }
        if (cnt < 4) {
            m.means[static_cast<std::size_t>(j)] = overall;
            m.covariances[static_cast<std::size_t>(j)] = pooled;
            continue;
        }
        mean /= static_cast<double>(cnt);
        Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
        for (std::size_t i = 0; i < n; ++i)
            if (assign[i] == j) cov += (pts[i] - mean) * (pts[i] - mean).transpose();
        cov /= static_cast<double>(cnt);
        const double ridge = 1e-6 * (pooled(0, 0) + pooled(1, 1)) + 1e-12;
        cov(0, 0) += ridge;
        cov(1, 1) += ridge;
        const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
        if (!(det > 0.0)) {
            cov(0, 1) = cov(1, 0) = 0.0;
        }
        m.means[static_cast<std::size_t>(j)] = mean;
        m.covariances[static_cast<std::size_t>(j)] = cov;
    }

    m.tpm.resize(c, c);
    const double off = c > 1 ? 0.1 / static_cast<double>(c - 1) : 0.0;
    for (int i = 0; i < c; ++i)
        for (int j = 0; j < c; ++j) m.tpm(i, j) = i == j ? 0.9 : off;
    m.initial = stationary_distribution(m.tpm);
    return m;
}

void sort_states_by_trace(HmmModel& m) {
    const int c = m.n_regimes;
    std::vector<int> order(static_cast<std::size_t>(c));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
        return m.covariances[static_cast<std::size_t>(x)].trace() <
               m.covariances[static_cast<std::size_t>(y)].trace();
    });
    std::vector<Eigen::Vector2d> means(static_cast<std::size_t>(c));
    std::vector<Eigen::Matrix2d> covs(static_cast<std::size_t>(c));
    Eigen::MatrixXd tpm(c, c);
    Eigen::VectorXd init(c);
    for (int i = 0; i < c; ++i) {
        means[static_cast<std::size_t>(i)] = m.means[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        covs[static_cast<std::size_t>(i)] =
            m.covariances[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        init[i] = m.initial[order[static_cast<std::size_t>(i)]];
        for (int j = 0; j < c; ++j)
            tpm(i, j) = m.tpm(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    m.means = std::move(means);
    m.covariances = std::move(covs);
    m.tpm = std::move(tpm);
    m.initial = std::move(init);
}

// Natural parameter vector used for reporting and standard errors.
void natural_parameters(const HmmModel& m, std::vector<std::string>* names,
                        std::vector<double>* values) {
    const int c = m.n_regimes;
    names->clear();
    values->clear();
    for (int i = 0; i < c; ++i) {
        const auto s = std::to_string(i + 1);
        names->push_back("mean_a_" + s);
        values->push_back(m.means[static_cast<std::size_t>(i)][0]);
        names->push_back("mean_b_" + s);
        values->push_back(m.means[static_cast<std::size_t>(i)][1]);
    }
    for (int i = 0; i < c; ++i) {
        const auto s = std::to_string(i + 1);
        const auto& cov = m.covariances[static_cast<std::size_t>(i)];
        names->push_back("cov_aa_" + s);
        values->push_back(cov(0, 0));
        names->push_back("cov_ab_" + s);
        values->push_back(cov(0, 1));
        names->push_back("cov_bb_" + s);
        values->push_back(cov(1, 1));
    }
    for (int i = 0; i < c; ++i)
        for (int j = 0; j < c; ++j) {
            names->push_back("tpm_" + std::to_string(i + 1) + "_" + std::to_string(j + 1));
            values->push_back(m.tpm(i, j));
        }
    for (int i = 0; i < c; ++i) {
        names->push_back("initial_" + std::to_string(i + 1));
        values->push_back(m.initial[i]);
    }
}

HmmFit fit_single_regime(const ReturnSeries& data) {
    // Closed-form Gaussian MLE on the observed rows.
    const auto xa = data.observed_a();
    const auto xb = data.observed_b();
    const auto n = static_cast<double>(xa.size());
    HmmModel m;
    m.n_regimes = 1;
    Eigen::Vector2d mean(stats::mean(xa), stats::mean(xb));
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (std::size_t i = 0; i < xa.size(); ++i) {
        const Eigen::Vector2d d(xa[i] - mean[0], xb[i] - mean[1]);
        cov += d * d.transpose();
    }
    cov /= n;
    m.means = {mean};
    m.covariances = {cov};
    m.tpm = Eigen::MatrixXd::Ones(1, 1);
    m.initial = Eigen::VectorXd::Ones(1);

    HmmFit fit;
    fit.model = m;
    fit.loglik = hmm_loglik(m, data);
    fit.n_params = hmm_param::count(1, false);
    fit.aic = -2.0 * fit.loglik + 2.0 * fit.n_params;
    fit.bic = -2.0 * fit.loglik + fit.n_params * std::log(n);
    fit.converged = true;
    natural_parameters(m, &fit.param_names, &fit.estimates);
    return fit;
}

}  // namespace

HmmFit fit_hmm(const ReturnSeries& data, int n_regimes, const HmmOptions& opts) {
    data.validate();
    if (n_regimes < 1) throw ValidationError("fit_hmm: n_regimes must be >= 1");
    const std::size_t n_obs = data.n_observed();
    if (n_obs < static_cast<std::size_t>(5 * n_regimes) || n_obs < 8)
        throw ValidationError("fit_hmm: too few observed rows for the requested regime count");
    if (n_regimes == 1) return fit_single_regime(data);

    const int c = n_regimes;
    std::vector<Eigen::Vector2d> pts;
    pts.reserve(n_obs);
    for (std::size_t t = 0; t < data.size(); ++t)
        if (!data.is_missing(t)) pts.emplace_back(data.a[t], data.b[t]);

    const bool free_initial = opts.estimate_initial;
    auto negloglik = [&](const Eigen::VectorXd& w) -> double {
        HmmModel m;
        try {
            m = hmm_param::unpack(w, c, free_initial);
        } catch (const Error&) {
            return kInf;
        }
        const auto dens = make_densities(m);
        if (dens.empty()) return kInf;
        const double ll = forward_loglik(dens, m.tpm, m.initial, data);
        return std::isfinite(ll) ? -ll : kInf;
    };
    const optim::FGrad fg = optim::with_fd_gradient(negloglik);

    optim::Options oopts;
    oopts.max_iter = opts.max_iter;
    oopts.grad_tol = opts.grad_tol;
    oopts.rel_f_tol = opts.rel_f_tol;

    const int n_starts = std::max(1, opts.restarts + 1);
    struct StartOutcome {
        optim::Result result;
        bool ok = false;
    };
    std::vector<StartOutcome> outcomes(static_cast<std::size_t>(n_starts));
    parallel_for(
        static_cast<std::size_t>(n_starts),
        [&](std::size_t s) {
            Rng rng = Rng::stream(opts.seed, s);
            // Start 0 is the deterministic shell split; restarts explore with
            // k-means++ seeding plus jitter.
            HmmModel init =
                s == 0 ? initial_model_from_shells(pts, c) : initial_model_from_kmeans(pts, c, rng);
            Eigen::VectorXd w0;
            try {
                w0 = hmm_param::pack(init, false);
            } catch (const Error&) {
                return;
            }
            if (free_initial) {
                Eigen::VectorXd w(hmm_param::count(c, true));
                w.head(w0.size()) = w0;
                w.tail(c - 1).setZero();
                w0 = w;
            }
            if (s > 0) {
                // Perturb the non-mean blocks lightly; means move with k-means.
                for (Eigen::Index i = 2 * c; i < w0.size(); ++i) w0[i] += 0.2 * rng.normal();
            }
            try {
                StartOutcome out;
                out.result = optim::minimize(fg, w0, oopts);
                out.ok = std::isfinite(out.result.f);
                outcomes[s] = std::move(out);
            } catch (const Error&) {
                // This start failed; others may still succeed.
            }
        },
        opts.threads);

    const StartOutcome* best = nullptr;
    for (const auto& o : outcomes)
        if (o.ok && (best == nullptr || o.result.f < best->result.f)) best = &o;
    if (best == nullptr) throw NumericalError("fit_hmm: all optimization starts failed");

    HmmFit fit;
    fit.model = hmm_param::unpack(best->result.x, c, free_initial);
    sort_states_by_trace(fit.model);
    fit.loglik = -best->result.f;
    fit.n_params = hmm_param::count(c, free_initial);
    fit.aic = -2.0 * fit.loglik + 2.0 * fit.n_params;
    fit.bic = -2.0 * fit.loglik + fit.n_params * std::log(static_cast<double>(n_obs));
    fit.converged = best->result.converged;
    fit.initial_estimated = free_initial;
    if (!fit.converged) fit.warnings.push_back("optimizer did not meet convergence tolerances");
    natural_parameters(fit.model, &fit.param_names, &fit.estimates);

    if (opts.standard_errors) {
        // Delta method: covariance of working parameters from the inverse
        // Hessian, pushed through the Jacobian of the natural map.
        const Eigen::VectorXd w_hat = hmm_param::pack(fit.model, free_initial);
        const Eigen::MatrixXd hess = optim::fd_hessian(negloglik, w_hat, 1e-4);
        bool ok = hess.allFinite();
        Eigen::MatrixXd cov_w;
        if (ok) {
            Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
            ok = ldlt.info() == Eigen::Success && ldlt.isPositive();
            if (ok) {
                cov_w = ldlt.solve(Eigen::MatrixXd::Identity(hess.rows(), hess.cols()));
                ok = cov_w.allFinite();
            }
        }
        if (ok) {
            auto natural_of = [&](const Eigen::VectorXd& w) {
                const HmmModel m = hmm_param::unpack(w, c, free_initial);
                std::vector<std::string> names;
                std::vector<double> vals;
                natural_parameters(m, &names, &vals);
                return Eigen::Map<const Eigen::VectorXd>(vals.data(),
                                                         static_cast<Eigen::Index>(vals.size()))
                    .eval();
            };
            const Eigen::VectorXd base = natural_of(w_hat);
            Eigen::MatrixXd jac(base.size(), w_hat.size());
            Eigen::VectorXd wp = w_hat;
            for (Eigen::Index j = 0; j < w_hat.size(); ++j) {
                const double h = 1e-6 * (1.0 + std::fabs(w_hat[j]));
                const double orig = wp[j];
                wp[j] = orig + h;
                const Eigen::VectorXd fp = natural_of(wp);
                wp[j] = orig - h;
                const Eigen::VectorXd fm = natural_of(wp);
                wp[j] = orig;
                jac.col(j) = (fp - fm) / (2.0 * h);
            }
            const Eigen::MatrixXd cov_nat = jac * cov_w * jac.transpose();
            fit.std_errors.resize(static_cast<std::size_t>(base.size()));
            bool any_bad = false;
            for (Eigen::Index i = 0; i < base.size(); ++i) {
                const double v = cov_nat(i, i);
                if (v >= 0.0) {
                    fit.std_errors[static_cast<std::size_t>(i)] = std::sqrt(v);
                } else if (v > -1e-12) {
                    fit.std_errors[static_cast<std::size_t>(i)] = 0.0;
                } else {
                    any_bad = true;
                    fit.std_errors[static_cast<std::size_t>(i)] =
                        std::numeric_limits<double>::quiet_NaN();
                }
            }
            fit.se_valid = !any_bad;
            if (any_bad)
                fit.warnings.push_back("negative variance in the delta-method covariance");
        } else {
            fit.warnings.push_back("information matrix not positive definite; no standard errors");
        }
    }
    return fit;
}

ReturnSeries simulate_hmm(const HmmModel& model, std::size_t n, std::uint64_t seed,
                          std::vector<int>* states) {
    model.validate();
    if (n == 0) throw ValidationError("simulate_hmm: n must be positive");
    const int c = model.n_regimes;
    Rng rng(seed);

    std::vector<Eigen::Matrix2d> chol(static_cast<std::size_t>(c));
    for (int i = 0; i < c; ++i) {
        const auto& cov = model.covariances[static_cast<std::size_t>(i)];
        const double l11 = std::sqrt(cov(0, 0));
        const double l21 = cov(0, 1) / l11;
        const double arg = cov(1, 1) - l21 * l21;
        if (!(arg > 0.0)) throw NumericalError("simulate_hmm: covariance not positive definite");
        Eigen::Matrix2d l;
        l << l11, 0.0, l21, std::sqrt(arg);
        chol[static_cast<std::size_t>(i)] = l;
    }

    auto draw_state = [&](const Eigen::VectorXd& probs) {
        const double u = rng.uniform();
        double acc = 0.0;
        for (int i = 0; i < c; ++i) {
            acc += probs[i];
            if (u < acc) return i;
        }
        return c - 1;
    };

    ReturnSeries out;
    out.a.resize(n);
    out.b.resize(n);
    out.labels.resize(n);
    if (states != nullptr) states->resize(n);
    int s = draw_state(model.initial);
    for (std::size_t t = 0; t < n; ++t) {
        if (t > 0) s = draw_state(model.tpm.row(s).transpose());
        const Eigen::Vector2d z(rng.normal(), rng.normal());
        const Eigen::Vector2d x =
            model.means[static_cast<std::size_t>(s)] + chol[static_cast<std::size_t>(s)] * z;
        out.a[t] = x[0];
        out.b[t] = x[1];
        out.labels[t] = s + 1;
        if (states != nullptr) (*states)[t] = s + 1;
    }
    return out;
}

std::string hmm_to_json(const HmmFit& fit) {
    const int c = fit.model.n_regimes;
    nlohmann::json regimes = nlohmann::json::array();
    for (int i = 0; i < c; ++i) {
        const auto& cov = fit.model.covariances[static_cast<std::size_t>(i)];
        regimes.push_back(
            {{"mean", {fit.model.means[static_cast<std::size_t>(i)][0],
                       fit.model.means[static_cast<std::size_t>(i)][1]}},
             {"covariance",
              {{cov(0, 0), cov(0, 1)}, {cov(1, 0), cov(1, 1)}}}});
    }
    nlohmann::json tpm = nlohmann::json::array();
    for (int i = 0; i < c; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int j = 0; j < c; ++j) row.push_back(fit.model.tpm(i, j));
        tpm.push_back(row);
    }
    nlohmann::json initial = nlohmann::json::array();
    for (int i = 0; i < c; ++i) initial.push_back(fit.model.initial[i]);

    nlohmann::json params = nlohmann::json::array();
    for (std::size_t i = 0; i < fit.param_names.size(); ++i) {
        nlohmann::json entry{{"name", fit.param_names[i]}, {"estimate", fit.estimates[i]}};
        if (fit.se_valid)
            entry["std_error"] = fit.std_errors[i];
        else
            entry["std_error"] = nullptr;
        params.push_back(entry);
    }

    nlohmann::json j{{"n_regimes", c},
                     {"regimes", regimes},
                     {"tpm", tpm},
                     {"initial", initial},
                     {"initial_estimated", fit.initial_estimated},
                     {"loglik", fit.loglik},
                     {"n_params", fit.n_params},
                     {"aic", fit.aic},
                     {"bic", fit.bic},
                     {"converged", fit.converged},
                     {"parameters", params},
                     {"warnings", fit.warnings}};
    return j.dump(2) + "\n";
}

}  // namespace reglgc
