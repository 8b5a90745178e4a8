#include "memaudit/estimation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <thread>

namespace memaudit {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kSqrt2Pi = 2.50662827463100050242;
constexpr double kMaxAttainableSkewness = 0.9952; // |gamma_1| < 0.99527 for any shape

template <class F>
double simpson_rec(const F& f, double a, double b, double fa, double fm, double fb, double whole,
                   double eps, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * eps) return left + right + delta / 15.0;
    return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1) +
           simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1);
}

template <class F>
double adaptive_simpson(const F& f, double a, double b, double eps) {
    const double fa = f(a);
    const double fb = f(b);
    const double m = 0.5 * (a + b);
    const double fm = f(m);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_rec(f, a, b, fa, fm, fb, whole, eps, 48);
}

// T(h, a) for 0 <= a <= 1, h >= 0, by quadrature of the defining integral.
double owens_t_core(double h, double a) {
    if (a == 0.0) return 0.0;
    const double h2 = 0.5 * h * h;
    const auto f = [h2](double x) {
        return std::exp(-h2 * (1.0 + x * x)) / (1.0 + x * x) / (2.0 * kPi);
    };
    return adaptive_simpson(f, 0.0, a, 1e-13);
}

} // namespace

double norm_cdf(double x) { return 0.5 * std::erfc(-x * 0.70710678118654752440); }

double log_norm_cdf(double x) {
    if (x > -36.0) {
        return std::log(0.5 * std::erfc(-x * 0.70710678118654752440));
    }
    // asymptotic expansion of the Mills ratio in the far left tail
    const double x2 = x * x;
    return -0.5 * x2 - std::log(-x) - 0.5 * std::log(2.0 * kPi) +
           std::log1p(-1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2));
}

double owens_t(double h, double a) {
    if (a == 0.0 || std::isnan(a) || std::isnan(h)) return 0.0;
    const double sign = a < 0.0 ? -1.0 : 1.0;
    const double aa = std::abs(a);
    const double hh = std::abs(h); // T is even in h
    if (aa <= 1.0) return sign * owens_t_core(hh, aa);
    // reduction to a <= 1: T(h,a) = (Phi(h) + Phi(ah))/2 - Phi(h)Phi(ah) - T(ah, 1/a)
    const double ph = norm_cdf(hh);
    const double pah = norm_cdf(aa * hh);
    const double t = 0.5 * (ph + pah) - ph * pah - owens_t_core(aa * hh, 1.0 / aa);
    return sign * t;
}

double SkewNormalParams::delta() const { return shape / std::sqrt(1.0 + shape * shape); }

double SkewNormalParams::mean() const {
    return location + scale * delta() * std::sqrt(2.0 / kPi);
}

double SkewNormalParams::variance() const {
    const double d = delta();
    return scale * scale * (1.0 - 2.0 * d * d / kPi);
}

double SkewNormalParams::skewness() const {
    const double c = delta() * std::sqrt(2.0 / kPi);
    const double v = 1.0 - c * c;
    return (4.0 - kPi) / 2.0 * c * c * c / (v * std::sqrt(v));
}

double skew_normal_pdf(const SkewNormalParams& params, double x) {
    const double z = (x - params.location) / params.scale;
    return 2.0 / params.scale * std::exp(-0.5 * z * z) / kSqrt2Pi * norm_cdf(params.shape * z);
}

namespace {

// standardized density 2 phi(t) Phi(alpha t)
double std_skew_pdf(double alpha, double t) {
    return 2.0 * std::exp(-0.5 * t * t) / kSqrt2Pi * norm_cdf(alpha * t);
}

// Deep-tail CDF at standardized z where Phi(z) - 2T(z, alpha) cancels:
// integrate the density over [z - 12, z]; the mass below that window is
// smaller by a factor exp(-12|z|) and negligible at any z this is used for.
double tail_cdf(double alpha, double z) {
    const double top = std_skew_pdf(alpha, z);
    if (top <= 0.0) return 0.0;
    const auto f = [alpha](double t) { return std_skew_pdf(alpha, t); };
    const double eps = std::max(top * 12.0 * 1e-15, 1e-320);
    const double v = adaptive_simpson(f, z - 12.0, z, eps);
    return std::max(v, 0.0);
}

} // namespace

double skew_normal_cdf(const SkewNormalParams& params, double x) {
    if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
    const double z = (x - params.location) / params.scale;
    if (params.shape == 0.0) return norm_cdf(z);
    const double direct = norm_cdf(z) - 2.0 * owens_t(z, params.shape);
    if (direct >= 1e-10) return std::min(direct, 1.0);
    return tail_cdf(params.shape, z);
}

double sample_skew_normal(const SkewNormalParams& params, Rng& rng) {
    const double d = params.delta();
    const double z0 = rng.next_normal();
    const double z1 = rng.next_normal();
    return params.location + params.scale * (d * std::abs(z0) + std::sqrt(1.0 - d * d) * z1);
}

PerplexitySample sample_perplexities(const SequenceModel& model, const BoundFormat& bound,
                                     std::size_t m, std::uint64_t seed,
                                     const SampleOptions& options) {
    if (m < 2) throw ConfigError("sample_perplexities: m must be >= 2");

    // The literal prefix before the first hole is identical for every
    // candidate; score it once. Summation order matches score_candidate
    // exactly, so the values are bit-identical to one-shot scoring.
    const std::size_t start = bound.hole_positions().front();
    std::vector<bool> is_hole(bound.token_length(), false);
    for (std::size_t pos : bound.hole_positions()) is_hole[pos] = true;

    std::vector<TokenId> shared_prefix(options.context.begin(), options.context.end());
    double shared_weight = 0.0;
    {
        std::vector<double> dist(model.vocab().size());
        for (std::size_t i = 0; i < start; ++i) {
            const TokenId tok = bound.template_tokens()[i];
            if (options.mode == ScoringMode::FullSequence) {
                model.next_token_distribution(shared_prefix, dist);
                shared_weight += -std::log2(dist[tok]);
            }
            shared_prefix.push_back(tok);
        }
    }

    std::vector<double> raw(m);
    const auto score_index = [&](std::size_t index, std::vector<TokenId>& prefix,
                                 std::vector<TokenId>& tokens, std::vector<double>& dist) {
        Rng rng(mix_seed(seed, index));
        Randomness r(bound.hole_positions().size());
        for (std::size_t hole = 0; hole < r.size(); ++hole) {
            r[hole] =
                static_cast<std::uint32_t>(rng.next_below(bound.hole_alphabets()[hole].size()));
        }
        bound.fill(r, tokens);
        prefix.assign(shared_prefix.begin(), shared_prefix.end());
        double px = shared_weight;
        for (std::size_t i = start; i < tokens.size(); ++i) {
            if (options.mode == ScoringMode::FullSequence || is_hole[i]) {
                model.next_token_distribution(prefix, dist);
                px += -std::log2(dist[tokens[i]]);
            }
            prefix.push_back(tokens[i]);
        }
        raw[index] = px;
    };

    const unsigned jobs = std::max(1u, options.jobs);
    if (jobs == 1) {
        std::vector<TokenId> prefix;
        std::vector<TokenId> tokens(bound.token_length());
        std::vector<double> dist(model.vocab().size());
        for (std::size_t i = 0; i < m; ++i) score_index(i, prefix, tokens, dist);
    } else {
        std::vector<std::thread> threads;
        threads.reserve(jobs);
        for (unsigned w = 0; w < jobs; ++w) {
            threads.emplace_back([&, w] {
                std::vector<TokenId> prefix;
                std::vector<TokenId> tokens(bound.token_length());
                std::vector<double> dist(model.vocab().size());
                for (std::size_t i = w; i < m; i += jobs) score_index(i, prefix, tokens, dist);
            });
        }
        for (auto& t : threads) t.join();
    }

    PerplexitySample sample;
    sample.seed = seed;
    sample.requested = m;
    sample.values.reserve(m);
    for (double v : raw) {
        if (std::isfinite(v)) {
            sample.values.push_back(v);
        } else {
            ++sample.infinite_count;
        }
    }
    return sample;
}

namespace {

struct Moments {
    double mean = 0.0;
    double variance = 0.0;
    double skewness = 0.0;
};

Moments sample_moments(const std::vector<double>& values) {
    const double n = static_cast<double>(values.size());
    Moments mom;
    for (double v : values) mom.mean += v;
    mom.mean /= n;
    double m2 = 0.0;
    double m3 = 0.0;
    for (double v : values) {
        const double d = v - mom.mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= n;
    m3 /= n;
    mom.variance = m2;
    mom.skewness = m2 > 0.0 ? m3 / (m2 * std::sqrt(m2)) : 0.0;
    return mom;
}

// Inverts the moment equations: given (mean, variance, skewness), returns
// the (location, scale, shape) producing exactly those moments.
SkewNormalParams params_from_moments(double mean, double variance, double skewness) {
    const double g = std::clamp(skewness, -kMaxAttainableSkewness, kMaxAttainableSkewness);
    SkewNormalParams p;
    if (g == 0.0) {
        p.shape = 0.0;
    } else {
        const double q = std::pow(2.0 * std::abs(g) / (4.0 - kPi), 2.0 / 3.0);
        const double c2 = q / (1.0 + q); // c = delta * sqrt(2/pi)
        const double d2 = std::min(c2 * kPi / 2.0, 1.0 - 1e-12);
        const double d = std::sqrt(d2) * (g < 0.0 ? -1.0 : 1.0);
        p.shape = d / std::sqrt(1.0 - d2);
    }
    const double d = p.delta();
    p.scale = std::sqrt(variance / (1.0 - 2.0 * d * d / kPi));
    p.location = mean - p.scale * d * std::sqrt(2.0 / kPi);
    return p;
}

double negative_log_likelihood(const std::vector<double>& values, const SkewNormalParams& p) {
    if (!(p.scale > 0.0) || !std::isfinite(p.scale) || !std::isfinite(p.location) ||
        !std::isfinite(p.shape)) {
        return 1e300;
    }
    const double log_norm = std::log(2.0) - std::log(p.scale) - 0.5 * std::log(2.0 * kPi);
    double nll = 0.0;
    for (double v : values) {
        const double z = (v - p.location) / p.scale;
        nll -= log_norm - 0.5 * z * z + log_norm_cdf(p.shape * z);
    }
    return std::isfinite(nll) ? nll : 1e300;
}

// Nelder-Mead over (location, log scale, shape).
SkewNormalParams nelder_mead_fit(const std::vector<double>& values, const SkewNormalParams& init,
                                 double loc_step) {
    using Point = std::array<double, 3>;
    const auto unpack = [](const Point& x) {
        SkewNormalParams p;
        p.location = x[0];
        p.scale = std::exp(x[1]);
        p.shape = x[2];
        return p;
    };
    const auto eval = [&](const Point& x) { return negative_log_likelihood(values, unpack(x)); };

    std::array<Point, 4> simplex;
    simplex[0] = {init.location, std::log(init.scale), init.shape};
    simplex[1] = simplex[0];
    simplex[1][0] += loc_step;
    simplex[2] = simplex[0];
    simplex[2][1] += 0.2;
    simplex[3] = simplex[0];
    simplex[3][2] += 0.75;

    std::array<double, 4> f;
    for (int i = 0; i < 4; ++i) f[i] = eval(simplex[i]);

    const int max_iter = 400;
    for (int iter = 0; iter < max_iter; ++iter) {
        std::array<int, 4> idx = {0, 1, 2, 3};
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return f[a] < f[b]; });
        const int best = idx[0];
        const int worst = idx[3];
        const int second_worst = idx[2];

        if (std::abs(f[worst] - f[best]) <= 1e-10 * (std::abs(f[best]) + 1.0)) break;

        Point centroid = {0, 0, 0};
        for (int i = 0; i < 4; ++i) {
            if (i == worst) continue;
            for (int k = 0; k < 3; ++k) centroid[k] += simplex[i][k] / 3.0;
        }
        const auto blend = [&](double coef) {
            Point x;
            for (int k = 0; k < 3; ++k) {
                x[k] = centroid[k] + coef * (simplex[worst][k] - centroid[k]);
            }
            return x;
        };

        const Point reflected = blend(-1.0);
        const double fr = eval(reflected);
        if (fr < f[best]) {
            const Point expanded = blend(-2.0);
            const double fe = eval(expanded);
            if (fe < fr) {
                simplex[worst] = expanded;
                f[worst] = fe;
            } else {
                simplex[worst] = reflected;
                f[worst] = fr;
            }
        } else if (fr < f[second_worst]) {
            simplex[worst] = reflected;
            f[worst] = fr;
        } else {
            const Point contracted = blend(fr < f[worst] ? -0.5 : 0.5);
            const double fc = eval(contracted);
            if (fc < std::min(fr, f[worst])) {
                simplex[worst] = contracted;
                f[worst] = fc;
            } else {
                // shrink toward the best vertex
                for (int i = 0; i < 4; ++i) {
                    if (i == best) continue;
                    for (int k = 0; k < 3; ++k) {
                        simplex[i][k] = simplex[best][k] + 0.5 * (simplex[i][k] - simplex[best][k]);
                    }
                    f[i] = eval(simplex[i]);
                }
            }
        }
    }

    int best = 0;
    for (int i = 1; i < 4; ++i) {
        if (f[i] < f[best]) best = i;
    }
    return unpack(simplex[best]);
}

} // namespace

SkewNormalParams fit_skew_normal(const PerplexitySample& sample) {
    const std::size_t total = sample.total();
    if (total < 30 || sample.values.size() < 30) {
        throw FitError("fit requires at least 30 finite samples");
    }
    if (sample.infinite_count * 100 > total) {
        throw FitError("more than 1% of sampled perplexities are infinite; "
                       "a continuous fit cannot represent them");
    }
    const Moments mom = sample_moments(sample.values);
    const double sd = std::sqrt(std::max(mom.variance, 0.0));
    // An all-equal sample can still carry ~1e-13 relative variance from
    // rounding in the running mean, so "zero" is a relative threshold.
    if (!(sd > 1e-8 * std::max(std::abs(mom.mean), 1.0))) {
        throw FitError("degenerate sample: zero variance");
    }

    const SkewNormalParams mom_fit = params_from_moments(mom.mean, mom.variance, mom.skewness);

    SkewNormalParams normal_start;
    normal_start.location = mom.mean;
    normal_start.scale = sd;
    normal_start.shape = 0.0;

    SkewNormalParams best = mom_fit;
    double best_nll = negative_log_likelihood(sample.values, best);
    for (const SkewNormalParams& start : {mom_fit, normal_start}) {
        const SkewNormalParams refined = nelder_mead_fit(sample.values, start, 0.1 * sd);
        const double nll = negative_log_likelihood(sample.values, refined);
        if (nll < best_nll) {
            best_nll = nll;
            best = refined;
        }
    }

    // Contract: implied mean/variance stay within 2% of the sample's. If
    // the likelihood stage drifted, keep its shape and re-solve location
    // and scale from the sample moments (which satisfies this exactly).
    const bool mean_ok =
        std::abs(best.mean() - mom.mean) <= 0.02 * std::max(std::abs(mom.mean), sd);
    const bool var_ok = std::abs(best.variance() - mom.variance) <= 0.02 * mom.variance;
    if (!mean_ok || !var_ok) {
        const double d = best.delta();
        SkewNormalParams profiled = best;
        profiled.scale = std::sqrt(mom.variance / (1.0 - 2.0 * d * d / kPi));
        profiled.location = mom.mean - profiled.scale * d * std::sqrt(2.0 / kPi);
        best = profiled;
    }
    return best;
}

namespace {

// Survival function of the Kolmogorov distribution, Q(lambda) =
// 2 sum_k (-1)^{k-1} exp(-2 k^2 lambda^2), with the theta-function form
// for small lambda where that series converges slowly.
double kolmogorov_q(double lambda) {
    if (lambda <= 0.0) return 1.0;
    if (lambda < 0.3) {
        const double t = kPi * kPi / (8.0 * lambda * lambda);
        double p = 0.0;
        for (int j = 1; j <= 7; j += 2) p += std::exp(-static_cast<double>(j * j) * t);
        p *= std::sqrt(2.0 * kPi) / lambda;
        return std::clamp(1.0 - p, 0.0, 1.0);
    }
    double q = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= 1000; ++k) {
        const double term = std::exp(-2.0 * static_cast<double>(k) * k * lambda * lambda);
        q += sign * term;
        sign = -sign;
        if (term < 1e-16) break;
    }
    return std::clamp(2.0 * q, 0.0, 1.0);
}

} // namespace

KsResult ks_test(const PerplexitySample& sample, const SkewNormalParams& params) {
    if (sample.values.size() < 30) throw FitError("ks_test requires at least 30 finite samples");
    std::vector<double> sorted = sample.values;
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const double cdf = skew_normal_cdf(params, sorted[i]);
        d = std::max(d, cdf - static_cast<double>(i) / n);
        d = std::max(d, static_cast<double>(i + 1) / n - cdf);
    }
    KsResult result;
    result.statistic = d;
    result.p_value = kolmogorov_q(std::sqrt(n) * d);
    return result;
}

ExposureEstimate sampling_exposure(const PerplexitySample& sample, double target_px) {
    const std::size_t total = sample.total();
    if (total == 0) throw ConfigError("sampling_exposure: empty sample");
    std::size_t hits = 0;
    for (double v : sample.values) {
        if (v <= target_px) ++hits;
    }
    if (std::isinf(target_px) && target_px > 0) hits += sample.infinite_count;

    ExposureEstimate est;
    est.method = ExposureMethod::Sampling;
    est.sample_size = total;
    est.saturated = hits == 0;
    est.bits = -std::log2((static_cast<double>(hits) + 1.0) / (static_cast<double>(total) + 1.0));
    if (est.bits == 0.0) est.bits = 0.0; // never -0
    est.unsmoothed = hits == 0 ? std::numeric_limits<double>::infinity()
                               : -std::log2(static_cast<double>(hits) / static_cast<double>(total));
    if (est.unsmoothed == 0.0) est.unsmoothed = 0.0;
    return est;
}

ExposureEstimate extrapolated_exposure(const SkewNormalParams& params, double target_px,
                                       double log2_space) {
    ExposureEstimate est;
    est.method = ExposureMethod::Extrapolation;
    const double cdf = std::min(skew_normal_cdf(params, target_px), 1.0);
    if (cdf < 1e-300) {
        est.bits = -std::log2(1e-300); // ~996.58; true value is at least this
        est.underflow = true;
    } else {
        est.bits = std::max(-std::log2(cdf), 0.0);
        if (est.bits == 0.0) est.bits = 0.0; // never -0
    }
    if (std::isfinite(log2_space) && est.bits > log2_space) est.exceeds_space = true;
    return est;
}

ExposureEstimate extrapolated_exposure(const PerplexitySample& sample, double target_px,
                                       double log2_space) {
    const SkewNormalParams params = fit_skew_normal(sample);
    const KsResult ks = ks_test(sample, params);
    ExposureEstimate est = extrapolated_exposure(params, target_px, log2_space);
    est.sample_size = sample.total();
    est.ks_statistic = ks.statistic;
    est.ks_p = ks.p_value;
    return est;
}

} // namespace memaudit
