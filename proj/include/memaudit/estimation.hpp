#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "memaudit/canary.hpp"
#include "memaudit/model.hpp"
#include "memaudit/perplexity.hpp"
#include "memaudit/rng.hpp"

namespace memaudit {

/// Standard normal CDF, accurate to full double precision in both tails.
double norm_cdf(double x);

/// log of norm_cdf, finite for any representable x (asymptotic expansion
/// in the far left tail where the CDF itself underflows).
double log_norm_cdf(double x);

/// Owen's T function T(h, a) = (1/2pi) Int_0^a exp(-h^2(1+x^2)/2)/(1+x^2) dx,
/// by adaptive quadrature after reducing |a| <= 1 with the standard
/// identity. Absolute error <= 1e-10 (internally targeted at 1e-13).
double owens_t(double h, double a);

/// Location / scale / shape parameterization.
struct SkewNormalParams {
    double location = 0.0; // xi
    double scale = 1.0;    // omega, > 0
    double shape = 0.0;    // alpha

    double delta() const;    // alpha / sqrt(1 + alpha^2)
    double mean() const;     // xi + omega * delta * sqrt(2/pi)
    double variance() const; // omega^2 * (1 - 2 delta^2 / pi)
    double skewness() const; // gamma_1, bounded by ~0.99527
};

double skew_normal_pdf(const SkewNormalParams& params, double x);

/// CDF(x) = Phi(z) - 2 T(z, alpha), z = (x - location)/scale. When that
/// expression cancels below 1e-10 the density itself is integrated over
/// the tail instead, keeping relative accuracy down to the underflow
/// floor (~1e-300), below which 0 is returned.
double skew_normal_cdf(const SkewNormalParams& params, double x);

/// Draw via the two-normal representation: delta|z0| + sqrt(1-delta^2) z1.
double sample_skew_normal(const SkewNormalParams& params, Rng& rng);

/// Log-perplexities of m uniform draws from R (with replacement).
/// Infinite values (zero-probability tokens) are excluded from `values`
/// and counted. Draw i uses its own generator seeded from (seed, i), so
/// results are independent of worker count.
struct PerplexitySample {
    std::vector<double> values; // finite Px draws, bits
    std::uint64_t seed = 0;
    std::size_t requested = 0; // m
    std::size_t infinite_count = 0;

    std::size_t total() const { return values.size() + infinite_count; }
};

struct SampleOptions {
    ScoringMode mode = ScoringMode::FullSequence;
    std::vector<TokenId> context;
    unsigned jobs = 1;
};

PerplexitySample sample_perplexities(const SequenceModel& model, const BoundFormat& bound,
                                     std::size_t m, std::uint64_t seed,
                                     const SampleOptions& options = {});

/// Method of moments (sample skewness clamped to the attainable |gamma_1|
/// <= 0.9952), refined by maximum likelihood (Nelder-Mead, multi-start).
/// The returned parameters' implied mean and variance match the sample's
/// within 2%; when the likelihood refinement drifts further, the shape is
/// kept and location/scale are re-solved from the sample moments.
/// Refuses degenerate samples (zero variance, m < 30, or more than 1%
/// infinite draws) with FitError.
SkewNormalParams fit_skew_normal(const PerplexitySample& sample);

struct KsResult {
    double statistic = 0.0; // D = sup |ECDF - CDF|
    double p_value = 1.0;   // asymptotic Kolmogorov distribution of sqrt(m) D
};

KsResult ks_test(const PerplexitySample& sample, const SkewNormalParams& params);

enum class ExposureMethod { Exact, Sampling, Extrapolation };

struct ExposureEstimate {
    double bits = 0.0;
    ExposureMethod method = ExposureMethod::Sampling;
    std::size_t sample_size = 0;

    // sampling method
    bool saturated = false; // no sampled Px at or below the target
    double unsmoothed = std::numeric_limits<double>::quiet_NaN();

    // extrapolation method
    bool exceeds_space = false; // estimate above log2 |R| (no upper bound)
    bool underflow = false;     // CDF below 1e-300; bits is a lower bound
    double ks_statistic = std::numeric_limits<double>::quiet_NaN();
    double ks_p = std::numeric_limits<double>::quiet_NaN();
};

/// Monte Carlo rank estimate -log2((hits + 1)/(m + 1)), add-one
/// smoothed so the all-miss case stays finite (then flagged saturated).
/// `unsmoothed` carries -log2(hits/m), infinite when hits = 0.
ExposureEstimate sampling_exposure(const PerplexitySample& sample, double target_px);

/// -log2 CDF(target). Unbounded above; when log2_space is supplied the
/// estimate is flagged if it exceeds it. CDF underflow is reported as
/// -log2(1e-300) ~ 996.58 bits with the underflow flag set.
ExposureEstimate extrapolated_exposure(const SkewNormalParams& params, double target_px,
                                       double log2_space = std::numeric_limits<double>::quiet_NaN());

/// Convenience: fit + KS diagnostics + extrapolate in one call.
ExposureEstimate extrapolated_exposure(const PerplexitySample& sample, double target_px,
                                       double log2_space = std::numeric_limits<double>::quiet_NaN());

} // namespace memaudit
