#include "memaudit/perplexity.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace memaudit {

double log_perplexity(const SequenceModel& model, std::span<const TokenId> sequence,
                      std::span<const TokenId> context) {
    std::vector<TokenId> prefix(context.begin(), context.end());
    std::vector<double> dist(model.vocab().size());
    double px = 0.0;
    for (TokenId tok : sequence) {
        if (tok >= model.vocab().size()) throw InvalidToken("sequence token out of vocabulary");
        model.next_token_distribution(prefix, dist);
        px += -std::log2(dist[tok]);
        prefix.push_back(tok);
    }
    return px;
}

namespace {

// Shared walk logic: scores tokens in position order so a candidate's value
// is bit-identical whether computed alone or as a leaf of the rank walk.
struct HoleMask {
    std::vector<bool> is_hole;

    explicit HoleMask(const BoundFormat& bound) : is_hole(bound.token_length(), false) {
        for (std::size_t pos : bound.hole_positions()) is_hole[pos] = true;
    }
};

double score_tokens(const SequenceModel& model, std::span<const TokenId> tokens,
                    const HoleMask& mask, ScoringMode mode, std::span<const TokenId> context) {
    std::vector<TokenId> prefix(context.begin(), context.end());
    std::vector<double> dist(model.vocab().size());
    double px = 0.0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (mode == ScoringMode::FullSequence || mask.is_hole[i]) {
            model.next_token_distribution(prefix, dist);
            px += -std::log2(dist[tokens[i]]);
        }
        prefix.push_back(tokens[i]);
    }
    return px;
}

// Depth-first enumeration of R invoking a callback per leaf. One oracle
// call per tree node; child probabilities are copied out before recursing
// so a single distribution buffer can be reused.
class CandidateWalker {
public:
    CandidateWalker(const SequenceModel& model, const BoundFormat& bound, const HoleMask& mask,
                    ScoringMode mode, std::span<const TokenId> context,
                    const std::function<void(std::uint64_t, double)>& fn)
        : model_(model),
          bound_(bound),
          mask_(mask),
          mode_(mode),
          fn_(fn),
          prefix_(context.begin(), context.end()),
          dist_(model.vocab().size()) {}

    // Walks the subtree where the first hole takes symbols lo, lo+stride,
    // lo+2*stride, ... so workers can split the space without coordination.
    void run(std::uint32_t lo, std::uint32_t stride) {
        first_lo_ = lo;
        first_stride_ = stride;
        descend(0, 0, 0, 0.0);
    }

private:
    void descend(std::size_t pos, std::size_t hole, std::uint64_t index, double weight) {
        if (pos == bound_.token_length()) {
            fn_(index, weight);
            return;
        }
        if (!mask_.is_hole[pos]) {
            const TokenId tok = bound_.template_tokens()[pos];
            double w = weight;
            if (mode_ == ScoringMode::FullSequence) {
                model_.next_token_distribution(prefix_, dist_);
                w += -std::log2(dist_[tok]);
            }
            prefix_.push_back(tok);
            descend(pos + 1, hole, index, w);
            prefix_.pop_back();
            return;
        }
        model_.next_token_distribution(prefix_, dist_);
        const auto& alphabet = bound_.hole_alphabets()[hole];
        const bool first = hole == 0;
        const std::uint32_t start = first ? first_lo_ : 0;
        const std::uint32_t stride = first ? first_stride_ : 1;
        std::vector<double> probs(alphabet.size());
        for (std::size_t s = 0; s < alphabet.size(); ++s) probs[s] = dist_[alphabet[s]];
        for (std::size_t s = start; s < alphabet.size(); s += stride) {
            prefix_.push_back(alphabet[s]);
            descend(pos + 1, hole + 1, index * alphabet.size() + s,
                    weight + -std::log2(probs[s]));
            prefix_.pop_back();
        }
    }

    const SequenceModel& model_;
    const BoundFormat& bound_;
    const HoleMask& mask_;
    ScoringMode mode_;
    const std::function<void(std::uint64_t, double)>& fn_;
    std::vector<TokenId> prefix_;
    std::vector<double> dist_;
    std::uint32_t first_lo_ = 0;
    std::uint32_t first_stride_ = 1;
};

} // namespace

void for_each_candidate_px(const SequenceModel& model, const BoundFormat& bound, ScoringMode mode,
                           std::span<const TokenId> context, std::uint32_t lo, std::uint32_t stride,
                           const std::function<void(std::uint64_t, double)>& fn) {
    const HoleMask mask(bound);
    CandidateWalker walker(model, bound, mask, mode, context, fn);
    walker.run(lo, stride);
}

double score_candidate(const SequenceModel& model, const BoundFormat& bound, const Randomness& r,
                       ScoringMode mode, std::span<const TokenId> context) {
    const HoleMask mask(bound);
    const std::vector<TokenId> tokens = bound.tokens_for(r);
    return score_tokens(model, tokens, mask, mode, context);
}

BigCount bound_space_size(const BoundFormat& bound) {
    BigCount size = BigCount::one();
    for (const auto& alphabet : bound.hole_alphabets()) {
        size.mul_u32(static_cast<std::uint32_t>(alphabet.size()));
    }
    return size;
}

RankResult rank(const SequenceModel& model, const BoundFormat& bound, const Randomness& r,
                const RankOptions& options) {
    const BigCount space = bound_space_size(bound);
    if (!space.fits_u64() || space.to_u64() > options.enumeration_cap) {
        throw SpaceTooLarge("randomness space " + space.to_string() +
                            " exceeds enumeration cap " +
                            std::to_string(options.enumeration_cap));
    }
    const HoleMask mask(bound);
    const double target = score_tokens(model, bound.tokens_for(r), mask, options.mode,
                                       options.context);

    const std::uint32_t first_radix =
        static_cast<std::uint32_t>(bound.hole_alphabets().front().size());
    const unsigned jobs = std::max(1u, std::min(options.jobs, first_radix));

    std::uint64_t leq = 0;
    std::uint64_t eq = 0;
    if (jobs == 1) {
        for_each_candidate_px(model, bound, options.mode, options.context, 0, 1,
                              [&](std::uint64_t, double px) {
                                  if (px <= target) ++leq;
                                  if (px == target) ++eq;
                              });
    } else {
        std::vector<std::uint64_t> leqs(jobs, 0);
        std::vector<std::uint64_t> eqs(jobs, 0);
        std::vector<std::thread> threads;
        threads.reserve(jobs);
        for (unsigned w = 0; w < jobs; ++w) {
            threads.emplace_back([&, w] {
                for_each_candidate_px(model, bound, options.mode, options.context, w, jobs,
                                      [&](std::uint64_t, double px) {
                                          if (px <= target) ++leqs[w];
                                          if (px == target) ++eqs[w];
                                      });
            });
        }
        for (auto& t : threads) t.join();
        for (unsigned w = 0; w < jobs; ++w) {
            leq += leqs[w];
            eq += eqs[w];
        }
    }

    RankResult result;
    result.rank = BigCount(leq);
    result.ties = eq;
    result.space = space;
    result.target_px = target;
    return result;
}

ExactExposure exact_exposure(const SequenceModel& model, const BoundFormat& bound,
                             const Randomness& r, const RankOptions& options) {
    ExactExposure out;
    out.rank = rank(model, bound, r, options);
    out.bits = out.rank.space.log2() - out.rank.rank.log2();
    return out;
}

} // namespace memaudit
