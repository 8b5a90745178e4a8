#include "memaudit/extraction.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <queue>

namespace memaudit {

namespace {

Randomness decode_index(const BoundFormat& bound, std::uint64_t index) {
    const auto& alphabets = bound.hole_alphabets();
    Randomness r(alphabets.size(), 0);
    for (std::size_t i = alphabets.size(); i-- > 0;) {
        const std::uint64_t radix = alphabets[i].size();
        r[i] = static_cast<std::uint32_t>(index % radix);
        index /= radix;
    }
    return r;
}

} // namespace

std::vector<ExtractionCandidate> brute_force_extract(const SequenceModel& model,
                                                     const BoundFormat& bound, std::size_t top_k,
                                                     ScoringMode mode,
                                                     std::span<const TokenId> context,
                                                     std::uint64_t enumeration_cap) {
    if (top_k < 1) throw ConfigError("brute_force_extract: top_k must be >= 1");
    const BigCount space = bound_space_size(bound);
    if (!space.fits_u64() || space.to_u64() > enumeration_cap) {
        throw SpaceTooLarge("randomness space " + space.to_string() +
                            " exceeds enumeration cap " + std::to_string(enumeration_cap));
    }

    // max-heap of the worst kept candidate; (px, index) pairs order ties
    // by enumeration index, i.e. lexicographically
    std::priority_queue<std::pair<double, std::uint64_t>> kept;
    for_each_candidate_px(model, bound, mode, context, 0, 1,
                          [&](std::uint64_t index, double px) {
                              const std::pair<double, std::uint64_t> entry{px, index};
                              if (kept.size() < top_k) {
                                  kept.push(entry);
                              } else if (entry < kept.top()) {
                                  kept.pop();
                                  kept.push(entry);
                              }
                          });

    std::vector<ExtractionCandidate> out(kept.size());
    for (std::size_t i = kept.size(); i-- > 0;) {
        out[i].px = kept.top().first;
        out[i].index = kept.top().second;
        out[i].tokens = bound.tokens_for(decode_index(bound, kept.top().second));
        kept.pop();
    }
    return out;
}

namespace {

struct Node {
    double weight = 0.0;
    std::uint64_t index = 0; // mixed-radix encoding of the filled holes
    std::uint32_t depth = 0; // holes filled
};

// Pop order: (weight ascending, depth descending, hole tuple ascending).
// Equal-depth nodes share a radix sequence, so index order is hole-tuple
// lexicographic order.
struct WorseThan {
    bool operator()(const Node& a, const Node& b) const {
        if (a.weight != b.weight) return a.weight > b.weight;
        if (a.depth != b.depth) return a.depth < b.depth;
        return a.index > b.index;
    }
};

// A child part-way through its forced literal run.
struct Growing {
    Node node;                    // weight accumulates; index/depth already final
    std::vector<TokenId> prefix;  // context ++ tokens scored so far
    std::size_t pos = 0;          // next template position
    std::size_t stop = 0;         // next hole position or template end
};

class Search {
public:
    Search(const SequenceModel& model, const BoundFormat& bound, const ExtractOptions& options)
        : model_(model), bound_(bound), options_(options),
          is_hole_(bound.token_length(), false) {
        for (std::size_t pos : bound_.hole_positions()) is_hole_[pos] = true;
        const BigCount space = bound_space_size(bound_);
        if (!space.fits_u64()) {
            throw SpaceTooLarge("randomness space " + space.to_string() +
                                " exceeds the searchable 2^64 node-encoding limit");
        }
    }

    ExtractionReport run() {
        const auto t0 = std::chrono::steady_clock::now();

        Node root;
        root.weight = root_weight();
        push(root);

        const std::size_t B = std::max<std::size_t>(1, options_.batch_size);
        std::uint64_t first_leaf_iteration = 0;
        bool stop = false;

        while (!queue_.empty() && !stop) {
            ++report_.iterations;
            std::vector<Node> internal;
            internal.reserve(B);
            for (std::size_t i = 0; i < B && !queue_.empty(); ++i) {
                const Node node = queue_.top();
                queue_.pop();
                if (node.depth == hole_count()) {
                    // a leaf's weight is its full log-perplexity; with
                    // B = 1 the first one popped is the global minimum
                    if (B == 1) {
                        stop = true;
                        break;
                    }
                    if (first_leaf_iteration == 0) first_leaf_iteration = report_.iterations;
                } else {
                    internal.push_back(node);
                }
            }
            if (stop) break;
            if (!internal.empty()) expand(internal);
            if (overflow_) break;
            // compensation: the first leaf took k iterations; allow k more
            if (B > 1 && first_leaf_iteration > 0 &&
                report_.iterations >= 2 * first_leaf_iteration) {
                stop = true;
            }
        }

        report_.queue_overflow = overflow_;
        if (have_best_) {
            report_.found_any = true;
            report_.best_index = best_.index;
            report_.best_px = best_.weight;
            report_.best_sequence = bound_.tokens_for(decode_index(bound_, best_.index));
        }
        report_.has_target = !options_.target.empty();
        report_.found_target =
            report_.has_target && have_best_ && report_.best_sequence == options_.target;
        report_.wall_time_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return report_;
    }

private:
    std::size_t hole_count() const { return bound_.hole_positions().size(); }

    // Scores the shared literal run before the first hole.
    double root_weight() {
        root_prefix_.assign(options_.context.begin(), options_.context.end());
        std::vector<double> dist(model_.vocab().size());
        double weight = 0.0;
        for (std::size_t pos = 0; pos < bound_.hole_positions().front(); ++pos) {
            const TokenId tok = bound_.template_tokens()[pos];
            if (options_.mode == ScoringMode::FullSequence) {
                model_.next_token_distribution(root_prefix_, dist);
                ++report_.oracle_batches;
                weight += -std::log2(dist[tok]);
            }
            root_prefix_.push_back(tok);
        }
        return weight;
    }

    std::vector<TokenId> prefix_of(const Node& node) const {
        std::vector<TokenId> prefix = root_prefix_;
        if (node.depth == 0) return prefix;
        const Randomness partial = partial_decode(node);
        const std::size_t upto = bound_.hole_positions()[node.depth]; // exists: node internal
        std::size_t hole = 0;
        for (std::size_t pos = bound_.hole_positions().front(); pos < upto; ++pos) {
            if (is_hole_[pos]) {
                prefix.push_back(bound_.hole_alphabets()[hole][partial[hole]]);
                ++hole;
            } else {
                prefix.push_back(bound_.template_tokens()[pos]);
            }
        }
        return prefix;
    }

    Randomness partial_decode(const Node& node) const {
        Randomness r(node.depth, 0);
        std::uint64_t index = node.index;
        for (std::size_t i = node.depth; i-- > 0;) {
            const std::uint64_t radix = bound_.hole_alphabets()[i].size();
            r[i] = static_cast<std::uint32_t>(index % radix);
            index /= radix;
        }
        return r;
    }

    void offer_leaf(const Node& leaf) {
        if (!have_best_ || leaf.weight < best_.weight ||
            (leaf.weight == best_.weight && leaf.index < best_.index)) {
            best_ = leaf;
            have_best_ = true;
        }
    }

    void push(const Node& node) {
        if (have_best_ && node.weight > best_.weight) return; // cannot improve
        if (queue_.size() >= options_.queue_cap) {
            overflow_ = true;
            return;
        }
        queue_.push(node);
    }

    // Leaves carry their final weight at generation time: record the best
    // immediately, then queue them like any node so the popped-leaf
    // stopping rules see them.
    void finalize(Growing&& g) {
        if (g.node.depth == hole_count()) offer_leaf(g.node);
        push(g.node);
    }

    // Evaluates all children of the popped internal nodes. One batched
    // oracle round for the hole symbols, then one per forced-literal step.
    void expand(const std::vector<Node>& nodes) {
        report_.expansions += nodes.size();

        std::vector<std::vector<TokenId>> prefixes;
        prefixes.reserve(nodes.size());
        for (const Node& node : nodes) prefixes.push_back(prefix_of(node));

        std::vector<double> dists;
        model_.next_token_distribution_batch(prefixes, dists);
        ++report_.oracle_batches;
        const std::size_t v = model_.vocab().size();

        std::vector<Growing> growing;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const Node& node = nodes[i];
            const std::size_t hole = node.depth;
            const auto& alphabet = bound_.hole_alphabets()[hole];
            const std::size_t hole_pos = bound_.hole_positions()[hole];
            const std::size_t stop = hole + 1 < hole_count() ? bound_.hole_positions()[hole + 1]
                                                             : bound_.token_length();
            const double* dist = dists.data() + i * v;
            for (std::size_t s = 0; s < alphabet.size(); ++s) {
                Growing g;
                g.node.weight = node.weight + -std::log2(dist[alphabet[s]]);
                g.node.index = node.index * alphabet.size() + s;
                g.node.depth = node.depth + 1;
                g.pos = hole_pos + 1;
                g.stop = stop;
                if (g.pos == g.stop) {
                    finalize(std::move(g));
                    continue;
                }
                g.prefix = prefixes[i];
                g.prefix.push_back(alphabet[s]);
                growing.push_back(std::move(g));
            }
        }

        // walk the forced literal runs, one batched call per step
        while (!growing.empty()) {
            std::vector<std::vector<TokenId>> step_prefixes;
            step_prefixes.reserve(growing.size());
            for (const Growing& g : growing) step_prefixes.push_back(g.prefix);
            model_.next_token_distribution_batch(step_prefixes, dists);
            ++report_.oracle_batches;

            std::vector<Growing> next;
            next.reserve(growing.size());
            for (std::size_t i = 0; i < growing.size(); ++i) {
                Growing g = std::move(growing[i]);
                const TokenId tok = bound_.template_tokens()[g.pos];
                if (options_.mode == ScoringMode::FullSequence) {
                    g.node.weight += -std::log2(dists[i * v + tok]);
                }
                g.prefix.push_back(tok);
                ++g.pos;
                if (g.pos == g.stop) {
                    finalize(std::move(g));
                } else {
                    next.push_back(std::move(g));
                }
            }
            growing = std::move(next);
        }
    }

    const SequenceModel& model_;
    const BoundFormat& bound_;
    const ExtractOptions& options_;
    std::vector<bool> is_hole_;
    std::vector<TokenId> root_prefix_;
    std::priority_queue<Node, std::vector<Node>, WorseThan> queue_;
    Node best_;
    bool have_best_ = false;
    bool overflow_ = false;
    ExtractionReport report_;
};

} // namespace

ExtractionReport shortest_path_extract(const SequenceModel& model, const BoundFormat& bound,
                                       const ExtractOptions& options) {
    Search search(model, bound, options);
    return search.run();
}

std::vector<SweepRow> extraction_sweep(const std::vector<SweepEntry>& entries,
                                       const BoundFormat& bound, const SweepOptions& options) {
    std::vector<SweepRow> rows;
    rows.reserve(entries.size());
    for (const SweepEntry& entry : entries) {
        if (!entry.model) throw ConfigError("extraction_sweep: null model for " + entry.label);
        const SequenceModel& model = *entry.model;

        SweepRow row;
        row.label = entry.label;
        row.canary_px =
            score_candidate(model, bound, entry.canary, options.mode, options.context);

        RankOptions rank_options;
        rank_options.mode = options.mode;
        rank_options.context = options.context;
        rank_options.enumeration_cap = options.enumeration_cap;
        rank_options.jobs = options.jobs;
        const ExactExposure exact = exact_exposure(model, bound, entry.canary, rank_options);
        row.exact_exposure = exact.bits;
        row.rank = exact.rank.rank;
        row.ties = exact.rank.ties;

        if (options.sample_m > 0) {
            SampleOptions sample_options;
            sample_options.mode = options.mode;
            sample_options.context = options.context;
            sample_options.jobs = options.jobs;
            const PerplexitySample sample = sample_perplexities(
                model, bound, options.sample_m, options.sample_seed, sample_options);
            row.sampling = sampling_exposure(sample, row.canary_px);
        }

        ExtractOptions extract_options;
        extract_options.batch_size = options.batch_size;
        extract_options.mode = options.mode;
        extract_options.context = options.context;
        extract_options.queue_cap = options.queue_cap;
        extract_options.target = bound.tokens_for(entry.canary);
        const ExtractionReport report = shortest_path_extract(model, bound, extract_options);
        row.extracted = report.found_target;
        row.expansions = report.expansions;
        row.best_px = report.best_px;

        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace memaudit
