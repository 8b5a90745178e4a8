#pragma once

#include <memory>
#include <span>
#include <vector>

#include "memaudit/vocab.hpp"

namespace memaudit {

/// Next-token-distribution oracle. Anything that can report
/// Pr(next token | prefix) over a fixed vocabulary can be audited.
///
/// Implementations must be deterministic and safe to share read-only
/// across threads once built. The batch entry point exists so callers can
/// hand over many prefixes at once; the default just loops.
class SequenceModel {
public:
    virtual ~SequenceModel() = default;

    virtual const Vocabulary& vocab() const = 0;

    std::size_t vocab_size() const { return vocab().size(); }

    /// Fills `out` (size V) with Pr(token | prefix). Entries are
    /// nonnegative and sum to 1 within 1e-9. Prefix may be empty; models
    /// define their own start-of-sequence padding.
    virtual void next_token_distribution(std::span<const TokenId> prefix,
                                         std::span<double> out) const = 0;

    /// Batched evaluation: `out` holds prefixes.size() * V probabilities,
    /// row-major in prefix order.
    virtual void next_token_distribution_batch(const std::vector<std::vector<TokenId>>& prefixes,
                                               std::vector<double>& out) const {
        const std::size_t v = vocab_size();
        out.resize(prefixes.size() * v);
        for (std::size_t i = 0; i < prefixes.size(); ++i) {
            next_token_distribution(prefixes[i], std::span<double>(out.data() + i * v, v));
        }
    }

protected:
    void check_prefix(std::span<const TokenId> prefix) const {
        const std::size_t v = vocab_size();
        for (TokenId id : prefix) {
            if (id >= v) {
                throw InvalidToken("prefix contains out-of-vocabulary id " + std::to_string(id));
            }
        }
    }
};

using ModelPtr = std::shared_ptr<const SequenceModel>;

} // namespace memaudit
