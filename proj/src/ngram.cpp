#include "memaudit/ngram.hpp"

#include <algorithm>
#include <cstring>

namespace memaudit {

namespace {
// Context id used for left padding; one past any valid vocabulary id.
constexpr TokenId kPadBase = 0xffffffffu;
} // namespace

NGramModel::NGramModel(Vocabulary vocab, std::size_t order, double smoothing)
    : vocab_(std::move(vocab)), order_(order), smoothing_(smoothing) {
    if (order_ < 1) throw ConfigError("n-gram order must be >= 1");
    if (smoothing_ < 0.0) throw ConfigError("n-gram smoothing must be nonnegative");
    if (vocab_.size() == 0) throw ConfigError("n-gram model needs a non-empty vocabulary");
}

std::string NGramModel::pack_context(std::span<const TokenId> prefix) const {
    // Last (order-1) ids, left-padded with kPadBase when prefix is short.
    const std::size_t ctx_len = order_ - 1;
    std::string key(ctx_len * sizeof(TokenId), '\0');
    for (std::size_t i = 0; i < ctx_len; ++i) {
        const std::size_t want = prefix.size() + i;
        TokenId id = kPadBase;
        if (want >= ctx_len) id = prefix[want - ctx_len];
        std::memcpy(key.data() + i * sizeof(TokenId), &id, sizeof(TokenId));
    }
    return key;
}

void NGramModel::add_count(std::span<const TokenId> context, TokenId token, std::uint64_t count) {
    auto& row = table_[pack_context(context)];
    auto it = std::lower_bound(row.counts.begin(), row.counts.end(), token,
                               [](const auto& p, TokenId t) { return p.first < t; });
    if (it != row.counts.end() && it->first == token) {
        it->second += count;
    } else {
        row.counts.insert(it, {token, count});
    }
    row.total += count;
}

void NGramModel::next_token_distribution(std::span<const TokenId> prefix,
                                         std::span<double> out) const {
    check_prefix(prefix);
    const std::size_t v = vocab_.size();
    const auto it = table_.find(pack_context(prefix));
    if (it == table_.end() || it->second.total == 0) {
        // Unseen context. With k > 0 add-k over an all-zero row is exactly
        // uniform; with k = 0 we fall back to uniform so the distribution
        // stays total.
        std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(v));
        return;
    }
    const ContextRow& row = it->second;
    const double denom = static_cast<double>(row.total) + smoothing_ * static_cast<double>(v);
    std::fill(out.begin(), out.end(), smoothing_ / denom);
    for (const auto& [token, count] : row.counts) {
        out[token] = (static_cast<double>(count) + smoothing_) / denom;
    }
}

std::uint64_t NGramModel::context_count(std::span<const TokenId> context, TokenId token) const {
    const auto it = table_.find(pack_context(context));
    if (it == table_.end()) return 0;
    const auto& counts = it->second.counts;
    auto pos = std::lower_bound(counts.begin(), counts.end(), token,
                                [](const auto& p, TokenId t) { return p.first < t; });
    if (pos != counts.end() && pos->first == token) return pos->second;
    return 0;
}

std::uint64_t NGramModel::context_total(std::span<const TokenId> context) const {
    const auto it = table_.find(pack_context(context));
    return it == table_.end() ? 0 : it->second.total;
}

std::vector<std::pair<std::vector<TokenId>, NGramModel::ContextRow>> NGramModel::sorted_table() const {
    std::vector<std::pair<std::vector<TokenId>, ContextRow>> rows;
    rows.reserve(table_.size());
    const std::size_t ctx_len = order_ - 1;
    for (const auto& [key, row] : table_) {
        std::vector<TokenId> ctx(ctx_len);
        std::memcpy(ctx.data(), key.data(), ctx_len * sizeof(TokenId));
        rows.emplace_back(std::move(ctx), row);
    }
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return rows;
}

NGramModel train_ngram(const Corpus& corpus, const Vocabulary& vocab,
                       std::size_t order, double smoothing) {
    if (corpus.sequence.empty()) throw InvalidCorpus("train_ngram: empty corpus");
    NGramModel model(vocab, order, smoothing);
    const auto& seq = corpus.sequence;
    if (seq.size() < order) return model;
    for (std::size_t i = 0; i + order <= seq.size(); ++i) {
        model.add_count(std::span<const TokenId>(seq.data() + i, order - 1), seq[i + order - 1], 1);
    }
    return model;
}

} // namespace memaudit
