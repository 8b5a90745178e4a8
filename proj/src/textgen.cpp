#include "memaudit/textgen.hpp"

#include <array>
#include <cmath>
#include <vector>

#include "memaudit/rng.hpp"

namespace memaudit {

namespace {

constexpr std::array<const char*, 60> kSyllables = {
    "ba", "be", "bo", "da", "de", "di", "do", "du", "fa", "fe",
    "ga", "go", "ha", "he", "hi", "ka", "ke", "ko", "la", "le",
    "li", "lo", "lu", "ma", "me", "mi", "mo", "mu", "na", "ne",
    "ni", "no", "nu", "pa", "pe", "po", "ra", "re", "ri", "ro",
    "ru", "sa", "se", "si", "so", "su", "ta", "te", "ti", "to",
    "tu", "va", "ve", "vi", "vo", "wa", "we", "wi", "wo", "za",
};

constexpr std::size_t kLexiconSize = 4000;

std::vector<std::string> build_lexicon(std::uint64_t seed) {
    std::vector<std::string> words;
    words.reserve(kLexiconSize);
    Rng rng(mix_seed(seed, 0x6c657869636fULL));
    for (std::size_t i = 0; i < kLexiconSize; ++i) {
        const std::size_t syllables = 1 + rng.next_below(4);
        std::string word;
        for (std::size_t s = 0; s < syllables; ++s) {
            word += kSyllables[rng.next_below(kSyllables.size())];
        }
        words.push_back(std::move(word));
    }
    return words;
}

// Zipf-like cumulative weights: w_i proportional to 1/(i+1)^1.1.
std::vector<double> zipf_cumulative(std::size_t n) {
    std::vector<double> cum(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        total += 1.0 / std::pow(static_cast<double>(i + 1), 1.1);
        cum[i] = total;
    }
    for (double& c : cum) c /= total;
    return cum;
}

std::size_t draw_word(const std::vector<double>& cum, Rng& rng) {
    const double u = rng.next_double();
    std::size_t lo = 0, hi = cum.size() - 1;
    while (lo < hi) {
        const std::size_t mid = (lo + hi) / 2;
        if (cum[mid] < u) lo = mid + 1;
        else hi = mid;
    }
    return lo;
}

} // namespace

std::string generate_corpus_text(std::size_t bytes, std::uint64_t seed) {
    const std::vector<std::string> lexicon = build_lexicon(seed);
    const std::vector<double> cum = zipf_cumulative(lexicon.size());
    Rng rng(mix_seed(seed, 0x74657874ULL));

    std::string out;
    out.reserve(bytes + 128);
    while (out.size() < bytes) {
        const std::size_t sentence_words = 4 + rng.next_below(11);
        for (std::size_t w = 0; w < sentence_words; ++w) {
            if (w) out += ' ';
            out += lexicon[draw_word(cum, rng)];
        }
        out += ". ";
    }
    out += '\n';
    return out;
}

} // namespace memaudit
