#pragma once

#include <cstdint>
#include <string>

namespace memaudit {

/// Deterministic pseudo-English filler text: a fixed syllable-built
/// lexicon sampled with a Zipf-like law, grouped into lowercase sentences
/// ("word word ... word. "). Same (bytes, seed) always yields the same
/// bytes. The output is plain ASCII, so the char tokenizer sees a small
/// stable vocabulary and the word tokenizer a few thousand types.
///
/// The bundled training corpus is exactly generate_corpus_text(n, seed)
/// for the values recorded in its sidecar file, so it can be regenerated
/// instead of shipped.
std::string generate_corpus_text(std::size_t bytes, std::uint64_t seed);

} // namespace memaudit
