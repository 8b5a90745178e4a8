#include "memaudit/canary.hpp"

#include <algorithm>

namespace memaudit {

namespace {

std::vector<std::string> digit_alphabet() {
    std::vector<std::string> a;
    for (char c = '0'; c <= '9'; ++c) a.emplace_back(1, c);
    return a;
}

std::vector<std::string> lower_alphabet() {
    std::vector<std::string> a;
    for (char c = 'a'; c <= 'z'; ++c) a.emplace_back(1, c);
    return a;
}

void append_literal(std::vector<FormatElement>& elements, char c) {
    if (elements.empty() || elements.back().kind != FormatElement::Kind::Literal) {
        elements.push_back({FormatElement::Kind::Literal, "", 0});
    }
    elements.back().literal.push_back(c);
}

} // namespace

FormatSequence parse_format(const std::string& spec, const AlphabetRegistry& custom,
                            std::size_t max_length) {
    if (spec.empty()) throw FormatError("empty format spec");
    FormatSequence format;
    std::size_t i = 0;
    const std::size_t n = spec.size();
    while (i < n) {
        const char c = spec[i];
        if (c == '{') {
            if (i + 1 < n && spec[i + 1] == '{') {
                append_literal(format.elements_, '{');
                i += 2;
                continue;
            }
            const std::size_t close = spec.find('}', i + 1);
            if (close == std::string::npos) {
                throw FormatError("unterminated hole at offset " + std::to_string(i));
            }
            const std::string body = spec.substr(i + 1, close - i - 1);
            HoleSpec hole;
            if (body == "d") {
                hole.kind = HoleSpec::Kind::Digit;
                hole.name = "d";
                hole.alphabet = digit_alphabet();
            } else if (body == "l") {
                hole.kind = HoleSpec::Kind::Lower;
                hole.name = "l";
                hole.alphabet = lower_alphabet();
            } else if (body.size() > 2 && body[0] == 'c' && body[1] == ':') {
                hole.kind = HoleSpec::Kind::Custom;
                hole.name = body.substr(2);
                auto it = custom.find(hole.name);
                if (it == custom.end()) {
                    throw FormatError("unknown custom alphabet '" + hole.name + "'");
                }
                if (it->second.empty()) {
                    throw FormatError("custom alphabet '" + hole.name + "' is empty");
                }
                hole.alphabet = it->second;
            } else {
                throw FormatError("unknown hole class '{" + body + "}'");
            }
            format.elements_.push_back(
                {FormatElement::Kind::Hole, "", format.holes_.size()});
            format.holes_.push_back(std::move(hole));
            i = close + 1;
        } else if (c == '}') {
            if (i + 1 < n && spec[i + 1] == '}') {
                append_literal(format.elements_, '}');
                i += 2;
                continue;
            }
            throw FormatError("bare '}' at offset " + std::to_string(i) +
                              " (escape as '}}')");
        } else {
            append_literal(format.elements_, c);
            ++i;
        }
    }
    if (format.holes_.empty()) throw FormatError("format has no holes");

    std::size_t length = 0;
    for (const auto& el : format.elements_) {
        length += el.kind == FormatElement::Kind::Literal ? el.literal.size() : 1;
    }
    if (length > max_length) {
        throw FormatError("format length " + std::to_string(length) + " exceeds max " +
                          std::to_string(max_length));
    }
    if (space_size(format) <= BigCount(1)) {
        throw FormatError("randomness space must have at least 2 values");
    }
    return format;
}

std::string render_format(const FormatSequence& format) {
    std::string out;
    for (const auto& el : format.elements()) {
        if (el.kind == FormatElement::Kind::Literal) {
            for (char c : el.literal) {
                if (c == '{') {
                    out += "{{";
                } else if (c == '}') {
                    out += "}}";
                } else {
                    out.push_back(c);
                }
            }
        } else {
            const HoleSpec& hole = format.holes()[el.hole];
            switch (hole.kind) {
                case HoleSpec::Kind::Digit: out += "{d}"; break;
                case HoleSpec::Kind::Lower: out += "{l}"; break;
                case HoleSpec::Kind::Custom: out += "{c:" + hole.name + "}"; break;
            }
        }
    }
    return out;
}

BigCount space_size(const FormatSequence& format) {
    BigCount size = BigCount::one();
    for (const auto& hole : format.holes()) {
        size.mul_u32(static_cast<std::uint32_t>(hole.alphabet.size()));
    }
    return size;
}

std::string instantiate(const FormatSequence& format, const Randomness& r) {
    if (r.size() != format.hole_count()) {
        throw FormatError("randomness has " + std::to_string(r.size()) + " entries, format has " +
                          std::to_string(format.hole_count()) + " holes");
    }
    std::string out;
    for (const auto& el : format.elements()) {
        if (el.kind == FormatElement::Kind::Literal) {
            out += el.literal;
        } else {
            const HoleSpec& hole = format.holes()[el.hole];
            const std::uint32_t pick = r[el.hole];
            if (pick >= hole.alphabet.size()) {
                throw FormatError("randomness entry " + std::to_string(el.hole) +
                                  " outside its alphabet");
            }
            out += hole.alphabet[pick];
        }
    }
    return out;
}

Randomness sample_randomness(const FormatSequence& format, Rng& rng) {
    Randomness r(format.hole_count());
    for (std::size_t i = 0; i < r.size(); ++i) {
        r[i] = static_cast<std::uint32_t>(rng.next_below(format.holes()[i].alphabet.size()));
    }
    return r;
}

std::uint64_t enumerable_size(const FormatSequence& format, std::uint64_t cap) {
    const BigCount size = space_size(format);
    if (!size.fits_u64() || size.to_u64() > cap) {
        throw SpaceTooLarge("randomness space " + size.to_string() + " exceeds enumeration cap " +
                            std::to_string(cap));
    }
    return size.to_u64();
}

Randomness randomness_at(const FormatSequence& format, std::uint64_t index) {
    // mixed-radix decode, rightmost hole fastest
    Randomness r(format.hole_count());
    for (std::size_t i = format.hole_count(); i-- > 0;) {
        const std::uint64_t radix = format.holes()[i].alphabet.size();
        r[i] = static_cast<std::uint32_t>(index % radix);
        index /= radix;
    }
    if (index != 0) throw FormatError("enumeration index out of range");
    return r;
}

std::uint64_t index_of(const FormatSequence& format, const Randomness& r) {
    if (r.size() != format.hole_count()) throw FormatError("randomness/hole count mismatch");
    std::uint64_t index = 0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        const std::uint64_t radix = format.holes()[i].alphabet.size();
        if (r[i] >= radix) throw FormatError("randomness entry outside its alphabet");
        index = index * radix + r[i];
    }
    return index;
}

CanaryInstance instance_at(const FormatSequence& format, std::uint64_t index) {
    Randomness r = randomness_at(format, index);
    std::string text = instantiate(format, r);
    return {std::move(r), std::move(text)};
}

std::vector<CanaryInstance> enumerate_all(const FormatSequence& format, std::uint64_t cap) {
    const std::uint64_t size = enumerable_size(format, cap);
    std::vector<CanaryInstance> out;
    out.reserve(size);
    for (std::uint64_t i = 0; i < size; ++i) out.push_back(instance_at(format, i));
    return out;
}

std::vector<std::string> token_strings(const FormatSequence& format, const Randomness& r,
                                       TokenizerKind tokenizer) {
    auto [vocab, corpus] = tokenize(instantiate(format, r), tokenizer);
    std::vector<std::string> out;
    out.reserve(corpus.sequence.size());
    for (TokenId id : corpus.sequence) out.push_back(vocab.token(id));
    return out;
}

void extend_vocabulary(Vocabulary& vocab, const FormatSequence& format, TokenizerKind tokenizer) {
    for (const auto& piece : token_strings(format, Randomness(format.hole_count(), 0), tokenizer)) {
        vocab.add(piece);
    }
    for (const auto& hole : format.holes()) {
        for (const auto& symbol : hole.alphabet) vocab.add(symbol);
    }
}

BoundFormat::BoundFormat(const FormatSequence& format, const Vocabulary& vocab,
                         TokenizerKind tokenizer) {
    for (const auto& el : format.elements()) {
        if (el.kind == FormatElement::Kind::Literal) {
            // tokenize the literal run exactly as the corpus tokenizer would
            auto [lv, lc] = tokenize(el.literal, tokenizer);
            for (TokenId id : lc.sequence) template_.push_back(vocab.id_of(lv.token(id)));
        } else {
            const HoleSpec& hole = format.holes()[el.hole];
            std::vector<TokenId> alphabet;
            alphabet.reserve(hole.alphabet.size());
            for (const auto& symbol : hole.alphabet) {
                if (tokenizer == TokenizerKind::Char && symbol.size() != 1) {
                    throw FormatError("hole '" + hole.name +
                                      "': symbols must be single characters under the character "
                                      "tokenizer");
                }
                alphabet.push_back(vocab.id_of(symbol));
            }
            positions_.push_back(template_.size());
            alphabets_.push_back(std::move(alphabet));
            template_.push_back(kHoleSlot);
        }
    }
    // Boundary check: binding pieces independently must agree with
    // tokenizing a full instantiation (word mode can merge runs across
    // element boundaries, e.g. a hole glued to a non-space literal).
    Randomness r0(format.hole_count(), 0);
    auto [fv, fc] = tokenize(instantiate(format, r0), tokenizer);
    std::vector<TokenId> expect = tokens_for(r0);
    if (fc.sequence.size() != expect.size()) {
        throw FormatError("holes must be token-aligned under this tokenizer "
                          "(delimit holes with whitespace in word mode)");
    }
    for (std::size_t i = 0; i < expect.size(); ++i) {
        if (fv.token(fc.sequence[i]) != vocab.token(expect[i])) {
            throw FormatError("holes must be token-aligned under this tokenizer "
                              "(delimit holes with whitespace in word mode)");
        }
    }
}

void BoundFormat::fill(const Randomness& r, std::span<TokenId> out) const {
    if (r.size() != positions_.size()) throw FormatError("randomness/hole count mismatch");
    if (out.size() != template_.size()) throw FormatError("fill: output size mismatch");
    std::copy(template_.begin(), template_.end(), out.begin());
    for (std::size_t i = 0; i < positions_.size(); ++i) {
        if (r[i] >= alphabets_[i].size()) throw FormatError("randomness entry outside alphabet");
        out[positions_[i]] = alphabets_[i][r[i]];
    }
}

std::vector<TokenId> BoundFormat::tokens_for(const Randomness& r) const {
    std::vector<TokenId> out(template_.size());
    fill(r, out);
    return out;
}

} // namespace memaudit
