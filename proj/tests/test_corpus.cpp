#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "memaudit/neural.hpp"
#include "memaudit/ngram.hpp"
#include "memaudit/rng.hpp"
#include "memaudit/vocab.hpp"
#include "testutil.hpp"

using namespace memaudit;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string bundled_corpus_path() { return std::string(MEMAUDIT_DATA_DIR) + "/corpus.txt"; }

bool same_bits(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) return false;
    return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

} // namespace

TEST_CASE("tokenize: basic vocabularies and ids") {
    auto [vab, cab] = tokenize("ab");
    CHECK(vab.size() == 2);
    CHECK(cab.sequence == std::vector<TokenId>{0, 1});
    CHECK(vab.token(0) == "a");
    CHECK(vab.token(1) == "b");

    auto [vaaa, caaa] = tokenize("aaa");
    CHECK(vaaa.size() == 1);
    CHECK(caaa.sequence == std::vector<TokenId>{0, 0, 0});
}

TEST_CASE("tokenize: detokenize round trip, char and word") {
    const std::string texts[] = {
        "hello world",
        "a\nb\tc  d",
        "  leading and trailing  ",
        "mixed 123 !@# \xc3\xa9 bytes", // multi-byte UTF-8 survives as raw bytes
        "x",
    };
    for (const auto& text : texts) {
        auto [vc, cc] = tokenize(text, TokenizerKind::Char);
        CHECK(detokenize(vc, cc.sequence) == text);
        auto [vw, cw] = tokenize(text, TokenizerKind::Word);
        CHECK(detokenize(vw, cw.sequence) == text);
    }
}

TEST_CASE("tokenize: word mode alternates word and whitespace runs") {
    auto [vocab, corpus] = tokenize("the cat  sat", TokenizerKind::Word);
    // the, " ", cat, "  ", sat
    CHECK(corpus.sequence.size() == 5);
    CHECK(vocab.token(corpus.sequence[0]) == "the");
    CHECK(vocab.token(corpus.sequence[1]) == " ");
    CHECK(vocab.token(corpus.sequence[3]) == "  ");
}

TEST_CASE("tokenize: empty input is InvalidCorpus") {
    CHECK_THROWS_AS(tokenize(""), InvalidCorpus);
    Vocabulary vocab;
    CHECK_THROWS_AS(tokenize_with(vocab, ""), InvalidCorpus);
}

TEST_CASE("fnv1a matches the published reference vectors") {
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("insert_canary: fixed offset 0 prepends") {
    auto [vocab, corpus] = tokenize("xxxx");
    Placement place;
    place.kind = Placement::Kind::FixedOffset;
    place.offset = 0;
    Corpus out = insert_canary(corpus, vocab, {"a", "b"}, 1, place);
    CHECK(detokenize(vocab, out.sequence) == "abxxxx");
}

TEST_CASE("insert_canary: exactly count occurrences") {
    auto [vocab, corpus] = tokenize("xyxyxyxyxyxyxyxyxyxy");
    const std::vector<std::string> canary = {"a", "b"};

    Placement fixed;
    fixed.kind = Placement::Kind::FixedOffset;
    fixed.offset = 2;
    Corpus out = insert_canary(corpus, vocab, canary, 3, fixed);
    const std::vector<TokenId> needle = {vocab.id_of("a"), vocab.id_of("b")};
    CHECK(count_occurrences(out.sequence, needle) == 3);
    CHECK(out.sequence.size() == corpus.sequence.size() + 3 * canary.size());

    Placement random;
    random.kind = Placement::Kind::UniformRandom;
    random.seed = 99;
    Corpus r1 = insert_canary(corpus, vocab, canary, 5, random);
    CHECK(count_occurrences(r1.sequence, needle) == 5);
}

TEST_CASE("insert_canary: equal seeds give identical outputs") {
    auto [vocab, corpus] = tokenize("qqqqqqqqqqqqqqqqqqqqqqqq");
    Placement place;
    place.kind = Placement::Kind::UniformRandom;
    place.seed = 1234;
    Vocabulary v1 = vocab, v2 = vocab;
    Corpus a = insert_canary(corpus, v1, {"z"}, 4, place);
    Corpus b = insert_canary(corpus, v2, {"z"}, 4, place);
    CHECK(a.sequence == b.sequence);

    place.seed = 1235;
    Corpus c = insert_canary(corpus, v2, {"z"}, 4, place);
    CHECK(a.sequence != c.sequence); // different seed moves the copies
}

TEST_CASE("insert_canary: original content preserved around the copies") {
    auto [vocab, corpus] = tokenize("abcdefgh");
    Placement place;
    place.kind = Placement::Kind::UniformRandom;
    place.seed = 7;
    Corpus out = insert_canary(corpus, vocab, {"Z", "Z"}, 2, place);
    // Removing the inserted token id restores the original sequence.
    const TokenId z = vocab.id_of("Z");
    std::vector<TokenId> rest;
    for (TokenId id : out.sequence) {
        if (id != z) rest.push_back(id);
    }
    CHECK(rest == corpus.sequence);
}

TEST_CASE("insert_canary: failure modes") {
    auto [vocab, corpus] = tokenize("xx");
    Placement place;
    place.kind = Placement::Kind::FixedOffset;

    place.offset = 10; // beyond the end
    CHECK_THROWS_AS(insert_canary(corpus, vocab, {"a"}, 1, place), InsertionFailure);

    place.offset = 0; // not enough room to spread 5 copies
    CHECK_THROWS_AS(insert_canary(corpus, vocab, {"a"}, 5, place), InsertionFailure);

    // Inserting a token the corpus already contains creates extra
    // occurrences, which violates the exactly-count postcondition.
    CHECK_THROWS_AS(insert_canary(corpus, vocab, {"x"}, 1, place), InsertionFailure);
}

TEST_CASE("insert_canary: extends the vocabulary with unseen tokens") {
    auto [vocab, corpus] = tokenize("aaaa");
    CHECK(!vocab.contains("q"));
    Placement place;
    place.kind = Placement::Kind::FixedOffset;
    Corpus out = insert_canary(corpus, vocab, {"q", "z"}, 1, place);
    CHECK(vocab.contains("q"));
    CHECK(vocab.contains("z"));
    CHECK(out.sequence.size() == 6);
}

TEST_CASE("ngram: unigram probabilities are corpus frequencies at k=0") {
    auto [vocab, corpus] = tokenize("aab");
    NGramModel model = train_ngram(corpus, vocab, 1, 0.0);
    std::vector<double> dist(vocab.size());
    model.next_token_distribution({}, dist);
    CHECK(dist[vocab.id_of("a")] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(dist[vocab.id_of("b")] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("ngram: bigram counts of 'abab'") {
    auto [vocab, corpus] = tokenize("abab");
    NGramModel model = train_ngram(corpus, vocab, 2, 0.0);
    const TokenId a = vocab.id_of("a"), b = vocab.id_of("b");
    const std::vector<TokenId> ctx_a = {a}, ctx_b = {b};
    CHECK(model.context_count(ctx_a, b) == 2);
    CHECK(model.context_count(ctx_b, a) == 1);
    CHECK(model.context_count(ctx_a, a) == 0);
    CHECK(model.context_total(ctx_a) == 2);
    CHECK(model.context_total(ctx_b) == 1);
}

TEST_CASE("ngram: inserting a canary once makes its n-grams seen") {
    auto [vocab, corpus] = tokenize("the quick brown fox jumps over the dog ");
    Placement place;
    place.kind = Placement::Kind::FixedOffset;
    place.offset = 4;
    Corpus with = insert_canary(corpus, vocab, {"~", "9", "9", "~"}, 1, place);
    NGramModel model = train_ngram(with, vocab, 2, 0.0);
    const TokenId tilde = vocab.id_of("~"), nine = vocab.id_of("9");
    const std::vector<TokenId> ctx_t = {tilde}, ctx_9 = {nine};
    CHECK(model.context_count(ctx_t, nine) >= 1);
    CHECK(model.context_count(ctx_9, nine) >= 1);
    CHECK(model.context_count(ctx_9, tilde) >= 1);
}

TEST_CASE("ngram: large k approaches uniform; k=0 unseen context is uniform") {
    auto [vocab, corpus] = tokenize("aab");
    std::vector<double> dist(vocab.size());

    NGramModel heavy = train_ngram(corpus, vocab, 1, 1e12);
    heavy.next_token_distribution({}, dist);
    CHECK(dist[0] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(dist[1] == doctest::Approx(0.5).epsilon(1e-9));

    NGramModel bigram = train_ngram(corpus, vocab, 2, 0.0);
    const std::vector<TokenId> unseen_ctx = {vocab.id_of("b")}; // 'b' is corpus-final
    bigram.next_token_distribution(unseen_ctx, dist);
    CHECK(dist[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(dist[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("ngram: counts match a brute-force recount on a random corpus") {
    Rng rng(2024);
    const std::size_t v = 5;
    Vocabulary vocab = testutil::letters_vocab(v);
    Corpus corpus;
    for (std::size_t i = 0; i < 2000; ++i) {
        corpus.sequence.push_back(static_cast<TokenId>(rng.next_below(v)));
    }
    const std::size_t order = 3;
    NGramModel model = train_ngram(corpus, vocab, order, 0.25);

    std::map<std::vector<TokenId>, std::map<TokenId, std::uint64_t>> brute;
    for (std::size_t i = 0; i + order <= corpus.sequence.size(); ++i) {
        std::vector<TokenId> ctx(corpus.sequence.begin() + i,
                                 corpus.sequence.begin() + i + order - 1);
        ++brute[ctx][corpus.sequence[i + order - 1]];
    }

    std::size_t checked = 0;
    for (const auto& [ctx, row] : brute) {
        std::uint64_t total = 0;
        for (const auto& [tok, cnt] : row) {
            CHECK(model.context_count(ctx, tok) == cnt);
            total += cnt;
            ++checked;
        }
        CHECK(model.context_total(ctx) == total);

        // Distribution recomputed from the brute counts.
        std::vector<double> dist(v);
        model.next_token_distribution(ctx, dist);
        const double denom = static_cast<double>(total) + 0.25 * v;
        for (std::size_t t = 0; t < v; ++t) {
            std::uint64_t cnt = 0;
            auto it = row.find(static_cast<TokenId>(t));
            if (it != row.end()) cnt = it->second;
            CHECK(dist[t] == doctest::Approx((cnt + 0.25) / denom).epsilon(1e-12));
        }
    }
    CHECK(checked > 50);
}

TEST_CASE("distributions sum to 1 and are nonnegative") {
    Rng rng(5);
    Vocabulary vocab = testutil::letters_vocab(7);
    Corpus corpus;
    for (std::size_t i = 0; i < 500; ++i) {
        corpus.sequence.push_back(static_cast<TokenId>(rng.next_below(7)));
    }
    NGramModel ngram = train_ngram(corpus, vocab, 3, 0.01);
    NeuralModel neural = NeuralModel::random_init(vocab, {3, 4, 8}, 11);

    std::vector<double> dist(vocab.size());
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<TokenId> prefix;
        const std::size_t len = rng.next_below(6);
        for (std::size_t i = 0; i < len; ++i) {
            prefix.push_back(static_cast<TokenId>(rng.next_below(7)));
        }
        for (const SequenceModel* model : {(const SequenceModel*)&ngram, (const SequenceModel*)&neural}) {
            model->next_token_distribution(prefix, dist);
            double sum = 0.0;
            double mn = 1.0;
            for (double p : dist) {
                sum += p;
                mn = std::min(mn, p);
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
            CHECK(mn >= 0.0);
            CHECK(mn > 0.0); // k > 0 / softmax: strictly positive
        }
    }
}

TEST_CASE("out-of-vocabulary prefix id raises InvalidToken") {
    auto [vocab, corpus] = tokenize("abc");
    NGramModel ngram = train_ngram(corpus, vocab, 2, 0.1);
    NeuralModel neural(vocab, {2, 3, 4});
    std::vector<double> dist(vocab.size());
    const std::vector<TokenId> bad = {42};
    CHECK_THROWS_AS(ngram.next_token_distribution(bad, dist), InvalidToken);
    CHECK_THROWS_AS(neural.next_token_distribution(bad, dist), InvalidToken);
}

TEST_CASE("neural: all-zero weights predict the uniform distribution") {
    Vocabulary vocab = testutil::letters_vocab(7);
    NeuralModel model(vocab, {4, 3, 5});
    std::vector<double> dist(vocab.size());
    model.next_token_distribution({}, dist);
    const std::vector<TokenId> prefix = {1, 2, 3};
    std::vector<double> dist2(vocab.size());
    model.next_token_distribution(prefix, dist2);
    for (std::size_t t = 0; t < vocab.size(); ++t) {
        CHECK(dist[t] == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
        CHECK(dist2[t] == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
    }
}

TEST_CASE("neural: all-zero weights give loss ln V") {
    Vocabulary vocab = testutil::letters_vocab(9);
    NeuralModel model(vocab, {3, 4, 6});
    std::vector<Example> batch;
    for (TokenId t = 0; t < 9; ++t) {
        batch.push_back({{t, kPadToken, t}, static_cast<TokenId>((t + 3) % 9)});
    }
    auto [loss, grad] = loss_and_gradient(model, batch);
    CHECK(loss == doctest::Approx(std::log(9.0)).epsilon(1e-12));
    CHECK(grad.size() == model.param_count());
}

TEST_CASE("neural: label probability exactly 1 gives zero loss and zero gradient") {
    Vocabulary vocab = testutil::letters_vocab(4);
    NeuralModel model(vocab, {2, 2, 3});
    // Output biases +-800: after max subtraction exp(-1600) underflows to
    // exactly 0, so the softmax is exactly one-hot at the label.
    std::vector<double> theta(model.param_count(), 0.0);
    const std::size_t off_b2 = theta.size() - vocab.size();
    const TokenId label = 2;
    for (std::size_t t = 0; t < vocab.size(); ++t) {
        theta[off_b2 + t] = (t == label) ? 800.0 : -800.0;
    }
    model.set_theta(theta);

    std::vector<double> probs(vocab.size());
    model.next_token_distribution({}, probs);
    CHECK(probs[label] == 1.0);

    const std::vector<Example> batch = {{{0, 1}, label}};
    auto [loss, grad] = loss_and_gradient(model, batch);
    CHECK(loss == 0.0);
    for (double g : grad) CHECK(g == 0.0);
}

TEST_CASE("neural: gradient matches central finite differences") {
    Rng rng(314);
    Vocabulary vocab = testutil::letters_vocab(5);
    const NeuralArch arch{3, 3, 4};
    for (int draw = 0; draw < 5; ++draw) {
        NeuralModel model = NeuralModel::random_init(vocab, arch, 1000 + draw);
        std::vector<Example> batch;
        for (int e = 0; e < 3; ++e) {
            Example ex;
            for (std::size_t i = 0; i < arch.window; ++i) {
                ex.context.push_back(static_cast<TokenId>(rng.next_below(5)));
            }
            ex.label = static_cast<TokenId>(rng.next_below(5));
            batch.push_back(ex);
        }
        auto [loss, grad] = loss_and_gradient(model, batch);
        CHECK(std::isfinite(loss));

        const double h = 1e-5;
        std::vector<double> theta(model.theta().begin(), model.theta().end());
        // Check every parameter against the two-sided difference quotient.
        for (std::size_t i = 0; i < theta.size(); ++i) {
            std::vector<double> up = theta, dn = theta;
            up[i] += h;
            dn[i] -= h;
            NeuralModel mu(vocab, arch), md(vocab, arch);
            mu.set_theta(up);
            md.set_theta(dn);
            const double fd = (loss_and_gradient(mu, batch).first -
                               loss_and_gradient(md, batch).first) / (2.0 * h);
            const double scale = std::max({std::fabs(grad[i]), std::fabs(fd), 1e-6});
            CHECK(std::fabs(grad[i] - fd) / scale < 1e-4);
        }
    }
}

TEST_CASE("neural: empty batch is rejected") {
    Vocabulary vocab = testutil::letters_vocab(3);
    NeuralModel model(vocab, {2, 2, 2});
    std::vector<Example> batch;
    CHECK_THROWS_AS(loss_and_gradient(model, batch), ConfigError);
}

TEST_CASE("neural: batched distribution equals one-at-a-time") {
    Vocabulary vocab = testutil::letters_vocab(6);
    NeuralModel model = NeuralModel::random_init(vocab, {4, 3, 5}, 77);
    std::vector<std::vector<TokenId>> prefixes = {
        {}, {0}, {1, 2}, {3, 4, 5, 0, 1}, {5, 5, 5, 5}};
    std::vector<double> batched;
    model.next_token_distribution_batch(prefixes, batched);
    REQUIRE(batched.size() == prefixes.size() * vocab.size());
    std::vector<double> single(vocab.size());
    for (std::size_t i = 0; i < prefixes.size(); ++i) {
        model.next_token_distribution(prefixes[i], single);
        CHECK(same_bits(single, std::span<const double>(batched.data() + i * vocab.size(),
                                                        vocab.size())));
    }
}

TEST_CASE("example_at: window extraction and padding") {
    Corpus corpus;
    corpus.sequence = {10, 11, 12, 13, 14};
    Example e0 = example_at(corpus, 0, 3);
    CHECK(e0.context == std::vector<TokenId>{kPadToken, kPadToken, kPadToken});
    CHECK(e0.label == 10);
    Example e2 = example_at(corpus, 2, 3);
    CHECK(e2.context == std::vector<TokenId>{kPadToken, 10, 11});
    CHECK(e2.label == 12);
    Example e4 = example_at(corpus, 4, 3);
    CHECK(e4.context == std::vector<TokenId>{11, 12, 13});
    CHECK(e4.label == 14);
}

TEST_CASE("train_neural: zero learning rate never moves the weights") {
    auto [vocab, corpus] = tokenize("abcabcabcabcabcabcabcabc");
    TrainingConfig config;
    config.learning_rate = 0.0;
    config.batch_size = 4;
    config.epochs = 1;
    config.seed = 9;
    TrainResult one = train_neural(corpus, vocab, {3, 3, 4}, config, 1);
    config.epochs = 3;
    TrainResult three = train_neural(corpus, vocab, {3, 3, 4}, config, 0);
    CHECK(same_bits(one.model->theta(), three.model->theta()));
    // Every checkpoint equals the final state: nothing moved within the run.
    for (const auto& ck : one.checkpoints) {
        CHECK(same_bits(ck.model->theta(), one.model->theta()));
    }

    config.learning_rate = 0.5; // sanity: a real rate does move them
    config.epochs = 1;
    TrainResult moved = train_neural(corpus, vocab, {3, 3, 4}, config, 0);
    CHECK(!same_bits(moved.model->theta(), one.model->theta()));
}

TEST_CASE("train_neural: fixed seed reproduces weights byte for byte") {
    auto [vocab, corpus] = tokenize("the rain in spain falls mainly on the plain ");
    TrainingConfig config;
    config.learning_rate = 0.2;
    config.batch_size = 8;
    config.epochs = 2;
    config.seed = 123;
    TrainResult a = train_neural(corpus, vocab, {4, 4, 8}, config, 3);
    TrainResult b = train_neural(corpus, vocab, {4, 4, 8}, config, 3);
    CHECK(same_bits(a.model->theta(), b.model->theta()));
    REQUIRE(a.checkpoints.size() == b.checkpoints.size());
    for (std::size_t i = 0; i < a.checkpoints.size(); ++i) {
        CHECK(a.checkpoints[i].minibatch_index == b.checkpoints[i].minibatch_index);
        CHECK(same_bits(a.checkpoints[i].model->theta(), b.checkpoints[i].model->theta()));
    }
    CHECK(a.epoch_mean_loss == b.epoch_mean_loss);

    config.seed = 124;
    TrainResult c = train_neural(corpus, vocab, {4, 4, 8}, config, 0);
    CHECK(!same_bits(c.model->theta(), a.model->theta()));
}

TEST_CASE("train_neural: checkpoint cadence") {
    auto [vocab, corpus] = tokenize("abcdefghijabcdefghijabcdefghij"); // 30 tokens
    TrainingConfig config;
    config.learning_rate = 0.1;
    config.batch_size = 10; // 3 minibatches per epoch
    config.epochs = 2;
    config.seed = 1;
    TrainResult result = train_neural(corpus, vocab, {2, 2, 3}, config, 2);
    // 6 minibatches total, snapshots at 2, 4, 6.
    REQUIRE(result.checkpoints.size() == 3);
    CHECK(result.checkpoints[0].minibatch_index == 2);
    CHECK(result.checkpoints[1].minibatch_index == 4);
    CHECK(result.checkpoints[2].minibatch_index == 6);
    CHECK(result.checkpoints[0].epoch == 0);
    CHECK(result.checkpoints[2].epoch == 1);
    CHECK(result.epoch_mean_loss.size() == 2);
}

TEST_CASE("train_neural: one epoch on the bundled corpus beats the initial loss") {
    const std::string text = read_file(bundled_corpus_path()).substr(0, 20000);
    auto [vocab, corpus] = tokenize(text);
    const NeuralArch arch{6, 8, 32};

    NeuralModel init = NeuralModel::random_init(vocab, arch, 4242);
    const double loss_init = mean_loss(init, corpus);
    // Small random weights start out near the uniform predictor.
    CHECK(loss_init == doctest::Approx(std::log(static_cast<double>(vocab.size()))).epsilon(0.02));

    TrainingConfig config;
    config.learning_rate = 0.3;
    config.batch_size = 64;
    config.epochs = 1;
    config.seed = 1;
    TrainResult result = train_neural(corpus, vocab, arch, config, 0);
    const double loss_after = mean_loss(*result.model, corpus);
    CHECK(loss_after < loss_init);
    // Pinned measurement for this corpus slice and seed; training is
    // deterministic, so drift here means the trainer changed behavior.
    CHECK(loss_after == doctest::Approx(1.8508508377689428).epsilon(0.02));
}

TEST_CASE("train_neural: divergence carries the last stable weights") {
    std::string text;
    for (int i = 0; i < 12; ++i) text += "aaaab";
    auto [vocab, corpus] = tokenize(text);
    TrainingConfig config;
    // One step this size puts weights near 1e306; the next forward pass
    // overflows their products and the loss stops being finite. (Merely
    // "huge" rates saturate tanh and stay finite forever.)
    config.learning_rate = 1e308;
    config.batch_size = 4;
    config.epochs = 50;
    config.seed = 3;
    try {
        train_neural(corpus, vocab, {3, 3, 4}, config, 0);
        FAIL("expected TrainingDiverged");
    } catch (const TrainingDiverged& e) {
        CHECK(e.minibatch() >= 1);
        REQUIRE(e.last_stable() != nullptr);
        const double loss = mean_loss(*e.last_stable(), corpus);
        CHECK(std::isfinite(loss));
    }
}
