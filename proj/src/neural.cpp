#include "memaudit/neural.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "memaudit/rng.hpp"

namespace memaudit {

NeuralModel::NeuralModel(Vocabulary vocab, NeuralArch arch)
    : vocab_(std::move(vocab)), arch_(arch) {
    if (arch_.window < 1 || arch_.embed_dim < 1 || arch_.hidden_dim < 1) {
        throw ConfigError("neural arch dimensions must be >= 1");
    }
    if (vocab_.size() == 0) throw ConfigError("neural model needs a non-empty vocabulary");
    theta_.assign(off_b2() + vocab_.size(), 0.0);
}

NeuralModel NeuralModel::random_init(Vocabulary vocab, NeuralArch arch, std::uint64_t seed) {
    NeuralModel model(std::move(vocab), arch);
    Rng rng(seed);
    for (double& w : model.theta_) w = rng.next_uniform(-0.1, 0.1);
    return model;
}

void NeuralModel::set_theta(std::vector<double> theta) {
    if (theta.size() != theta_.size()) throw ConfigError("set_theta: size mismatch");
    theta_ = std::move(theta);
}

void NeuralModel::forward_parts(std::span<const TokenId> context, std::span<double> hidden,
                                std::span<double> probs) const {
    const std::size_t v = vocab_.size();
    const std::size_t d = arch_.embed_dim;
    const std::size_t h = arch_.hidden_dim;
    const double* embed = theta_.data() + off_embed();
    const double* w1 = theta_.data() + off_w1();
    const double* b1 = theta_.data() + off_b1();
    const double* w2 = theta_.data() + off_w2();
    const double* b2 = theta_.data() + off_b2();

    std::copy(b1, b1 + h, hidden.begin());
    for (std::size_t pos = 0; pos < arch_.window; ++pos) {
        const TokenId tok = context[pos];
        if (tok == kPadToken) continue; // pad embeds to zero
        if (tok >= v) throw InvalidToken("context contains out-of-vocabulary id");
        const double* erow = embed + tok * d;
        for (std::size_t i = 0; i < d; ++i) {
            const double coef = erow[i];
            const double* row = w1 + (pos * d + i) * h;
            for (std::size_t j = 0; j < h; ++j) hidden[j] += coef * row[j];
        }
    }
    for (std::size_t j = 0; j < h; ++j) hidden[j] = std::tanh(hidden[j]);

    std::copy(b2, b2 + v, probs.begin());
    for (std::size_t j = 0; j < h; ++j) {
        const double coef = hidden[j];
        const double* row = w2 + j * v;
        for (std::size_t t = 0; t < v; ++t) probs[t] += coef * row[t];
    }
    double mx = probs[0];
    for (std::size_t t = 1; t < v; ++t) mx = std::max(mx, probs[t]);
    double sum = 0.0;
    for (std::size_t t = 0; t < v; ++t) {
        probs[t] = std::exp(probs[t] - mx);
        sum += probs[t];
    }
    if (!(sum > 0.0) || !std::isfinite(sum)) {
        throw NumericalError("non-finite values in forward pass");
    }
    for (std::size_t t = 0; t < v; ++t) probs[t] /= sum;
}

void NeuralModel::forward(std::span<const TokenId> context, std::span<double> probs) const {
    std::vector<double> hidden(arch_.hidden_dim);
    forward_parts(context, hidden, probs);
}

void NeuralModel::next_token_distribution(std::span<const TokenId> prefix,
                                          std::span<double> out) const {
    check_prefix(prefix);
    const std::size_t w = arch_.window;
    std::vector<TokenId> ctx(w, kPadToken);
    const std::size_t take = std::min(prefix.size(), w);
    for (std::size_t i = 0; i < take; ++i) {
        ctx[w - take + i] = prefix[prefix.size() - take + i];
    }
    forward(ctx, out);
}

void NeuralModel::next_token_distribution_batch(const std::vector<std::vector<TokenId>>& prefixes,
                                                std::vector<double>& out) const {
    const std::size_t v = vocab_.size();
    out.resize(prefixes.size() * v);
    std::vector<double> hidden(arch_.hidden_dim);
    const std::size_t w = arch_.window;
    std::vector<TokenId> ctx(w);
    for (std::size_t i = 0; i < prefixes.size(); ++i) {
        const auto& prefix = prefixes[i];
        check_prefix(prefix);
        std::fill(ctx.begin(), ctx.end(), kPadToken);
        const std::size_t take = std::min(prefix.size(), w);
        for (std::size_t j = 0; j < take; ++j) {
            ctx[w - take + j] = prefix[prefix.size() - take + j];
        }
        forward_parts(ctx, hidden, std::span<double>(out.data() + i * v, v));
    }
}

namespace {

struct Workspace {
    std::vector<double> hidden;
    std::vector<double> probs;
    std::vector<double> dlogits;
    std::vector<double> dhidden;

    explicit Workspace(const NeuralModel& model)
        : hidden(model.arch().hidden_dim),
          probs(model.vocab().size()),
          dlogits(model.vocab().size()),
          dhidden(model.arch().hidden_dim) {}
};

// One forward/backward pass. Adds `scale` times the example's loss gradient
// into `grad` (same flat layout as theta) and returns the example's
// cross-entropy in nats.
double accumulate_example(const NeuralModel& model, const Example& ex, double scale,
                          std::span<double> grad, Workspace& ws) {
    const NeuralArch& arch = model.arch();
    const std::size_t v = model.vocab().size();
    const std::size_t d = arch.embed_dim;
    const std::size_t h = arch.hidden_dim;
    if (ex.context.size() != arch.window) {
        throw ConfigError("example context length != model window");
    }
    if (ex.label >= v) throw InvalidToken("example label out of vocabulary");

    const double* theta = model.theta().data();
    const double* embed = theta;
    const double* w1 = embed + v * d;
    const double* b1 = w1 + arch.window * d * h;
    const double* w2 = b1 + h;
    const double* b2 = w2 + h * v;

    auto& hidden = ws.hidden;
    auto& probs = ws.probs;
    auto& dlogits = ws.dlogits;
    auto& dhidden = ws.dhidden;

    std::copy(b1, b1 + h, hidden.begin());
    for (std::size_t pos = 0; pos < arch.window; ++pos) {
        const TokenId tok = ex.context[pos];
        if (tok == kPadToken) continue;
        if (tok >= v) throw InvalidToken("example context id out of vocabulary");
        const double* erow = embed + tok * d;
        for (std::size_t i = 0; i < d; ++i) {
            const double coef = erow[i];
            const double* row = w1 + (pos * d + i) * h;
            for (std::size_t j = 0; j < h; ++j) hidden[j] += coef * row[j];
        }
    }
    for (std::size_t j = 0; j < h; ++j) hidden[j] = std::tanh(hidden[j]);

    std::copy(b2, b2 + v, probs.begin());
    for (std::size_t j = 0; j < h; ++j) {
        const double coef = hidden[j];
        const double* row = w2 + j * v;
        for (std::size_t t = 0; t < v; ++t) probs[t] += coef * row[t];
    }
    double mx = probs[0];
    for (std::size_t t = 1; t < v; ++t) mx = std::max(mx, probs[t]);
    double sum = 0.0;
    for (std::size_t t = 0; t < v; ++t) {
        probs[t] = std::exp(probs[t] - mx);
        sum += probs[t];
    }
    if (!(sum > 0.0) || !std::isfinite(sum)) {
        throw NumericalError("non-finite values in forward pass");
    }
    for (std::size_t t = 0; t < v; ++t) probs[t] /= sum;

    const double loss = -std::log(std::max(probs[ex.label], 1e-300));

    // softmax + cross-entropy: dlogits = scale * (p - onehot(label))
    for (std::size_t t = 0; t < v; ++t) dlogits[t] = scale * probs[t];
    dlogits[ex.label] -= scale;

    double* g_embed = grad.data();
    double* g_w1 = g_embed + v * d;
    double* g_b1 = g_w1 + arch.window * d * h;
    double* g_w2 = g_b1 + h;
    double* g_b2 = g_w2 + h * v;

    for (std::size_t t = 0; t < v; ++t) g_b2[t] += dlogits[t];
    for (std::size_t j = 0; j < h; ++j) {
        const double a = hidden[j];
        double* g_row = g_w2 + j * v;
        const double* w_row = w2 + j * v;
        double acc = 0.0;
        for (std::size_t t = 0; t < v; ++t) {
            g_row[t] += a * dlogits[t];
            acc += w_row[t] * dlogits[t];
        }
        dhidden[j] = acc * (1.0 - a * a); // through tanh
    }
    for (std::size_t j = 0; j < h; ++j) g_b1[j] += dhidden[j];
    for (std::size_t pos = 0; pos < arch.window; ++pos) {
        const TokenId tok = ex.context[pos];
        if (tok == kPadToken) continue;
        const double* erow = embed + tok * d;
        double* g_erow = g_embed + tok * d;
        for (std::size_t i = 0; i < d; ++i) {
            const double coef = erow[i];
            const double* w_row = w1 + (pos * d + i) * h;
            double* g_wrow = g_w1 + (pos * d + i) * h;
            double acc = 0.0;
            for (std::size_t j = 0; j < h; ++j) {
                g_wrow[j] += coef * dhidden[j];
                acc += w_row[j] * dhidden[j];
            }
            g_erow[i] += acc;
        }
    }
    return loss;
}

} // namespace

std::pair<double, std::vector<double>> loss_and_gradient(const NeuralModel& model,
                                                         std::span<const Example> batch) {
    if (batch.empty()) throw ConfigError("loss_and_gradient: empty batch");
    const double scale = 1.0 / static_cast<double>(batch.size());
    std::vector<double> grad(model.param_count(), 0.0);
    Workspace ws(model);
    double loss = 0.0;
    for (const Example& ex : batch) {
        loss += scale * accumulate_example(model, ex, scale, grad, ws);
    }
    if (!std::isfinite(loss)) throw NumericalError("non-finite loss");
    return {loss, std::move(grad)};
}

Example example_at(const Corpus& corpus, std::size_t position, std::size_t window) {
    Example ex;
    ex.context.assign(window, kPadToken);
    for (std::size_t i = 0; i < window; ++i) {
        const std::size_t want = position + i;
        if (want >= window) ex.context[i] = corpus.sequence[want - window];
    }
    ex.label = corpus.sequence[position];
    return ex;
}

TrainResult train_neural(const Corpus& corpus, const Vocabulary& vocab, NeuralArch arch,
                         const TrainingConfig& config, std::size_t snapshot_every) {
    if (corpus.sequence.empty()) throw InvalidCorpus("train_neural: empty corpus");
    if (config.learning_rate < 0.0) throw ConfigError("learning rate must be >= 0");
    if (config.batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (config.epochs < 1) throw ConfigError("epochs must be >= 1");

    TrainResult result;
    auto model = std::make_shared<NeuralModel>(
        NeuralModel::random_init(vocab, arch, mix_seed(config.seed, 0x696e6974ULL)));

    const std::size_t n = corpus.sequence.size();
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);

    std::vector<double> grad(model->param_count());
    Workspace ws(*model);

    // Parameters as of the last minibatch that evaluated to a finite loss;
    // reported when a later batch diverges.
    std::vector<double> stable_theta(model->theta().begin(), model->theta().end());
    std::size_t minibatch_index = 0;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        if (config.shuffle) {
            Rng rng(mix_seed(config.seed, 0x73687566ULL + epoch));
            for (std::size_t i = n; i > 1; --i) {
                const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
                std::swap(order[i - 1], order[j]);
            }
        }
        double epoch_loss = 0.0;
        std::size_t epoch_batches = 0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t end = std::min(n, start + config.batch_size);
            ++minibatch_index;
            std::fill(grad.begin(), grad.end(), 0.0);
            double batch_loss = 0.0;
            bool blew_up = false;
            try {
                // summation in ascending batch-slot order: bit-deterministic
                for (std::size_t slot = start; slot < end; ++slot) {
                    const Example ex = example_at(corpus, order[slot], arch.window);
                    batch_loss += accumulate_example(*model, ex, 1.0, grad, ws);
                }
            } catch (const NumericalError&) {
                blew_up = true;
            }
            if (blew_up || !std::isfinite(batch_loss)) {
                auto stable = std::make_shared<NeuralModel>(vocab, arch);
                stable->set_theta(std::move(stable_theta));
                throw TrainingDiverged("training diverged at minibatch " +
                                           std::to_string(minibatch_index),
                                       std::move(stable), minibatch_index);
            }
            stable_theta.assign(model->theta().begin(), model->theta().end());

            const std::size_t m = end - start;
            const double step = config.learning_rate / static_cast<double>(m);
            auto theta = model->theta_mut();
            for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= step * grad[i];

            epoch_loss += batch_loss / static_cast<double>(m);
            ++epoch_batches;

            if (snapshot_every > 0 && minibatch_index % snapshot_every == 0) {
                result.checkpoints.push_back(
                    {minibatch_index, epoch, std::make_shared<NeuralModel>(*model)});
            }
        }
        result.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(epoch_batches));
    }
    result.model = std::move(model);
    return result;
}

double mean_loss(const NeuralModel& model, const Corpus& corpus) {
    if (corpus.sequence.empty()) throw InvalidCorpus("mean_loss: empty corpus");
    std::vector<double> probs(model.vocab().size());
    double total = 0.0;
    const std::size_t w = model.arch().window;
    for (std::size_t i = 0; i < corpus.sequence.size(); ++i) {
        const Example ex = example_at(corpus, i, w);
        model.forward(ex.context, probs);
        total += -std::log(std::max(probs[ex.label], 1e-300));
    }
    return total / static_cast<double>(corpus.sequence.size());
}

} // namespace memaudit
