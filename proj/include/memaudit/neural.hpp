#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "memaudit/model.hpp"

namespace memaudit {

/// Sentinel context id for positions before the start of a sequence.
/// Padding positions contribute a fixed all-zero embedding.
constexpr TokenId kPadToken = 0xfffffffeu;

struct NeuralArch {
    std::size_t window = 8;
    std::size_t embed_dim = 16;
    std::size_t hidden_dim = 64;
};

struct TrainingConfig {
    double learning_rate = 0.1;
    std::size_t batch_size = 64;
    std::size_t epochs = 1;
    std::uint64_t seed = 1;
    bool shuffle = true;
};

struct Example {
    std::vector<TokenId> context; // exactly `window` ids, kPadToken allowed
    TokenId label = 0;
};

/// Fixed-window feed-forward next-token model:
/// concat(embeddings of last w tokens) -> tanh hidden -> softmax over V.
///
/// Weights live in one flat parameter vector theta laid out as
/// [E (V*d)] [W1 (w*d*h)] [b1 (h)] [W2 (h*V)] [b2 (V)], all row-major.
/// Evaluation is deterministic given theta and input.
class NeuralModel : public SequenceModel {
public:
    NeuralModel(Vocabulary vocab, NeuralArch arch); // all-zero weights

    static NeuralModel random_init(Vocabulary vocab, NeuralArch arch, std::uint64_t seed);

    const Vocabulary& vocab() const override { return vocab_; }
    const NeuralArch& arch() const { return arch_; }

    std::span<const double> theta() const { return theta_; }
    std::span<double> theta_mut() { return theta_; }
    std::size_t param_count() const { return theta_.size(); }

    /// Replaces the parameter vector; size must equal param_count().
    void set_theta(std::vector<double> theta);

    void next_token_distribution(std::span<const TokenId> prefix,
                                 std::span<double> out) const override;
    void next_token_distribution_batch(const std::vector<std::vector<TokenId>>& prefixes,
                                       std::vector<double>& out) const override;

    /// Forward pass for an explicit context window (size == window).
    void forward(std::span<const TokenId> context, std::span<double> probs) const;

private:
    // theta offsets
    std::size_t off_embed() const { return 0; }
    std::size_t off_w1() const { return vocab_.size() * arch_.embed_dim; }
    std::size_t off_b1() const { return off_w1() + arch_.window * arch_.embed_dim * arch_.hidden_dim; }
    std::size_t off_w2() const { return off_b1() + arch_.hidden_dim; }
    std::size_t off_b2() const { return off_w2() + arch_.hidden_dim * vocab_.size(); }

    void forward_parts(std::span<const TokenId> context, std::span<double> hidden,
                       std::span<double> probs) const;

    Vocabulary vocab_;
    NeuralArch arch_;
    std::vector<double> theta_;
};

/// Training aborted on a non-finite loss. Carries the last stable weights.
class TrainingDiverged : public AuditError {
public:
    TrainingDiverged(const std::string& what, std::shared_ptr<NeuralModel> last_stable,
                     std::size_t minibatch)
        : AuditError(what), last_stable_(std::move(last_stable)), minibatch_(minibatch) {}

    const std::shared_ptr<NeuralModel>& last_stable() const { return last_stable_; }
    std::size_t minibatch() const { return minibatch_; }

private:
    std::shared_ptr<NeuralModel> last_stable_;
    std::size_t minibatch_;
};

/// Mean cross-entropy (natural log) over the batch and the gradient of the
/// mean loss, flat in theta layout.
std::pair<double, std::vector<double>> loss_and_gradient(const NeuralModel& model,
                                                         std::span<const Example> batch);

struct Checkpoint {
    std::size_t minibatch_index = 0; // 1-based count of completed minibatches
    std::size_t epoch = 0;
    std::shared_ptr<NeuralModel> model;
};

struct TrainResult {
    std::shared_ptr<NeuralModel> model;
    std::vector<Checkpoint> checkpoints;
    std::vector<double> epoch_mean_loss; // mean minibatch loss per epoch, nats
};

/// SGD: theta <- theta - (lr / batch_size) * sum of per-example gradients,
/// summed in ascending batch-slot order. Bit-deterministic for a fixed
/// seed. Checkpoints are emitted every `snapshot_every` minibatches
/// (0 disables them).
TrainResult train_neural(const Corpus& corpus, const Vocabulary& vocab, NeuralArch arch,
                         const TrainingConfig& config, std::size_t snapshot_every = 0);

/// Mean cross-entropy of the model over every position of the corpus, nats.
double mean_loss(const NeuralModel& model, const Corpus& corpus);

/// Training examples of a corpus in position order: context = the w tokens
/// before position i (padded), label = token at i.
Example example_at(const Corpus& corpus, std::size_t position, std::size_t window);

} // namespace memaudit
