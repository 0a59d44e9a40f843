#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "supmeter/matrix.hpp"
#include "supmeter/rng.hpp"

namespace supmeter::tasks {

/// (a + b) mod p with a two-path MLP:
///   h = GELU(W1 e_a + W2 e_b),  logits = W3 h.
struct GrokConfig {
    std::size_t modulus = 53;
    double train_fraction = 0.4;
    std::size_t embed_dim = 12;
    std::size_t hidden = 48;
    std::size_t steps = 25000;
    double lr = 0.005;
    std::size_t batch = 128;
    double weight_decay = 0.0002;
    std::size_t checkpoint_every = 250;
    std::uint64_t seed = 0;
    /// One embedding table for both operands instead of one per operand position.
    bool shared_embedding = false;
    /// true: AdamW-style shrink of the parameters. false: weight_decay * param is
    /// added to the gradient before Adam (L2 through the moments).
    bool decoupled_weight_decay = true;

    void validate() const;
};

struct GrokModel {
    Matrix embed_a;  ///< p x d, one row per token
    Matrix embed_b;  ///< p x d; unused when the table is shared
    Matrix W1;       ///< hidden x d
    Matrix W2;       ///< hidden x d
    Matrix W3;       ///< p x hidden
    bool shared_embedding = false;

    const Matrix& table_b() const noexcept { return shared_embedding ? embed_a : embed_b; }
};

/// Pairs are encoded as a * p + b.
struct GrokSplit {
    std::vector<std::size_t> train;  ///< sorted
    std::vector<std::size_t> test;   ///< sorted
};

/// Shuffles all p^2 pairs and assigns the first round(fraction * p^2) to train.
GrokSplit make_split(const GrokConfig& cfg);

/// Embeddings ~ N(0, 1); linear weights ~ Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
GrokModel init_grok(const GrokConfig& cfg, Rng& rng);

struct GrokForward {
    Matrix pre;     ///< hidden x B, before GELU
    Matrix hidden;  ///< hidden x B, after GELU
    Matrix logits;  ///< p x B
};

GrokForward forward(const GrokModel& model, std::span<const std::size_t> pairs);
/// Post-GELU hidden layer for the given pairs.
Matrix hidden_activations(const GrokModel& model, std::span<const std::size_t> pairs);

struct GrokGradients {
    double loss = 0.0;
    Matrix embed_a;
    Matrix embed_b;  ///< zero-sized when the table is shared
    Matrix W1;
    Matrix W2;
    Matrix W3;
};

/// Mean softmax cross-entropy against (a + b) mod p.
GrokGradients loss_and_grad(const GrokModel& model, std::span<const std::size_t> pairs);
double accuracy(const GrokModel& model, std::span<const std::size_t> pairs);

struct GrokCheckpoint {
    std::size_t step = 0;
    GrokModel model;
    double train_acc = 0.0;
    double test_acc = 0.0;
    double train_loss = 0.0;
};

struct GrokRun {
    GrokSplit split;
    std::vector<GrokCheckpoint> checkpoints;  ///< at steps checkpoint_every, 2*checkpoint_every, ...
};

/// Adam with decoupled weight decay on shuffled passes over the training pairs.
GrokRun train_grok(const GrokConfig& cfg);

nlohmann::json to_json(const GrokConfig& cfg);
GrokConfig grok_config_from_json(const nlohmann::json& j, GrokConfig base = {});
/// {step, train_acc, test_acc, params: {embed_a, embed_b, W1, W2, W3}}.
nlohmann::json checkpoint_json(const GrokCheckpoint& ckpt);

}  // namespace supmeter::tasks
