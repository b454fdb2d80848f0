#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mot/rng.hpp"
#include "mot/tensor.hpp"

namespace mot {

/// Named learnable tensor plus its optimizer moment buffers.
struct Parameter {
    std::string name;
    Tensor tensor;
    bool trainable = true;  // false for running-statistic buffers
    std::vector<double> adam_m, adam_v;
};

/// Ordered, name-unique collection of parameters. Registration order is the
/// iteration (and checkpoint) order, so it must be deterministic.
class ParameterStore {
public:
    Tensor add(const std::string& name, Tensor init, bool trainable = true);
    Tensor get(const std::string& name) const;
    bool has(const std::string& name) const;
    Parameter& param(const std::string& name);

    const std::vector<std::shared_ptr<Parameter>>& items() const { return items_; }
    std::vector<std::shared_ptr<Parameter>>& items() { return items_; }

    void zero_grad();
    int64_t total_size() const;

    /// Binary checkpoint, versioned header, float64 payload. Round-trips
    /// bit-exactly.
    void save(const std::string& path) const;
    /// Loads into this store; every name and shape must match exactly.
    void load(const std::string& path);

private:
    std::vector<std::shared_ptr<Parameter>> items_;
    std::map<std::string, size_t> index_;
};

// ---- initializers ----
Tensor xavier_uniform(Rng& rng, int64_t fan_out, int64_t fan_in);

// ---- functional layers ----

/// x (.., in) with weight (out, in) and bias (out) -> (.., out)
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Normalization over the last axis with learned gain/bias.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Per-position linear map over channels of a (Cin,H,W) map.
Tensor conv1x1(const Tensor& map, const Tensor& weight, const Tensor& bias);

/// Batch statistics state for a batch_norm layer. Running buffers live in the
/// ParameterStore as non-trainable entries so they checkpoint with the model.
struct BatchNormState {
    Tensor gamma, beta;          // trainable
    Tensor running_mean, running_var;  // buffers
    double momentum = 0.1;
    double eps = 1e-5;
};

BatchNormState make_batch_norm(ParameterStore& store, const std::string& prefix, int64_t features);

enum class Mode { Train, Infer };

/// x is (B, F). Train mode normalizes by batch statistics and updates the
/// running buffers in place; infer mode uses the stored statistics.
Tensor batch_norm(const Tensor& x, BatchNormState& bn, Mode mode);

struct AttentionParams {
    int64_t heads = 4;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

/// Output projection starts at zero so a fresh block is a no-op in residual
/// compositions.
AttentionParams make_attention_params(ParameterStore& store, const std::string& prefix,
                                      int64_t dim, int64_t heads, Rng& rng);

/// Scaled dot-product multi-head attention over (L, D) token matrices.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const AttentionParams& p);

struct EncoderLayerParams {
    AttentionParams attn;
    Tensor ln1_gamma, ln1_beta;
    Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    Tensor ln2_gamma, ln2_beta;
};

EncoderLayerParams make_encoder_layer(ParameterStore& store, const std::string& prefix,
                                      int64_t dim, int64_t heads, int64_t ffn_dim, Rng& rng);

/// Post-norm transformer encoder layer: self-attention and position-wise FFN,
/// each behind a residual + layer norm. Token count and width are preserved.
Tensor encoder_layer(const Tensor& tokens, const EncoderLayerParams& p);

/// Residual pre-norm attention block: x + MHA(LN(x)). With zeroed output
/// projection this is exactly the identity.
struct AttentionBlockParams {
    AttentionParams attn;
    Tensor ln_gamma, ln_beta;
};

AttentionBlockParams make_attention_block(ParameterStore& store, const std::string& prefix,
                                          int64_t dim, int64_t heads, Rng& rng);
Tensor attention_block(const Tensor& tokens, const AttentionBlockParams& p);

/// Fixed 2D sinusoidal positional encoding, shape (H*W, dim), row-major over
/// (row, col) positions. dim must be divisible by 4.
Tensor sinusoidal_encoding_2d(int64_t h, int64_t w, int64_t dim);

// ---- optimizer ----

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
    /// One update over every trainable parameter; throws if any is missing
    /// its gradient. Gradients are left untouched.
    void step(ParameterStore& store);
    void set_lr(double lr) { cfg_.lr = lr; }
    double lr() const { return cfg_.lr; }
    int64_t steps_taken() const { return t_; }

private:
    AdamConfig cfg_;
    int64_t t_ = 0;
};

}  // namespace mot
