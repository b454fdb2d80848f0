#include "mot/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mot {

Tensor rand_uniform(Rng& rng, Shape shape, double a, double b, bool requires_grad) {
    std::vector<double> d(shape_numel(shape));
    for (double& v : d) v = rng.uniform(a, b);
    return Tensor::from_data(std::move(shape), std::move(d), requires_grad);
}

Tensor rand_normal(Rng& rng, Shape shape, double mu, double sigma, bool requires_grad) {
    std::vector<double> d(shape_numel(shape));
    for (double& v : d) v = rng.normal(mu, sigma);
    return Tensor::from_data(std::move(shape), std::move(d), requires_grad);
}

Tensor xavier_uniform(Rng& rng, int64_t fan_out, int64_t fan_in) {
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return rand_uniform(rng, {fan_out, fan_in}, -limit, limit, true);
}

// ---- ParameterStore ----

Tensor ParameterStore::add(const std::string& name, Tensor init, bool trainable) {
    if (index_.count(name))
        throw std::invalid_argument("parameter name already registered: " + name);
    auto p = std::make_shared<Parameter>();
    p->name = name;
    p->tensor = std::move(init);
    p->tensor.set_requires_grad(trainable);
    p->trainable = trainable;
    index_[name] = items_.size();
    items_.push_back(p);
    return items_.back()->tensor;
}

Tensor ParameterStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("no such parameter: " + name);
    return items_[it->second]->tensor;
}

bool ParameterStore::has(const std::string& name) const { return index_.count(name) > 0; }

Parameter& ParameterStore::param(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("no such parameter: " + name);
    return *items_[it->second];
}

void ParameterStore::zero_grad() {
    for (auto& p : items_) p->tensor.zero_grad();
}

int64_t ParameterStore::total_size() const {
    int64_t n = 0;
    for (const auto& p : items_) n += p->tensor.numel();
    return n;
}

namespace {
constexpr char kCkptMagic[8] = {'M', 'O', 'T', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return v;
}
}  // namespace

void ParameterStore::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open for write: " + path);
    os.write(kCkptMagic, sizeof(kCkptMagic));
    write_pod<uint32_t>(os, static_cast<uint32_t>(items_.size()));
    for (const auto& p : items_) {
        write_pod<uint32_t>(os, static_cast<uint32_t>(p->name.size()));
        os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        const auto& sh = p->tensor.shape();
        write_pod<uint32_t>(os, static_cast<uint32_t>(sh.size()));
        for (int64_t d : sh) write_pod<int64_t>(os, d);
        auto data = p->tensor.data();
        os.write(reinterpret_cast<const char*>(data.data()),
                 static_cast<std::streamsize>(data.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

void ParameterStore::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kCkptMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad header in " + path);
    uint32_t count = read_pod<uint32_t>(is);
    if (count != items_.size())
        throw std::runtime_error("checkpoint: parameter count mismatch (file has " +
                                 std::to_string(count) + ", model has " +
                                 std::to_string(items_.size()) + ")");
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_len = read_pod<uint32_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        uint32_t ndim = read_pod<uint32_t>(is);
        Shape sh(ndim);
        for (uint32_t d = 0; d < ndim; ++d) sh[d] = read_pod<int64_t>(is);
        auto& p = param(name);
        if (p.tensor.shape() != sh)
            throw std::runtime_error("checkpoint: shape mismatch for " + name + ": file " +
                                     shape_str(sh) + " vs model " +
                                     shape_str(p.tensor.shape()));
        auto dst = p.tensor.raw_data();
        is.read(reinterpret_cast<char*>(dst.data()),
                static_cast<std::streamsize>(dst.size() * sizeof(double)));
        if (!is) throw std::runtime_error("checkpoint: truncated payload for " + name);
        p.adam_m.clear();
        p.adam_v.clear();
    }
}

// ---- functional layers ----

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    return matmul(x, transpose(weight, 0, 1)) + bias;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    Tensor mu = mean(x, -1, true);
    Tensor centered = x - mu;
    Tensor var = mean(centered * centered, -1, true);
    Tensor norm = centered / sqrt(var + eps);
    return norm * gamma + beta;
}

Tensor conv1x1(const Tensor& map, const Tensor& weight, const Tensor& bias) {
    if (map.ndim() != 3)
        throw std::invalid_argument("conv1x1 expects (C,H,W), got " + shape_str(map.shape()));
    int64_t cin = map.shape()[0], h = map.shape()[1], w = map.shape()[2];
    if (weight.shape()[1] != cin)
        throw std::invalid_argument("conv1x1 channel mismatch: map " + shape_str(map.shape()) +
                                    " weight " + shape_str(weight.shape()));
    Tensor flat = reshape(map, {cin, h * w});
    Tensor y = matmul(weight, flat) + reshape(bias, {weight.shape()[0], 1});
    return reshape(y, {weight.shape()[0], h, w});
}

BatchNormState make_batch_norm(ParameterStore& store, const std::string& prefix,
                               int64_t features) {
    BatchNormState bn;
    bn.gamma = store.add(prefix + ".gamma", Tensor::full({features}, 1.0));
    bn.beta = store.add(prefix + ".beta", Tensor::zeros({features}));
    bn.running_mean = store.add(prefix + ".running_mean", Tensor::zeros({features}), false);
    bn.running_var = store.add(prefix + ".running_var", Tensor::full({features}, 1.0), false);
    return bn;
}

Tensor batch_norm(const Tensor& x, BatchNormState& bn, Mode mode) {
    if (x.ndim() != 2)
        throw std::invalid_argument("batch_norm expects (B,F), got " + shape_str(x.shape()));
    if (mode == Mode::Train) {
        Tensor mu = mean(x, 0, true);
        Tensor centered = x - mu;
        Tensor var = mean(centered * centered, 0, true);
        Tensor norm = centered / sqrt(var + bn.eps);

        // running-statistic update is state, not graph
        auto rm = bn.running_mean.raw_data();
        auto rv = bn.running_var.raw_data();
        auto mud = mu.data();
        auto vard = var.data();
        for (size_t i = 0; i < rm.size(); ++i) {
            rm[i] = (1.0 - bn.momentum) * rm[i] + bn.momentum * mud[i];
            rv[i] = (1.0 - bn.momentum) * rv[i] + bn.momentum * vard[i];
        }
        return norm * bn.gamma + bn.beta;
    }
    Tensor norm = (x - bn.running_mean) / sqrt(bn.running_var + bn.eps);
    return norm * bn.gamma + bn.beta;
}

AttentionParams make_attention_params(ParameterStore& store, const std::string& prefix,
                                      int64_t dim, int64_t heads, Rng& rng) {
    if (dim % heads != 0)
        throw std::invalid_argument("attention dim " + std::to_string(dim) +
                                    " not divisible by heads " + std::to_string(heads));
    AttentionParams p;
    p.heads = heads;
    p.wq = store.add(prefix + ".wq", xavier_uniform(rng, dim, dim));
    p.bq = store.add(prefix + ".bq", Tensor::zeros({dim}));
    p.wk = store.add(prefix + ".wk", xavier_uniform(rng, dim, dim));
    p.bk = store.add(prefix + ".bk", Tensor::zeros({dim}));
    p.wv = store.add(prefix + ".wv", xavier_uniform(rng, dim, dim));
    p.bv = store.add(prefix + ".bv", Tensor::zeros({dim}));
    p.wo = store.add(prefix + ".wo", Tensor::zeros({dim, dim}));
    p.bo = store.add(prefix + ".bo", Tensor::zeros({dim}));
    return p;
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const AttentionParams& p) {
    int64_t dim = p.wq.shape()[0];
    if (dim % p.heads != 0)
        throw std::invalid_argument("attention dim " + std::to_string(dim) +
                                    " not divisible by heads " + std::to_string(p.heads));
    if (q.ndim() != 2 || k.ndim() != 2 || v.ndim() != 2 || q.shape()[1] != dim ||
        k.shape()[1] != dim || v.shape()[1] != dim || k.shape()[0] != v.shape()[0])
        throw std::invalid_argument("attention token shapes inconsistent: q " +
                                    shape_str(q.shape()) + " k " + shape_str(k.shape()) +
                                    " v " + shape_str(v.shape()));
    int64_t lq = q.shape()[0], lk = k.shape()[0];
    int64_t hd = dim / p.heads;

    auto split_heads = [&](const Tensor& x, int64_t l) {
        return transpose(reshape(x, {l, p.heads, hd}), 0, 1);  // (h, L, hd)
    };
    Tensor qh = split_heads(linear(q, p.wq, p.bq), lq);
    Tensor kh = split_heads(linear(k, p.wk, p.bk), lk);
    Tensor vh = split_heads(linear(v, p.wv, p.bv), lk);

    Tensor scores = matmul(qh, transpose(kh, 1, 2)) * (1.0 / std::sqrt(static_cast<double>(hd)));
    Tensor attn = softmax(scores, -1);
    Tensor ctx = matmul(attn, vh);                              // (h, Lq, hd)
    Tensor merged = reshape(transpose(ctx, 0, 1), {lq, dim});   // (Lq, D)
    return linear(merged, p.wo, p.bo);
}

EncoderLayerParams make_encoder_layer(ParameterStore& store, const std::string& prefix,
                                      int64_t dim, int64_t heads, int64_t ffn_dim, Rng& rng) {
    EncoderLayerParams p;
    p.attn = make_attention_params(store, prefix + ".attn", dim, heads, rng);
    p.ln1_gamma = store.add(prefix + ".ln1.gamma", Tensor::full({dim}, 1.0));
    p.ln1_beta = store.add(prefix + ".ln1.beta", Tensor::zeros({dim}));
    p.ffn_w1 = store.add(prefix + ".ffn.w1", xavier_uniform(rng, ffn_dim, dim));
    p.ffn_b1 = store.add(prefix + ".ffn.b1", Tensor::zeros({ffn_dim}));
    p.ffn_w2 = store.add(prefix + ".ffn.w2", Tensor::zeros({dim, ffn_dim}));
    p.ffn_b2 = store.add(prefix + ".ffn.b2", Tensor::zeros({dim}));
    p.ln2_gamma = store.add(prefix + ".ln2.gamma", Tensor::full({dim}, 1.0));
    p.ln2_beta = store.add(prefix + ".ln2.beta", Tensor::zeros({dim}));
    return p;
}

Tensor encoder_layer(const Tensor& tokens, const EncoderLayerParams& p) {
    Tensor a = multi_head_attention(tokens, tokens, tokens, p.attn);
    Tensor x1 = layer_norm(tokens + a, p.ln1_gamma, p.ln1_beta);
    Tensor f = linear(relu(linear(x1, p.ffn_w1, p.ffn_b1)), p.ffn_w2, p.ffn_b2);
    return layer_norm(x1 + f, p.ln2_gamma, p.ln2_beta);
}

AttentionBlockParams make_attention_block(ParameterStore& store, const std::string& prefix,
                                          int64_t dim, int64_t heads, Rng& rng) {
    AttentionBlockParams p;
    p.attn = make_attention_params(store, prefix + ".attn", dim, heads, rng);
    p.ln_gamma = store.add(prefix + ".ln.gamma", Tensor::full({dim}, 1.0));
    p.ln_beta = store.add(prefix + ".ln.beta", Tensor::zeros({dim}));
    return p;
}

Tensor attention_block(const Tensor& tokens, const AttentionBlockParams& p) {
    Tensor n = layer_norm(tokens, p.ln_gamma, p.ln_beta);
    return tokens + multi_head_attention(n, n, n, p.attn);
}

Tensor sinusoidal_encoding_2d(int64_t h, int64_t w, int64_t dim) {
    if (dim % 4 != 0)
        throw std::invalid_argument("sinusoidal_encoding_2d needs dim divisible by 4");
    int64_t half = dim / 2;
    std::vector<double> enc(h * w * dim, 0.0);
    auto fill_1d = [&](double pos, double* out) {
        for (int64_t i = 0; i < half / 2; ++i) {
            double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) /
                                                 static_cast<double>(half));
            out[2 * i] = std::sin(pos * freq);
            out[2 * i + 1] = std::cos(pos * freq);
        }
    };
    for (int64_t r = 0; r < h; ++r)
        for (int64_t c = 0; c < w; ++c) {
            double* row = enc.data() + (r * w + c) * dim;
            fill_1d(static_cast<double>(c), row);         // x in first half
            fill_1d(static_cast<double>(r), row + half);  // y in second half
        }
    return Tensor::from_data({h * w, dim}, std::move(enc));
}

void Adam::step(ParameterStore& store) {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& p : store.items()) {
        if (!p->trainable) continue;
        const auto& g = p->tensor.node()->grad;
        if (g.size() != p->tensor.node()->data.size())
            throw std::runtime_error("adam: missing gradient for parameter " + p->name);
        auto& data = p->tensor.node()->data;
        if (p->adam_m.size() != data.size()) {
            p->adam_m.assign(data.size(), 0.0);
            p->adam_v.assign(data.size(), 0.0);
        }
        for (size_t i = 0; i < data.size(); ++i) {
            p->adam_m[i] = cfg_.beta1 * p->adam_m[i] + (1.0 - cfg_.beta1) * g[i];
            p->adam_v[i] = cfg_.beta2 * p->adam_v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            double mhat = p->adam_m[i] / bc1;
            double vhat = p->adam_v[i] / bc2;
            data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace mot
