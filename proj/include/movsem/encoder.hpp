#ifndef MOVSEM_ENCODER_HPP
#define MOVSEM_ENCODER_HPP

#include "movsem/features.hpp"
#include "movsem/numeric.hpp"

#include <cstdint>
#include <vector>

namespace movsem::enc {

// ---------------------------------------------------------------------------
// Patching
// ---------------------------------------------------------------------------

/// Patch layout for one trajectory: M = ceil(L/P) patches of P positions,
/// the tail zero-padded. Masks follow the convention true = padded.
struct PatchedSequence {
    std::size_t length = 0; // L, real positions
    std::size_t patch_len = 0;
    std::size_t patch_count = 0; // M
    std::vector<std::uint8_t> intra_padded; // M*P
    std::vector<std::uint8_t> inter_padded; // M

    std::vector<std::uint8_t> intra_keep() const {
        std::vector<std::uint8_t> keep(intra_padded.size());
        for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = !intra_padded[i];
        return keep;
    }
    std::vector<std::uint8_t> inter_keep() const {
        std::vector<std::uint8_t> keep(inter_padded.size());
        for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = !inter_padded[i];
        return keep;
    }
};

PatchedSequence make_patches(std::size_t length, std::size_t patch_len);

/// Append fully-padded patches until `patch_count` == m (used when batching
/// aligns patch counts). A patch is inter-masked iff all its positions are
/// intra-masked.
void pad_patches(PatchedSequence& seq, std::size_t m);

// ---------------------------------------------------------------------------
// Encoder network
// ---------------------------------------------------------------------------

struct EncoderConfig {
    int d_in = 67;
    int d_h = 256;
    int heads = 4;
    int patch_len = 4;    // P
    int max_len = 200;    // L cap; M_max and the flat positional table follow
    int ffn_mult = 4;

    int max_patches() const { return (max_len + patch_len - 1) / patch_len; }
};

enum class EncoderMode {
    kHierarchical, // intra-patch attention, patch pooling, inter-patch attention
    kFlat,         // equal-depth stack of two full-length attention blocks
};

template <typename T>
struct TransformerBlock {
    num::Parameter<T> ln1_g, ln1_b;
    num::AttentionParams<T> attn;
    num::Parameter<T> ln2_g, ln2_b;
    num::Parameter<T> ffn_w1, ffn_b1, ffn_w2, ffn_b2;

    TransformerBlock() = default;
    TransformerBlock(const std::string& prefix, int d_h, int ffn_mult)
        : ln1_g(prefix + ".ln1.g", {d_h}),
          ln1_b(prefix + ".ln1.b", {d_h}),
          attn(prefix + ".attn", d_h),
          ln2_g(prefix + ".ln2.g", {d_h}),
          ln2_b(prefix + ".ln2.b", {d_h}),
          ffn_w1(prefix + ".ffn.w1", {d_h, d_h * ffn_mult}),
          ffn_b1(prefix + ".ffn.b1", {d_h * ffn_mult}),
          ffn_w2(prefix + ".ffn.w2", {d_h * ffn_mult, d_h}),
          ffn_b2(prefix + ".ffn.b2", {d_h}) {}

    void init(Rng& rng) {
        ln1_g.fill_constant(T(1));
        ln2_g.fill_constant(T(1));
        attn.init(rng);
        ffn_w1.fill_xavier(rng);
        ffn_w2.fill_xavier(rng);
    }

    std::vector<num::Parameter<T>*> params() {
        std::vector<num::Parameter<T>*> out = {&ln1_g, &ln1_b, &ln2_g, &ln2_b,
                                               &ffn_w1, &ffn_b1, &ffn_w2, &ffn_b2};
        for (auto* p : attn.params()) out.push_back(p);
        return out;
    }

    /// Pre-norm residual block: x + MHA(LN(x)), then x + FFN(LN(x)).
    num::Var<T> apply(num::Var<T> x, int heads, int block,
                      const std::vector<std::uint8_t>& padded) {
        num::Tape<T>& t = *x.tape();
        num::Var<T> a = num::multi_head_self_attention(
            num::layer_norm(x, t.param(ln1_g), t.param(ln1_b)), attn, heads, block, padded);
        num::Var<T> x1 = num::add(x, a);
        num::Var<T> h = num::layer_norm(x1, t.param(ln2_g), t.param(ln2_b));
        h = num::add_rowvec(num::matmul(h, t.param(ffn_w1)), t.param(ffn_b1));
        h = num::relu(h);
        h = num::add_rowvec(num::matmul(h, t.param(ffn_w2)), t.param(ffn_b2));
        return num::add(x1, h);
    }
};

/// Fixed sinusoidal positional table, `rows` x `dim`, row-major.
std::vector<float> sinusoidal_table(int rows, int dim);

template <typename T>
class EncoderNet {
  public:
    EncoderNet() = default;
    explicit EncoderNet(const EncoderConfig& cfg)
        : cfg_(cfg),
          w_in_("enc.in.w", {cfg.d_in, cfg.d_h}),
          b_in_("enc.in.b", {cfg.d_h}),
          intra_("enc.intra", cfg.d_h, cfg.ffn_mult),
          inter_("enc.inter", cfg.d_h, cfg.ffn_mult),
          pe_local_(sinusoidal_table(cfg.patch_len, cfg.d_h)),
          pe_global_(sinusoidal_table(cfg.max_patches(), cfg.d_h)),
          pe_flat_(sinusoidal_table(cfg.max_len, cfg.d_h)) {}

    void init(std::uint64_t seed) {
        Rng rng(seed_stream(seed, 0xe4c0));
        w_in_.fill_xavier(rng);
        intra_.init(rng);
        inter_.init(rng);
    }

    const EncoderConfig& config() const { return cfg_; }

    std::vector<num::Parameter<T>*> params() {
        std::vector<num::Parameter<T>*> out = {&w_in_, &b_in_};
        for (auto* p : intra_.params()) out.push_back(p);
        for (auto* p : inter_.params()) out.push_back(p);
        return out;
    }

    io::TensorArchive to_archive() {
        io::TensorArchive archive;
        for (auto* p : params()) num::archive_put(archive, *p);
        return archive;
    }
    void from_archive(const io::TensorArchive& archive) {
        for (auto* p : params()) num::archive_get(archive, *p);
    }

    /// Copy parameter values (not optimizer state) from another net.
    void copy_values_from(EncoderNet<T>& other) {
        auto dst = params();
        auto src = other.params();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = src[i]->value;
    }

    /// Hierarchical embedding of one feature sequence; returns z as 1 x d_h.
    /// `min_patches` > M pads with empty patches (batch alignment); the
    /// result is invariant to that padding.
    num::Var<T> encode(num::Tape<T>& tape, const feat::FeatureSequence& features,
                       std::size_t min_patches = 0) {
        const std::size_t length = features.length();
        if (length == 0) throw DataError("encode: empty feature sequence");
        if (static_cast<int>(features.dim) != cfg_.d_in) {
            throw ShapeError("encode: feature dim " + std::to_string(features.dim) +
                             ", encoder expects " + std::to_string(cfg_.d_in));
        }
        PatchedSequence patched = make_patches(length, cfg_.patch_len);
        if (min_patches > patched.patch_count) pad_patches(patched, min_patches);
        if (patched.patch_count > static_cast<std::size_t>(cfg_.max_patches())) {
            throw DataError("encode: " + std::to_string(patched.patch_count) +
                            " patches exceed the positional table of " +
                            std::to_string(cfg_.max_patches()));
        }
        const int p = cfg_.patch_len;
        const int m = static_cast<int>(patched.patch_count);
        const int rows = m * p;

        // tokens, zero-padded to the patch grid
        std::vector<T> tokens(static_cast<std::size_t>(rows) * cfg_.d_in, T(0));
        for (std::size_t i = 0; i < length; ++i) {
            for (std::size_t j = 0; j < features.dim; ++j) {
                tokens[i * features.dim + j] = static_cast<T>(features.row(i)[j]);
            }
        }
        num::Var<T> x = tape.constant(rows, cfg_.d_in, tokens);
        x = num::add_rowvec(num::matmul(x, tape.param(w_in_)), tape.param(b_in_));
        x = num::add(x, tape.constant(rows, cfg_.d_h, tile_local(m)));
        x = intra_.apply(x, cfg_.heads, p, patched.intra_padded);
        num::Var<T> patch_summary = num::block_masked_mean(x, p, patched.intra_keep());
        patch_summary =
            num::add(patch_summary, tape.constant(m, cfg_.d_h, table_slice(pe_global_, m)));
        num::Var<T> h = inter_.apply(patch_summary, cfg_.heads, m, patched.inter_padded);
        return num::masked_mean(h, patched.inter_keep());
    }

    /// Flat variant: equal-depth stack (both blocks) over the full sequence.
    num::Var<T> encode_flat(num::Tape<T>& tape, const feat::FeatureSequence& features) {
        const std::size_t length = features.length();
        if (length == 0) throw DataError("encode_flat: empty feature sequence");
        if (length > static_cast<std::size_t>(cfg_.max_len)) {
            throw DataError("encode_flat: length exceeds positional table");
        }
        const int rows = static_cast<int>(length);
        std::vector<T> tokens(static_cast<std::size_t>(rows) * cfg_.d_in);
        for (std::size_t i = 0; i < length; ++i) {
            for (std::size_t j = 0; j < features.dim; ++j) {
                tokens[i * features.dim + j] = static_cast<T>(features.row(i)[j]);
            }
        }
        std::vector<std::uint8_t> padded(length, 0);
        std::vector<std::uint8_t> keep(length, 1);
        num::Var<T> x = tape.constant(rows, cfg_.d_in, tokens);
        x = num::add_rowvec(num::matmul(x, tape.param(w_in_)), tape.param(b_in_));
        x = num::add(x, tape.constant(rows, cfg_.d_h, table_slice(pe_flat_, rows)));
        x = intra_.apply(x, cfg_.heads, rows, padded);
        x = inter_.apply(x, cfg_.heads, rows, padded);
        return num::masked_mean(x, keep);
    }

    num::Var<T> encode(num::Tape<T>& tape, const feat::FeatureSequence& features,
                       EncoderMode mode, std::size_t min_patches = 0) {
        return mode == EncoderMode::kHierarchical ? encode(tape, features, min_patches)
                                                  : encode_flat(tape, features);
    }

    const std::vector<float>& pe_local() const { return pe_local_; }
    const std::vector<float>& pe_global() const { return pe_global_; }
    const std::vector<float>& pe_flat() const { return pe_flat_; }
    TransformerBlock<T>& intra_block() { return intra_; }
    TransformerBlock<T>& inter_block() { return inter_; }
    num::Parameter<T>& input_weight() { return w_in_; }
    num::Parameter<T>& input_bias() { return b_in_; }

  private:
    std::vector<T> table_slice(const std::vector<float>& table, int rows) {
        std::vector<T> out(static_cast<std::size_t>(rows) * cfg_.d_h);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(table[i]);
        return out;
    }

    std::vector<T> tile_local(int m) {
        std::vector<T> out(static_cast<std::size_t>(m) * cfg_.patch_len * cfg_.d_h);
        std::size_t block = static_cast<std::size_t>(cfg_.patch_len) * cfg_.d_h;
        for (int b = 0; b < m; ++b) {
            for (std::size_t i = 0; i < block; ++i) {
                out[b * block + i] = static_cast<T>(pe_local_[i]);
            }
        }
        return out;
    }

    EncoderConfig cfg_;
    num::Parameter<T> w_in_, b_in_;
    TransformerBlock<T> intra_, inter_;
    std::vector<float> pe_local_, pe_global_, pe_flat_;
};

// ---------------------------------------------------------------------------
// Analytic cost model
// ---------------------------------------------------------------------------

/// Multiply-add count of the attention score + weighting terms only.
/// flat: 2 L^2 d_h; hierarchical: M (2 P^2 d_h) + 2 M^2 d_h.
std::uint64_t attention_flops(std::uint64_t length, std::uint64_t patch_len, std::uint64_t d_h,
                              std::uint64_t heads, EncoderMode mode);

/// Full-model analytic multiply-add count: input projection, QKV/output
/// projections, attention core, and feed-forward of every block. The flat
/// mode is the equal-depth two-block stack over the whole sequence.
std::uint64_t model_flops(const EncoderConfig& cfg, std::uint64_t length, EncoderMode mode);

} // namespace movsem::enc

#endif // MOVSEM_ENCODER_HPP
