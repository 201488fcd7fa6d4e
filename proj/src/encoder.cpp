#include "movsem/encoder.hpp"

#include <cmath>

namespace movsem::enc {

PatchedSequence make_patches(std::size_t length, std::size_t patch_len) {
    if (length == 0) throw DataError("make_patches: length must be >= 1");
    if (patch_len == 0) throw ConfigError("make_patches: patch length must be >= 1");
    PatchedSequence seq;
    seq.length = length;
    seq.patch_len = patch_len;
    seq.patch_count = (length + patch_len - 1) / patch_len;
    seq.intra_padded.assign(seq.patch_count * patch_len, 0);
    for (std::size_t i = length; i < seq.intra_padded.size(); ++i) seq.intra_padded[i] = 1;
    seq.inter_padded.assign(seq.patch_count, 0);
    // the ceiling construction always leaves at least one real position per patch
    return seq;
}

void pad_patches(PatchedSequence& seq, std::size_t m) {
    if (m <= seq.patch_count) return;
    seq.intra_padded.resize(m * seq.patch_len, 1);
    seq.inter_padded.resize(m, 1);
    seq.patch_count = m;
}

std::vector<float> sinusoidal_table(int rows, int dim) {
    std::vector<float> table(static_cast<std::size_t>(rows) * dim);
    for (int pos = 0; pos < rows; ++pos) {
        for (int i = 0; i < dim; i += 2) {
            double rate = std::pow(10000.0, static_cast<double>(i) / dim);
            double angle = pos / rate;
            table[pos * dim + i] = static_cast<float>(std::sin(angle));
            if (i + 1 < dim) table[pos * dim + i + 1] = static_cast<float>(std::cos(angle));
        }
    }
    return table;
}

std::uint64_t attention_flops(std::uint64_t length, std::uint64_t patch_len, std::uint64_t d_h,
                              std::uint64_t, EncoderMode mode) {
    if (mode == EncoderMode::kFlat) return 2 * length * length * d_h;
    std::uint64_t m = (length + patch_len - 1) / patch_len;
    return m * 2 * patch_len * patch_len * d_h + 2 * m * m * d_h;
}

namespace {
// one transformer block over n tokens with the given attention-core count
std::uint64_t block_flops(std::uint64_t n, std::uint64_t d_h, std::uint64_t ffn_mult,
                          std::uint64_t attn_core) {
    std::uint64_t proj = 4 * n * d_h * d_h;              // Q, K, V, output
    std::uint64_t ffn = 2 * n * d_h * (ffn_mult * d_h);  // two affine layers
    return proj + attn_core + ffn;
}
} // namespace

std::uint64_t model_flops(const EncoderConfig& cfg, std::uint64_t length, EncoderMode mode) {
    std::uint64_t d_h = static_cast<std::uint64_t>(cfg.d_h);
    std::uint64_t d_in = static_cast<std::uint64_t>(cfg.d_in);
    std::uint64_t ffn = static_cast<std::uint64_t>(cfg.ffn_mult);
    std::uint64_t p = static_cast<std::uint64_t>(cfg.patch_len);
    if (mode == EncoderMode::kFlat) {
        std::uint64_t core = 2 * length * length * d_h;
        return length * d_in * d_h + 2 * block_flops(length, d_h, ffn, core);
    }
    std::uint64_t m = (length + p - 1) / p;
    std::uint64_t tokens = m * p;
    std::uint64_t intra_core = m * 2 * p * p * d_h;
    std::uint64_t inter_core = 2 * m * m * d_h;
    return tokens * d_in * d_h + block_flops(tokens, d_h, ffn, intra_core) +
           block_flops(m, d_h, ffn, inter_core);
}

} // namespace movsem::enc
