#ifndef MOVSEM_IO_HPP
#define MOVSEM_IO_HPP

#include "movsem/common.hpp"

#include <map>
#include <string>
#include <vector>

namespace movsem::io {

// --------------------------------------------------------------------------
// Float-block store: <base>.f32 (little-endian float32) + <base>.manifest.json
// with {count, dimension, ids, [lengths]}. `lengths` appears for ragged data
// (per-id row counts); without it every id owns exactly one row.
// --------------------------------------------------------------------------

struct FloatBlock {
    std::size_t dimension = 0;
    std::vector<std::string> ids;
    std::vector<std::size_t> lengths; // empty => one row per id
    std::vector<float> values;        // row-major

    std::size_t rows() const { return dimension ? values.size() / dimension : 0; }
};

void save_float_block(const std::string& base_path, const FloatBlock& block);
FloatBlock load_float_block(const std::string& base_path);

// --------------------------------------------------------------------------
// Named-tensor archive for checkpoints: magic, format version, then
// (name, shape, float32 data) records. A version mismatch on load is fatal.
// --------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::vector<int> shape;
    std::vector<float> values;
};

using TensorArchive = std::map<std::string, NamedTensor>;

void save_checkpoint(const std::string& path, const TensorArchive& archive,
                     std::uint32_t version = kCheckpointVersion);
TensorArchive load_checkpoint(const std::string& path);

// --------------------------------------------------------------------------
// CSV output with a fixed column schema. Values are written with enough
// digits to round-trip doubles.
// --------------------------------------------------------------------------

class CsvWriter {
  public:
    CsvWriter(const std::string& path, const std::vector<std::string>& columns);
    ~CsvWriter();
    void row(const std::vector<std::string>& cells);
    void row(const std::vector<double>& cells);

  private:
    struct Impl;
    Impl* impl_;
};

std::string format_double(double v);

} // namespace movsem::io

#endif // MOVSEM_IO_HPP
