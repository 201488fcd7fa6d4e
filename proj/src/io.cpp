#include "movsem/io.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <numeric>

namespace movsem::io {

void save_float_block(const std::string& base_path, const FloatBlock& block) {
    if (block.dimension == 0) throw DataError("save_float_block: dimension must be > 0");
    std::size_t expected_rows = block.lengths.empty()
                                    ? block.ids.size()
                                    : std::accumulate(block.lengths.begin(), block.lengths.end(),
                                                      std::size_t{0});
    if (block.rows() != expected_rows) {
        throw DataError("save_float_block: row count does not match ids/lengths");
    }
    {
        std::ofstream bin(base_path + ".f32", std::ios::binary);
        if (!bin) throw DataError("save_float_block: cannot open " + base_path + ".f32");
        bin.write(reinterpret_cast<const char*>(block.values.data()),
                  static_cast<std::streamsize>(block.values.size() * sizeof(float)));
        if (!bin) throw DataError("save_float_block: write failed for " + base_path + ".f32");
    }
    nlohmann::json j;
    j["count"] = block.ids.size();
    j["dimension"] = block.dimension;
    j["ids"] = block.ids;
    if (!block.lengths.empty()) j["lengths"] = block.lengths;
    std::ofstream man(base_path + ".manifest.json");
    if (!man) throw DataError("save_float_block: cannot open " + base_path + ".manifest.json");
    man << j.dump(2) << '\n';
}

FloatBlock load_float_block(const std::string& base_path) {
    std::ifstream man(base_path + ".manifest.json");
    if (!man) throw DataError("load_float_block: missing manifest " + base_path + ".manifest.json");
    nlohmann::json j = nlohmann::json::parse(man, nullptr, false);
    if (j.is_discarded() || !j.contains("count") || !j.contains("dimension") || !j.contains("ids")) {
        throw DataError("load_float_block: malformed manifest " + base_path + ".manifest.json");
    }
    FloatBlock block;
    block.dimension = j["dimension"].get<std::size_t>();
    block.ids = j["ids"].get<std::vector<std::string>>();
    if (j.contains("lengths")) block.lengths = j["lengths"].get<std::vector<std::size_t>>();
    if (block.ids.size() != j["count"].get<std::size_t>()) {
        throw DataError("load_float_block: manifest count does not match ids");
    }

    std::ifstream bin(base_path + ".f32", std::ios::binary | std::ios::ate);
    if (!bin) throw DataError("load_float_block: missing block " + base_path + ".f32");
    std::size_t bytes = static_cast<std::size_t>(bin.tellg());
    bin.seekg(0);
    std::size_t expected_rows = block.lengths.empty()
                                    ? block.ids.size()
                                    : std::accumulate(block.lengths.begin(), block.lengths.end(),
                                                      std::size_t{0});
    if (bytes != expected_rows * block.dimension * sizeof(float)) {
        throw DataError("load_float_block: block size " + std::to_string(bytes) +
                        " bytes does not match manifest of " + base_path);
    }
    block.values.resize(expected_rows * block.dimension);
    bin.read(reinterpret_cast<char*>(block.values.data()), static_cast<std::streamsize>(bytes));
    if (!bin) throw DataError("load_float_block: read failed for " + base_path + ".f32");
    return block;
}

namespace {
constexpr char kCheckpointMagic[4] = {'M', 'S', 'C', 'K'};

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("checkpoint: truncated file");
    return v;
}
} // namespace

void save_checkpoint(const std::string& path, const TensorArchive& archive,
                     std::uint32_t version) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("save_checkpoint: cannot open " + path);
    out.write(kCheckpointMagic, 4);
    write_pod(out, version);
    write_pod(out, static_cast<std::uint32_t>(archive.size()));
    for (const auto& [name, tensor] : archive) {
        write_pod(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod(out, static_cast<std::uint32_t>(tensor.shape.size()));
        for (int d : tensor.shape) write_pod(out, static_cast<std::int32_t>(d));
        write_pod(out, static_cast<std::uint64_t>(tensor.values.size()));
        out.write(reinterpret_cast<const char*>(tensor.values.data()),
                  static_cast<std::streamsize>(tensor.values.size() * sizeof(float)));
    }
    if (!out) throw DataError("save_checkpoint: write failed for " + path);
}

TensorArchive load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_checkpoint: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
        throw DataError("load_checkpoint: " + path + " is not a checkpoint file");
    }
    std::uint32_t version = read_pod<std::uint32_t>(in);
    if (version != kCheckpointVersion) {
        throw DataError("load_checkpoint: " + path + " has format version " +
                        std::to_string(version) + ", this build reads version " +
                        std::to_string(kCheckpointVersion));
    }
    std::uint32_t count = read_pod<std::uint32_t>(in);
    TensorArchive archive;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint32_t name_len = read_pod<std::uint32_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        std::uint32_t ndim = read_pod<std::uint32_t>(in);
        NamedTensor tensor;
        std::size_t total = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            std::int32_t dim = read_pod<std::int32_t>(in);
            tensor.shape.push_back(dim);
            total *= static_cast<std::size_t>(dim);
        }
        std::uint64_t n = read_pod<std::uint64_t>(in);
        if (n != total) throw DataError("load_checkpoint: tensor " + name + " shape/size mismatch");
        tensor.values.resize(n);
        in.read(reinterpret_cast<char*>(tensor.values.data()),
                static_cast<std::streamsize>(n * sizeof(float)));
        if (!in) throw DataError("load_checkpoint: truncated tensor " + name);
        archive.emplace(std::move(name), std::move(tensor));
    }
    return archive;
}

struct CsvWriter::Impl {
    std::ofstream out;
    std::size_t columns = 0;
};

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& columns)
    : impl_(new Impl) {
    impl_->out.open(path);
    if (!impl_->out) {
        delete impl_;
        throw DataError("CsvWriter: cannot open " + path);
    }
    impl_->columns = columns.size();
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (i) impl_->out << ',';
        impl_->out << columns[i];
    }
    impl_->out << '\n';
}

CsvWriter::~CsvWriter() { delete impl_; }

void CsvWriter::row(const std::vector<std::string>& cells) {
    if (cells.size() != impl_->columns) throw DataError("CsvWriter: wrong cell count");
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) impl_->out << ',';
        impl_->out << cells[i];
    }
    impl_->out << '\n';
    impl_->out.flush();
}

void CsvWriter::row(const std::vector<double>& cells) {
    std::vector<std::string> s;
    s.reserve(cells.size());
    for (double v : cells) s.push_back(format_double(v));
    row(s);
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

} // namespace movsem::io
