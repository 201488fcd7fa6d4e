#ifndef MOVSEM_CONFIG_HPP
#define MOVSEM_CONFIG_HPP

#include "movsem/common.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace movsem::cfg {

/// Flat key-value configuration. Keys are "section.key" after parsing the
/// sectioned plain-text format:
///
///   [train]
///   batch = 128        # comment
///
/// Every key has a default; a file or --set override replaces it. Unknown
/// keys are rejected so typos fail loudly.
class Config {
  public:
    Config(); // seeded with every default

    void load_file(const std::string& path);
    void set_assignment(const std::string& assignment); // "section.key=value" form
    void set_kv(const std::string& key, const std::string& value);

    const std::string& get(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::int64_t get_int(const std::string& key) const;
    std::uint64_t get_seed(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<double> get_list(const std::string& key) const;

    /// FNV-1a over the canonical sorted key=value serialization.
    std::string hash() const;
    std::string serialize() const;

    const std::map<std::string, std::string>& entries() const { return values_; }

  private:
    std::map<std::string, std::string> values_;
};

} // namespace movsem::cfg

#endif // MOVSEM_CONFIG_HPP
