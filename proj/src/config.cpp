#include "movsem/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace movsem::cfg {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

} // namespace

Config::Config() {
    values_ = {
        // dataset
        {"data.source", "synthetic"}, // synthetic | jsonl | porto_csv
        {"data.path", ""},
        {"data.synthetic_n", "5000"},
        {"data.synthetic_seed", "7"},
        {"data.l_min", "20"},
        {"data.l_max", "200"},
        {"data.synthetic_l_max", "76"},
        {"data.lon_min", "0.0"},
        {"data.lon_max", "0.08"},
        {"data.lat_min", "0.0"},
        {"data.lat_max", "0.07"},
        {"data.sample_interval_s", "15"},
        {"data.split_seed", "11"},
        {"data.train_ratio", "0.7"},
        {"data.val_ratio", "0.1"},
        {"data.test_ratio", "0.2"},
        // grid + cell embeddings
        {"grid.cell_size_m", "100"},
        {"cells.walks_per_node", "10"},
        {"cells.walk_length", "80"},
        {"cells.p", "1.0"},
        {"cells.q", "1.0"},
        {"cells.d_se", "64"},
        {"cells.window", "10"},
        {"cells.negatives", "5"},
        {"cells.epochs", "5"},
        {"cells.lr", "0.025"},
        {"cells.seed", "13"},
        // encoder
        {"encoder.d_h", "256"},
        {"encoder.heads", "4"},
        {"encoder.patch_len", "4"},
        {"encoder.ffn_mult", "4"},
        // contrastive pretraining
        {"train.queue_size", "2048"},
        {"train.momentum", "0.999"},
        {"train.temperature", "0.05"},
        {"train.lr", "1e-4"},
        {"train.batch", "128"},
        {"train.epochs", "20"},
        {"train.patience", "3"},
        {"train.view_drop", "0.3"},
        {"train.seed", "42"},
        {"train.augment", "cga"},               // cga | random
        {"train.encoder_mode", "hierarchical"}, // hierarchical | flat
        {"train.feature_mode", "full"},         // full | cell_only
        // evaluation
        {"eval.queries", "100"},
        {"eval.database", "2000"},
        {"eval.seed", "101"},
        {"eval.rates", "0.1,0.2,0.3,0.4,0.5"},
        {"eval.distort_delta_m", "30"},
        // heuristic approximation
        {"finetune.measure", "hausdorff"},
        {"finetune.epochs", "5"},
        {"finetune.head_lr", "1e-3"},
        {"finetune.encoder_lr_scale", "0.1"},
        {"finetune.d_out", "128"},
        {"finetune.seed", "42"},
        {"finetune.edr_eps_m", "100"},
        // efficiency benchmark
        {"bench.batch", "128"},
        {"bench.batches", "100"},
        {"bench.warmup", "2"},
        {"bench.traj_len", "200"},
        {"bench.workloads", "256,512"},
        {"bench.seed", "7"},
        // ablation
        {"ablate.seeds", "1,2,3"},
        // run-wide
        {"run.output_dir", "out"},
        {"run.threads", "1"},
        {"run.deterministic", "true"},
    };
}

void Config::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError("config: bad section at " + path + ":" +
                                  std::to_string(line_no));
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: expected key = value at " + path + ":" +
                              std::to_string(line_no));
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        set_kv(section.empty() ? key : section + "." + key, value);
    }
}

void Config::set_assignment(const std::string& assignment) {
    std::size_t eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("config: --set expects section.key=value");
    set_kv(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::set_kv(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second = value;
}

const std::string& Config::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: unknown key '" + key + "'");
    return it->second;
}

double Config::get_double(const std::string& key) const {
    const std::string& s = get(key);
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') {
        throw ConfigError("config: " + key + " = '" + s + "' is not a number");
    }
    return v;
}

std::int64_t Config::get_int(const std::string& key) const {
    const std::string& s = get(key);
    char* end = nullptr;
    long long v = std::strtoll(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0') {
        throw ConfigError("config: " + key + " = '" + s + "' is not an integer");
    }
    return v;
}

std::uint64_t Config::get_seed(const std::string& key) const {
    std::int64_t v = get_int(key);
    if (v < 0) throw ConfigError("config: " + key + " must be non-negative");
    return static_cast<std::uint64_t>(v);
}

bool Config::get_bool(const std::string& key) const {
    const std::string& s = get(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("config: " + key + " = '" + s + "' is not a boolean");
}

std::vector<double> Config::get_list(const std::string& key) const {
    const std::string& s = get(key);
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        char* end = nullptr;
        double v = std::strtod(item.c_str(), &end);
        if (end == item.c_str() || *end != '\0') {
            throw ConfigError("config: " + key + " has non-numeric entry '" + item + "'");
        }
        out.push_back(v);
    }
    return out;
}

std::string Config::serialize() const {
    std::ostringstream os;
    for (const auto& [k, v] : values_) os << k << '=' << v << '\n';
    return os.str();
}

std::string Config::hash() const {
    std::string canon = serialize();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canon) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace movsem::cfg
