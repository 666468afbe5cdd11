#include "cbrsubg/config.hpp"

#include <charconv>
#include <functional>
#include <sstream>

#include "cbrsubg/error.hpp"
#include "cbrsubg/util.hpp"

namespace cbrsubg {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_int(const std::string& key, const std::string& v) {
    T out{};
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) {
        fail(ErrorKind::InvalidArgument, "config key '" + key + "': expected an integer, got '" + v + "'");
    }
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    fail(ErrorKind::InvalidArgument, "config key '" + key + "': expected a number, got '" + v + "'");
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    fail(ErrorKind::InvalidArgument, "config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::string fmt_double(double d) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, d);
    return std::string(buf, p);
}

struct Field {
    const char* section;
    const char* name;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

#define CBR_STR(sec, f)                                                                   \
    Field{sec, #f, [](ExperimentConfig& c, const std::string& v) { c.f = v; },            \
          [](const ExperimentConfig& c) { return c.f; }}
#define CBR_INT(sec, f)                                                                   \
    Field{sec, #f,                                                                        \
          [](ExperimentConfig& c, const std::string& v) {                                 \
              c.f = parse_int<decltype(c.f)>(#f, v);                                      \
          },                                                                              \
          [](const ExperimentConfig& c) { return std::to_string(c.f); }}
#define CBR_DBL(sec, f)                                                                   \
    Field{sec, #f, [](ExperimentConfig& c, const std::string& v) { c.f = parse_double(#f, v); }, \
          [](const ExperimentConfig& c) { return fmt_double(c.f); }}
#define CBR_BOOL(sec, f)                                                                  \
    Field{sec, #f, [](ExperimentConfig& c, const std::string& v) { c.f = parse_bool(#f, v); }, \
          [](const ExperimentConfig& c) { return std::string(c.f ? "true" : "false"); }}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        CBR_INT("run", seed),
        CBR_STR("run", mode),
        CBR_STR("run", data_dir),
        CBR_STR("run", out),
        CBR_STR("run", split),
        CBR_STR("run", checkpoint),
        CBR_INT("run", threads),
        CBR_INT("generator", num_entity_types),
        CBR_DBL("generator", type_edge_prob),
        CBR_INT("generator", num_pattern_types),
        CBR_INT("generator", graphs_per_split),
        CBR_INT("generator", num_entities),
        CBR_DBL("generator", edge_prob),
        CBR_STR("generator", edge_model),
        CBR_INT("generator", generator_hops),
        CBR_INT("model", layers),
        CBR_INT("model", hidden),
        CBR_DBL("model", tau),
        CBR_BOOL("model", use_distance),
        CBR_DBL("train", lr),
        CBR_INT("train", epochs),
        CBR_INT("train", patience),
        CBR_INT("train", accumulation),
        CBR_INT("train", k_train),
        CBR_INT("train", k_eval),
        Field{"train", "tau_grid",
              [](ExperimentConfig& c, const std::string& v) {
                  c.tau_grid.clear();
                  std::stringstream ss(v);
                  std::string item;
                  while (std::getline(ss, item, ',')) {
                      item = trim(item);
                      if (!item.empty()) c.tau_grid.push_back(parse_double("tau_grid", item));
                  }
              },
              [](const ExperimentConfig& c) {
                  std::string s;
                  for (std::size_t i = 0; i < c.tau_grid.size(); ++i) s += (i ? "," : "") + fmt_double(c.tau_grid[i]);
                  return s;
              }},
        Field{"sweep", "k_values",
              [](ExperimentConfig& c, const std::string& v) {
                  c.k_values.clear();
                  std::stringstream ss(v);
                  std::string item;
                  while (std::getline(ss, item, ',')) {
                      item = trim(item);
                      if (!item.empty()) c.k_values.push_back(parse_int<std::size_t>("k_values", item));
                  }
              },
              [](const ExperimentConfig& c) {
                  std::string s;
                  for (std::size_t i = 0; i < c.k_values.size(); ++i) {
                      s += (i ? "," : "") + std::to_string(c.k_values[i]);
                  }
                  return s;
              }},
        CBR_STR("baseline", baseline),
        CBR_STR("baseline", transe_loss),
        CBR_DBL("baseline", transe_margin),
        CBR_INT("baseline", transe_epoch_factor),
        CBR_BOOL("baseline", precision_weighting),
        CBR_STR("external", triples),
        CBR_STR("external", cases),
        CBR_STR("external", embeddings),
        CBR_STR("external", embedding_ids),
        CBR_INT("external", max_hops),
        CBR_INT("external", edge_budget),
        CBR_INT("external", fallback_hops),
        CBR_INT("external", fallback_budget),
    };
    return table;
}

#undef CBR_STR
#undef CBR_INT
#undef CBR_DBL
#undef CBR_BOOL

const Field& find_field(const std::string& key) {
    std::string name = key;
    std::string section;
    if (auto dot = key.find('.'); dot != std::string::npos) {
        section = key.substr(0, dot);
        name = key.substr(dot + 1);
    }
    std::replace(name.begin(), name.end(), '-', '_');
    for (const auto& f : fields()) {
        if (name == f.name && (section.empty() || section == f.section)) return f;
    }
    fail(ErrorKind::InvalidArgument, "unknown config key '" + key + "'");
}

} // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    find_field(key).set(*this, trim(value));
}

std::string ExperimentConfig::get(const std::string& key) const { return find_field(key).get(*this); }

const std::vector<std::string>& ExperimentConfig::keys() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& f : fields()) out.emplace_back(f.name);
        return out;
    }();
    return names;
}

void ExperimentConfig::load_text(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    std::string section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        const std::string where = origin + ":" + std::to_string(lineno);
        if (t.front() == '[') {
            if (t.back() != ']') fail(ErrorKind::InvalidArgument, where + ": malformed section header");
            section = trim(std::string_view(t).substr(1, t.size() - 2));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) fail(ErrorKind::InvalidArgument, where + ": expected key = value");
        const std::string key = trim(std::string_view(t).substr(0, eq));
        const std::string value = trim(std::string_view(t).substr(eq + 1));
        try {
            const auto& f = find_field(key);
            if (!section.empty() && section != f.section) {
                fail(ErrorKind::InvalidArgument, "key '" + key + "' belongs in [" + f.section + "]");
            }
            f.set(*this, value);
        } catch (const Error& e) {
            fail(ErrorKind::InvalidArgument, where + ": " + e.what());
        }
    }
}

void ExperimentConfig::load_file(const std::filesystem::path& path) {
    load_text(read_file(path), path.string());
}

void ExperimentConfig::validate() const {
    require(mode == "synthetic" || mode == "external-kg", "mode must be synthetic or external-kg");
    require(split == "train" || split == "valid" || split == "test", "split must be train, valid or test");
    require(k_train >= 1 && k_eval >= 1, "k_train and k_eval must be at least 1");
    require(layers >= 1 && hidden >= 1, "layers and hidden must be at least 1");
    require(tau > 0.0, "tau must be positive");
    require(lr > 0.0, "lr must be positive");
    require(accumulation >= 1, "accumulation must be at least 1");
    require(edge_prob >= 0.0 && edge_prob <= 1.0, "edge_prob must lie in [0, 1]");
    require(type_edge_prob >= 0.0 && type_edge_prob <= 1.0, "type_edge_prob must lie in [0, 1]");
    require(edge_model == "outward" || edge_model == "pair" || edge_model == "head-draw",
            "edge_model must be outward, pair or head-draw");
    require(baseline == "cbr-path" || baseline == "gnn-transe", "baseline must be cbr-path or gnn-transe");
    require(transe_loss == "softmax" || transe_loss == "margin", "transe_loss must be softmax or margin");
    require(transe_epoch_factor >= 1, "transe_epoch_factor must be at least 1");
    for (auto k : k_values) require(k >= 1, "k_values entries must be at least 1");
    for (auto t : tau_grid) require(t > 0.0, "tau_grid entries must be positive");
}

unsigned ExperimentConfig::resolved_threads() const { return threads ? threads : worker_threads(); }

std::filesystem::path ExperimentConfig::checkpoint_path() const {
    return checkpoint.empty() ? std::filesystem::path(out) / "model.ckpt" : std::filesystem::path(checkpoint);
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& f : fields()) j[f.section][f.name] = f.get(*this);
    return j;
}

std::string ExperimentConfig::to_ini() const {
    std::string out;
    std::string section;
    for (const auto& f : fields()) {
        if (section != f.section) {
            section = f.section;
            out += (out.empty() ? "[" : "\n[") + section + "]\n";
        }
        out += std::string(f.name) + " = " + f.get(*this) + "\n";
    }
    return out;
}

} // namespace cbrsubg
