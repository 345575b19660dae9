#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ghlab/experiments.hpp"

namespace ghlab {

enum ExitCode : int { kExitPass = 0, kExitFail = 1, kExitIndeterminate = 2, kExitConfig = 3, kExitIo = 4 };

inline const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names{"geometry-check", "harmonic", "poincare", "indicial", "uniformity",
                                                "kernel",         "adjoint",  "commutator", "all"};
    return names;
}

/// Parsed and validated run configuration. Unset optionals fall back to per-experiment defaults.
struct Config {
    // [end]
    std::vector<EndKind> kinds;  // empty: the experiment's default kinds
    double c = 1.0;
    int k = 1;
    std::vector<double> eps_list;  // empty: the experiment's default list

    // [grid]
    std::optional<int> n_rho, n_ang1, n_ang2, n_fiber;
    std::optional<double> rho_min, rho_max;

    // [experiment]
    std::string experiment = "all";
    std::vector<double> deltas;
    std::optional<std::array<double, 3>> delta_grid;  // lo, step, hi
    std::vector<int> n_list;
    std::optional<int> samples;
    std::vector<int> resolutions;
    std::uint64_t seed = 0;
    int threads = 1;
    std::optional<double> tolerance;
    double eps_max = 0.5;
    std::optional<double> span;

    // [output]
    std::string out_dir = ".";
    std::string csv_name;   // empty: <experiment>.csv
    std::string json_name;  // empty: <experiment>.json

    std::string csv_path(const std::string& exp) const {
        return (std::filesystem::path(out_dir) / (csv_name.empty() ? exp + ".csv" : csv_name)).string();
    }
    std::string json_path(const std::string& exp) const {
        return (std::filesystem::path(out_dir) / (json_name.empty() ? exp + ".json" : json_name)).string();
    }
};

/// Default annulus per kind; ALH-type bases start at rho = 1.
inline std::pair<double, double> default_rho_range(EndKind k) {
    return is_torus_base(k) ? std::pair{1.0, 9.0} : std::pair{0.0, 8.0};
}

inline ModelEnd config_end(const Config& cfg, EndKind kind, double eps) {
    auto [lo, hi] = default_rho_range(kind);
    return ModelEnd(kind, cfg.c, cfg.k, eps, cfg.rho_min.value_or(lo), cfg.rho_max.value_or(hi));
}

namespace detail {

inline std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto t = trim(item);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

inline double to_double(const std::string& v, int line) {
    double x = 0.0;
    auto r = std::from_chars(v.data(), v.data() + v.size(), x);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw ConfigError("expected a number, got '" + v + "'", line);
    return x;
}

inline long long to_integer(const std::string& v, int line) {
    long long x = 0;
    auto r = std::from_chars(v.data(), v.data() + v.size(), x);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size())
        throw ConfigError("expected an integer, got '" + v + "'", line);
    return x;
}

inline std::vector<double> to_doubles(const std::string& v, int line) {
    std::vector<double> out;
    for (auto& s : split_list(v)) out.push_back(to_double(s, line));
    if (out.empty()) throw ConfigError("empty list", line);
    return out;
}

inline std::vector<int> to_ints(const std::string& v, int line) {
    std::vector<int> out;
    for (auto& s : split_list(v)) out.push_back(int(to_integer(s, line)));
    if (out.empty()) throw ConfigError("empty list", line);
    return out;
}

}  // namespace detail

/// Semantic checks against the experiment preconditions; throws ConfigError naming the violated rule.
inline void validate_config(const Config& cfg) {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (std::find(experiment_names().begin(), experiment_names().end(), cfg.experiment) == experiment_names().end())
        fail("unknown experiment '" + cfg.experiment + "'");
    if (!(cfg.c > 0.0)) fail("c > 0");
    if (!(cfg.eps_max > 0.0 && cfg.eps_max < 1.0)) fail("eps_max ∈ (0,1)");
    for (double e : cfg.eps_list) {
        if (!(e > 0.0 && e < 1.0)) fail("eps ∈ (0,1)");
        if (e > cfg.eps_max) fail("eps <= eps_max");
    }
    if (cfg.rho_min && cfg.rho_max && !(*cfg.rho_min < *cfg.rho_max)) fail("rho_min < rho_max");
    for (auto kind : cfg.kinds)
        if (is_torus_base(kind)) {
            double lo = cfg.rho_min.value_or(default_rho_range(kind).first);
            if (!(lo > 0.0)) fail("rho_min > 0 (R+ base of " + std::string(kind_name(kind)) + ")");
        }
    for (auto* n : {&cfg.n_rho, &cfg.n_ang1, &cfg.n_ang2, &cfg.n_fiber})
        if (*n && **n < 1) fail("grid sizes >= 1");
    if (cfg.n_rho && *cfg.n_rho < 5) fail("n_rho >= 5");
    if (cfg.samples && *cfg.samples < 10) fail("samples >= 10");
    if (cfg.threads < 1) fail("threads >= 1");
    if (cfg.span && !(*cfg.span > 0.0)) fail("span > 0");
    if (cfg.tolerance && !(*cfg.tolerance > 0.0)) fail("tolerance > 0");
    if (!cfg.resolutions.empty()) {
        if (cfg.resolutions.size() < 3) fail("at least 3 resolutions");
        for (std::size_t i = 1; i < cfg.resolutions.size(); ++i)
            if (cfg.resolutions[i] <= cfg.resolutions[i - 1]) fail("resolutions increasing");
    }
    if (cfg.delta_grid) {
        auto [lo, step, hi] = *cfg.delta_grid;
        if (!(step > 0.0 && lo < hi)) fail("delta_grid lo:step:hi with step > 0 and lo < hi");
    }
    const auto& x = cfg.experiment;
    if (x == "uniformity") {
        for (double d : cfg.deltas)
            if (!(d > -1.0 && d < 0.0) || std::min(-d, d + 1.0) < 0.05) fail("uniformity delta ∈ (-1,0) away from 0 and -1");
        for (double e : cfg.eps_list)
            if (e < std::ldexp(1.0, -8)) fail("eps >= 2^-8");
    }
    if (x == "kernel")
        for (double d : cfg.deltas)
            if (!(d > -1.0 && d < 1.0) || std::abs(d) < 0.1 || 1.0 - std::abs(d) < 0.1)
                fail("kernel delta ∈ (-1,1) with margin 0.1 from integers");
    if (x == "commutator")
        for (auto kind : cfg.kinds)
            if (kind == EndKind::ALF) fail("commutator needs a torus-fibered kind");
}

/// Line-oriented `key = value` text with `[section]` headers; `#` starts a comment.
inline Config parse_config(std::string_view text) {
    Config cfg;
    std::string section;
    std::istringstream in{std::string(text)};
    std::string raw;
    int line = 0;
    std::map<std::string, int> seen;
    while (std::getline(in, raw)) {
        ++line;
        auto hash = raw.find('#');
        std::string s = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw ConfigError("unterminated section header", line);
            section = detail::trim(s.substr(1, s.size() - 2));
            if (section != "end" && section != "grid" && section != "experiment" && section != "output")
                throw ConfigError("unknown section [" + section + "]", line);
            continue;
        }
        auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("expected 'key = value'", line);
        std::string key = detail::trim(s.substr(0, eq)), val = detail::trim(s.substr(eq + 1));
        if (section.empty()) throw ConfigError("key '" + key + "' outside a section", line);
        if (val.empty()) throw ConfigError("empty value for '" + key + "'", line);
        std::string full = section + "." + key;
        if (seen.count(full)) throw ConfigError("duplicate key '" + full + "'", line);
        seen[full] = line;
        try {
            if (full == "end.kind") {
                cfg.kinds.clear();
                if (val == "all")
                    cfg.kinds.assign(kAllKinds.begin(), kAllKinds.end());
                else
                    for (auto& item : detail::split_list(val)) cfg.kinds.push_back(parse_kind(item));
            } else if (full == "end.c") {
                cfg.c = detail::to_double(val, line);
            } else if (full == "end.k") {
                cfg.k = int(detail::to_integer(val, line));
            } else if (full == "end.eps" || full == "end.eps_list") {
                if (seen.count(full == "end.eps" ? "end.eps_list" : "end.eps"))
                    throw ConfigError("give either eps or eps_list", line);
                cfg.eps_list = detail::to_doubles(val, line);
            } else if (full == "grid.n_rho") {
                cfg.n_rho = int(detail::to_integer(val, line));
            } else if (full == "grid.n_ang1") {
                cfg.n_ang1 = int(detail::to_integer(val, line));
            } else if (full == "grid.n_ang2") {
                cfg.n_ang2 = int(detail::to_integer(val, line));
            } else if (full == "grid.n_fiber") {
                cfg.n_fiber = int(detail::to_integer(val, line));
            } else if (full == "grid.rho_min") {
                cfg.rho_min = detail::to_double(val, line);
            } else if (full == "grid.rho_max") {
                cfg.rho_max = detail::to_double(val, line);
            } else if (full == "grid.span") {
                cfg.span = detail::to_double(val, line);
            } else if (full == "experiment.name") {
                cfg.experiment = val;
            } else if (full == "experiment.delta") {
                cfg.deltas = detail::to_doubles(val, line);
            } else if (full == "experiment.delta_grid") {
                std::vector<double> parts;
                std::stringstream ss(val);
                std::string item;
                while (std::getline(ss, item, ':')) parts.push_back(detail::to_double(detail::trim(item), line));
                if (parts.size() != 3) throw ConfigError("delta_grid must be lo:step:hi", line);
                cfg.delta_grid = std::array<double, 3>{parts[0], parts[1], parts[2]};
            } else if (full == "experiment.n_list") {
                cfg.n_list = detail::to_ints(val, line);
            } else if (full == "experiment.samples") {
                cfg.samples = int(detail::to_integer(val, line));
            } else if (full == "experiment.resolutions") {
                cfg.resolutions = detail::to_ints(val, line);
            } else if (full == "experiment.seed") {
                long long sd = detail::to_integer(val, line);
                if (sd < 0) throw ConfigError("seed >= 0", line);
                cfg.seed = std::uint64_t(sd);
            } else if (full == "experiment.threads") {
                cfg.threads = int(detail::to_integer(val, line));
            } else if (full == "experiment.tolerance") {
                cfg.tolerance = detail::to_double(val, line);
            } else if (full == "experiment.eps_max") {
                cfg.eps_max = detail::to_double(val, line);
            } else if (full == "output.dir") {
                cfg.out_dir = val;
            } else if (full == "output.csv") {
                cfg.csv_name = val;
            } else if (full == "output.json") {
                cfg.json_name = val;
            } else {
                throw ConfigError("unknown key '" + key + "' in [" + section + "]", line);
            }
        } catch (const DomainError& e) {
            throw ConfigError(e.what(), line);
        }
    }
    validate_config(cfg);
    return cfg;
}

inline Config load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read config '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

// ---------------------------------------------------------------------------------------------
// CSV

inline const std::vector<std::string>& csv_columns() {
    static const std::vector<std::string> cols{
        "experiment", "label",     "kind",        "c",         "k",         "eps",      "delta",
        "n",          "n_rho",     "n_ang1",      "n_ang2",    "n_fiber",   "rho_min",  "rho_max",
        "sigma_min",  "kernel_dim", "max_ratio_excess", "residual", "convergence_order", "defect", "drift",
        "aux",        "verdict",   "tolerance",   "seed"};
    return cols;
}

inline std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline double parse_double_field(const std::string& s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    double x = 0.0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), x);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw IoError("bad number '" + s + "' in CSV");
    return x;
}

namespace detail {

inline std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

inline std::vector<std::string> csv_split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace detail

inline std::string csv_row(const SweepRecord& r) {
    std::vector<std::string> f{detail::csv_quote(r.experiment),
                               detail::csv_quote(r.label),
                               std::string(kind_name(r.kind)),
                               format_double(r.c),
                               std::to_string(r.k),
                               format_double(r.eps),
                               format_double(r.delta),
                               std::to_string(r.n),
                               std::to_string(r.n_rho),
                               std::to_string(r.n_ang1),
                               std::to_string(r.n_ang2),
                               std::to_string(r.n_fiber),
                               format_double(r.rho_min),
                               format_double(r.rho_max),
                               format_double(r.sigma_min),
                               std::to_string(r.kernel_dim),
                               format_double(r.max_ratio_excess),
                               format_double(r.residual),
                               format_double(r.convergence_order),
                               format_double(r.defect),
                               format_double(r.drift),
                               format_double(r.aux),
                               std::string(verdict_name(r.verdict)),
                               format_double(r.tolerance),
                               std::to_string(r.seed)};
    std::string out;
    for (std::size_t i = 0; i < f.size(); ++i) out += (i ? "," : "") + f[i];
    return out;
}

inline std::string to_csv(const std::vector<SweepRecord>& records) {
    std::string out;
    for (std::size_t i = 0; i < csv_columns().size(); ++i) out += (i ? "," : "") + csv_columns()[i];
    out += '\n';
    for (auto& r : records) out += csv_row(r) + '\n';
    return out;
}

inline std::vector<SweepRecord> parse_csv(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty CSV");
    if (detail::csv_split(line) != csv_columns()) throw IoError("CSV header does not match the record layout");
    std::vector<SweepRecord> out;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        auto f = detail::csv_split(line);
        if (f.size() != csv_columns().size())
            throw IoError("CSV row " + std::to_string(row) + " has " + std::to_string(f.size()) + " fields");
        try {
            SweepRecord r;
            std::size_t i = 0;
            auto integer = [&](const std::string& s) { return int(std::stoll(s)); };
            r.experiment = f[i++];
            r.label = f[i++];
            r.kind = parse_kind(f[i++]);
            r.c = parse_double_field(f[i++]);
            r.k = integer(f[i++]);
            r.eps = parse_double_field(f[i++]);
            r.delta = parse_double_field(f[i++]);
            r.n = integer(f[i++]);
            r.n_rho = integer(f[i++]);
            r.n_ang1 = integer(f[i++]);
            r.n_ang2 = integer(f[i++]);
            r.n_fiber = integer(f[i++]);
            r.rho_min = parse_double_field(f[i++]);
            r.rho_max = parse_double_field(f[i++]);
            r.sigma_min = parse_double_field(f[i++]);
            r.kernel_dim = integer(f[i++]);
            r.max_ratio_excess = parse_double_field(f[i++]);
            r.residual = parse_double_field(f[i++]);
            r.convergence_order = parse_double_field(f[i++]);
            r.defect = parse_double_field(f[i++]);
            r.drift = parse_double_field(f[i++]);
            r.aux = parse_double_field(f[i++]);
            r.verdict = parse_verdict(f[i++]);
            r.tolerance = parse_double_field(f[i++]);
            r.seed = std::stoull(f[i++]);
            out.push_back(std::move(r));
        } catch (const IoError&) {
            throw;
        } catch (const std::exception& e) {
            throw IoError("CSV row " + std::to_string(row) + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------------------------
// JSON summary

inline nlohmann::ordered_json record_json(const SweepRecord& r) {
    nlohmann::ordered_json j;
    auto num = [](double x) { return std::isfinite(x) ? nlohmann::ordered_json(x) : nlohmann::ordered_json(nullptr); };
    j["experiment"] = r.experiment;
    j["label"] = r.label;
    j["kind"] = std::string(kind_name(r.kind));
    j["eps"] = num(r.eps);
    j["delta"] = num(r.delta);
    j["n"] = r.n;
    j["sigma_min"] = num(r.sigma_min);
    j["kernel_dim"] = r.kernel_dim;
    j["max_ratio_excess"] = num(r.max_ratio_excess);
    j["residual"] = num(r.residual);
    j["convergence_order"] = num(r.convergence_order);
    j["defect"] = num(r.defect);
    j["drift"] = num(r.drift);
    j["aux"] = num(r.aux);
    j["verdict"] = std::string(verdict_name(r.verdict));
    j["tolerance"] = num(r.tolerance);
    j["seed"] = r.seed;
    return j;
}

/// {experiment, pass_count, fail_count, indeterminate_count, worst_case}; worst_case is the first
/// failing record, else the first indeterminate one, else null.
inline nlohmann::ordered_json summary_json(const std::string& experiment, const std::vector<SweepRecord>& records) {
    nlohmann::ordered_json j;
    int pass = 0, fail = 0, indet = 0;
    const SweepRecord *first_fail = nullptr, *first_indet = nullptr;
    for (auto& r : records) {
        if (r.verdict == Verdict::Pass) ++pass;
        if (r.verdict == Verdict::Fail) {
            ++fail;
            if (!first_fail) first_fail = &r;
        }
        if (r.verdict == Verdict::Indeterminate) {
            ++indet;
            if (!first_indet) first_indet = &r;
        }
    }
    j["experiment"] = experiment;
    j["pass_count"] = pass;
    j["fail_count"] = fail;
    j["indeterminate_count"] = indet;
    const SweepRecord* worst = first_fail ? first_fail : first_indet;
    j["worst_case"] = worst ? record_json(*worst) : nlohmann::ordered_json(nullptr);
    return j;
}

/// Per-experiment summaries when records mix experiments.
inline nlohmann::ordered_json summarize(const std::string& name, const std::vector<SweepRecord>& records) {
    auto top = summary_json(name, records);
    std::vector<std::string> order;
    for (auto& r : records)
        if (std::find(order.begin(), order.end(), r.experiment) == order.end()) order.push_back(r.experiment);
    if (order.size() > 1) {
        auto arr = nlohmann::ordered_json::array();
        for (auto& x : order) {
            std::vector<SweepRecord> sub;
            for (auto& r : records)
                if (r.experiment == x) sub.push_back(r);
            arr.push_back(summary_json(x, sub));
        }
        top["experiments"] = arr;
    }
    return top;
}

namespace detail {

inline void write_text(const std::string& path, const std::string& text) {
    std::error_code ec;
    auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent, ec);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write '" + path + "'");
    f << text;
    f.flush();
    if (!f) throw IoError("write failed for '" + path + "'");
}

}  // namespace detail

/// Writes the CSV and the JSON summary, overwriting both.
inline void emit(const std::string& name, const std::vector<SweepRecord>& records, const std::string& csv_path,
                 const std::string& json_path) {
    if (records.empty()) throw PreconditionError("emit needs at least one record");
    detail::write_text(csv_path, to_csv(records));
    detail::write_text(json_path, summarize(name, records).dump(2) + "\n");
}

inline int exit_code_for(const std::vector<SweepRecord>& records) {
    bool indet = false;
    for (auto& r : records) {
        if (r.verdict == Verdict::Fail) return kExitFail;
        if (r.verdict == Verdict::Indeterminate) indet = true;
    }
    return indet ? kExitIndeterminate : kExitPass;
}

}  // namespace ghlab
