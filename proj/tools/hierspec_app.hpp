#pragma once

// Command-line front end. Every subcommand writes one JSON document
// {schema, result, manifest}; some also write a CSV table.
//
// Exit codes: 0 ok, 1 other library error, 2 invalid input, 3 tolerance not
// met, 4 ambiguous root count, 5 too many discarded Monte-Carlo trials.

#include <CLI11.hpp>
#include <json.hpp>

#include <hierspec/hierspec.hpp>

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace hierspec::app {

using json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

enum ExitCode : int { kOk = 0, kError = 1, kInvalid = 2, kTolerance = 3, kAmbiguous = 4, kDiscarded = 5 };

// ----------------------------------------------------------------------------
// Serialisation: doubles as %.17g, round-trip exact.

namespace detail {

inline void append_number(std::string& out, double v) {
    if (!std::isfinite(v)) {
        out += "null";
        return;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

inline void append_string(std::string& out, const std::string& s) {
    out += json(s).dump();
}

inline void emit(const json& j, std::string& out, int level) {
    const std::string pad(static_cast<std::size_t>(2 * (level + 1)), ' ');
    const std::string close(static_cast<std::size_t>(2 * level), ' ');
    switch (j.type()) {
    case json::value_t::object: {
        if (j.empty()) {
            out += "{}";
            return;
        }
        out += "{\n";
        bool first = true;
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (!first) out += ",\n";
            first = false;
            out += pad;
            append_string(out, it.key());
            out += ": ";
            emit(it.value(), out, level + 1);
        }
        out += "\n" + close + "}";
        return;
    }
    case json::value_t::array: {
        if (j.empty()) {
            out += "[]";
            return;
        }
        // arrays of scalars stay on one line
        const bool flat = std::all_of(j.begin(), j.end(), [](const json& e) { return e.is_primitive(); });
        out += flat ? "[" : "[\n";
        bool first = true;
        for (const auto& e : j) {
            if (!first) out += flat ? ", " : ",\n";
            first = false;
            if (!flat) out += pad;
            emit(e, out, level + 1);
        }
        out += flat ? "]" : "\n" + close + "]";
        return;
    }
    case json::value_t::number_float:
        append_number(out, j.get<double>());
        return;
    default:
        out += j.dump();
    }
}

} // namespace detail

inline std::string serialize(const json& j) {
    std::string out;
    detail::emit(j, out, 0);
    return out;
}

inline std::string fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "fnv1a64:%016" PRIx64, h);
    return buf;
}

inline std::string schema_name(const std::string& subcommand) {
    return "hierspec/" + subcommand + "/v" + std::to_string(kSchemaVersion);
}

// ----------------------------------------------------------------------------
// Validation of emitted documents

namespace detail {

inline const std::map<std::string, std::vector<std::string>>& required_result_keys() {
    static const std::map<std::string, std::vector<std::string>> keys{
        {"spectrum", {"p", "multiplier", "kernel", "potential", "gaps_scanned", "truncation_shift", "entries"}},
        {"phase-diagram", {"p", "rows"}},
        {"heat-kernel", {"p", "multiplier", "tol", "rows"}},
        {"sparse-ess", {"p", "multiplier", "range", "inherited", "intervals"}},
        {"localize", {"p", "multiplier", "range", "locations", "moments", "limitations"}},
        {"constants", {"p", "z", "gamma_p", "alpha", "inverse_gamma_p_minus_alpha", "jump_constant"}},
    };
    return keys;
}

} // namespace detail

/// Returns a list of problems; empty means the document is valid.
inline std::vector<std::string> validate_document(const json& doc) {
    std::vector<std::string> errors;
    const auto need = [&](const json& obj, const std::string& key, auto pred, const char* what) {
        if (!obj.is_object() || !obj.contains(key)) {
            errors.push_back("missing field '" + key + "'");
            return false;
        }
        if (!pred(obj.at(key))) {
            errors.push_back("field '" + key + "' is not " + what);
            return false;
        }
        return true;
    };
    const auto is_string = [](const json& j) { return j.is_string(); };
    const auto is_object = [](const json& j) { return j.is_object(); };
    const auto is_number = [](const json& j) { return j.is_number(); };
    const auto is_seed = [](const json& j) { return j.is_null() || j.is_number_unsigned() || j.is_number_integer(); };

    if (!doc.is_object()) return {"document is not a JSON object"};
    if (!need(doc, "schema", is_string, "a string")) return errors;
    const std::string schema = doc.at("schema");
    const std::string prefix = "hierspec/", suffix = "/v" + std::to_string(kSchemaVersion);
    if (schema.rfind(prefix, 0) != 0 || schema.size() <= prefix.size() + suffix.size() ||
        schema.compare(schema.size() - suffix.size(), suffix.size(), suffix) != 0) {
        errors.push_back("unknown schema '" + schema + "'");
        return errors;
    }
    const std::string sub = schema.substr(prefix.size(), schema.size() - prefix.size() - suffix.size());
    const auto& keys = detail::required_result_keys();
    if (!keys.contains(sub)) {
        errors.push_back("unknown subcommand '" + sub + "' in schema");
        return errors;
    }
    if (need(doc, "result", is_object, "an object"))
        for (const auto& k : keys.at(sub))
            if (!doc.at("result").contains(k)) errors.push_back("result is missing '" + k + "'");
    if (need(doc, "manifest", is_object, "an object")) {
        const json& m = doc.at("manifest");
        if (need(m, "subcommand", is_string, "a string") && m.at("subcommand") != sub)
            errors.push_back("manifest subcommand does not match the schema");
        need(m, "params", is_object, "an object");
        need(m, "seed", is_seed, "an integer or null");
        need(m, "version", is_string, "a string");
        if (need(m, "wall_time", is_number, "a number") && m.at("wall_time").get<double>() < 0.0)
            errors.push_back("wall_time is negative");
        if (need(m, "checksum", is_string, "a string") && doc.contains("result") &&
            m.at("checksum") != fnv1a64(serialize(doc.at("result"))))
            errors.push_back("checksum does not match the result payload");
    }
    return errors;
}

// ----------------------------------------------------------------------------
// Argument helpers

struct Grid {
    double lo = 0.0, hi = 0.0;
    int steps = 0;
    double at(int i) const { return steps == 1 ? lo : lo + (hi - lo) * i / (steps - 1); }
};

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(cur);
    return out;
}

inline double parse_double(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw InvalidArgument("cannot parse " + what + " from '" + s + "'");
    }
}

inline Index parse_index(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        if (!s.empty() && s[0] == '-') throw std::invalid_argument(s);
        const unsigned long long v = std::stoull(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return static_cast<Index>(v);
    } catch (const std::exception&) {
        throw InvalidArgument("cannot parse " + what + " from '" + s + "'");
    }
}

inline std::vector<double> parse_list(const std::string& s, const std::string& what) {
    std::vector<double> out;
    for (const auto& t : split(s, ',')) out.push_back(parse_double(t, what));
    if (out.empty()) throw InvalidArgument(what + " list is empty");
    return out;
}

/// "lo:hi:steps"
inline Grid parse_grid(const std::string& s, const std::string& what) {
    const auto parts = split(s, ':');
    if (parts.size() != 3) throw InvalidArgument(what + " must have the form lo:hi:steps");
    Grid g{parse_double(parts[0], what), parse_double(parts[1], what), 0};
    const double steps = parse_double(parts[2], what);
    if (!(steps >= 1.0) || steps != std::floor(steps) || steps > 1e6)
        throw InvalidArgument(what + ": steps must be a positive integer");
    g.steps = static_cast<int>(steps);
    if (!(g.lo <= g.hi)) throw InvalidArgument(what + ": lo must not exceed hi");
    return g;
}

/// "a:b"
inline std::pair<double, double> parse_range(const std::string& s) {
    const auto parts = split(s, ':');
    if (parts.size() != 2) throw InvalidArgument("--range must have the form low:high");
    return {parse_double(parts[0], "--range"), parse_double(parts[1], "--range")};
}

inline std::vector<double> read_phi_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open multiplier table '" + path + "'");
    std::vector<double> out;
    std::string line;
    while (std::getline(in, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        std::string tok;
        while (ls >> tok) out.push_back(parse_double(tok, "multiplier table entry"));
    }
    return out;
}

inline json multiplier_json(const MultiplierSpec& m) {
    if (auto a = m.alpha()) return json{{"type", "power_law"}, {"alpha", *a}};
    return json{{"type", "tabulated"}, {"lambdas", std::get<Tabulated>(m.kind).lambdas}};
}

inline unsigned default_threads() {
    if (const char* env = std::getenv("HIERSPEC_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1 && v <= 1024) return static_cast<unsigned>(v);
    }
    return 1;
}

inline json entry_json(const SpectrumEntry& e) {
    json j{{"value", e.value}, {"kind", to_string(e.kind)}, {"gap", e.gap}};
    if (e.multiplicity == kInfiniteMultiplicity)
        j["multiplicity"] = "infinite";
    else
        j["multiplicity"] = e.multiplicity;
    j["residual"] = e.residual;
    j["bracket_width"] = e.bracket_width;
    j["interlaced"] = e.interlaced;
    return j;
}

inline json interval_json(const SpectralInterval& iv) {
    return json{{"gap", iv.gap},           {"lo", iv.lo},
                {"hi", iv.hi},             {"residual_lo", iv.residual_lo},
                {"residual_hi", iv.residual_hi}, {"clipped_at_zero", iv.clipped_at_zero}};
}

/// Writes text to a file; "-" means the given stream.
inline void write_text(const std::string& path, const std::string& text, std::ostream& fallback) {
    if (path.empty() || path == "-") {
        fallback << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InvalidArgument("cannot write '" + path + "'");
    f << text;
}

inline std::string csv_number(double v) {
    std::string s;
    detail::append_number(s, v);
    return s == "null" ? "" : s;
}

// ----------------------------------------------------------------------------
// Subcommand options

struct ModelOptions {
    Index p = 2;
    std::optional<double> alpha;
    std::string phi_table;

    MultiplierSpec multiplier() const {
        if (alpha && !phi_table.empty()) throw InvalidArgument("give either --alpha or --phi-table, not both");
        if (!phi_table.empty()) return MultiplierSpec::tabulated(read_phi_table(phi_table));
        if (!alpha) throw InvalidArgument("one of --alpha or --phi-table is required");
        return MultiplierSpec::power_law(*alpha);
    }
    HierarchicalLaplacian laplacian() const {
        if (p < 2) throw InvalidArgument("--p must be >= 2");
        return HierarchicalLaplacian(p, multiplier());
    }
};

inline void add_model(CLI::App* sub, ModelOptions& m) {
    sub->add_option("--p", m.p, "branching number p >= 2")->capture_default_str();
    sub->add_option("--alpha", m.alpha, "power-law exponent, lambda_k = p^{-alpha (k-1)}");
    sub->add_option("--phi-table", m.phi_table, "file with lambda_0 .. lambda_R (geometric tail beyond)");
}

inline json model_params(const ModelOptions& m) {
    json j{{"p", m.p}};
    j["alpha"] = m.alpha ? json(*m.alpha) : json(nullptr);
    j["phi_table"] = m.phi_table.empty() ? json(nullptr) : json(m.phi_table);
    return j;
}

struct Outputs {
    std::string out;
    std::string csv;
};

inline void add_outputs(CLI::App* sub, Outputs& o, bool csv) {
    sub->add_option("--out", o.out, "JSON output file (default stdout)");
    if (csv) sub->add_option("--csv", o.csv, "CSV output file");
}

struct Run {
    json result;
    json params;
    std::optional<std::uint64_t> seed;
    std::string csv;
    int exit_code = kOk;
};

// ----------------------------------------------------------------------------
// spectrum

struct SpectrumOptions {
    ModelOptions model;
    std::string sigma;
    std::string loc;
    int gaps = 3;
    double tol = 1e-12;
    int depth = 0;
    Outputs io;
};

inline Run cmd_spectrum(const SpectrumOptions& o) {
    const HierarchicalLaplacian L = o.model.laplacian();
    const auto sigmas = parse_list(o.sigma, "--sigma");
    std::vector<Point> locs;
    if (!o.loc.empty()) {
        for (const auto& t : split(o.loc, ',')) locs.push_back(Point{parse_index(t, "--loc")});
    } else if (sigmas.size() == 1) {
        locs.push_back(Point{0});
    } else {
        throw InvalidArgument("--loc is required with more than one sigma");
    }
    if (locs.size() != sigmas.size()) throw InvalidArgument("--sigma and --loc must have the same length");
    if (o.gaps < 0) throw InvalidArgument("--gaps must be >= 0");
    if (!(o.tol > 0.0)) throw InvalidArgument("--tol must be > 0");
    std::vector<Bump> bumps;
    for (std::size_t i = 0; i < sigmas.size(); ++i) bumps.push_back({locs[i], sigmas[i]});
    const Potential pot(bumps);

    RootSearchOptions opt;
    opt.k_max = o.gaps;
    opt.tol = o.tol;
    SpectrumReport rep;
    std::string kernel_name;
    if (o.depth > 0) {
        const LatticeConfig cfg{o.model.p, o.depth, L.multiplier()};
        for (const auto& b : pot.bumps())
            if (b.location.value >= cfg.block_size()) throw InvalidArgument("--loc outside the depth block");
        const TruncatedResolvent T(cfg);
        rep = pot.size() == 1 ? rank_one_roots(T, sigmas[0], opt) : finite_rank_roots(T, pot, opt);
        kernel_name = "truncated";
    } else {
        const LatticeResolvent R(L);
        rep = pot.size() == 1 ? rank_one_roots(R, sigmas[0], opt) : finite_rank_roots(R, pot, opt);
        kernel_name = "lattice";
    }

    Run run;
    run.params = model_params(o.model);
    run.params["sigma"] = sigmas;
    json lp = json::array();
    for (auto x : locs) lp.push_back(x.value);
    run.params["loc"] = lp;
    run.params["gaps"] = o.gaps;
    run.params["tol"] = o.tol;
    run.params["depth"] = o.depth;

    json potential = json::array();
    for (const auto& b : pot.bumps()) potential.push_back({{"location", b.location.value}, {"sigma", b.sigma}});
    json entries = json::array();
    std::string csv = "value,kind,gap,residual\n";
    for (const auto& e : rep.entries) {
        entries.push_back(entry_json(e));
        csv += csv_number(e.value) + "," + to_string(e.kind) + "," + std::to_string(e.gap) + "," + csv_number(e.residual) + "\n";
    }
    run.result = json{{"p", o.model.p},
                      {"multiplier", multiplier_json(L.multiplier())},
                      {"kernel", kernel_name},
                      {"depth", o.depth > 0 ? json(o.depth) : json(nullptr)},
                      {"potential", potential},
                      {"gaps_scanned", rep.gaps_scanned},
                      {"truncation_shift", rep.truncation_shift},
                      {"entries", entries}};
    run.csv = csv;
    return run;
}

// ----------------------------------------------------------------------------
// phase-diagram

struct PhaseOptions {
    Index p = 2;
    std::string alpha_grid = "0.05:2:40";
    std::string sigma_grid = "0.05:2:40";
    Outputs io;
};

inline Run cmd_phase_diagram(const PhaseOptions& o) {
    if (o.p < 2) throw InvalidArgument("--p must be >= 2");
    const Grid ag = parse_grid(o.alpha_grid, "--alpha-grid"), sg = parse_grid(o.sigma_grid, "--sigma-grid");
    if (!(ag.lo > 0.0)) throw InvalidArgument("--alpha-grid must be positive");
    if (!(sg.lo > 0.0)) throw InvalidArgument("--sigma-grid must be positive");
    Run run;
    run.params = json{{"p", o.p}, {"alpha_grid", o.alpha_grid}, {"sigma_grid", o.sigma_grid}};
    json rows = json::array();
    std::string csv = "alpha,sigma,neg_count,sigma_star\n";
    for (int i = 0; i < ag.steps; ++i) {
        const double a = ag.at(i), star = phase_boundary(a, o.p);
        for (int j = 0; j < sg.steps; ++j) {
            const double s = sg.at(j);
            const int n = neg_count(a, s, o.p);
            rows.push_back(json{{"alpha", a}, {"sigma", s}, {"neg_count", n}, {"sigma_star", star}});
            csv += csv_number(a) + "," + csv_number(s) + "," + std::to_string(n) + "," + csv_number(star) + "\n";
        }
    }
    run.result = json{{"p", o.p}, {"rows", rows}};
    run.csv = csv;
    return run;
}

// ----------------------------------------------------------------------------
// heat-kernel

struct HeatOptions {
    ModelOptions model;
    std::string t_grid = "0.01:100:9";
    std::string pairs;
    bool diag = false;
    double tol = 1e-13;
    Outputs io;
};

inline Run cmd_heat_kernel(const HeatOptions& o) {
    const HierarchicalLaplacian L = o.model.laplacian();
    const Grid g = parse_grid(o.t_grid, "--t-grid");
    if (!(g.lo > 0.0)) throw InvalidArgument("--t-grid must be positive (log-spaced)");
    if (!(o.tol > 0.0)) throw InvalidArgument("--tol must be > 0");
    std::vector<std::pair<Point, Point>> pairs;
    if (o.diag) pairs.push_back({Point{0}, Point{0}});
    if (!o.pairs.empty())
        for (const auto& t : split(o.pairs, ',')) {
            const auto xy = split(t, '-');
            if (xy.size() != 2) throw InvalidArgument("--pairs entries must look like x-y");
            pairs.push_back({Point{parse_index(xy[0], "--pairs")}, Point{parse_index(xy[1], "--pairs")}});
        }
    if (pairs.empty()) throw InvalidArgument("give --diag or --pairs");
    // the functional equation is exact for the power law only
    const bool fe = o.diag && L.multiplier().is_power_law();
    const double kappa = fe ? *L.kappa() : 0.0, pd = L.pd();

    Run run;
    run.params = model_params(o.model);
    run.params["t_grid"] = o.t_grid;
    run.params["pairs"] = o.pairs.empty() ? json(nullptr) : json(o.pairs);
    run.params["diag"] = o.diag;
    run.params["tol"] = o.tol;
    json rows = json::array();
    std::string csv = fe ? "t,x,y,value,tail_bound,functional_equation_residual\n" : "t,x,y,value,tail_bound\n";
    for (int i = 0; i < g.steps; ++i) {
        const double t = g.steps == 1 ? g.lo : g.lo * std::pow(g.hi / g.lo, static_cast<double>(i) / (g.steps - 1));
        for (const auto& [x, y] : pairs) {
            const SeriesValue v = heat_kernel(L, t, x, y, o.tol);
            json row{{"t", t}, {"x", x.value}, {"y", y.value}, {"value", v.value}, {"tail_bound", v.tail_bound}};
            std::string line = csv_number(t) + "," + std::to_string(x.value) + "," + std::to_string(y.value) + "," +
                               csv_number(v.value) + "," + csv_number(v.tail_bound);
            if (fe) {
                if (x == y) {
                    const double lhs = heat_kernel_diag(L, t / kappa, o.tol).value;
                    const double r = lhs - v.value / pd - (1.0 - 1.0 / pd) * std::exp(-t / kappa);
                    row["functional_equation_residual"] = r;
                    line += "," + csv_number(r);
                } else {
                    row["functional_equation_residual"] = nullptr;
                    line += ",";
                }
            }
            rows.push_back(row);
            csv += line + "\n";
        }
    }
    run.result = json{{"p", o.model.p}, {"multiplier", multiplier_json(L.multiplier())}, {"tol", o.tol}, {"rows", rows}};
    run.csv = csv;
    return run;
}

// ----------------------------------------------------------------------------
// sparse-ess

struct SparseEssOptions {
    ModelOptions model;
    std::string range = "0.5:2";
    int gaps = 3;
    double tol = 1e-12;
    Outputs io;
};

inline Run cmd_sparse_ess(const SparseEssOptions& o) {
    const HierarchicalLaplacian L = o.model.laplacian();
    SparseConfig cfg;
    std::tie(cfg.low, cfg.high) = parse_range(o.range);
    if (o.gaps < 0) throw InvalidArgument("--gaps must be >= 0");
    const LatticeResolvent R(L);
    const EssentialSpectrumSet ess = essential_spectrum_sparse(R, cfg, o.gaps, o.tol);
    Run run;
    run.params = model_params(o.model);
    run.params["range"] = o.range;
    run.params["gaps"] = o.gaps;
    run.params["tol"] = o.tol;
    json ivs = json::array();
    for (const auto& iv : ess.intervals) ivs.push_back(interval_json(iv));
    run.result = json{{"p", o.model.p},
                      {"multiplier", multiplier_json(L.multiplier())},
                      {"range", {cfg.low, cfg.high}},
                      {"inherited", ess.inherited},
                      {"intervals", ivs}};
    return run;
}

// ----------------------------------------------------------------------------
// localize

struct LocalizeOptions {
    ModelOptions model;
    std::string locations = "geometric:4";
    std::string range = "0.5:2";
    double horizon_log2 = 44;
    double s = 0.3;
    std::optional<double> tau;
    std::optional<double> eps;
    Index y = 0;
    int trials = 200;
    std::uint64_t seed = 1;
    int depth = 0;
    int diag_trials = 0;
    int replicates = 1000;
    unsigned threads = 1;
    Outputs io;
};

inline std::vector<Point> parse_locations(const std::string& s, Index p, Index limit) {
    if (s.rfind("geometric:", 0) == 0) {
        std::string rest = s.substr(10);
        // accepts geometric:c and geometric:p^c
        if (auto caret = rest.find('^'); caret != std::string::npos) {
            if (parse_index(rest.substr(0, caret), "--locations base") != p)
                throw InvalidArgument("--locations base must equal --p");
            rest = rest.substr(caret + 1);
        }
        const Index c = parse_index(rest, "--locations exponent");
        if (c < 1 || c > 64) throw InvalidArgument("--locations exponent must lie in [1, 64]");
        return geometric_locations(p, static_cast<int>(c), limit);
    }
    std::vector<Point> out;
    for (const auto& t : split(s, ',')) out.push_back(Point{parse_index(t, "--locations")});
    return out;
}

inline Run cmd_localize(const LocalizeOptions& o) {
    const HierarchicalLaplacian L = o.model.laplacian();
    if (!(o.horizon_log2 >= 1.0 && o.horizon_log2 <= 62.0)) throw InvalidArgument("--horizon must lie in [1, 62]");
    SparseConfig cfg;
    std::tie(cfg.low, cfg.high) = parse_range(o.range);
    cfg.locations = parse_locations(o.locations, o.model.p, Index(1) << static_cast<int>(o.horizon_log2));
    if (cfg.locations.empty()) throw InvalidArgument("--locations produced no points");
    cfg.validate();
    const LatticeResolvent R(L);
    const EssentialSpectrumSet ess = essential_spectrum_sparse(R, cfg, 3);
    const SpectralInterval& i1 = ess.intervals.front();
    const double tau = o.tau.value_or(0.5 * (i1.lo + i1.hi));
    double eps = 0.0;
    if (o.eps) {
        eps = *o.eps;
    } else {
        // 1e-3 of the width of the gap holding tau
        int k = 1;
        while (L.lambda(k + 1) > tau && k < 200) ++k;
        eps = 1e-3 * (L.lambda(k) - L.lambda(k + 1));
    }
    MomentOptions mopt;
    mopt.threads = o.threads;
    const MomentEstimate est = fractional_moment_estimate(R, cfg, o.s, tau, eps, Point{o.y}, o.trials, o.seed, mopt);

    Run run;
    run.seed = o.seed;
    run.params = model_params(o.model);
    run.params["locations"] = o.locations;
    run.params["range"] = o.range;
    run.params["horizon"] = o.horizon_log2;
    run.params["s"] = o.s;
    run.params["tau"] = tau;
    run.params["eps"] = eps;
    run.params["y"] = o.y;
    run.params["trials"] = o.trials;
    run.params["depth"] = o.depth;
    run.params["diag_trials"] = o.diag_trials;
    run.params["replicates"] = o.replicates;
    // thread count is deliberately left out: results do not depend on it

    json table = json::array();
    for (const auto& m : est.per_location)
        table.push_back({{"location", m.location.value}, {"distance", m.distance}, {"mean", m.mean}, {"std_error", m.std_error}});
    json moments{{"s", o.s},
                 {"tau", tau},
                 {"eps", eps},
                 {"y", o.y},
                 {"trials", est.trials},
                 {"discarded", est.discarded},
                 {"discarded_fraction", est.discarded_fraction()},
                 {"per_location", table}};
    if (!est.samples.empty() && std::count_if(est.per_location.begin(), est.per_location.end(),
                                              [](const LocationMoment& m) { return m.distance > 0.0; }) >= 2) {
        const auto sl = moment_decay_slope(est, o.replicates, 0.95, o.seed);
        moments["decay_slope"] = {{"estimate", sl.estimate}, {"lo", sl.lo}, {"hi", sl.hi}, {"confidence", 0.95}};
    } else {
        moments["decay_slope"] = nullptr;
    }
    json locs = json::array();
    for (auto x : cfg.locations) locs.push_back(x.value);
    json ivs = json::array();
    for (const auto& iv : ess.intervals) ivs.push_back(interval_json(iv));
    run.result = json{{"p", o.model.p},
                      {"multiplier", multiplier_json(L.multiplier())},
                      {"range", {cfg.low, cfg.high}},
                      {"locations", locs},
                      {"essential_spectrum", ivs},
                      {"moments", moments}};
    if (o.depth > 0 && o.diag_trials > 0) {
        LocalizationOptions lopt;
        lopt.threads = o.threads;
        const LatticeConfig lat{o.model.p, o.depth, L.multiplier()};
        const LocalizationReport rep = localization_diagnostics(lat, cfg, o.diag_trials, o.seed, lopt);
        json loc{{"depth", o.depth},
                 {"trials", rep.trials},
                 {"truncation_shift", rep.truncation_shift},
                 {"fatten", rep.fatten},
                 {"in_gap", rep.in_gap},
                 {"in_window", rep.in_window},
                 {"window_fraction", rep.window_fraction()},
                 {"eigenvectors_profiled", rep.records.size()}};
        if (!rep.records.empty()) {
            const auto med = median_decay_slope(rep, 2000, 0.95, o.seed);
            std::vector<double> iprs;
            for (const auto& r : rep.records) iprs.push_back(r.ipr);
            loc["median_decay_slope"] = {{"estimate", med.estimate}, {"lo", med.lo}, {"hi", med.hi}, {"confidence", 0.95}};
            loc["median_ipr"] = stats::median(iprs);
        } else {
            loc["median_decay_slope"] = nullptr;
            loc["median_ipr"] = nullptr;
        }
        run.result["localization"] = loc;
    }
    run.result["limitations"] =
        "finite-volume diagnostics: decay statistics only; absence of continuous spectrum is not verifiable";
    if (est.discarded_fraction() > 0.05) run.exit_code = kDiscarded;
    return run;
}

// ----------------------------------------------------------------------------
// constants

struct ConstantsOptions {
    Index p = 2;
    double z = -1.0;
    double alpha = 1.0;
    Outputs io;
};

/// Gamma_p(z) = (1 - p^{z-1}) / (1 - p^{-z})
inline double gamma_p(Index p, double z) {
    const double pd = static_cast<double>(p);
    const double den = 1.0 - std::pow(pd, -z);
    if (den == 0.0) throw InvalidArgument("Gamma_p has a pole at z = 0");
    return (1.0 - std::pow(pd, z - 1.0)) / den;
}

inline Run cmd_constants(const ConstantsOptions& o) {
    if (o.p < 2) throw InvalidArgument("--p must be >= 2");
    if (!(o.alpha > 0.0)) throw InvalidArgument("--alpha must be > 0");
    const double pd = static_cast<double>(o.p);
    const double g = gamma_p(o.p, o.z);
    const double kappa = std::pow(pd, -o.alpha);
    Run run;
    run.params = json{{"p", o.p}, {"z", o.z}, {"alpha", o.alpha}};
    run.result = json{{"p", o.p},
                      {"z", o.z},
                      {"gamma_p", g},
                      {"alpha", o.alpha},
                      {"inverse_gamma_p_minus_alpha", 1.0 / gamma_p(o.p, -o.alpha)},
                      {"jump_constant", (1.0 / kappa - 1.0) / (1.0 - kappa / pd)}};
    return run;
}

// ----------------------------------------------------------------------------
// Driver

inline json make_document(const std::string& sub, const Run& run, double wall_time) {
    json doc;
    doc["schema"] = schema_name(sub);
    doc["result"] = run.result;
    doc["manifest"] = json{{"subcommand", sub},
                           {"params", run.params},
                           {"seed", run.seed ? json(*run.seed) : json(nullptr)},
                           {"version", kVersion},
                           {"wall_time", wall_time},
                           {"checksum", fnv1a64(serialize(run.result))}};
    return doc;
}

inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Spectral computations for hierarchical Schroedinger operators on the Dyson lattice"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    SpectrumOptions so;
    auto* s_spec = app.add_subcommand("spectrum", "eigenvalues of L - sum sigma_i delta_{a_i}");
    add_model(s_spec, so.model);
    s_spec->add_option("--sigma", so.sigma, "comma-separated amplitudes (sigma > 0 attracts)")->required();
    s_spec->add_option("--loc", so.loc, "comma-separated bump locations");
    s_spec->add_option("--gaps", so.gaps, "number of spectral gaps to scan")->capture_default_str();
    s_spec->add_option("--tol", so.tol, "relative bracket tolerance")->capture_default_str();
    s_spec->add_option("--depth", so.depth, "use the depth-n truncation instead of the infinite lattice");
    add_outputs(s_spec, so.io, true);

    PhaseOptions po;
    auto* s_phase = app.add_subcommand("phase-diagram", "number of negative eigenvalues for one bump at 0");
    s_phase->add_option("--p", po.p)->capture_default_str();
    s_phase->add_option("--alpha-grid", po.alpha_grid, "lo:hi:steps")->capture_default_str();
    s_phase->add_option("--sigma-grid", po.sigma_grid, "lo:hi:steps")->capture_default_str();
    add_outputs(s_phase, po.io, true);

    HeatOptions ho;
    auto* s_heat = app.add_subcommand("heat-kernel", "transition density p(t, x, y)");
    add_model(s_heat, ho.model);
    s_heat->add_option("--t-grid", ho.t_grid, "lo:hi:steps, log-spaced")->capture_default_str();
    s_heat->add_option("--pairs", ho.pairs, "comma-separated x-y pairs");
    s_heat->add_flag("--diag", ho.diag, "on-diagonal values with the functional-equation check");
    s_heat->add_option("--tol", ho.tol, "series tail tolerance")->capture_default_str();
    add_outputs(s_heat, ho.io, true);

    SparseEssOptions eo;
    auto* s_ess = app.add_subcommand("sparse-ess", "essential spectrum for sparse bumps with amplitudes in a range");
    add_model(s_ess, eo.model);
    s_ess->add_option("--range", eo.range, "low:high amplitude range")->capture_default_str();
    s_ess->add_option("--gaps", eo.gaps)->capture_default_str();
    s_ess->add_option("--tol", eo.tol)->capture_default_str();
    add_outputs(s_ess, eo.io, false);

    LocalizeOptions lo;
    lo.threads = default_threads();
    auto* s_loc = app.add_subcommand("localize", "fractional moments and eigenvector decay for random sparse bumps");
    add_model(s_loc, lo.model);
    s_loc->add_option("--locations", lo.locations, "geometric:c, geometric:p^c, or a comma-separated list")->capture_default_str();
    s_loc->add_option("--range", lo.range, "low:high amplitude range")->capture_default_str();
    s_loc->add_option("--horizon", lo.horizon_log2, "geometric locations stay below 2^horizon")->capture_default_str();
    s_loc->add_option("--s", lo.s, "moment exponent in (0, 1/2)")->capture_default_str();
    s_loc->add_option("--tau", lo.tau, "real part of lambda (default: middle of I_1)");
    s_loc->add_option("--eps", lo.eps, "imaginary part of lambda (default: 1e-3 of the gap width)");
    s_loc->add_option("--y", lo.y, "observation point")->capture_default_str();
    s_loc->add_option("--trials", lo.trials)->capture_default_str();
    s_loc->add_option("--seed", lo.seed)->capture_default_str();
    s_loc->add_option("--depth", lo.depth, "block depth for dense eigenvector diagnostics (0 = skip)")->capture_default_str();
    s_loc->add_option("--diag-trials", lo.diag_trials, "number of dense eigensolves")->capture_default_str();
    s_loc->add_option("--replicates", lo.replicates, "bootstrap replicates")->capture_default_str();
    s_loc->add_option("--threads", lo.threads, "worker threads (HIERSPEC_THREADS)");
    add_outputs(s_loc, lo.io, false);

    ConstantsOptions co;
    auto* s_const = app.add_subcommand("constants", "Gamma_p and the jump-kernel constant");
    s_const->add_option("--p", co.p)->capture_default_str();
    s_const->add_option("--z", co.z)->capture_default_str();
    s_const->add_option("--alpha", co.alpha)->capture_default_str();
    add_outputs(s_const, co.io, false);

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << "\n";
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kInvalid;
    }

    const auto start = std::chrono::steady_clock::now();
    std::string sub;
    const Outputs* io = nullptr;
    Run result;
    try {
        if (*s_spec) {
            sub = "spectrum", io = &so.io, result = cmd_spectrum(so);
        } else if (*s_phase) {
            sub = "phase-diagram", io = &po.io, result = cmd_phase_diagram(po);
        } else if (*s_heat) {
            sub = "heat-kernel", io = &ho.io, result = cmd_heat_kernel(ho);
        } else if (*s_ess) {
            sub = "sparse-ess", io = &eo.io, result = cmd_sparse_ess(eo);
        } else if (*s_loc) {
            sub = "localize", io = &lo.io, result = cmd_localize(lo);
        } else {
            sub = "constants", io = &co.io, result = cmd_constants(co);
        }
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        write_text(io->out, serialize(make_document(sub, result, wall)) + "\n", out);
        if (!io->csv.empty()) write_text(io->csv, result.csv, out);
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << "\n";
        return kInvalid;
    } catch (const ToleranceNotMet& e) {
        err << "error: " << e.what() << "\n";
        return kTolerance;
    } catch (const RootCountAmbiguous& e) {
        err << "error: " << e.what() << "\n";
        return kAmbiguous;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kError;
    }
    if (result.exit_code == kDiscarded) err << "warning: more than 5% of the Monte-Carlo trials were discarded\n";
    return result.exit_code;
}

inline int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(std::move(args), std::cout, std::cerr);
}

} // namespace hierspec::app
