#include "qhedge/scenario.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace qhedge {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

struct ParsedFile {
    // section -> key -> (value, line)
    std::map<std::string, std::map<std::string, std::pair<std::string, std::size_t>>> sections;
};

ParsedFile parse_ini(const std::string& text) {
    ParsedFile out;
    std::string section;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t comment = line.find_first_of("#;");
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw std::invalid_argument("scenario: line " + std::to_string(line_no) +
                                            ": unterminated section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) {
                throw std::invalid_argument("scenario: line " + std::to_string(line_no) +
                                            ": empty section name");
            }
            out.sections[section];
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("scenario: line " + std::to_string(line_no) +
                                        ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw std::invalid_argument("scenario: line " + std::to_string(line_no) +
                                        ": empty key");
        }
        if (section.empty()) {
            throw std::invalid_argument("scenario: line " + std::to_string(line_no) + ": key '" +
                                        key + "' outside any section");
        }
        out.sections[section][key] = {value, line_no};
    }
    return out;
}

class SectionReader {
public:
    SectionReader(const ParsedFile& file, std::string section)
        : file_(file), section_(std::move(section)) {}

    bool has(const std::string& key) const {
        auto sit = file_.sections.find(section_);
        if (sit == file_.sections.end()) return false;
        return sit->second.count(key) > 0;
    }

    std::string str(const std::string& key, const std::string& fallback) const {
        auto v = raw(key);
        std::string out = v ? v->first : fallback;
        used_.insert(key);
        return out;
    }

    double num(const std::string& key, double fallback) const {
        used_.insert(key);
        auto v = raw(key);
        if (!v) return fallback;
        try {
            std::size_t pos = 0;
            const double d = std::stod(v->first, &pos);
            if (pos != v->first.size()) throw std::invalid_argument("trailing characters");
            return d;
        } catch (const std::exception&) {
            throw std::invalid_argument("scenario: line " + std::to_string(v->second) + ": field " +
                                        section_ + "." + key + " is not a number: '" + v->first +
                                        "'");
        }
    }

    long long integer(const std::string& key, long long fallback) const {
        used_.insert(key);
        auto v = raw(key);
        if (!v) return fallback;
        try {
            std::size_t pos = 0;
            const long long d = std::stoll(v->first, &pos);
            if (pos != v->first.size()) throw std::invalid_argument("trailing characters");
            return d;
        } catch (const std::exception&) {
            throw std::invalid_argument("scenario: line " + std::to_string(v->second) + ": field " +
                                        section_ + "." + key + " is not an integer: '" + v->first +
                                        "'");
        }
    }

    bool flag(const std::string& key, bool fallback) const {
        used_.insert(key);
        auto v = raw(key);
        if (!v) return fallback;
        if (v->first == "true" || v->first == "1" || v->first == "yes") return true;
        if (v->first == "false" || v->first == "0" || v->first == "no") return false;
        throw std::invalid_argument("scenario: line " + std::to_string(v->second) + ": field " +
                                    section_ + "." + key + " is not a boolean: '" + v->first + "'");
    }

    void reject_unknown() const {
        auto sit = file_.sections.find(section_);
        if (sit == file_.sections.end()) return;
        for (const auto& [key, value] : sit->second) {
            if (!used_.count(key)) {
                throw std::invalid_argument("scenario: line " + std::to_string(value.second) +
                                            ": unknown field " + section_ + "." + key);
            }
        }
    }

private:
    const std::pair<std::string, std::size_t>* raw(const std::string& key) const {
        auto sit = file_.sections.find(section_);
        if (sit == file_.sections.end()) return nullptr;
        auto kit = sit->second.find(key);
        return kit == sit->second.end() ? nullptr : &kit->second;
    }

    const ParsedFile& file_;
    std::string section_;
    mutable std::set<std::string> used_;
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

Claim ClaimSpec::build() const {
    ClaimUnderlying u;
    if (underlying == "price") {
        u = ClaimUnderlying::price;
    } else if (underlying == "martingale") {
        u = ClaimUnderlying::martingale;
    } else {
        throw std::invalid_argument("scenario: claim.underlying must be price or martingale");
    }
    if (kind == "identity") return claim_identity(u);
    if (kind == "call") return claim_call(u, strike);
    if (kind == "put") return claim_put(u, strike);
    if (kind == "power") return claim_power(u, power);
    throw std::invalid_argument("scenario: unknown claim.kind '" + kind + "'");
}

Driver DriverSpec::build(const PathEnsemble& ensemble) const {
    if (kind == "zero") return Driver::zero();
    if (kind == "constant") return Driver::constant(c);
    if (kind == "linear_y") return Driver::linear_in_y(r);
    if (kind == "linear_z") return Driver::linear_in_z(a);
    if (kind == "structure") return Driver::structure(ensemble);
    throw std::invalid_argument("scenario: unknown bsde.driver '" + kind + "'");
}

void Scenario::validate() const {
    market.validate();
    info.validate(grid);
    if (scheme != "picard" && scheme != "blocks") {
        throw std::invalid_argument("scenario: bsde.scheme must be picard or blocks");
    }
    if (scheme == "blocks") {
        if (info.kind != InfoKind::delayed) {
            throw std::invalid_argument("scenario: the block scheme needs delayed information");
        }
        const std::size_t k_tau = info.delay_steps(grid);
        if (grid.n_steps % k_tau != 0) {
            throw std::invalid_argument(
                "scenario: the block scheme needs the horizon to be a multiple of tau");
        }
        if (driver.kind == "linear_y" && driver.r != 0.0) {
            throw std::invalid_argument(
                "scenario: the block scheme needs a driver independent of y");
        }
    }
    if (!(solve.tol > 0.0)) {
        throw std::invalid_argument("scenario: bsde.tol must be positive");
    }
    if (solve.max_iter == 0) {
        throw std::invalid_argument("scenario: bsde.max_iter must be >= 1");
    }
    // claim/driver kinds resolve
    (void)claim.kind;
    if (claim.kind != "identity" && claim.kind != "call" && claim.kind != "put" &&
        claim.kind != "power") {
        throw std::invalid_argument("scenario: unknown claim.kind '" + claim.kind + "'");
    }
    if (claim.underlying != "price" && claim.underlying != "martingale") {
        throw std::invalid_argument("scenario: claim.underlying must be price or martingale");
    }
    if (driver.kind != "zero" && driver.kind != "constant" && driver.kind != "linear_y" &&
        driver.kind != "linear_z" && driver.kind != "structure") {
        throw std::invalid_argument("scenario: unknown bsde.driver '" + driver.kind + "'");
    }
}

std::string Scenario::canonical() const {
    std::ostringstream out;
    out << "market.sigma_bar=" << fmt(market.sigma_bar) << "\n";
    out << "market.lambda_per_time=" << fmt(market.jump_intensity) << "\n";
    switch (market.marks.kind) {
        case MarkDistribution::Kind::normal:
            out << "market.mark_dist=normal\n";
            out << "market.mark_mean=" << fmt(market.marks.mean) << "\n";
            out << "market.mark_sd=" << fmt(market.marks.sd) << "\n";
            break;
        case MarkDistribution::Kind::uniform:
            out << "market.mark_dist=uniform\n";
            out << "market.mark_low=" << fmt(market.marks.low) << "\n";
            out << "market.mark_high=" << fmt(market.marks.high) << "\n";
            break;
        case MarkDistribution::Kind::constant:
            out << "market.mark_dist=constant\n";
            out << "market.mark_value=" << fmt(market.marks.value) << "\n";
            break;
    }
    out << "market.alpha_kind="
        << (market.alpha.kind == AlphaSpec::Kind::constant ? "constant" : "tanh_of_price") << "\n";
    out << "market.alpha_value=" << fmt(market.alpha.value) << "\n";
    out << "market.alpha_bound=" << fmt(market.alpha.bound) << "\n";
    out << "market.c_bar=" << fmt(market.c_bar) << "\n";
    out << "market.s0=" << fmt(market.s0) << "\n";
    out << "market.m0=" << fmt(market.m0) << "\n";
    out << "market.seed=" << market.seed << "\n";
    out << "market.n_paths=" << market.n_paths << "\n";
    out << "market.state=" << (market.state.use_martingale ? "m," : "")
        << (market.state.use_price ? "s," : "") << (market.state.use_jump_count ? "jumps" : "")
        << "\n";
    out << "grid.horizon_time=" << fmt(grid.horizon) << "\n";
    out << "grid.n_steps=" << grid.n_steps << "\n";
    out << "info.kind=" << (info.kind == InfoKind::full ? "full" : "delayed") << "\n";
    out << "info.tau_time=" << fmt(info.tau) << "\n";
    out << "info.basis_degree=" << info.basis.degree << "\n";
    out << "claim.kind=" << claim.kind << "\n";
    out << "claim.underlying=" << claim.underlying << "\n";
    out << "claim.strike=" << fmt(claim.strike) << "\n";
    out << "claim.power=" << fmt(claim.power) << "\n";
    out << "bsde.driver=" << driver.kind << "\n";
    out << "bsde.driver_c=" << fmt(driver.c) << "\n";
    out << "bsde.driver_r=" << fmt(driver.r) << "\n";
    out << "bsde.driver_a=" << fmt(driver.a) << "\n";
    out << "bsde.tol=" << fmt(solve.tol) << "\n";
    out << "bsde.max_iter=" << solve.max_iter << "\n";
    out << "bsde.scheme=" << scheme << "\n";
    return out.str();
}

std::uint64_t fnv1a64(const std::string& data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string Scenario::hash() const {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canonical())));
    return buf;
}

Scenario parse_scenario_text(const std::string& text, const ScenarioOverrides& overrides) {
    const ParsedFile file = parse_ini(text);
    for (const auto& [name, keys] : file.sections) {
        if (name != "market" && name != "grid" && name != "info" && name != "claim" &&
            name != "bsde" && name != "run") {
            throw std::invalid_argument("scenario: unknown section [" + name + "]");
        }
    }

    Scenario sc;

    SectionReader market(file, "market");
    sc.market.sigma_bar = market.num("sigma_bar", 1.0);
    sc.market.jump_intensity = market.num("lambda_per_time", 0.0);
    const std::string mark_dist = market.str("mark_dist", "normal");
    if (mark_dist == "normal") {
        sc.market.marks =
            MarkDistribution::normal(market.num("mark_mean", 0.0), market.num("mark_sd", 0.1));
    } else if (mark_dist == "uniform") {
        sc.market.marks =
            MarkDistribution::uniform(market.num("mark_low", -0.1), market.num("mark_high", 0.1));
    } else if (mark_dist == "constant") {
        sc.market.marks = MarkDistribution::constant(market.num("mark_value", 0.0));
    } else {
        throw std::invalid_argument("scenario: market.mark_dist must be normal, uniform or constant");
    }
    const std::string alpha_kind = market.str("alpha_kind", "constant");
    const double alpha_value = market.num("alpha_value", 0.0);
    if (alpha_kind == "constant") {
        sc.market.alpha = AlphaSpec::constant(alpha_value);
    } else if (alpha_kind == "tanh_of_price") {
        sc.market.alpha = AlphaSpec::tanh_of_price(alpha_value);
    } else {
        throw std::invalid_argument("scenario: market.alpha_kind must be constant or tanh_of_price");
    }
    if (market.has("alpha_bound")) {
        sc.market.alpha.bound = market.num("alpha_bound", sc.market.alpha.bound);
    } else {
        (void)market.num("alpha_bound", sc.market.alpha.bound);
    }
    // default declared bound: the realized bracket rate
    sc.market.s0 = market.num("s0", 1.0);
    sc.market.m0 = market.num("m0", 0.0);
    sc.market.seed = static_cast<std::uint64_t>(market.integer("seed", 42));
    const long long n_paths = market.integer("n_paths", 10000);
    if (n_paths <= 0) throw std::invalid_argument("scenario: market.n_paths must be positive");
    sc.market.n_paths = static_cast<std::size_t>(n_paths);
    const std::string state = market.str("state", "m,s,jumps");
    sc.market.state.use_martingale = false;
    sc.market.state.use_price = false;
    sc.market.state.use_jump_count = false;
    {
        std::istringstream tokens(state);
        std::string tok;
        while (std::getline(tokens, tok, ',')) {
            tok = trim(tok);
            if (tok == "m") {
                sc.market.state.use_martingale = true;
            } else if (tok == "s") {
                sc.market.state.use_price = true;
            } else if (tok == "jumps") {
                sc.market.state.use_jump_count = true;
            } else if (!tok.empty()) {
                throw std::invalid_argument("scenario: market.state token '" + tok +
                                            "' is not one of m, s, jumps");
            }
        }
    }

    SectionReader grid(file, "grid");
    const double horizon = grid.num("horizon_time", 1.0);
    const long long n_steps = grid.integer("n_steps", 64);
    if (n_steps <= 0) throw std::invalid_argument("scenario: grid.n_steps must be positive");
    sc.grid = Grid::uniform(horizon, static_cast<std::size_t>(n_steps));

    if (market.has("c_bar")) {
        sc.market.c_bar = market.num("c_bar", 1.0);
    } else {
        (void)market.num("c_bar", 1.0);
        sc.market.c_bar = sc.market.bracket_rate();
    }

    SectionReader info(file, "info");
    const std::string kind = info.str("kind", "full");
    const double tau = info.num("tau_time", 0.0);
    const long long degree = info.integer("basis_degree", 3);
    if (degree <= 0) throw std::invalid_argument("scenario: info.basis_degree must be positive");
    if (kind == "full") {
        sc.info = InformationModel::full(static_cast<std::size_t>(degree));
    } else if (kind == "delayed") {
        sc.info = InformationModel::delayed(tau, static_cast<std::size_t>(degree));
    } else {
        throw std::invalid_argument("scenario: info.kind must be full or delayed");
    }

    SectionReader claim(file, "claim");
    sc.claim.kind = claim.str("kind", "identity");
    sc.claim.underlying = claim.str("underlying", "price");
    sc.claim.strike = claim.num("strike", 1.0);
    sc.claim.power = claim.num("power", 2.0);

    SectionReader bsde(file, "bsde");
    sc.driver.kind = bsde.str("driver", "zero");
    sc.driver.c = bsde.num("driver_c", 0.0);
    sc.driver.r = bsde.num("driver_r", 0.0);
    sc.driver.a = bsde.num("driver_a", 0.0);
    sc.solve.tol = bsde.num("tol", 1e-3);
    const long long max_iter = bsde.integer("max_iter", 16);
    if (max_iter <= 0) throw std::invalid_argument("scenario: bsde.max_iter must be positive");
    sc.solve.max_iter = static_cast<std::size_t>(max_iter);
    sc.scheme = bsde.str("scheme", "picard");

    SectionReader run(file, "run");
    sc.output_dir = run.str("output_dir", "out");
    sc.export_csv = run.flag("export_csv", true);

    market.reject_unknown();
    grid.reject_unknown();
    info.reject_unknown();
    claim.reject_unknown();
    bsde.reject_unknown();
    run.reject_unknown();

    if (overrides.n_paths) sc.market.n_paths = *overrides.n_paths;
    if (overrides.n_steps) sc.grid = Grid::uniform(sc.grid.horizon, *overrides.n_steps);
    if (overrides.seed) sc.market.seed = *overrides.seed;

    sc.validate();
    return sc;
}

Scenario load_scenario_file(const std::string& path, const ScenarioOverrides& overrides) {
    std::ifstream in(path);
    if (!in) {
        throw std::invalid_argument("scenario: cannot open '" + path + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario_text(buf.str(), overrides);
}

}  // namespace qhedge
