#include "robmix/config.hpp"

#include "robmix/covariance.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace robmix {

namespace {

const std::map<std::string, std::set<std::string>> kSchema = {
    {"model", {"family", "m", "p", "q", "cov_structure"}},
    {"simulation",
     {"beta0", "sigma0_sq", "sigma_u_sq", "g_diag", "g_params", "n_grid", "replications", "seed",
      "replication"}},
    {"contamination", {"fraction", "shift", "target"}},
    {"estimators", {"specs"}},
    {"optimizer", {"gtol", "step_tol", "max_iter", "n_starts"}},
    {"quadrature", {"gh_order"}},
    {"experiment", {"epsilons"}},
    {"fit", {"estimator"}},
    {"diagnose", {"checks", "alpha", "n_probe", "mc_draws", "seed"}},
};

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

[[noreturn]] void fail(int line, const std::string& msg) {
    throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

double parse_double(const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        const double out = std::stod(v, &pos);
        if (pos != v.size()) fail(line, "trailing characters in number '" + v + "'");
        return out;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        fail(line, "expected a number, got '" + v + "'");
    }
}

long parse_long(const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        const long out = std::stol(v, &pos);
        if (pos != v.size()) fail(line, "trailing characters in integer '" + v + "'");
        return out;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        fail(line, "expected an integer, got '" + v + "'");
    }
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const std::string t = trim(item);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

std::vector<double> parse_double_list(const std::string& v, int line) {
    std::vector<double> out;
    for (const std::string& item : split_list(v)) {
        out.push_back(parse_double(item, line));
    }
    if (out.empty()) fail(line, "expected a non-empty list");
    return out;
}

struct Entry {
    std::string value;
    int line = 0;
};

using SectionMap = std::map<std::string, std::map<std::string, Entry>>;

SectionMap tokenize(const std::string& text) {
    SectionMap sections;
    std::istringstream is(text);
    std::string raw;
    std::string section;
    int line_no = 0;
    while (std::getline(is, raw)) {
        ++line_no;
        std::string line = raw;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail(line_no, "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            const auto schema_it = kSchema.find(section);
            if (schema_it == kSchema.end()) fail(line_no, "unknown section [" + section + "]");
            sections[section];  // section may legitimately be empty
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail(line_no, "expected 'key = value'");
        if (section.empty()) fail(line_no, "key outside any [section]");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto& allowed = kSchema.at(section);
        if (!allowed.count(key)) fail(line_no, "unknown key '" + key + "' in [" + section + "]");
        if (sections[section].count(key)) fail(line_no, "duplicate key '" + key + "'");
        if (value.empty()) fail(line_no, "empty value for '" + key + "'");
        sections[section][key] = Entry{value, line_no};
    }
    return sections;
}

const Entry* find(const SectionMap& sections, const std::string& section, const std::string& key) {
    const auto sit = sections.find(section);
    if (sit == sections.end()) return nullptr;
    const auto kit = sit->second.find(key);
    if (kit == sit->second.end()) return nullptr;
    return &kit->second;
}

const Entry& require(const SectionMap& sections, const std::string& section,
                     const std::string& key) {
    const Entry* e = find(sections, section, key);
    if (!e) {
        throw ConfigError("config: missing required key '" + key + "' in [" + section + "]");
    }
    return *e;
}

}  // namespace

EstimatorSpec parse_estimator_spec(const std::string& text) {
    if (text == "mle") {
        return EstimatorSpec::mle();
    }
    const std::string prefix = "mdpde:";
    if (text.rfind(prefix, 0) == 0) {
        const double alpha = std::stod(text.substr(prefix.size()));
        return EstimatorSpec::mdpde(alpha);
    }
    throw ConfigError("unknown estimator spec '" + text + "' (use mle or mdpde:<alpha>)");
}

RunConfig parse_config_text(const std::string& text) {
    const SectionMap sections = tokenize(text);
    RunConfig config;

    if (sections.count("model")) {
        config.has_model = true;
        const std::string family = require(sections, "model", "family").value;
        if (family == "gaussian") {
            config.model.family = Family::GaussianIdentity;
        } else if (family == "logistic") {
            config.model.family = Family::BernoulliLogit;
        } else {
            throw ConfigError("config: family must be gaussian or logistic, got '" + family + "'");
        }
        config.model.dims.m = static_cast<int>(
            parse_long(require(sections, "model", "m").value, require(sections, "model", "m").line));
        config.model.dims.p = static_cast<int>(
            parse_long(require(sections, "model", "p").value, require(sections, "model", "p").line));
        config.model.dims.q = static_cast<int>(
            parse_long(require(sections, "model", "q").value, require(sections, "model", "q").line));
        if (const Entry* e = find(sections, "model", "cov_structure")) {
            if (e->value == "diagonal") {
                config.model.cov_structure = CovStructure::DiagonalG;
            } else if (e->value == "full") {
                config.model.cov_structure = CovStructure::FullG;
            } else {
                fail(e->line, "cov_structure must be diagonal or full");
            }
        }
        if (config.model.dims.m < 1 || config.model.dims.p < 1 || config.model.dims.q < 0) {
            throw ConfigError("config: dimensions must satisfy m >= 1, p >= 1, q >= 0");
        }
    }

    if (sections.count("simulation")) {
        if (!config.has_model) {
            throw ConfigError("config: [simulation] requires a [model] section");
        }
        SimConfig sim;
        sim.model = config.model;
        {
            const Entry& e = require(sections, "simulation", "beta0");
            const std::vector<double> vals = parse_double_list(e.value, e.line);
            sim.beta0 = Eigen::Map<const VectorXd>(vals.data(), vals.size());
            if (sim.beta0.size() != config.model.dims.p) {
                fail(e.line, "beta0 length must equal p");
            }
        }
        if (config.model.family == Family::GaussianIdentity) {
            const Entry& e = require(sections, "simulation", "sigma0_sq");
            sim.sigma0_sq = parse_double(e.value, e.line);
        }
        const Entry* su = find(sections, "simulation", "sigma_u_sq");
        const Entry* gd = find(sections, "simulation", "g_diag");
        const Entry* gp = find(sections, "simulation", "g_params");
        if ((su != nullptr) + (gd != nullptr) + (gp != nullptr) != 1) {
            throw ConfigError(
                "config: [simulation] needs exactly one of sigma_u_sq, g_diag, g_params");
        }
        const int q = config.model.dims.q;
        if (su) {
            if (config.model.cov_structure != CovStructure::DiagonalG) {
                fail(su->line, "sigma_u_sq requires the diagonal covariance structure");
            }
            sim.g_params0 = VectorXd::Constant(q, parse_double(su->value, su->line));
        } else {
            const Entry* e = gd ? gd : gp;
            const std::vector<double> vals = parse_double_list(e->value, e->line);
            sim.g_params0 = Eigen::Map<const VectorXd>(vals.data(), vals.size());
            const int expected = gd ? q : g_param_dim(config.model.cov_structure, q);
            if (static_cast<int>(vals.size()) != expected) {
                fail(e->line, "covariance parameter list has the wrong length");
            }
        }
        {
            const Entry& e = require(sections, "simulation", "n_grid");
            for (double v : parse_double_list(e.value, e.line)) {
                sim.n_grid.push_back(static_cast<int>(v));
            }
        }
        {
            const Entry& e = require(sections, "simulation", "replications");
            sim.replications = static_cast<int>(parse_long(e.value, e.line));
        }
        {
            const Entry& e = require(sections, "simulation", "seed");
            sim.seed = static_cast<std::uint64_t>(parse_long(e.value, e.line));
        }
        if (const Entry* e = find(sections, "simulation", "replication")) {
            config.replication = static_cast<int>(parse_long(e->value, e->line));
        }
        if (sections.count("contamination")) {
            Contamination contamination;
            {
                const Entry& e = require(sections, "contamination", "fraction");
                contamination.fraction = parse_double(e.value, e.line);
            }
            {
                const Entry& e = require(sections, "contamination", "shift");
                contamination.shift = parse_double(e.value, e.line);
            }
            {
                const Entry& e = require(sections, "contamination", "target");
                if (e.value == "response") {
                    contamination.target = ContaminationTarget::Response;
                } else if (e.value == "leverage") {
                    contamination.target = ContaminationTarget::Leverage;
                } else {
                    fail(e.line, "target must be response or leverage");
                }
            }
            sim.contamination = contamination;
        }
        sim.validate();
        config.sim = std::move(sim);
    } else if (sections.count("contamination")) {
        throw ConfigError("config: [contamination] requires a [simulation] section");
    }

    if (sections.count("estimators")) {
        const Entry& e = require(sections, "estimators", "specs");
        for (const std::string& item : split_list(e.value)) {
            config.estimators.push_back(parse_estimator_spec(item));
        }
        if (config.estimators.empty()) fail(e.line, "no estimators given");
    }
    if (sections.count("fit")) {
        const Entry& e = require(sections, "fit", "estimator");
        config.fit_estimator = parse_estimator_spec(e.value);
    }

    if (sections.count("optimizer")) {
        if (const Entry* e = find(sections, "optimizer", "gtol")) {
            config.minimize.gtol = parse_double(e->value, e->line);
        }
        if (const Entry* e = find(sections, "optimizer", "step_tol")) {
            config.minimize.step_tol = parse_double(e->value, e->line);
        }
        if (const Entry* e = find(sections, "optimizer", "max_iter")) {
            config.minimize.max_iter = static_cast<int>(parse_long(e->value, e->line));
        }
        if (const Entry* e = find(sections, "optimizer", "n_starts")) {
            config.n_starts = static_cast<int>(parse_long(e->value, e->line));
            if (config.n_starts != 1 && config.n_starts != 3) {
                fail(e->line, "n_starts must be 1 or 3");
            }
        }
    }

    if (sections.count("quadrature")) {
        const Entry& e = require(sections, "quadrature", "gh_order");
        config.gh_order = static_cast<int>(parse_long(e.value, e.line));
    }

    if (sections.count("experiment")) {
        if (const Entry* e = find(sections, "experiment", "epsilons")) {
            config.epsilons = parse_double_list(e->value, e->line);
        }
    }

    if (sections.count("diagnose")) {
        if (const Entry* e = find(sections, "diagnose", "checks")) {
            config.checks = split_list(e->value);
            for (const std::string& c : config.checks) {
                if (c != "B1" && c != "B3" && c != "B4" && c != "B5") {
                    fail(e->line, "unknown check '" + c + "' (use B1, B3, B4, B5)");
                }
            }
        }
        if (const Entry* e = find(sections, "diagnose", "alpha")) {
            config.diag_alpha = parse_double(e->value, e->line);
        }
        if (const Entry* e = find(sections, "diagnose", "n_probe")) {
            config.n_probe = static_cast<int>(parse_long(e->value, e->line));
        }
        if (const Entry* e = find(sections, "diagnose", "mc_draws")) {
            config.mc_draws = static_cast<int>(parse_long(e->value, e->line));
        }
        if (const Entry* e = find(sections, "diagnose", "seed")) {
            config.diag_seed = static_cast<std::uint64_t>(parse_long(e->value, e->line));
        }
    }

    return config;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw ConfigError("cannot open config file: " + path);
    }
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str());
}

}  // namespace robmix
