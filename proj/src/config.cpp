#include "mckv/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mckv/errors.hpp"

namespace mckv {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t at = s.find(sep, start);
    if (at == std::string::npos) {
      parts.push_back(trim(s.substr(start)));
      return parts;
    }
    parts.push_back(trim(s.substr(start, at - start)));
    start = at + 1;
  }
}

// Raw parse product: per-section key/value text, keys erased as consumed.
using Section = std::map<std::string, std::string>;

struct RawConfig {
  std::map<std::string, Section> sections;  // "" = top level
  std::vector<std::string> errors;
};

RawConfig scan(const std::string& text, const std::string& origin) {
  RawConfig raw;
  raw.sections[""];
  std::string current;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        raw.errors.push_back(where + ": malformed section header '" + line + "'");
        continue;
      }
      current = trim(line.substr(1, line.size() - 2));
      if (raw.sections.count(current)) {
        raw.errors.push_back(where + ": duplicate section [" + current + "]");
      }
      raw.sections[current];
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      raw.errors.push_back(where + ": expected 'key = value', got '" + line + "'");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      raw.errors.push_back(where + ": empty key");
      continue;
    }
    auto& section = raw.sections[current];
    if (section.count(key)) {
      raw.errors.push_back(where + ": duplicate key '" + key + "'");
      continue;
    }
    section[key] = value;
  }
  return raw;
}

// Pulls typed values out of one section, erasing consumed keys and
// collecting conversion errors.
class Fields {
 public:
  Fields(RawConfig& raw, const std::string& section)
      : section_(section), errors_(raw.errors) {
    const auto it = raw.sections.find(section);
    kv_ = it == raw.sections.end() ? nullptr : &it->second;
  }

  bool present(const std::string& key) const { return kv_ && kv_->count(key); }

  bool take(const std::string& key, std::string& out) {
    if (!kv_) return false;
    const auto it = kv_->find(key);
    if (it == kv_->end()) return false;
    out = it->second;
    kv_->erase(it);
    return true;
  }

  void str(const std::string& key, std::string& out) { take(key, out); }

  void f64(const std::string& key, double& out) {
    std::string text;
    if (!take(key, text)) return;
    try {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument("trailing");
      out = v;
    } catch (const std::exception&) {
      bad(key, text);
    }
  }

  void u64(const std::string& key, std::uint64_t& out) {
    std::string text;
    if (!take(key, text)) return;
    try {
      std::size_t used = 0;
      if (!text.empty() && text[0] == '-') throw std::invalid_argument("negative");
      const unsigned long long v = std::stoull(text, &used);
      if (used != text.size()) throw std::invalid_argument("trailing");
      out = v;
    } catch (const std::exception&) {
      bad(key, text);
    }
  }

  void count(const std::string& key, std::size_t& out) {
    std::uint64_t v = out;
    u64(key, v);
    out = static_cast<std::size_t>(v);
  }

  void i32(const std::string& key, int& out) {
    std::string text;
    if (!take(key, text)) return;
    try {
      std::size_t used = 0;
      const long v = std::stol(text, &used);
      if (used != text.size()) throw std::invalid_argument("trailing");
      out = static_cast<int>(v);
    } catch (const std::exception&) {
      bad(key, text);
    }
  }

  void boolean(const std::string& key, bool& out) {
    std::string text;
    if (!take(key, text)) return;
    if (text == "true") out = true;
    else if (text == "false") out = false;
    else bad(key, text);
  }

  void count_list(const std::string& key, std::vector<std::size_t>& out) {
    std::string text;
    if (!take(key, text)) return;
    std::vector<std::size_t> values;
    for (const auto& part : split(text, ',')) {
      try {
        std::size_t used = 0;
        if (part.empty() || part[0] == '-') throw std::invalid_argument("negative");
        values.push_back(std::stoull(part, &used));
        if (used != part.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        bad(key, text);
        return;
      }
    }
    out = std::move(values);
  }

  void f64_list(const std::string& key, std::vector<double>& out) {
    std::string text;
    if (!take(key, text)) return;
    std::vector<double> values;
    for (const auto& part : split(text, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(part, &used));
        if (used != part.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        bad(key, text);
        return;
      }
    }
    out = std::move(values);
  }

  // size:rate pairs, one-dimensional jump atoms
  void atom_list(const std::string& key, std::vector<CompoundPoissonAtom>& out) {
    std::string text;
    if (!take(key, text)) return;
    std::vector<CompoundPoissonAtom> atoms;
    for (const auto& part : split(text, ',')) {
      const std::size_t colon = part.find(':');
      if (colon == std::string::npos) {
        bad(key, text);
        return;
      }
      try {
        std::size_t used = 0;
        const std::string zs = trim(part.substr(0, colon));
        const std::string rs = trim(part.substr(colon + 1));
        const double z = std::stod(zs, &used);
        if (used != zs.size()) throw std::invalid_argument("trailing");
        const double rate = std::stod(rs, &used);
        if (used != rs.size()) throw std::invalid_argument("trailing");
        atoms.push_back({{z}, rate});
      } catch (const std::exception&) {
        bad(key, text);
        return;
      }
    }
    out = std::move(atoms);
  }

 private:
  void bad(const std::string& key, const std::string& text) {
    const std::string where = section_.empty() ? key : section_ + "." + key;
    errors_.push_back("bad value for " + where + ": '" + text + "'");
  }

  std::string section_;
  Section* kv_;
  std::vector<std::string>& errors_;
};

const std::set<std::string>& sections_for(RunKind kind) {
  static const std::set<std::string> poc{"", "model", "coefficients", "initial", "grid",
                                         "plan"};
  static const std::set<std::string> trunc{"",     "model", "coefficients", "initial",
                                           "grid", "plan",  "truncation"};
  static const std::set<std::string> picard{"",        "model", "coefficients",
                                            "initial", "grid",  "picard"};
  static const std::set<std::string> nonuni{"", "nonuniqueness"};
  static const std::set<std::string> validate{"", "model", "noise_validate"};
  switch (kind) {
    case RunKind::Poc: return poc;
    case RunKind::Truncation: return trunc;
    case RunKind::Picard: return picard;
    case RunKind::NonUniqueness: return nonuni;
    default: return validate;
  }
}

const char* kind_name(RunKind kind) {
  switch (kind) {
    case RunKind::Poc: return "poc";
    case RunKind::Truncation: return "truncation";
    case RunKind::Picard: return "picard";
    case RunKind::NonUniqueness: return "nonuniqueness";
    default: return "noise-validate";
  }
}

void validate_model(const RunConfig& config, bool needed, std::vector<std::string>& errors) {
  if (!needed) return;
  if (config.model_type == "stable") {
    if (!(config.alpha > 0.0) || !(config.alpha < 2.0)) {
      errors.push_back("alpha out of (0,2)");
    }
    if (!config.atoms.empty()) {
      errors.push_back("model.atoms only applies to compound_poisson");
    }
  } else if (config.model_type == "compound_poisson") {
    if (config.atoms.empty()) {
      errors.push_back("missing key: model.atoms");
    }
    for (const auto& atom : config.atoms) {
      if (!(atom.rate > 0.0)) errors.push_back("model.atoms rates must be positive");
      if (atom.z[0] == 0.0) errors.push_back("model.atoms sizes must be nonzero");
    }
    if (config.dim != 1) {
      errors.push_back("compound_poisson atoms are one-dimensional");
    }
  } else if (config.model_type.empty()) {
    errors.push_back("missing key: model.type");
  } else {
    errors.push_back("unknown model.type '" + config.model_type + "'");
  }
  if (config.dim < 1) errors.push_back("model.dim must be >= 1");
  if (config.declared_beta != 0.0 &&
      (!(config.declared_beta > 0.0) || config.declared_beta > 2.0)) {
    errors.push_back("model.beta out of (0,2]");
  }
}

void validate_common(const RunConfig& config, RunKind kind,
                     std::vector<std::string>& errors) {
  const bool model_needed = kind != RunKind::NonUniqueness;
  const bool dynamics_needed =
      kind == RunKind::Poc || kind == RunKind::Truncation || kind == RunKind::Picard;

  validate_model(config, model_needed, errors);

  if (dynamics_needed) {
    static const std::set<std::string> coeff_types{"stable_ou", "sin_mean", "moment_drift"};
    if (config.coeff_type.empty()) {
      errors.push_back("missing key: coefficients.type");
    } else if (!coeff_types.count(config.coeff_type)) {
      errors.push_back("unknown coefficients.type '" + config.coeff_type + "'");
    }
    static const std::set<std::string> initial_types{"point", "gaussian", "pareto"};
    if (!initial_types.count(config.initial_type)) {
      errors.push_back("unknown initial.type '" + config.initial_type + "'");
    }
    if (config.initial_type == "gaussian" && config.initial_sd < 0.0) {
      errors.push_back("initial.sd must be >= 0");
    }
    if (config.initial_type == "pareto" &&
        (!(config.pareto_exponent > 0.0) || !(config.pareto_scale > 0.0))) {
      errors.push_back("initial.exponent and initial.scale must be positive");
    }
    if (!(config.horizon > 0.0)) errors.push_back("grid.horizon must be positive");
    if (config.steps < 1) errors.push_back("grid.steps must be >= 1");
  }

  if (kind == RunKind::Poc || kind == RunKind::Truncation) {
    if (config.n_grid.empty()) {
      errors.push_back("missing key: plan.n_grid");
    } else {
      for (std::size_t i = 1; i < config.n_grid.size(); ++i) {
        if (config.n_grid[i] <= config.n_grid[i - 1]) {
          errors.push_back("plan.n_grid must be strictly increasing");
          break;
        }
      }
    }
    if (config.replications < 50) errors.push_back("plan.replications must be >= 50");
    if (config.law != "thm2" && config.law != "thm3") {
      errors.push_back("plan.law must be thm2 or thm3");
    }
    if (config.scheme != "exact_total" && config.scheme != "inner_cutoff") {
      errors.push_back("plan.scheme must be exact_total or inner_cutoff");
    }
    if (config.slope_tolerance < 0.0) {
      errors.push_back("plan.slope_tolerance must be >= 0");
    }
  }
  if (kind == RunKind::Truncation) {
    if (config.truncation_levels.empty()) {
      errors.push_back("missing key: truncation.levels");
    }
    for (double level : config.truncation_levels) {
      if (!(level > 1.0)) {
        errors.push_back("truncation.levels must exceed 1");
        break;
      }
    }
  }
  if (kind == RunKind::Picard) {
    if (config.picard_particles < 2) errors.push_back("picard.particles must be >= 2");
    if (!(config.picard_tol > 0.0)) errors.push_back("picard.tol must be positive");
    if (config.picard_min_iters > config.picard_max_iters) {
      errors.push_back("picard.min_iters must not exceed picard.max_iters");
    }
    if (!(config.metric_beta > 0.0) || config.metric_beta > 2.0) {
      errors.push_back("picard.metric_beta out of (0,2]");
    }
  }
  if (kind == RunKind::NonUniqueness) {
    if (!(config.nu_beta > 0.0) || !(config.nu_beta < 1.0)) {
      errors.push_back("nonuniqueness.beta out of (0,1)");
    }
    if (!(config.nu_horizon > 0.0)) errors.push_back("nonuniqueness.horizon must be positive");
    if (config.nu_steps < 8) errors.push_back("nonuniqueness.steps must be >= 8");
  }
  if (kind == RunKind::NoiseValidate) {
    if (config.validate_paths < 100) errors.push_back("noise_validate.paths must be >= 100");
    if (!(config.significance > 0.0) || !(config.significance < 1.0)) {
      errors.push_back("noise_validate.significance out of (0,1)");
    }
    if (!(config.validate_horizon > 0.0)) {
      errors.push_back("noise_validate.horizon must be positive");
    }
  }
  if (config.threads < 1) errors.push_back("threads must be >= 1");
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RawConfig raw = scan(text, origin);
  RunConfig config;

  Fields top(raw, "");
  std::string kind_text;
  bool kind_ok = top.take("kind", kind_text);
  if (!kind_ok) {
    raw.errors.push_back("missing key: kind");
  } else if (kind_text == "poc") {
    config.kind = RunKind::Poc;
  } else if (kind_text == "truncation") {
    config.kind = RunKind::Truncation;
  } else if (kind_text == "picard") {
    config.kind = RunKind::Picard;
  } else if (kind_text == "nonuniqueness") {
    config.kind = RunKind::NonUniqueness;
  } else if (kind_text == "noise-validate") {
    config.kind = RunKind::NoiseValidate;
  } else {
    raw.errors.push_back("unknown kind '" + kind_text + "'");
    kind_ok = false;
  }

  top.str("name", config.name);
  if (top.present("seed")) {
    top.u64("seed", config.seed);
  } else {
    raw.errors.push_back("missing key: seed");
  }
  top.i32("threads", config.threads);
  top.str("out_dir", config.out_dir);

  Fields model(raw, "model");
  model.str("type", config.model_type);
  model.f64("alpha", config.alpha);
  model.i32("dim", config.dim);
  model.f64("beta", config.declared_beta);
  model.atom_list("atoms", config.atoms);

  Fields coeffs(raw, "coefficients");
  coeffs.str("type", config.coeff_type);
  coeffs.f64("a", config.coeff_a);
  coeffs.f64("a_prime", config.coeff_a_prime);
  coeffs.f64("b", config.coeff_b);
  coeffs.f64("c", config.coeff_c);
  coeffs.f64("s", config.coeff_s);
  coeffs.f64("beta", config.coeff_beta);

  Fields initial(raw, "initial");
  initial.str("type", config.initial_type);
  initial.f64("value", config.initial_value);
  initial.f64("sd", config.initial_sd);
  initial.f64("exponent", config.pareto_exponent);
  initial.f64("scale", config.pareto_scale);

  Fields grid(raw, "grid");
  grid.f64("horizon", config.horizon);
  grid.count("steps", config.steps);

  Fields plan(raw, "plan");
  plan.count_list("n_grid", config.n_grid);
  plan.count("replications", config.replications);
  plan.str("law", config.law);
  plan.f64("rate_param", config.rate_param);
  plan.str("scheme", config.scheme);
  plan.count("ref_cloud_size", config.ref_cloud_size);
  plan.f64("slope_tolerance", config.slope_tolerance);

  Fields trunc(raw, "truncation");
  trunc.f64_list("levels", config.truncation_levels);
  trunc.count_list("moment_grid", config.moment_grid);
  trunc.count("moment_paths", config.moment_paths);

  Fields picard(raw, "picard");
  picard.count("particles", config.picard_particles);
  picard.count("max_iters", config.picard_max_iters);
  picard.count("min_iters", config.picard_min_iters);
  picard.f64("tol", config.picard_tol);
  picard.f64("metric_beta", config.metric_beta);
  picard.boolean("common_noise", config.common_noise);

  Fields nonuni(raw, "nonuniqueness");
  nonuni.f64("beta", config.nu_beta);
  nonuni.f64("horizon", config.nu_horizon);
  nonuni.count("steps", config.nu_steps);

  Fields validate(raw, "noise_validate");
  validate.count("paths", config.validate_paths);
  validate.f64("significance", config.significance);
  validate.f64("horizon", config.validate_horizon);

  // whatever is left in any section was not consumed: unknown keys; whole
  // sections the kind does not read are unknown sections
  const auto& allowed = sections_for(config.kind);
  for (const auto& [section, kv] : raw.sections) {
    if (kind_ok && !allowed.count(section)) {
      raw.errors.push_back(std::string("section [") + section + "] does not apply to kind " +
                           kind_name(config.kind));
      continue;
    }
    for (const auto& [key, value] : kv) {
      const std::string where = section.empty() ? key : section + "." + key;
      raw.errors.push_back("unknown key: " + where);
    }
  }

  if (kind_ok) validate_common(config, config.kind, raw.errors);

  // defaults that depend on other fields
  if (config.declared_beta == 0.0) {
    config.declared_beta =
        config.model_type == "stable" ? std::min(1.0, config.alpha / 2.0 + 0.45) : 2.0;
  }
  if (config.rate_param == 0.0) {
    config.rate_param = config.law == "thm3" ? config.alpha : config.declared_beta;
  }

  if (!raw.errors.empty()) {
    std::string what = origin + ": " + std::to_string(raw.errors.size()) + " problem(s)";
    for (const auto& e : raw.errors) what += "\n  - " + e;
    throw ConfigError(std::move(raw.errors), what);
  }
  return config;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) {
    throw ConfigError({"cannot open " + path}, "cannot open " + path);
  }
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_config_text(text, path);
}

void apply_preset(RunConfig& config, const std::string& preset) {
  if (preset == "quick") return;
  if (preset != "full") throw ParameterError("unknown preset '" + preset + "'");
  config.replications *= 4;
  config.picard_particles *= 4;
  config.moment_paths *= 4;
  config.validate_paths *= 4;
}

std::string RunConfig::to_json() const {
  nlohmann::json atoms_json = nlohmann::json::array();
  for (const auto& atom : atoms) {
    atoms_json.push_back({{"z", atom.z[0]}, {"rate", atom.rate}});
  }
  const nlohmann::json doc{
      {"kind", kind_name(kind)},
      {"name", name},
      {"seed", seed},
      {"threads", threads},
      {"out_dir", out_dir},
      {"model",
       {{"type", model_type},
        {"alpha", alpha},
        {"dim", dim},
        {"beta", declared_beta},
        {"atoms", std::move(atoms_json)}}},
      {"coefficients",
       {{"type", coeff_type},
        {"a", coeff_a},
        {"a_prime", coeff_a_prime},
        {"b", coeff_b},
        {"c", coeff_c},
        {"s", coeff_s},
        {"beta", coeff_beta}}},
      {"initial",
       {{"type", initial_type},
        {"value", initial_value},
        {"sd", initial_sd},
        {"exponent", pareto_exponent},
        {"scale", pareto_scale}}},
      {"grid", {{"horizon", horizon}, {"steps", steps}}},
      {"plan",
       {{"n_grid", n_grid},
        {"replications", replications},
        {"law", law},
        {"rate_param", rate_param},
        {"scheme", scheme},
        {"ref_cloud_size", ref_cloud_size},
        {"slope_tolerance", slope_tolerance}}},
      {"truncation",
       {{"levels", truncation_levels},
        {"moment_grid", moment_grid},
        {"moment_paths", moment_paths}}},
      {"picard",
       {{"particles", picard_particles},
        {"max_iters", picard_max_iters},
        {"min_iters", picard_min_iters},
        {"tol", picard_tol},
        {"metric_beta", metric_beta},
        {"common_noise", common_noise}}},
      {"nonuniqueness",
       {{"beta", nu_beta}, {"horizon", nu_horizon}, {"steps", nu_steps}}},
      {"noise_validate",
       {{"paths", validate_paths},
        {"significance", significance},
        {"horizon", validate_horizon}}},
  };
  return doc.dump(2);
}

}  // namespace mckv
