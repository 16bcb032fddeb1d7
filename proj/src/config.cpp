#include "lnf/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace lnf {

namespace {

std::string locate(const std::string& msg, int line, int column, const std::string& source) {
  std::ostringstream os;
  if (!source.empty()) os << source << ':';
  if (line > 0) os << line << ':' << column << ':';
  if (!source.empty() || line > 0) os << ' ';
  os << msg;
  return os.str();
}

}  // namespace

ConfigError::ConfigError(const std::string& msg, int line, int column, const std::string& source)
    : std::runtime_error(locate(msg, line, column, source)), line(line), column(column) {}

namespace {

class Reader {
 public:
  Reader(std::string source, std::set<std::string> overridden)
      : source_(std::move(source)), overridden_(std::move(overridden)) {}

  void enter(const std::string& section) { section_ = section; }

  // Errors on overridden values name the override instead of a file position.
  [[noreturn]] void fail_key(const YAML::Node& map, const char* key, const std::string& msg) const {
    const std::string path = (section_.empty() ? "top" : section_) + "." + key;
    if (overridden_.count(path)) throw ConfigError(msg, 0, 0, "--set " + path);
    const YAML::Node n = map[key];
    if (n) fail(n, msg);
    throw ConfigError(msg, 0, 0, source_);
  }

  [[noreturn]] void fail(const YAML::Node& n, const std::string& msg) const {
    const auto m = n.Mark();
    if (m.is_null()) throw ConfigError(msg, 0, 0, source_);
    throw ConfigError(msg, m.line + 1, m.column + 1, source_);
  }

  void require_map(const YAML::Node& n, const std::string& what) const {
    if (!n.IsMap()) fail(n, what + " must be a mapping");
  }

  void check_keys(const YAML::Node& map, const std::set<std::string>& allowed,
                  const std::string& section) const {
    for (const auto& kv : map) {
      const auto key = kv.first.as<std::string>();
      if (!allowed.count(key)) {
        const std::string path = (section.empty() ? "top" : section) + "." + key;
        if (overridden_.count(path)) throw ConfigError("unknown key '" + key + "'", 0, 0, "--set " + path);
        for (const auto& o : overridden_) {
          if (section.empty() && o.rfind(key + ".", 0) == 0) {
            throw ConfigError("unknown section '" + key + "'", 0, 0, "--set " + o);
          }
        }
        fail(kv.first, "unknown key '" + key + "'" + (section.empty() ? "" : " in section '" + section + "'"));
      }
    }
  }

  template <class T>
  void get(const YAML::Node& map, const char* key, T& out, const char* type) const {
    const YAML::Node n = map[key];
    if (!n) return;
    if (!n.IsScalar()) fail_key(map, key, std::string("expected ") + type + " for '" + key + "'");
    try {
      out = n.as<T>();
    } catch (const YAML::BadConversion&) {
      fail_key(map, key, std::string("expected ") + type + " for '" + key + "'");
    }
  }

  void get_vector(const YAML::Node& map, const char* key, std::vector<double>& out,
                  bool allow_scalar = false) const {
    const YAML::Node n = map[key];
    if (!n) return;
    try {
      if (n.IsSequence()) {
        out.clear();
        for (const auto& x : n) out.push_back(x.as<double>());
        return;
      }
      if (allow_scalar && n.IsScalar()) {
        out = {n.as<double>()};
        return;
      }
    } catch (const YAML::BadConversion&) {
      fail_key(map, key, std::string("expected a list of numbers for '") + key + "'");
    }
    fail_key(map, key, std::string("expected a list of numbers for '") + key + "'");
  }

  void check(bool ok, const YAML::Node& map, const char* key, const std::string& msg) const {
    if (!ok) fail_key(map, key, msg);
  }

 private:
  std::string source_;
  std::set<std::string> overridden_;
  std::string section_;
};

// Returns the overridden path "section.key".
std::string apply_override(YAML::Node& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq || dot == 0 || dot + 1 == eq) {
    throw ConfigError("override '" + assignment + "' is not of the form section.key=value", 0, 0, "--set");
  }
  const std::string section = assignment.substr(0, dot);
  const std::string key = assignment.substr(dot + 1, eq - dot - 1);
  YAML::Node value;
  try {
    value = YAML::Load(assignment.substr(eq + 1));
  } catch (const YAML::Exception& e) {
    throw ConfigError("override '" + assignment + "': " + e.msg, 0, 0, "--set");
  }
  if (section == "top") {
    root[key] = value;
    return section + "." + key;
  }
  YAML::Node sec = root[section];
  if (sec && !sec.IsMap()) throw ConfigError("override '" + assignment + "': section is not a mapping", 0, 0, "--set");
  root[section][key] = value;
  return section + "." + key;
}

void parse_root(const YAML::Node& root, ExperimentConfig& c, Reader& rd) {
  if (!root || root.IsNull()) return;
  rd.require_map(root, "configuration");
  rd.check_keys(root, {"schema_version", "seed", "lattice", "model", "clusters", "resonance",
                       "normalform", "simulate", "output"},
                "");
  rd.get(root, "schema_version", c.schema_version, "an integer");
  rd.check(c.schema_version == 1, root, "schema_version", "unsupported schema_version (expected 1)");
  rd.get(root, "seed", c.seed, "a nonnegative integer");

  if (const YAML::Node n = root["lattice"]) {
    rd.enter("lattice");
    rd.require_map(n, "section 'lattice'");
    rd.check_keys(n, {"dim", "kappa", "gram", "k_enum"}, "lattice");
    auto& s = c.lattice;
    rd.get(n, "dim", s.dim, "an integer");
    rd.check(s.dim >= 1 && s.dim <= 3, n, "dim", "dim must be 1, 2 or 3");
    rd.get_vector(n, "kappa", s.kappa);
    rd.check(s.kappa.empty() || static_cast<int>(s.kappa.size()) == s.dim, n, "kappa",
             "kappa must have dim entries");
    for (double k : s.kappa) rd.check(k >= 0.0 && k < 1.0, n, "kappa", "kappa entries must lie in [0, 1)");
    rd.get_vector(n, "gram", s.gram);
    rd.check(s.gram.empty() || static_cast<int>(s.gram.size()) == s.dim * s.dim, n, "gram",
             "gram must have dim*dim entries");
    rd.get(n, "k_enum", s.k_enum, "a number");
    rd.check(s.k_enum > 0.0, n, "k_enum", "k_enum must be positive");
  }

  if (const YAML::Node n = root["model"]) {
    rd.enter("model");
    rd.require_map(n, "section 'model'");
    rd.check_keys(n, {"kind", "multiplier_decay", "multiplier_seed", "fold_zero_mode", "p0", "f_p0",
                      "mass", "nonlinearity", "coeffs"},
                  "model");
    auto& s = c.model;
    rd.get(n, "kind", s.kind, "a string");
    rd.check(s.kind == "torus" || s.kind == "multiplier" || s.kind == "ground_state" || s.kind == "beam",
             n, "kind", "kind must be torus, multiplier, ground_state or beam");
    rd.get(n, "multiplier_decay", s.multiplier_decay, "a number");
    if (const YAML::Node m = n["multiplier_seed"]; m && !m.IsNull()) {
      std::uint64_t v = 0;
      rd.get(n, "multiplier_seed", v, "a nonnegative integer");
      s.multiplier_seed = v;
    }
    rd.get(n, "fold_zero_mode", s.fold_zero_mode, "a boolean");
    rd.get(n, "p0", s.p0, "a number");
    rd.get(n, "f_p0", s.f_p0, "a number");
    rd.get(n, "mass", s.mass, "a number");
    rd.check(s.kind != "beam" || s.mass > 0.0, n, "mass", "beam mass must be positive");
    rd.get(n, "nonlinearity", s.nonlinearity, "a string");
    rd.check(s.nonlinearity == "nls" || s.nonlinearity == "beam" || s.nonlinearity == "none", n,
             "nonlinearity", "nonlinearity must be nls, beam or none");
    rd.check((s.kind == "beam") == (s.nonlinearity == "beam") || s.nonlinearity == "none", n,
             "nonlinearity", "beam nonlinearity requires the beam model and vice versa");
    rd.get_vector(n, "coeffs", s.coeffs);
  }

  if (const YAML::Node n = root["clusters"]) {
    rd.enter("clusters");
    rd.require_map(n, "section 'clusters'");
    rd.check_keys(n, {"delta", "c_delta", "c_max"}, "clusters");
    auto& s = c.clusters;
    rd.get(n, "delta", s.delta, "a number");
    rd.check(s.delta > 0.0 && s.delta < 1.0, n, "delta", "delta must lie in (0, 1)");
    rd.get(n, "c_delta", s.c_delta, "a number");
    rd.check(s.c_delta > 0.0, n, "c_delta", "c_delta must be positive");
    rd.get(n, "c_max", s.c_max, "a number");
  }

  if (const YAML::Node n = root["resonance"]) {
    rd.enter("resonance");
    rd.require_map(n, "section 'resonance'");
    rd.check_keys(n, {"r", "gamma", "gamma_factor", "tau", "sampling", "samples", "budget",
                      "measure_vectors", "measure_gammas", "measure_samples", "measure_max_mode"},
                  "resonance");
    auto& s = c.resonance;
    rd.get(n, "r", s.r, "an integer");
    rd.check(s.r >= 1 && s.r <= kMaxDegree, n, "r", "r must lie in [1, 16]");
    rd.get(n, "gamma", s.gamma, "a number");
    rd.check(s.gamma >= 0.0, n, "gamma", "gamma must be nonnegative");
    rd.get(n, "gamma_factor", s.gamma_factor, "a number");
    rd.check(s.gamma_factor > 0.0 && s.gamma_factor <= 1.0, n, "gamma_factor", "gamma_factor must lie in (0, 1]");
    rd.get(n, "tau", s.tau, "a number");
    rd.get(n, "sampling", s.sampling, "a boolean");
    rd.get(n, "samples", s.samples, "a nonnegative integer");
    rd.get(n, "budget", s.budget, "a number");
    rd.get(n, "measure_vectors", s.measure_vectors, "an integer");
    rd.get_vector(n, "measure_gammas", s.measure_gammas);
    rd.get(n, "measure_samples", s.measure_samples, "a nonnegative integer");
    rd.get(n, "measure_max_mode", s.measure_max_mode, "an integer");
  }

  if (const YAML::Node n = root["normalform"]) {
    rd.enter("normalform");
    rd.require_map(n, "section 'normalform'");
    rd.check_keys(n, {"r", "r_bar", "radius", "k", "nu", "n_loc", "mu_max"}, "normalform");
    auto& s = c.normalform;
    rd.get(n, "r", s.r, "an integer");
    rd.get(n, "r_bar", s.r_bar, "an integer");
    rd.check(s.r_bar >= 1 && s.r_bar + 2 <= kMaxDegree, n, "r_bar", "r_bar must lie in [1, 14]");
    rd.get(n, "radius", s.radius, "a number");
    rd.check(s.radius > 0.0 && s.radius < 1.0, n, "radius", "radius must lie in (0, 1)");
    rd.get(n, "k", s.k, "a number");
    rd.get(n, "nu", s.nu, "a number");
    rd.get(n, "n_loc", s.n_loc, "a number");
    rd.get(n, "mu_max", s.mu_max, "a number");
  }

  if (const YAML::Node n = root["simulate"]) {
    rd.enter("simulate");
    rd.require_map(n, "section 'simulate'");
    rd.check_keys(n, {"eps", "s", "dt", "t_end", "integrator", "stride", "max_omega_dt", "block_cutoff",
                      "decay", "normal_form_coords"},
                  "simulate");
    auto& s = c.simulate;
    rd.get_vector(n, "eps", s.eps, true);
    rd.check(!s.eps.empty(), n, "eps", "eps must not be empty");
    for (double e : s.eps) rd.check(e > 0.0 && e < 1.0, n, "eps", "eps values must lie in (0, 1)");
    rd.get(n, "s", s.s, "a number");
    rd.get(n, "dt", s.dt, "a number");
    rd.check(s.dt >= 0.0, n, "dt", "dt must be nonnegative");
    rd.get(n, "t_end", s.t_end, "a number");
    rd.check(s.t_end >= 0.0, n, "t_end", "t_end must be nonnegative");
    rd.get(n, "integrator", s.integrator, "a string");
    rd.check(s.integrator == "strang" || s.integrator == "rk4", n, "integrator", "integrator must be strang or rk4");
    rd.get(n, "stride", s.stride, "an integer");
    rd.check(s.stride >= 1, n, "stride", "stride must be >= 1");
    rd.get(n, "max_omega_dt", s.max_omega_dt, "a number");
    rd.check(s.max_omega_dt > 0.0, n, "max_omega_dt", "max_omega_dt must be positive");
    rd.get(n, "block_cutoff", s.block_cutoff, "a number");
    rd.get(n, "decay", s.decay, "a number");
    rd.get(n, "normal_form_coords", s.normal_form_coords, "a boolean");
  }

  if (const YAML::Node n = root["output"]) {
    rd.enter("output");
    rd.require_map(n, "section 'output'");
    rd.check_keys(n, {"dir"}, "output");
    rd.get(n, "dir", c.output.dir, "a string");
  }
}

std::pair<int, int> line_column(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& source, bool json,
                              const std::vector<std::string>& overrides) {
  if (json) {
    try {
      const auto checked = nlohmann::json::parse(text);
      (void)checked;
    } catch (const nlohmann::json::parse_error& e) {
      const auto [line, col] = line_column(text, e.byte > 0 ? e.byte - 1 : 0);
      throw ConfigError("invalid JSON", line, col, source);
    }
  }
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(e.msg, e.mark.line + 1, e.mark.column + 1, source);
  }
  std::set<std::string> overridden;
  if (!overrides.empty()) {
    if (!root || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
    if (!root.IsMap()) throw ConfigError("configuration must be a mapping", 1, 1, source);
    for (const auto& o : overrides) overridden.insert(apply_override(root, o));
  }
  ExperimentConfig c;
  Reader rd(source, std::move(overridden));
  parse_root(root, c, rd);
  return c;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration file", 0, 0, path);
  std::stringstream ss;
  ss << in.rdbuf();
  const bool json = path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
  return parse_config(ss.str(), path, json, overrides);
}

std::string config_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["schema_version"] = c.schema_version;
  j["seed"] = c.seed;
  j["lattice"] = {{"dim", c.lattice.dim},
                  {"kappa", c.lattice.kappa},
                  {"gram", c.lattice.gram},
                  {"k_enum", c.lattice.k_enum}};
  const auto& m = c.model;
  j["model"] = {{"kind", m.kind},
                {"multiplier_decay", m.multiplier_decay},
                {"multiplier_seed", m.multiplier_seed ? nlohmann::ordered_json(*m.multiplier_seed) : nlohmann::ordered_json(nullptr)},
                {"fold_zero_mode", m.fold_zero_mode},
                {"p0", m.p0},
                {"f_p0", m.f_p0},
                {"mass", m.mass},
                {"nonlinearity", m.nonlinearity},
                {"coeffs", m.coeffs}};
  j["clusters"] = {{"delta", c.clusters.delta}, {"c_delta", c.clusters.c_delta}, {"c_max", c.clusters.c_max}};
  const auto& r = c.resonance;
  j["resonance"] = {{"r", r.r},
                    {"gamma", r.gamma},
                    {"gamma_factor", r.gamma_factor},
                    {"tau", r.tau},
                    {"sampling", r.sampling},
                    {"samples", r.samples},
                    {"budget", r.budget},
                    {"measure_vectors", r.measure_vectors},
                    {"measure_gammas", r.measure_gammas},
                    {"measure_samples", r.measure_samples},
                    {"measure_max_mode", r.measure_max_mode}};
  const auto& n = c.normalform;
  j["normalform"] = {{"r", n.r},         {"r_bar", n.r_bar}, {"radius", n.radius}, {"k", n.k},
                     {"nu", n.nu},       {"n_loc", n.n_loc}, {"mu_max", n.mu_max}};
  const auto& s = c.simulate;
  j["simulate"] = {{"eps", s.eps},
                   {"s", s.s},
                   {"dt", s.dt},
                   {"t_end", s.t_end},
                   {"integrator", s.integrator},
                   {"stride", s.stride},
                   {"max_omega_dt", s.max_omega_dt},
                   {"block_cutoff", s.block_cutoff},
                   {"decay", s.decay},
                   {"normal_form_coords", s.normal_form_coords}};
  j["output"] = {{"dir", c.output.dir}};
  return j.dump(2);
}

std::uint64_t derive_seed(std::uint64_t master, const std::string& label) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : label) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  // splitmix64 finalizer
  std::uint64_t z = master + 0x9e3779b97f4a7c15ull + h;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

FrequencyModel build_base_model(const ExperimentConfig& c) {
  Vec3 kappa{};
  for (std::size_t i = 0; i < c.lattice.kappa.size(); ++i) kappa[i] = c.lattice.kappa[i];
  return FrequencyModel::torus_laplacian(Lattice(c.lattice.dim, kappa), c.lattice.gram);
}

FrequencyModel build_model(const ExperimentConfig& c) {
  const auto torus = build_base_model(c);
  const Lattice& lat = torus.lattice();
  const auto& m = c.model;
  if (m.kind == "torus") return torus;
  if (m.kind == "multiplier") {
    MultiplierEnsemble ens{m.multiplier_decay, m.multiplier_seed.value_or(derive_seed(c.seed, "multiplier")),
                           m.fold_zero_mode};
    return FrequencyModel::spectral_multiplier(torus, ens.sample(lat, enumerate_lattice(lat, c.lattice.k_enum)));
  }
  if (m.kind == "ground_state") return FrequencyModel::ground_state(torus, m.p0, m.f_p0);
  if (m.kind == "beam") return FrequencyModel::beam(torus, m.mass);
  throw ConfigError("unknown model kind '" + m.kind + "'");
}

Setting build_setting(const ExperimentConfig& c) {
  return make_setting(build_model(c), c.lattice.k_enum, c.clusters.delta, c.clusters.c_delta);
}

Nonlinearity build_nonlinearity(const ExperimentConfig& c) {
  if (c.model.nonlinearity == "nls") return Nonlinearity::nls(c.model.coeffs);
  if (c.model.nonlinearity == "beam") return Nonlinearity::beam(c.model.coeffs);
  return Nonlinearity::none();
}

SimulationConfig build_simulation(const ExperimentConfig& c, double eps) {
  const auto& s = c.simulate;
  SimulationConfig out;
  out.nonlinearity = build_nonlinearity(c);
  out.eps = eps;
  out.s = s.s;
  out.dt = s.dt;
  out.t_end = s.t_end > 0.0 ? s.t_end : 1.0 / (eps * eps);
  out.integrator = s.integrator == "rk4" ? IntegratorKind::Rk4Reference : IntegratorKind::Strang;
  out.seed = derive_seed(c.seed, "initial");
  out.stride = s.stride;
  out.max_omega_dt = s.max_omega_dt;
  out.block_cutoff = s.block_cutoff;
  out.decay = s.decay;
  if (c.model.kind == "ground_state") out.ground_state_p0 = c.model.p0;
  return out;
}

NormalFormConfig build_normal_form(const ExperimentConfig& c) {
  NormalFormConfig n;
  n.r = c.normalform.r;
  n.r_bar = c.normalform.r_bar;
  n.radius = c.normalform.radius;
  n.k = c.normalform.k;
  n.nu = c.normalform.nu;
  n.n_loc = c.normalform.n_loc;
  n.mu_max = c.normalform.mu_max;
  return n;
}

}  // namespace lnf
