#include "lnf/app.hpp"

#include <fftw3.h>
#include <openssl/crypto.h>
#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "lnf/dynamics.hpp"
#include "lnf/normal_form.hpp"

namespace lnf {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

class Output {
 public:
  Output(const ExperimentConfig& c, RunResult& r) : dir_(c.output.dir), r_(r) { fs::create_directories(dir_); }

  std::ofstream open(const std::string& name) {
    std::ofstream os(dir_ / name, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + (dir_ / name).string());
    os << std::setprecision(17);
    r_.files.push_back(name);
    return os;
  }
  void text(const std::string& name, const std::string& body) { open(name) << body << '\n'; }

 private:
  fs::path dir_;
  RunResult& r_;
};

ojson parsed(const std::string& s) { return ojson::parse(s); }

ojson witness_json(const std::vector<ExtId>& w, const SpectrumTable& table) {
  ojson out = ojson::array();
  for (ExtId id : canonical_multi_index(w, table).entries) {
    const Vec3 x = table.lattice().coord(table[ext_entry(id)].point);
    out.push_back({std::vector<double>(x.begin(), x.begin() + table.dim()), ext_sign(id)});
  }
  return out;
}

ojson check(const std::string& name, double value, double threshold, bool pass) {
  return {{"name", name}, {"value", value}, {"threshold", threshold}, {"pass", pass}};
}

void require_nls(const ExperimentConfig& c, const char* what) {
  if ((c.model.kind != "torus" && c.model.kind != "multiplier") || c.model.nonlinearity != "nls") {
    throw std::invalid_argument(std::string(what) + " needs a torus or multiplier model with the nls nonlinearity");
  }
}

ResonanceCertificate certify_degree(const ExperimentConfig& c, const Setting& s, int r) {
  const auto& rc = c.resonance;
  const double tau = rc.tau > 0.0 ? rc.tau : default_tau(s.table.dim(), r);
  CertifyOptions opt;
  opt.sampling = rc.sampling;
  opt.samples = rc.samples;
  opt.seed = derive_seed(c.seed, "certify/" + std::to_string(r));
  opt.budget = rc.budget;
  if (rc.gamma > 0.0) return certify_nonresonance(r, s.table, s.band_id, rc.gamma, tau, opt);
  auto probe = certify_nonresonance(r, s.table, s.band_id, 0.0, tau, opt);
  if (!(probe.min_weighted > 0.0)) {
    probe.pass = false;
    return probe;
  }
  return certify_nonresonance(r, s.table, s.band_id, rc.gamma_factor * probe.min_weighted, tau, opt);
}

// Certificates for degrees 3 .. top; the first failure is returned through `failed`.
std::map<int, ResonanceCertificate> certify_range(const ExperimentConfig& c, const Setting& s, int top,
                                                  Output& out, RunResult& r, bool& failed) {
  std::map<int, ResonanceCertificate> certs;
  failed = false;
  ojson summary = ojson::array();
  for (int d = 3; d <= top; ++d) {
    certs[d] = certify_degree(c, s, d);
    const auto js = certificate_json(certs[d], s.table);
    out.text("certificate_r" + std::to_string(d) + ".json", js);
    summary.push_back(parsed(js));
    if (!certs[d].pass && !failed) {
      failed = true;
      r.witness = {{"kind", "resonance"}, {"r", d}, {"multi_index", witness_json(certs[d].witness, s.table)},
                   {"divisor", certs[d].min_divisor}};
    }
  }
  r.measured["certificates"] = summary;
  return certs;
}

StateVector scaled_state(const SpectrumTable& t, std::mt19937_64& rng, double size) {
  StateVector u = random_state(t, rng, 2.0, true);
  const double n = sobolev_norm(u, 0.0, t);
  for (auto& v : u) v *= size / n;
  return u;
}

double majorant(const Poly& p, const StateVector& u) {
  double s = 0.0;
  for (const auto& [k, c] : p.terms()) {
    double m = std::abs(c) * multiplicity(k);
    for (ExtId id : k.ids()) m *= std::abs(u[id]);
    s += m;
  }
  return s;
}

double max_diff(const StateVector& a, const StateVector& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

ojson normal_form_json(const NormalFormResult& nf, const CommutationReport& comm) {
  ojson steps = ojson::array();
  for (const auto& s : nf.steps) {
    steps.push_back({{"degree", s.degree},
                     {"f_terms", s.f_terms},
                     {"g_terms", s.g_terms},
                     {"f_norm", s.f_norm},
                     {"g_norm", s.g_norm},
                     {"z_norm", s.z_norm},
                     {"p_norm", s.p_norm},
                     {"residual", s.residual},
                     {"g_bound_ratio", s.g_bound_ratio},
                     {"killed_residual", s.killed_residual},
                     {"ledger_norm", s.ledger_norm},
                     {"gamma", s.gamma},
                     {"tau", s.tau}});
  }
  return {{"K", nf.k},
          {"mu", nf.mu},
          {"tau", nf.tau},
          {"gamma", nf.gamma},
          {"p0_norm", nf.p0_norm},
          {"steps", steps},
          {"buckets",
           {{"Z0", nf.z0.size()}, {"ZB", nf.zb.size()}, {"Z2", nf.z2.size()}, {"Zge3", nf.zge3.size()}}},
          {"generators", nf.generators.size()},
          {"commutation",
           {{"band_max", comm.band_max},
            {"block_max", comm.block_max},
            {"z2_block_max", comm.z2_block_max},
            {"bands", comm.bands},
            {"blocks", comm.blocks}}},
          {"ledger", {{"terms", nf.ledger.size()}, {"max_abs", nf.ledger.max_abs()},
                      {"norm", nf.steps.empty() ? 0.0 : nf.steps.back().ledger_norm}}}};
}

void write_poly(Output& out, const std::string& name, const Poly& p, const SpectrumTable& t) {
  auto os = out.open(name);
  write_poly_jsonl(p, t, os);
}

// Normalization of the configured NLS; nullopt after recording a failure in r.
std::optional<NormalFormResult> normalize(const ExperimentConfig& c, const Setting& s, Output& out,
                                          RunResult& r) {
  require_nls(c, "normalform");
  const auto nfc = build_normal_form(c);
  const int top = nfc.r_bar + 2;
  bool failed = false;
  const auto certs = certify_range(c, s, top, out, r, failed);
  if (failed) {
    r.status = kExitFailure;
    r.summary = "resonance certificate failed";
    return std::nullopt;
  }
  const Poly p = nls_potential(s.table, c.model.coeffs, top);
  try {
    return iterate(p, s, nfc, certs);
  } catch (const CertificateBreach& e) {
    r.status = kExitFailure;
    r.summary = e.what();
    r.witness = {{"kind", "homological"}, {"multi_index", witness_json(e.witness, s.table)}, {"divisor", e.divisor}};
  } catch (const SmallnessError& e) {
    r.status = kExitFailure;
    r.summary = e.what();
    r.witness = {{"kind", "smallness"}, {"mu", e.mu}};
  }
  return std::nullopt;
}

RunResult run_spectrum(const ExperimentConfig& c) {
  RunResult r;
  Output out(c, r);
  const auto s = build_setting(c);
  {
    auto os = out.open("spectrum.csv");
    s.table.write_csv(os);
  }
  const auto& b = s.bands;
  ojson intervals = ojson::array();
  for (const auto& iv : b.intervals) intervals.push_back({iv.lo, iv.hi});
  ojson j{{"modes", s.table.size()}, {"beta", s.table.beta()}, {"n_bands", b.size()},
          {"valid", b.valid()},      {"intervals", intervals}, {"violations", b.violations},
          {"diagnostics", b.diagnostics}};
  try {
    const auto fit = fit_asymptotics(s.table);
    const auto [lo, hi] = floor_comparability(s.table);
    j["asymptotics"] = {{"c1", fit.c1}, {"c2", fit.c2}, {"pass", fit.pass}};
    j["floor_comparability"] = {lo, hi};
  } catch (const std::exception& e) {
    j["asymptotics"] = {{"error", e.what()}};
  }
  out.text("bands.json", j.dump(2));
  r.measured = {{"modes", s.table.size()}, {"n_bands", b.size()}, {"valid", b.valid()}};
  if (!b.valid()) {
    r.status = kExitFailure;
    r.summary = "band partition violates its invariants";
    r.witness = {{"kind", "bands"}, {"violations", b.violations}};
  } else {
    r.summary = std::to_string(b.size()) + " bands over " + std::to_string(s.table.size()) + " modes";
  }
  return r;
}

RunResult run_clusters(const ExperimentConfig& c) {
  RunResult r;
  Output out(c, r);
  const auto s = build_setting(c);
  {
    auto os = out.open("clusters.csv");
    write_clusters_csv(s.clusters, s.table, os);
  }
  const auto dy = certify_dyadic(s.clusters, s.table, c.clusters.c_max);
  const auto margin = separation_margin(s.clusters, s.table);
  const auto provisional = std::count(s.clusters.provisional.begin(), s.clusters.provisional.end(), true);
  ojson j{{"n_blocks", s.clusters.n_blocks()},
          {"dyadic_C", dy.constant},
          {"min_margin", margin.margin},
          {"dyadic_pass", dy.pass},
          {"provisional_blocks", provisional}};
  out.text("clusters.json", j.dump(2));
  r.measured = j;
  if (!dy.pass) {
    r.status = kExitFailure;
    r.summary = "dyadic constant exceeds c_max";
    r.witness = {{"kind", "dyadic"}, {"block", dy.worst_block ? ojson(*dy.worst_block) : ojson(nullptr)},
                 {"constant", dy.constant}};
  } else {
    r.summary = std::to_string(s.clusters.n_blocks()) + " blocks, dyadic constant " + std::to_string(dy.constant);
  }
  return r;
}

RunResult run_resonances(const ExperimentConfig& c) {
  RunResult r;
  Output out(c, r);
  const auto s = build_setting(c);
  const auto cert = certify_degree(c, s, c.resonance.r);
  const auto js = certificate_json(cert, s.table);
  out.text("certificate.json", js);
  r.measured = parsed(js);
  if (!cert.pass) {
    r.status = kExitFailure;
    r.summary = "certificate failed at r = " + std::to_string(cert.r) + ", divisor " + std::to_string(cert.min_divisor);
    r.witness = {{"kind", "resonance"}, {"r", cert.r}, {"multi_index", witness_json(cert.witness, s.table)},
                 {"divisor", cert.min_divisor}};
  } else {
    r.summary = "certified r = " + std::to_string(cert.r) + " with gamma " + std::to_string(cert.gamma);
  }
  return r;
}

RunResult run_measure(const ExperimentConfig& c) {
  RunResult r;
  Output out(c, r);
  const auto& rc = c.resonance;
  const auto base = build_base_model(c);
  const auto points = enumerate_lattice(base.lattice(), rc.measure_max_mode);
  if (points.empty()) throw std::invalid_argument("measure: no lattice points below measure_max_mode");
  std::mt19937_64 rng(derive_seed(c.seed, "measure"));
  std::uniform_int_distribution<int> len(2, 4);
  std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
  std::uniform_int_distribution<int> coef(0, 3);
  auto os = out.open("measure.csv");
  os << "k_hash,gamma,fraction,bound,stderr\n";
  int failures = 0;
  ojson rows = ojson::array();
  for (int v = 0; v < rc.measure_vectors; ++v) {
    ModeVector k;
    std::set<std::size_t> used;
    const int n = std::min<int>(len(rng), static_cast<int>(points.size()));
    while (static_cast<int>(used.size()) < n) {
      const auto i = pick(rng);
      if (!used.insert(i).second) continue;
      const int cv = coef(rng);
      k.emplace_back(points[i], cv < 2 ? cv - 2 : cv - 1);
    }
    const auto hash = mode_vector_hash(k, base.lattice().dim());
    for (std::size_t g = 0; g < rc.measure_gammas.size(); ++g) {
      const double gamma = rc.measure_gammas[g];
      const auto est = estimate_resonant_measure(
          k, gamma, base, c.model.multiplier_decay, rc.measure_samples,
          derive_seed(c.seed, "measure/" + std::to_string(v) + "/" + std::to_string(g)));
      os << hash << ',' << gamma << ',' << est.fraction << ',' << est.bound << ',' << est.stderr_ << '\n';
      rows.push_back({{"k_hash", hash}, {"gamma", gamma}, {"fraction", est.fraction}, {"bound", est.bound},
                      {"stderr", est.stderr_}, {"pass", est.pass}});
      if (!est.pass) {
        ++failures;
        if (r.witness.is_null()) r.witness = {{"kind", "measure"}, {"k_hash", hash}, {"gamma", gamma}};
      }
    }
  }
  r.measured = {{"estimates", rows}, {"failures", failures}};
  r.status = failures ? kExitFailure : kExitPass;
  r.summary = std::to_string(rows.size()) + " estimates, " + std::to_string(failures) + " above bound";
  return r;
}

RunResult run_normalform(const ExperimentConfig& c) {
  RunResult r;
  Output out(c, r);
  const auto s = build_setting(c);
  const auto nf = normalize(c, s, out, r);
  if (!nf) return r;
  const auto comm = check_superaction_commutation(nf->z0, nf->zb, nf->z2, s, nf->k);
  write_poly(out, "z0.jsonl", nf->z0, s.table);
  write_poly(out, "zb.jsonl", nf->zb, s.table);
  write_poly(out, "z2.jsonl", nf->z2, s.table);
  write_poly(out, "zge3.jsonl", nf->zge3, s.table);
  write_poly(out, "ledger.jsonl", nf->ledger, s.table);
  for (std::size_t i = 0; i < nf->generators.size(); ++i) {
    write_poly(out, "generator_" + std::to_string(i + 1) + ".jsonl", nf->generators[i], s.table);
  }
  std::mt19937_64 rng(derive_seed(c.seed, "normalform/states"));
  double round_trip = 0.0;
  for (int trial = 0; trial < 4; ++trial) {
    const auto u = scaled_state(s.table, rng, c.normalform.radius);
    const auto fw = transform_state(nf->generators, u, Direction::Forward, s.table);
    round_trip = std::max(round_trip, max_diff(transform_state(nf->generators, fw, Direction::Inverse, s.table), u));
  }
  auto j = normal_form_json(*nf, comm);
  j["round_trip"] = round_trip;
  double residual = 0.0;
  for (const auto& st : nf->steps) residual = std::max(residual, st.residual);
  j["max_residual"] = residual;
  out.text("normalform.json", j.dump(2));
  for (const auto& [k, v] : j.items()) r.measured[k] = v;
  const bool ok = residual <= 1e-12 && comm.max() <= 1e-12 && round_trip <= 1e-8;
  r.status = ok ? kExitPass : kExitFailure;
  r.summary = "K = " + std::to_string(nf->k) + ", mu = " + std::to_string(nf->mu) +
              (ok ? "" : ", invariant check failed");
  return r;
}

RunResult run_simulate(const ExperimentConfig& c, int jobs) {
  RunResult r;
  Output out(c, r);
  const auto s = build_setting(c);
  std::vector<Poly> generators;
  if (c.simulate.normal_form_coords) {
    const auto nf = normalize(c, s, out, r);
    if (!nf) return r;
    generators = nf->generators;
  }
  const auto& eps = c.simulate.eps;
  std::vector<StabilityReport> reports(eps.size());
  std::vector<TrajectoryRecord> records(eps.size());
  std::vector<std::exception_ptr> errors(eps.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < eps.size();) {
      try {
        auto sc = build_simulation(c, eps[i]);
        sc.seed = derive_seed(c.seed, "initial/" + std::to_string(i));
        reports[i] = stability_experiment(s, sc, generators.empty() ? nullptr : &generators, &records[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(eps.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  ojson runs = ojson::array();
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const auto tag = std::to_string(i);
    {
      auto os = out.open("trajectory_" + tag + ".csv");
      records[i].write_csv(os);
    }
    out.text("stability_" + tag + ".json", stability_json(reports[i]));
    auto j = parsed(stability_json(reports[i]));
    j["t_end"] = records[i].t.empty() ? 0.0 : records[i].t.back();
    runs.push_back(j);
    if (reports[i].exit_time && r.witness.is_null()) {
      r.witness = {{"kind", "stability"}, {"eps", eps[i]}, {"exit_time", *reports[i].exit_time},
                   {"max_ratio", reports[i].max_ratio}};
    }
  }
  r.measured["runs"] = runs;
  if (!r.witness.is_null()) {
    r.status = kExitFailure;
    r.summary = "norm left the 2 eps ball";
  } else {
    double worst = 0.0;
    for (const auto& rep : reports) worst = std::max(worst, rep.max_ratio);
    r.summary = "max ||u||_s / eps = " + std::to_string(worst);
  }
  return r;
}

RunResult run_verify(const ExperimentConfig& c) {
  RunResult r;
  Output out(c, r);
  require_nls(c, "verify");
  ojson checks = ojson::array();
  auto add = [&](const std::string& name, double value, double threshold, bool pass) {
    checks.push_back(check(name, value, threshold, pass));
  };

  add("config_round_trip", 0.0, 0.0, parse_config(config_json(c), "<echo>", true) == c);

  const auto s = build_setting(c);
  add("band_partition_valid", static_cast<double>(s.bands.violations.size()), 0.0, s.bands.valid());
  const auto dy = certify_dyadic(s.clusters, s.table, c.clusters.c_max);
  add("clusters_dyadic", dy.constant, c.clusters.c_max, dy.pass);

  const auto nf = normalize(c, s, out, r);
  if (nf) {
    double residual = 0.0;
    for (const auto& st : nf->steps) residual = std::max(residual, st.residual);
    add("homological_residual", residual, 1e-12, residual <= 1e-12);
    const auto comm = check_superaction_commutation(nf->z0, nf->zb, nf->z2, s, nf->k);
    add("superaction_commutation", comm.max(), 1e-12, comm.max() <= 1e-12);

    const Poly p = nls_potential(s.table, c.model.coeffs, c.normalform.r_bar + 2);
    std::mt19937_64 rng(derive_seed(c.seed, "verify/states"));
    double round_trip = 0.0, energy_ratio = 0.0;
    for (int trial = 0; trial < 4; ++trial) {
      const auto u = scaled_state(s.table, rng, c.normalform.radius);
      const auto fw = transform_state(nf->generators, u, Direction::Forward, s.table);
      round_trip = std::max(round_trip, max_diff(transform_state(nf->generators, fw, Direction::Inverse, s.table), u));
      const double lhs = evaluate(nf->h0 + p, fw).real();
      const double rhs = evaluate(nf->truncated_hamiltonian(), u).real();
      energy_ratio = std::max(energy_ratio, std::abs(lhs - rhs) / (2.0 * majorant(nf->ledger, u) + 1e-14));
    }
    add("transform_round_trip", round_trip, 1e-8, round_trip <= 1e-8);
    add("energy_within_ledger", energy_ratio, 1.0, energy_ratio <= 1.0);

    const auto blocks = high_mode_blocks(s.clusters, s.table, nf->k);
    const StateVector u0 = to_state(initial_data(s.table, 0.3, 0.0, 1.0, derive_seed(c.seed, "verify/poly")));
    const auto trunc = integrate_poly(nf->z0 + nf->zb, s, u0, 0.05, 20.0, 20, &blocks);
    const double drift = std::max(trunc.band_drift(), trunc.block_drift());
    const double bound = 10.0 * trunc.energy_drift();
    add("truncated_superaction_drift", drift, bound, drift <= bound);
  } else {
    add("normal_form", 0.0, 0.0, false);
  }

  {
    std::mt19937_64 rng(derive_seed(c.seed, "verify/jacobi"));
    double worst = 0.0;
    for (int trial = 0; trial < 4; ++trial) {
      const auto f = random_form(s.table, 2 + trial % 3, 12, rng);
      const auto g = random_form(s.table, 3, 12, rng);
      const auto h = random_form(s.table, 2 + (trial + 1) % 3, 12, rng);
      const auto j1 = poisson_bracket(f, poisson_bracket(g, h));
      const auto j2 = poisson_bracket(g, poisson_bracket(h, f));
      const auto j3 = poisson_bracket(h, poisson_bracket(f, g));
      const double scale = std::max({j1.max_abs(), j2.max_abs(), j3.max_abs(), 1e-300});
      worst = std::max(worst, (j1 + j2 + j3).max_abs() / scale);
    }
    add("jacobi_identity", worst, 1e-10, worst <= 1e-10);
  }

  {
    const auto nl = build_nonlinearity(c);
    GalerkinSystem sys(s.table, nl);
    const Poly p = nls_potential(s.table, c.model.coeffs, nl.field_degree() + 1);
    const Modes u = initial_data(s.table, 0.5, 1.0, 0.5, derive_seed(c.seed, "verify/galerkin"));
    Modes g;
    sys.nonlinear_field(u, g);
    const auto x = plus_part(vector_field(p, to_state(u)));
    double diff = 0.0, scale = 1e-300;
    for (std::size_t i = 0; i < g.size(); ++i) {
      diff = std::max(diff, std::abs(g[i] - x[i]));
      scale = std::max(scale, std::abs(x[i]));
    }
    add("galerkin_field_consistency", diff / scale, 1e-12, diff / scale <= 1e-12);

    auto sc = build_simulation(c, c.simulate.eps.front());
    sc.t_end = 10.0;
    sc.stride = 50;
    const auto rec = integrate(s, sc);
    double mass = 0.0;
    for (double m : rec.norm_0) mass = std::max(mass, std::abs(m * m - rec.norm_0.front() * rec.norm_0.front()));
    const double rel = mass / (rec.norm_0.front() * rec.norm_0.front());
    add("mass_conservation", rel, 1e-10, rel <= 1e-10);
  }

  {
    // Three-mode cubic NLS against a fine RK4 reference.
    const auto t = SpectrumTable::build(FrequencyModel::torus_laplacian(Lattice(1)), 1.0);
    GalerkinSystem sys(t, Nonlinearity::nls({1.0}));
    const Modes u0{cplx(1.0, 0.2), cplx(0.5, -0.3), cplx(-0.4, 0.6)};
    auto run = [&](double dt, bool rk4) {
      Modes u = u0;
      for (long i = 0; i < std::lround(10.0 / dt); ++i) {
        if (rk4) sys.rk4_step(u, dt);
        else sys.strang_step(u, dt);
      }
      return u;
    };
    const Modes ref = run(1e-3, true);
    auto err = [&](double dt) {
      const Modes u = run(dt, false);
      double e = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) e = std::max(e, std::abs(u[i] - ref[i]));
      return e;
    };
    const double slope = std::log2(err(0.05) / err(0.025));
    add("strang_order", slope, 2.0, std::abs(slope - 2.0) <= 0.2);
  }

  std::size_t failed = 0;
  for (const auto& ch : checks) failed += ch["pass"].get<bool>() ? 0 : 1;
  out.text("verify.json", ojson{{"checks", checks}, {"failed", failed}}.dump(2));
  r.measured["checks"] = checks;
  r.measured["failed"] = failed;
  if (failed) {
    r.status = kExitFailure;
    if (r.witness.is_null()) {
      for (const auto& ch : checks) {
        if (!ch["pass"].get<bool>()) {
          r.witness = {{"kind", "check"}, {"name", ch["name"]}, {"value", ch["value"]}};
          break;
        }
      }
    }
    r.summary = std::to_string(failed) + " of " + std::to_string(checks.size()) + " checks failed";
  } else {
    r.status = kExitPass;
    r.summary = "all " + std::to_string(checks.size()) + " checks passed";
  }
  return r;
}

std::string iso_time(std::chrono::system_clock::time_point tp) {
  const std::time_t t = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"spectrum", "clusters",  "resonances", "measure",
                                              "normalform", "simulate", "verify"};
  return names;
}

RunResult run_pipeline(const std::string& subcommand, const ExperimentConfig& c, int jobs) {
  if (subcommand == "spectrum") return run_spectrum(c);
  if (subcommand == "clusters") return run_clusters(c);
  if (subcommand == "resonances") return run_resonances(c);
  if (subcommand == "measure") return run_measure(c);
  if (subcommand == "normalform") return run_normalform(c);
  if (subcommand == "simulate") return run_simulate(c, jobs);
  if (subcommand == "verify") return run_verify(c);
  throw std::invalid_argument("unknown subcommand '" + subcommand + "'");
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  char buf[1 << 15];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

std::string manifest_json(const std::string& subcommand, const ExperimentConfig& c, const RunResult& r,
                          const Timestamps& ts) {
  ojson files = ojson::array();
  const fs::path dir(c.output.dir);
  for (const auto& f : r.files) {
    files.push_back({{"path", f}, {"bytes", fs::file_size(dir / f)}, {"sha256", sha256_file(dir / f)}});
  }
  ojson j;
  j["tool"] = "lnf";
  j["version"] = kVersion;
  j["subcommand"] = subcommand;
  j["status"] = r.status;
  j["summary"] = r.summary;
  j["config"] = parsed(config_json(c));
  ojson seeds = ojson::object();
  seeds["master"] = c.seed;
  seeds["multiplier"] = c.model.multiplier_seed.value_or(derive_seed(c.seed, "multiplier"));
  seeds["initial"] = derive_seed(c.seed, "initial");
  j["seeds"] = seeds;
  j["versions"] = {{"lnf", kVersion}, {"fftw", std::string(fftw_version)}, {"openssl", std::string(OpenSSL_version(OPENSSL_VERSION))},
                   {"compiler", std::string(__VERSION__)}};
  j["measured"] = r.measured;
  j["witness"] = r.witness;
  j["files"] = files;
  j["timestamps"] = {{"started", ts.started}, {"finished", ts.finished}, {"runtime_s", ts.runtime_s}};
  return j.dump(2);
}

int execute(const CommandLine& cmd, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(cmd.config_path, cmd.overrides);
    if (cmd.seed) cfg.seed = *cmd.seed;
    if (cmd.out_dir) cfg.output.dir = *cmd.out_dir;
    if (cmd.jobs < 1) throw std::invalid_argument("--jobs must be at least 1");
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  const auto wall0 = std::chrono::system_clock::now();
  const auto t0 = std::chrono::steady_clock::now();
  RunResult result;
  try {
    result = run_pipeline(cmd.subcommand, cfg, cmd.jobs);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::domain_error& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::length_error& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    result.status = kExitFailure;
    result.summary = e.what();
    result.witness = {{"kind", "runtime"}, {"message", e.what()}};
  }
  Timestamps ts;
  ts.started = iso_time(wall0);
  ts.finished = iso_time(std::chrono::system_clock::now());
  ts.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  try {
    fs::create_directories(cfg.output.dir);
    std::ofstream(fs::path(cfg.output.dir) / "manifest.json") << manifest_json(cmd.subcommand, cfg, result, ts) << '\n';
  } catch (const std::exception& e) {
    err << "cannot write manifest: " << e.what() << '\n';
    return kExitFailure;
  }
  (result.status == kExitPass ? out : err) << cmd.subcommand << ": " << (result.status == kExitPass ? "PASS" : "FAIL")
                                           << " (" << result.summary << ")\n";
  if (!result.witness.is_null()) err << "witness: " << result.witness.dump() << '\n';
  return result.status;
}

}  // namespace lnf
