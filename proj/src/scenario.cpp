#include "rotapol/scenario.hpp"

#include <json.hpp>

#include <algorithm>
#include <climits>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "rotapol/effective_model.hpp"
#include "rotapol/errors.hpp"
#include "rotapol/full_model.hpp"
#include "rotapol/grid.hpp"
#include "rotapol/observables.hpp"
#include "rotapol/params.hpp"
#include "rotapol/spectra.hpp"

namespace rotapol {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// ---------------------------------------------------------------- config ---

[[noreturn]] void bad(const std::string& path, const std::string& what) {
  fail(Err::ConfigInvalid, "config " + path + ": " + what);
}

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) bad(path, "must be an object");
}

// Unknown keys are errors so a typo cannot silently fall back to a default.
void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
  require_object(j, path);
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* a : allowed) {
      if (item.key() == a) {
        known = true;
        break;
      }
    }
    if (!known) bad(path + "." + item.key(), "unknown key");
  }
}

const json* find(const json& j, const char* key) {
  const auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

const json& member(const json& j, const std::string& path, const char* key) {
  const json* p = find(j, key);
  if (!p) bad(path + "." + key, "required key is missing");
  return *p;
}

double as_num(const json& j, const std::string& path) {
  if (!j.is_number()) bad(path, "must be a number");
  return j.get<double>();
}

double num(const json& j, const std::string& path, const char* key) {
  return as_num(member(j, path, key), path + "." + key);
}

double num_or(const json& j, const std::string& path, const char* key, double fallback) {
  const json* p = find(j, key);
  return p ? as_num(*p, path + "." + key) : fallback;
}

std::int64_t as_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) bad(path, "must be an integer");
  return j.get<std::int64_t>();
}

std::uint64_t as_uint(const json& j, const std::string& path) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer()) {
    const std::int64_t v = j.get<std::int64_t>();
    if (v >= 0) return std::uint64_t(v);
  }
  bad(path, "must be a nonnegative integer");
}

std::uint64_t uint_or(const json& j, const std::string& path, const char* key,
                      std::uint64_t fallback) {
  const json* p = find(j, key);
  return p ? as_uint(*p, path + "." + key) : fallback;
}

std::string as_str(const json& j, const std::string& path) {
  if (!j.is_string()) bad(path, "must be a string");
  return j.get<std::string>();
}

std::string str(const json& j, const std::string& path, const char* key) {
  return as_str(member(j, path, key), path + "." + key);
}

std::string str_or(const json& j, const std::string& path, const char* key,
                   const char* fallback) {
  const json* p = find(j, key);
  return p ? as_str(*p, path + "." + key) : fallback;
}

bool flag_or(const json& j, const std::string& path, const char* key, bool fallback) {
  const json* p = find(j, key);
  if (!p) return fallback;
  if (!p->is_boolean()) bad(path + "." + key, "must be true or false");
  return p->get<bool>();
}

PotentialMode potential_from(const std::string& s, const std::string& path) {
  if (s == "full") return PotentialMode::Full;
  if (s == "compensated") return PotentialMode::Compensated;
  if (s == "none") return PotentialMode::None;
  bad(path, "must be 'full', 'compensated', or 'none'");
}

Integrator integrator_from(const std::string& s, const std::string& path) {
  if (s == "strang") return Integrator::Strang;
  if (s == "rk4") return Integrator::Rk4;
  bad(path, "must be 'strang' or 'rk4'");
}

FillingConvention convention_from(const std::string& s, const std::string& path) {
  if (s == "paper-literal") return FillingConvention::PaperLiteral;
  if (s == "disk-density") return FillingConvention::DiskDensity;
  bad(path, "must be 'paper-literal' or 'disk-density'");
}

// ---------------------------------------------------------- config blocks ---

MediumParams medium_from(const json& j, const std::string& path) {
  check_keys(j, path,
             {"coupling_gsqrt_n", "rabi_plus", "rabi_minus", "gamma", "delta_single",
              "delta_two_photon", "probe_wavelength", "speed_of_light"});
  MediumParams m;
  m.coupling_gsqrt_n = num(j, path, "coupling_gsqrt_n");
  m.rabi_plus = num(j, path, "rabi_plus");
  m.rabi_minus = num_or(j, path, "rabi_minus", 0.0);
  m.gamma = num(j, path, "gamma");
  m.delta_single = num_or(j, path, "delta_single", 0.0);
  m.delta_two_photon = num_or(j, path, "delta_two_photon", 0.0);
  m.probe_wavelength = num(j, path, "probe_wavelength");
  m.speed_of_light = num_or(j, path, "speed_of_light", m.speed_of_light);
  m.validate();
  return m;
}

RotationGeometry geometry_from(const json& j, const std::string& path) {
  check_keys(j, path, {"nu", "radius", "medium_length", "polariton_length"});
  RotationGeometry g;
  g.nu = num(j, path, "nu");
  g.radius = num(j, path, "radius");
  g.medium_length = num(j, path, "medium_length");
  g.polariton_length = num_or(j, path, "polariton_length", 0.0);
  g.validate();
  return g;
}

TransverseGrid grid_from(const json& j, const std::string& path) {
  check_keys(j, path, {"nx", "ny", "extent_x", "extent_y"});
  const std::uint64_t nx = as_uint(member(j, path, "nx"), path + ".nx");
  const std::uint64_t ny = as_uint(member(j, path, "ny"), path + ".ny");
  if (nx > 1u << 16 || ny > 1u << 16) bad(path, "grid larger than 65536 per axis");
  TransverseGrid g;
  g.nx = std::uint32_t(nx);
  g.ny = std::uint32_t(ny);
  g.extent_x = num(j, path, "extent_x");
  g.extent_y = num(j, path, "extent_y");
  g.validate();
  return g;
}

// "type" is checked by the caller; this reads the coefficient keys shared by
// every effective-model block.
EffectiveConfig effective_from(const json& j, const std::string& path) {
  EffectiveConfig c;
  c.kinetic_coeff = num_or(j, path, "kinetic_coeff", c.kinetic_coeff);
  c.omega_rot = num_or(j, path, "omega_rot", 0.0);
  c.delta_term = num_or(j, path, "delta_term", 0.0);
  c.potential = potential_from(str_or(j, path, "potential", "full"), path + ".potential");
  c.include_rot_loss = flag_or(j, path, "include_rot_loss", false);
  c.include_mass_correction = flag_or(j, path, "include_mass_correction", false);
  c.gamma_rot = {num_or(j, path, "gamma_rot_re", 0.0), num_or(j, path, "gamma_rot_im", 0.0)};
  c.kz = num_or(j, path, "kz", 0.0);
  c.kz_phase_rate = num_or(j, path, "kz_phase_rate", 0.0);
  c.kz_damp_rate = num_or(j, path, "kz_damp_rate", 0.0);
  c.validate();
  return c;
}

FullConfig full_from(const json& j, const std::string& path) {
  FullConfig c;
  c.c_over_2kp = num_or(j, path, "c_over_2kp", c.c_over_2kp);
  c.c_light = num_or(j, path, "c_light", c.c_light);
  const double s2 = num(j, path, "sin2_theta");
  if (!(s2 > 0.0 && s2 <= 1.0)) bad(path + ".sin2_theta", "must lie in (0, 1]");
  c.sin_theta = std::sqrt(s2);
  c.cos_theta = std::sqrt(std::max(0.0, 1.0 - s2));
  c.nu = num_or(j, path, "nu", 0.0);
  c.delta = num_or(j, path, "delta", 0.0);
  c.gamma = num_or(j, path, "gamma", 0.0);
  c.detuning = num_or(j, path, "detuning", 0.0);
  c.gsq_n = num(j, path, "gsq_n");
  c.kz = num_or(j, path, "kz", 0.0);
  c.strong_coupling = flag_or(j, path, "strong_coupling", true);
  c.validate();
  return c;
}

ComplexField2D initial_from(const json& j, const std::string& path,
                            const TransverseGrid& g) {
  const std::string type = str(j, path, "type");
  if (type == "gaussian") {
    check_keys(j, path, {"type", "sigma", "cx", "cy", "px", "py"});
    return make_gaussian(g, num(j, path, "sigma"), num_or(j, path, "cx", 0.0),
                         num_or(j, path, "cy", 0.0), num_or(j, path, "px", 0.0),
                         num_or(j, path, "py", 0.0));
  }
  if (type == "vortex") {
    check_keys(j, path, {"type", "m", "sigma"});
    const std::int64_t m = as_int(member(j, path, "m"), path + ".m");
    if (m < -64 || m > 64) bad(path + ".m", "winding number out of range [-64, 64]");
    return make_vortex(g, int(m), num(j, path, "sigma"));
  }
  if (type == "hermite-gaussian") {
    check_keys(j, path, {"type", "i", "j", "sigma"});
    const std::uint64_t i = uint_or(j, path, "i", 1);
    const std::uint64_t k = uint_or(j, path, "j", 0);
    if (i > 16 || k > 16) bad(path, "hermite order out of range [0, 16]");
    return make_hermite_gaussian(g, int(i), int(k), num(j, path, "sigma"));
  }
  bad(path + ".type", "must be 'gaussian', 'vortex', or 'hermite-gaussian'");
}

EigenOptions eigen_from(const json& j, const std::string& path) {
  check_keys(j, path, {"k", "tol", "seed", "block", "max_basis", "keep", "max_applies"});
  EigenOptions o;
  o.k = std::size_t(as_uint(member(j, path, "k"), path + ".k"));
  o.tol = num_or(j, path, "tol", o.tol);
  o.seed = uint_or(j, path, "seed", o.seed);
  o.block = std::size_t(uint_or(j, path, "block", o.block));
  o.max_basis = std::size_t(uint_or(j, path, "max_basis", o.max_basis));
  o.keep = std::size_t(uint_or(j, path, "keep", o.keep));
  o.max_applies = std::size_t(uint_or(j, path, "max_applies", o.max_applies));
  return o;
}

// ------------------------------------------------------------- formatting ---

std::string g17(double v) {
  char b[40];
  std::snprintf(b, sizeof b, "%.17g", v);
  return b;
}

std::string dump2(const json& j) { return j.dump(2) + "\n"; }

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(); }

class Csv {
 public:
  explicit Csv(const char* header) : text_(header) { text_ += '\n'; }

  void row(std::initializer_list<double> vals) {
    bool first = true;
    for (const double v : vals) {
      if (!first) text_ += ',';
      text_ += g17(v);
      first = false;
    }
    text_ += '\n';
  }

  void row(const std::vector<double>& vals) {
    bool first = true;
    for (const double v : vals) {
      if (!first) text_ += ',';
      text_ += g17(v);
      first = false;
    }
    text_ += '\n';
  }

  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

void kv(std::string& text, const char* label, const std::string& value) {
  char b[128];
  std::snprintf(b, sizeof b, "  %-16s %s\n", label, value.c_str());
  text += b;
}

std::string opt_str(const std::optional<double>& v) {
  return v ? g17(*v) : std::string("undefined");
}

std::string hex16(std::uint64_t v) {
  char b[20];
  std::snprintf(b, sizeof b, "%016llx", static_cast<unsigned long long>(v));
  return b;
}

// -------------------------------------------------------------- artifacts ---

struct EmitFlags {
  bool csv = true;
  bool json_out = true;
  bool snapshots = false;
};

// Every artifact lands via a temp file in the same directory plus a rename,
// so a crashed run never leaves a half-written file under its final name.
class ArtifactSink {
 public:
  ArtifactSink(fs::path dir, bool want_gnuplot)
      : dir_(std::move(dir)), gnuplot_(want_gnuplot) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec)
      fail(Err::IoError, "cannot create output directory '" + dir_.string() +
                             "': " + ec.message());
  }

  const fs::path& dir() const { return dir_; }

  void write_text(const std::string& name, const std::string& content) {
    const fs::path tmp = dir_ / (name + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out.write(content.data(), std::streamsize(content.size()));
      out.flush();
      if (!out) fail(Err::IoError, "cannot write '" + tmp.string() + "'");
    }
    commit(tmp, name, content.size(), fnv1a64(content.data(), content.size()));
  }

  void write_snapshot(const std::string& name, const ComplexField2D& f) {
    const fs::path tmp = dir_ / (name + ".tmp");
    save_snapshot(f, tmp);
    std::ifstream in(tmp, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) fail(Err::IoError, "cannot read back '" + tmp.string() + "'");
    commit(tmp, name, bytes.size(), fnv1a64(bytes.data(), bytes.size()));
  }

  void gnuplot(const std::string& script) {
    if (gnuplot_) write_text("plot.gnuplot", script);
  }

  // Writes manifest.json (not itself listed) and returns the sorted entries.
  std::vector<ArtifactEntry> finish(const std::string& scenario) {
    std::sort(entries_.begin(), entries_.end(),
              [](const ArtifactEntry& a, const ArtifactEntry& b) { return a.name < b.name; });
    json arr = json::array();
    for (const ArtifactEntry& e : entries_)
      arr.push_back({{"name", e.name}, {"bytes", e.bytes}, {"fnv1a64", e.fnv1a64}});
    json m;
    m["scenario"] = scenario;
    m["generated_unix"] = std::int64_t(std::time(nullptr));
    m["artifacts"] = arr;
    const std::string text = dump2(m);
    const fs::path tmp = dir_ / "manifest.json.tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out.write(text.data(), std::streamsize(text.size()));
      out.flush();
      if (!out) fail(Err::IoError, "cannot write '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, dir_ / "manifest.json", ec);
    if (ec) fail(Err::IoError, "cannot move manifest into place: " + ec.message());
    return entries_;
  }

 private:
  void commit(const fs::path& tmp, const std::string& name, std::uint64_t bytes,
              std::uint64_t hash) {
    std::error_code ec;
    fs::rename(tmp, dir_ / name, ec);
    if (ec)
      fail(Err::IoError, "cannot move '" + tmp.string() + "' into place: " + ec.message());
    entries_.push_back({name, bytes, hex16(hash)});
  }

  fs::path dir_;
  bool gnuplot_ = false;
  std::vector<ArtifactEntry> entries_;
};

struct OutputSpec {
  fs::path dir;
  EmitFlags emit;
};

OutputSpec output_from(const json& root, const ScenarioOptions& opts) {
  OutputSpec spec;
  if (const json* out = find(root, "output")) {
    check_keys(*out, "$.output", {"directory", "emit_csv", "emit_json", "emit_snapshots"});
    if (const json* d = find(*out, "directory"))
      spec.dir = fs::path(as_str(*d, "$.output.directory"));
    spec.emit.csv = flag_or(*out, "$.output", "emit_csv", true);
    spec.emit.json_out = flag_or(*out, "$.output", "emit_json", true);
    spec.emit.snapshots = flag_or(*out, "$.output", "emit_snapshots", false);
  }
  if (!opts.out_override.empty()) spec.dir = opts.out_override;
  if (spec.dir.empty()) bad("$.output.directory", "missing and no --out override given");
  return spec;
}

// ------------------------------------------------------------------ derive ---

std::string run_derive(const json& root, ArtifactSink& sink, const EmitFlags& emit) {
  check_keys(root, "$", {"scenario", "output", "medium", "geometry", "feasibility",
                         "filling", "deflection"});
  const MediumParams med = medium_from(member(root, "$", "medium"), "$.medium");
  const RotationGeometry geo = geometry_from(member(root, "$", "geometry"), "$.geometry");
  const DerivedQuantities d = derive_quantities(med, geo);

  json out;
  out["theta"] = d.angles.theta;
  out["phi"] = d.angles.phi;
  out["cos2_theta"] = d.angles.cos2_theta;
  out["sin2_theta"] = d.angles.sin2_theta;
  out["v_group"] = d.v_group;
  out["m_perp"] = d.m_perp;
  out["b_field"] = d.b_field;
  out["omega_c"] = d.omega_c;
  out["v_rot"] = d.v_rot;
  out["l_abs"] = opt_json(d.l_abs);
  out["m_par"] = opt_json(d.m_par);
  out["d_diff"] = opt_json(d.d_diff);
  out["gamma_rot_re"] = d.gamma_rot ? json(d.gamma_rot->real()) : json();
  out["gamma_rot_im"] = d.gamma_rot ? json(d.gamma_rot->imag()) : json();
  out["l_mag"] = opt_json(d.l_mag);
  out["degeneracy"] = opt_json(d.degeneracy);

  std::string text = "derive:\n";
  kv(text, "theta", g17(d.angles.theta));
  kv(text, "cos2_theta", g17(d.angles.cos2_theta));
  kv(text, "v_group", g17(d.v_group));
  kv(text, "m_perp", g17(d.m_perp));
  kv(text, "b_field", g17(d.b_field));
  kv(text, "omega_c", g17(d.omega_c));
  kv(text, "l_mag", opt_str(d.l_mag));
  kv(text, "degeneracy", opt_str(d.degeneracy));
  kv(text, "l_abs", opt_str(d.l_abs));

  if (const json* fb = find(root, "feasibility")) {
    check_keys(*fb, "$.feasibility", {"margin"});
    const FeasibilityReport r =
        adiabaticity_window(d, num_or(*fb, "$.feasibility", "margin", 10.0));
    out["feasibility"] = {{"nu_min", r.nu_min},
                          {"nu_max_scale", r.nu_max_scale},
                          {"margin_low", r.margin_low},
                          {"margin_high", std::isfinite(r.margin_high)
                                              ? json(r.margin_high)
                                              : json()},
                          {"loss_ratio", r.loss_ratio},
                          {"margin", r.margin},
                          {"feasible", r.feasible}};
    kv(text, "nu_min", g17(r.nu_min));
    kv(text, "nu_max_scale", g17(r.nu_max_scale));
    kv(text, "feasible", r.feasible ? "yes" : "no");
  }

  if (const json* fl = find(root, "filling")) {
    check_keys(*fl, "$.filling", {"n_polaritons", "convention"});
    const double n = num(*fl, "$.filling", "n_polaritons");
    const std::string conv_name =
        str_or(*fl, "$.filling", "convention", "paper-literal");
    const double f =
        filling_factor(d, n, convention_from(conv_name, "$.filling.convention"));
    out["filling"] = {{"n_polaritons", n}, {"convention", conv_name}, {"value", f}};
    kv(text, "filling", g17(f));
  }

  if (const json* df = find(root, "deflection")) {
    check_keys(*df, "$.deflection", {"offset_rho", "length"});
    const double angle = deflection_angle(d, num(*df, "$.deflection", "offset_rho"),
                                          num(*df, "$.deflection", "length"));
    out["deflection_angle"] = angle;
    kv(text, "deflection", g17(angle));
  }

  if (emit.json_out) sink.write_text("derived.json", dump2(out));
  return text;
}

// ------------------------------------------------------------------ landau ---

std::string run_landau(const json& root, ArtifactSink& sink, const EmitFlags& emit) {
  check_keys(root, "$", {"scenario", "output", "model", "numerics", "analysis"});

  const json& mj = member(root, "$", "model");
  check_keys(mj, "$.model", {"kinetic_coeff", "omega_rot", "delta_term", "potential",
                             "include_mass_correction", "gamma_rot_im"});
  EffectiveConfig cfg;
  cfg.kinetic_coeff = num_or(mj, "$.model", "kinetic_coeff", cfg.kinetic_coeff);
  cfg.omega_rot = num(mj, "$.model", "omega_rot");
  cfg.delta_term = num_or(mj, "$.model", "delta_term", 0.0);
  cfg.potential = potential_from(str_or(mj, "$.model", "potential", "compensated"),
                                 "$.model.potential");
  cfg.include_mass_correction = flag_or(mj, "$.model", "include_mass_correction", false);
  cfg.gamma_rot = {0.0, num_or(mj, "$.model", "gamma_rot_im", 0.0)};
  cfg.validate();

  const json& nb = member(root, "$", "numerics");
  check_keys(nb, "$.numerics", {"grid", "eigen"});
  const TransverseGrid grid = grid_from(member(nb, "$.numerics", "grid"), "$.numerics.grid");
  const EigenOptions eo = eigen_from(member(nb, "$.numerics", "eigen"), "$.numerics.eigen");

  double omega_c = 2.0 * std::abs(cfg.omega_rot);
  double cluster_tol = 0.1;
  if (const json* an = find(root, "analysis")) {
    check_keys(*an, "$.analysis", {"omega_c", "cluster_tol"});
    omega_c = num_or(*an, "$.analysis", "omega_c", omega_c);
    cluster_tol = num_or(*an, "$.analysis", "cluster_tol", cluster_tol);
  }

  const OperatorHandle op{grid, cfg};
  op.validate();
  const std::vector<EigenPair> pairs = lowest_eigenpairs(op, eo);
  const SpectrumReport rep = landau_analysis(pairs, op, omega_c, cluster_tol);

  if (emit.csv) {
    Csv spectrum("index,eigenvalue,residual");
    for (std::size_t i = 0; i < pairs.size(); ++i)
      spectrum.row({double(i), pairs[i].value, pairs[i].residual});
    sink.write_text("spectrum.csv", spectrum.text());

    Csv clusters("center,count,spread");
    for (const Cluster& c : rep.clusters)
      clusters.row({c.center, double(c.count), c.spread});
    sink.write_text("clusters.csv", clusters.text());

    sink.gnuplot(
        "set datafile separator ','\n"
        "set xlabel 'index'\n"
        "set ylabel 'eigenvalue'\n"
        "set key off\n"
        "plot 'spectrum.csv' every ::1 using 1:2 with points pt 7\n");
  }

  if (emit.json_out) {
    json arr = json::array();
    for (const Cluster& c : rep.clusters)
      arr.push_back({{"center", c.center}, {"count", c.count}, {"spread", c.spread}});
    json out;
    out["k"] = eo.k;
    out["tol"] = eo.tol;
    out["seed"] = eo.seed;
    out["omega_c"] = rep.omega_c;
    out["flux_count"] = rep.flux_count;
    out["bulk_count"] = rep.bulk_count;
    out["lowest_matches_flux"] = rep.lowest_matches_flux;
    out["lowest_eigenvalue"] = pairs.empty() ? json() : json(pairs.front().value);
    out["first_gap"] = rep.clusters.size() >= 2
                           ? json(rep.clusters[1].center - rep.clusters[0].center)
                           : json();
    out["clusters"] = arr;
    out["eigenvalues"] = rep.eigenvalues;
    out["residuals"] = rep.residuals;
    sink.write_text("report.json", dump2(out));
  }

  if (emit.snapshots) {
    const std::size_t n = std::min<std::size_t>(pairs.size(), 4);
    for (std::size_t i = 0; i < n; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "mode_%zu.slpf", i);
      sink.write_snapshot(name, pairs[i].vector);
    }
  }

  char b[200];
  std::snprintf(b, sizeof b,
                "landau: k=%zu lowest=%.10g flux=%.6g bulk=%zu clusters=%zu matches=%s\n",
                pairs.size(), pairs.empty() ? kNan : pairs.front().value, rep.flux_count,
                rep.bulk_count, rep.clusters.size(),
                rep.lowest_matches_flux ? "yes" : "no");
  return b;
}

// ------------------------------------------------------------------ evolve ---

std::string run_evolve(const json& root, ArtifactSink& sink, const EmitFlags& emit) {
  check_keys(root, "$", {"scenario", "output", "model", "initial", "numerics"});

  const json& mj = member(root, "$", "model");
  require_object(mj, "$.model");
  const std::string type = str(mj, "$.model", "type");

  const json& nb = member(root, "$", "numerics");
  check_keys(nb, "$.numerics", {"grid", "dt", "t_final", "integrator", "sample_every",
                                "leak_check_every", "leak_tol"});
  const TransverseGrid grid = grid_from(member(nb, "$.numerics", "grid"), "$.numerics.grid");
  const double t_final = num(nb, "$.numerics", "t_final");

  ComplexField2D initial = initial_from(member(root, "$", "initial"), "$.initial", grid);

  if (type == "effective") {
    check_keys(mj, "$.model",
               {"type", "kinetic_coeff", "omega_rot", "delta_term", "potential",
                "include_rot_loss", "include_mass_correction", "gamma_rot_re",
                "gamma_rot_im", "kz", "kz_phase_rate", "kz_damp_rate"});
    const EffectiveConfig cfg = effective_from(mj, "$.model");

    EvolveOptions eo;
    eo.dt = num_or(nb, "$.numerics", "dt", 0.0);
    eo.integrator = integrator_from(str_or(nb, "$.numerics", "integrator", "strang"),
                                    "$.numerics.integrator");
    eo.sample_every = std::size_t(uint_or(nb, "$.numerics", "sample_every", eo.sample_every));
    eo.leak_check_every =
        std::size_t(uint_or(nb, "$.numerics", "leak_check_every", eo.leak_check_every));
    eo.leak_tol = num_or(nb, "$.numerics", "leak_tol", eo.leak_tol);

    if (emit.snapshots) sink.write_snapshot("initial.slpf", initial);
    const Trajectory tr = evolve(cfg, initial, t_final, eo);
    if (emit.snapshots) sink.write_snapshot("final.slpf", initial);

    if (emit.csv) {
      Csv csv("t,norm2,x,y,lz,lz2,energy");
      for (const TrajectorySample& s : tr.samples)
        csv.row({s.t, s.norm2, s.x, s.y, s.lz, s.lz2, s.energy});
      sink.write_text("trajectory.csv", csv.text());
      sink.gnuplot(
          "set datafile separator ','\n"
          "set xlabel 't'\n"
          "set ylabel 'norm^2'\n"
          "set key off\n"
          "plot 'trajectory.csv' every ::1 using 1:2 with lines\n");
    }

    const TrajectorySample& last = tr.samples.back();
    if (emit.json_out) {
      json out;
      out["model"] = "effective";
      out["steps"] = tr.steps;
      out["dt"] = tr.dt;
      out["t_final"] = t_final;
      out["samples"] = tr.samples.size();
      out["final_norm2"] = last.norm2;
      out["final_energy"] = last.energy;
      sink.write_text("evolve.json", dump2(out));
    }

    char b[160];
    std::snprintf(b, sizeof b, "evolve[effective]: steps=%zu dt=%.6g final_norm2=%.10g\n",
                  tr.steps, tr.dt, last.norm2);
    return b;
  }

  if (type == "full") {
    check_keys(mj, "$.model", {"type", "c_over_2kp", "c_light", "sin2_theta", "nu", "delta",
                               "gamma", "detuning", "gsq_n", "kz", "strong_coupling"});
    if (find(nb, "integrator"))
      bad("$.numerics.integrator", "applies to the effective model only");
    const FullConfig cfg = full_from(mj, "$.model");

    FullEvolveOptions fo;
    fo.dt = num_or(nb, "$.numerics", "dt", 0.0);
    fo.sample_every = std::size_t(uint_or(nb, "$.numerics", "sample_every", fo.sample_every));
    fo.leak_check_every =
        std::size_t(uint_or(nb, "$.numerics", "leak_check_every", fo.leak_check_every));
    fo.leak_tol = num_or(nb, "$.numerics", "leak_tol", fo.leak_tol);

    FullState s = adiabatic_init(cfg, initial);
    if (emit.snapshots) sink.write_snapshot("initial.slpf", s.psi);
    const FullTrajectory tr = evolve_full(cfg, s, t_final, fo);
    if (emit.snapshots) sink.write_snapshot("final.slpf", s.psi);

    if (emit.csv) {
      Csv csv("t,norm2_psi,norm2_phi1,norm2_phi2,x,y");
      for (const FullSample& smp : tr.samples)
        csv.row({smp.t, smp.norm2_psi, smp.norm2_phi1, smp.norm2_phi2, smp.x, smp.y});
      sink.write_text("trajectory.csv", csv.text());
      sink.gnuplot(
          "set datafile separator ','\n"
          "set xlabel 't'\n"
          "set ylabel 'norm^2'\n"
          "set key off\n"
          "plot 'trajectory.csv' every ::1 using 1:2 with lines\n");
    }

    const FullSample& last = tr.samples.back();
    if (emit.json_out) {
      json out;
      out["model"] = "full";
      out["steps"] = tr.steps;
      out["dt"] = tr.dt;
      out["t_final"] = t_final;
      out["samples"] = tr.samples.size();
      out["final_norm2_psi"] = last.norm2_psi;
      out["final_norm2_phi1"] = last.norm2_phi1;
      out["final_norm2_phi2"] = last.norm2_phi2;
      sink.write_text("evolve.json", dump2(out));
    }

    char b[160];
    std::snprintf(b, sizeof b, "evolve[full]: steps=%zu dt=%.6g final_norm2_psi=%.10g\n",
                  tr.steps, tr.dt, last.norm2_psi);
    return b;
  }

  bad("$.model.type", "must be 'effective' or 'full'");
}

// --------------------------------------------------------------- cyclotron ---

std::string run_cyclotron(const json& root, ArtifactSink& sink, const EmitFlags& emit) {
  check_keys(root, "$", {"scenario", "output", "model", "initial", "numerics", "fit"});

  const json& mj = member(root, "$", "model");
  check_keys(mj, "$.model",
             {"kinetic_coeff", "omega_rot", "delta_term", "potential", "include_rot_loss",
              "include_mass_correction", "gamma_rot_re", "gamma_rot_im", "kz",
              "kz_phase_rate", "kz_damp_rate"});
  const EffectiveConfig cfg = effective_from(mj, "$.model");

  const json& nb = member(root, "$", "numerics");
  check_keys(nb, "$.numerics", {"grid", "dt", "t_final", "integrator", "sample_every",
                                "leak_check_every", "leak_tol"});
  const TransverseGrid grid = grid_from(member(nb, "$.numerics", "grid"), "$.numerics.grid");
  const double t_final = num(nb, "$.numerics", "t_final");

  EvolveOptions eo;
  eo.dt = num_or(nb, "$.numerics", "dt", 0.0);
  eo.integrator = integrator_from(str_or(nb, "$.numerics", "integrator", "strang"),
                                  "$.numerics.integrator");
  eo.sample_every = std::size_t(uint_or(nb, "$.numerics", "sample_every", eo.sample_every));
  eo.leak_check_every =
      std::size_t(uint_or(nb, "$.numerics", "leak_check_every", eo.leak_check_every));
  eo.leak_tol = num_or(nb, "$.numerics", "leak_tol", eo.leak_tol);

  CyclotronFitOptions fopt;
  if (const json* fb = find(root, "fit")) {
    check_keys(*fb, "$.fit", {"min_radius", "straight_line_factor"});
    fopt.min_radius = num_or(*fb, "$.fit", "min_radius", fopt.min_radius);
    fopt.straight_line_factor =
        num_or(*fb, "$.fit", "straight_line_factor", fopt.straight_line_factor);
  }

  ComplexField2D f = initial_from(member(root, "$", "initial"), "$.initial", grid);
  const Trajectory tr = evolve(cfg, f, t_final, eo);
  const CyclotronFit fit = fit_cyclotron(tr.samples, fopt);

  if (emit.csv) {
    Csv csv("t,x,y");
    for (const TrajectorySample& s : tr.samples) csv.row({s.t, s.x, s.y});
    sink.write_text("orbit.csv", csv.text());
    sink.gnuplot(
        "set datafile separator ','\n"
        "set xlabel 'x'\n"
        "set ylabel 'y'\n"
        "set size ratio -1\n"
        "set key off\n"
        "plot 'orbit.csv' every ::1 using 2:3 with lines\n");
  }

  if (emit.json_out) {
    json out;
    out["center_x"] = fit.center_x;
    out["center_y"] = fit.center_y;
    out["radius"] = fit.radius;
    out["omega"] = fit.omega;
    out["period"] = fit.omega != 0.0 && !fit.straight_line
                        ? json(2.0 * M_PI / std::abs(fit.omega))
                        : json();
    out["residual_rms"] = fit.residual_rms;
    out["residual_over_radius"] =
        fit.radius > 0.0 ? json(fit.residual_rms / fit.radius) : json();
    out["straight_line"] = fit.straight_line;
    out["steps"] = tr.steps;
    out["dt"] = tr.dt;
    sink.write_text("fit.json", dump2(out));
  }

  char b[200];
  std::snprintf(b, sizeof b,
                "cyclotron: radius=%.10g omega=%.10g residual/radius=%.3g%s\n", fit.radius,
                fit.omega, fit.radius > 0.0 ? fit.residual_rms / fit.radius : kNan,
                fit.straight_line ? " (straight line)" : "");
  return b;
}

// ------------------------------------------------------------ rotate-image ---

std::vector<double> storage_times(const json& sb) {
  check_keys(sb, "$.storage", {"times", "count", "t_max"});
  std::vector<double> ts;
  if (const json* times = find(sb, "times")) {
    if (find(sb, "count") || find(sb, "t_max"))
      bad("$.storage", "give either times or count + t_max, not both");
    if (!times->is_array() || times->empty())
      bad("$.storage.times", "must be a nonempty array");
    double prev = 0.0;
    for (std::size_t i = 0; i < times->size(); ++i) {
      char p[48];
      std::snprintf(p, sizeof p, "$.storage.times[%zu]", i);
      const double t = as_num((*times)[i], p);
      if (!(t > prev)) bad(p, "times must be positive and strictly ascending");
      ts.push_back(t);
      prev = t;
    }
  } else {
    const std::uint64_t count = as_uint(member(sb, "$.storage", "count"), "$.storage.count");
    const double t_max = num(sb, "$.storage", "t_max");
    if (count == 0) bad("$.storage.count", "must be >= 1");
    if (count > 10000) bad("$.storage.count", "more than 10000 storage times");
    if (!(t_max > 0.0)) bad("$.storage.t_max", "must be > 0");
    for (std::uint64_t i = 1; i <= count; ++i)
      ts.push_back(t_max * double(i) / double(count));
  }
  return ts;
}

// Rotation equivalence: in the co-rotating gauge the stored image evolves
// freely except for the omega l_z term, so the retrieved image must equal the
// freely evolved one rotated by omega * t.  Both tracks are propagated and the
// recovered angle is fitted against the storage time.
std::string run_rotate_image(const json& root, ArtifactSink& sink, const EmitFlags& emit) {
  check_keys(root, "$",
             {"scenario", "output", "medium", "geometry", "image", "storage", "numerics"});
  const MediumParams med = medium_from(member(root, "$", "medium"), "$.medium");
  const RotationGeometry geo = geometry_from(member(root, "$", "geometry"), "$.geometry");
  const DerivedQuantities d = derive_quantities(med, geo);
  const double omega = geo.nu * d.angles.sin2_theta;
  const double kinetic = d.v_group / (2.0 * med.k_probe());

  const json& nb = member(root, "$", "numerics");
  check_keys(nb, "$.numerics", {"grid", "dt", "leak_tol"});
  const TransverseGrid grid = grid_from(member(nb, "$.numerics", "grid"), "$.numerics.grid");

  const json& ij = member(root, "$", "image");
  check_keys(ij, "$.image", {"i", "j", "sigma"});
  const std::uint64_t oi = uint_or(ij, "$.image", "i", 1);
  const std::uint64_t oj = uint_or(ij, "$.image", "j", 0);
  if (oi > 16 || oj > 16) bad("$.image", "hermite order out of range [0, 16]");
  const double sigma = num(ij, "$.image", "sigma");

  const std::vector<double> times = storage_times(member(root, "$", "storage"));

  EvolveOptions eo;
  eo.dt = num_or(nb, "$.numerics", "dt", 0.0);
  eo.leak_tol = num_or(nb, "$.numerics", "leak_tol", eo.leak_tol);
  RotationSearchOptions rso;
  rso.leak_tol = eo.leak_tol;

  EffectiveConfig rotating;
  rotating.kinetic_coeff = kinetic;
  rotating.omega_rot = omega;
  rotating.potential = PotentialMode::Full;
  rotating.validate();
  EffectiveConfig free_cfg = rotating;
  free_cfg.omega_rot = 0.0;

  const ComplexField2D image = make_hermite_gaussian(grid, int(oi), int(oj), sigma);
  ComplexField2D stored = image;
  ComplexField2D reference = image;

  Csv csv("t,angle,overlap,angle_folded");
  std::vector<double> ts{0.0};
  std::vector<double> angles{0.0};
  double prev = 0.0;
  double min_overlap = 1.0;
  for (const double target : times) {
    evolve(rotating, stored, target - stored.time, eo);
    evolve(free_cfg, reference, target - reference.time, eo);
    const RotationEstimate est = image_rotation_angle(reference, stored, rso);
    // The estimate folds into one period (pi for two-fold symmetric images);
    // unwrap against the previous time so the fitted trend stays linear.  The
    // storage times must therefore step by less than half a period.
    const double period = est.twin_folded ? M_PI : 2.0 * M_PI;
    const double angle = est.angle + period * std::round((prev - est.angle) / period);
    prev = angle;
    min_overlap = std::min(min_overlap, est.overlap);
    csv.row({stored.time, angle, est.overlap, est.angle});
    ts.push_back(stored.time);
    angles.push_back(angle);
  }

  // Least-squares line through (0, 0) and the measured angles.
  const std::size_t n = ts.size();
  double st = 0.0, sa = 0.0, stt = 0.0, sta = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    st += ts[i];
    sa += angles[i];
    stt += ts[i] * ts[i];
    sta += ts[i] * angles[i];
  }
  const double det = double(n) * stt - st * st;
  const double slope = det > 0.0 ? (double(n) * sta - st * sa) / det : kNan;
  const double intercept = det > 0.0 ? (sa - slope * st) / double(n) : kNan;

  if (emit.csv) {
    sink.write_text("rotation.csv", csv.text());
    sink.gnuplot(
        "set datafile separator ','\n"
        "set xlabel 'storage time'\n"
        "set ylabel 'rotation angle'\n"
        "set key off\n"
        "plot 'rotation.csv' every ::1 using 1:2 with linespoints pt 7\n");
  }

  if (emit.json_out) {
    json out;
    out["omega_rot"] = omega;
    out["kinetic_coeff"] = kinetic;
    out["slope"] = slope;
    out["intercept"] = intercept;
    out["expected_slope"] = omega;
    out["relative_slope_error"] =
        omega != 0.0 ? json(std::abs(slope - omega) / std::abs(omega)) : json();
    out["min_overlap"] = min_overlap;
    out["points"] = times.size();
    sink.write_text("rotation.json", dump2(out));
  }

  char b[200];
  std::snprintf(b, sizeof b,
                "rotate-image: slope=%.10g expected=%.10g min_overlap=%.6f points=%zu\n",
                slope, omega, min_overlap, times.size());
  return b;
}

// ---------------------------------------------------------------- validate ---

std::string run_validate(const json& root, ArtifactSink& sink, const EmitFlags& emit) {
  check_keys(root, "$", {"scenario", "output", "model", "initial", "scan", "numerics"});

  const json& mj = member(root, "$", "model");
  check_keys(mj, "$.model", {"c_over_2kp", "c_light", "sin2_theta", "nu", "delta", "gamma",
                             "detuning", "gsq_n", "kz", "strong_coupling"});
  const FullConfig base = full_from(mj, "$.model");

  const json& nb = member(root, "$", "numerics");
  check_keys(nb, "$.numerics", {"grid", "t_final", "checkpoints", "leak_tol"});
  const TransverseGrid grid = grid_from(member(nb, "$.numerics", "grid"), "$.numerics.grid");

  CompareModelsOptions co;
  co.t_final = num_or(nb, "$.numerics", "t_final", co.t_final);
  co.checkpoints = std::size_t(uint_or(nb, "$.numerics", "checkpoints", co.checkpoints));
  co.leak_tol = num_or(nb, "$.numerics", "leak_tol", co.leak_tol);

  const json& sj = member(root, "$", "scan");
  check_keys(sj, "$.scan", {"gsqn_min", "gsqn_max", "points"});
  CompareScan cs;
  cs.gsqn_min = num(sj, "$.scan", "gsqn_min");
  cs.gsqn_max = num(sj, "$.scan", "gsqn_max");
  cs.points = std::size_t(uint_or(sj, "$.scan", "points", cs.points));

  const ComplexField2D psi0 = initial_from(member(root, "$", "initial"), "$.initial", grid);
  const CompareResult r = compare_models(base, psi0, cs, co);

  if (emit.csv) {
    Csv csv("gsq_n,epsilon,deviation");
    for (const ComparePoint& p : r.points) csv.row({p.gsq_n, p.epsilon, p.deviation});
    sink.write_text("compare.csv", csv.text());
    sink.gnuplot(
        "set datafile separator ','\n"
        "set logscale xy\n"
        "set xlabel 'epsilon'\n"
        "set ylabel 'deviation'\n"
        "set key off\n"
        "plot 'compare.csv' every ::1 using 2:3 with linespoints pt 7\n");
  }

  if (emit.json_out) {
    json pts = json::array();
    for (const ComparePoint& p : r.points)
      pts.push_back(
          {{"gsq_n", p.gsq_n}, {"epsilon", p.epsilon}, {"deviation", p.deviation}});
    json out;
    out["slope"] = r.slope;
    out["points"] = pts;
    out["t_final"] = co.t_final;
    out["checkpoints"] = co.checkpoints;
    sink.write_text("compare.json", dump2(out));
  }

  char b[160];
  std::snprintf(b, sizeof b, "validate: slope=%.4f points=%zu eps=[%.3g, %.3g]\n", r.slope,
                r.points.size(), r.points.empty() ? kNan : r.points.front().epsilon,
                r.points.empty() ? kNan : r.points.back().epsilon);
  return b;
}

// -------------------------------------------------------------------- scan ---

struct ParamRef {
  double MediumParams::* med = nullptr;
  double RotationGeometry::* geo = nullptr;
  bool n_polaritons = false;
};

const std::map<std::string, ParamRef>& param_registry() {
  static const std::map<std::string, ParamRef> reg = {
      {"medium.coupling_gsqrt_n", {&MediumParams::coupling_gsqrt_n, nullptr, false}},
      {"medium.rabi_plus", {&MediumParams::rabi_plus, nullptr, false}},
      {"medium.rabi_minus", {&MediumParams::rabi_minus, nullptr, false}},
      {"medium.gamma", {&MediumParams::gamma, nullptr, false}},
      {"medium.delta_single", {&MediumParams::delta_single, nullptr, false}},
      {"medium.delta_two_photon", {&MediumParams::delta_two_photon, nullptr, false}},
      {"medium.probe_wavelength", {&MediumParams::probe_wavelength, nullptr, false}},
      {"medium.speed_of_light", {&MediumParams::speed_of_light, nullptr, false}},
      {"geometry.nu", {nullptr, &RotationGeometry::nu, false}},
      {"geometry.radius", {nullptr, &RotationGeometry::radius, false}},
      {"geometry.medium_length", {nullptr, &RotationGeometry::medium_length, false}},
      {"geometry.polariton_length", {nullptr, &RotationGeometry::polariton_length, false}},
      {"filling.n_polaritons", {nullptr, nullptr, true}},
  };
  return reg;
}

const std::vector<std::string>& column_registry() {
  static const std::vector<std::string> cols = {
      "theta",        "phi",          "cos2_theta", "sin2_theta",   "v_group",
      "m_perp",       "b_field",      "omega_c",    "v_rot",        "l_abs",
      "m_par",        "d_diff",       "gamma_rot_re", "gamma_rot_im", "l_mag",
      "degeneracy",   "nu_min",       "nu_max_scale", "margin_low", "margin_high",
      "loss_ratio",   "feasible",     "filling_factor"};
  return cols;
}

bool feasibility_column(const std::string& name) {
  return name == "nu_min" || name == "nu_max_scale" || name == "margin_low" ||
         name == "margin_high" || name == "loss_ratio" || name == "feasible";
}

double column_value(const std::string& name, const DerivedQuantities& d,
                    const FeasibilityReport* fr, const double* fill) {
  const auto opt = [](const std::optional<double>& v) { return v ? *v : kNan; };
  if (name == "theta") return d.angles.theta;
  if (name == "phi") return d.angles.phi;
  if (name == "cos2_theta") return d.angles.cos2_theta;
  if (name == "sin2_theta") return d.angles.sin2_theta;
  if (name == "v_group") return d.v_group;
  if (name == "m_perp") return d.m_perp;
  if (name == "b_field") return d.b_field;
  if (name == "omega_c") return d.omega_c;
  if (name == "v_rot") return d.v_rot;
  if (name == "l_abs") return opt(d.l_abs);
  if (name == "m_par") return opt(d.m_par);
  if (name == "d_diff") return opt(d.d_diff);
  if (name == "gamma_rot_re") return d.gamma_rot ? d.gamma_rot->real() : kNan;
  if (name == "gamma_rot_im") return d.gamma_rot ? d.gamma_rot->imag() : kNan;
  if (name == "l_mag") return opt(d.l_mag);
  if (name == "degeneracy") return opt(d.degeneracy);
  if (name == "nu_min") return fr ? fr->nu_min : kNan;
  if (name == "nu_max_scale") return fr ? fr->nu_max_scale : kNan;
  if (name == "margin_low") return fr ? fr->margin_low : kNan;
  if (name == "margin_high") return fr ? fr->margin_high : kNan;
  if (name == "loss_ratio") return fr ? fr->loss_ratio : kNan;
  if (name == "feasible") return fr ? (fr->feasible ? 1.0 : 0.0) : kNan;
  if (name == "filling_factor") return fill ? *fill : kNan;
  bad("$.sweep.columns", "unknown column '" + name + "'");
}

struct Axis {
  std::string name;
  ParamRef ref;
  double from = 0.0;
  double to = 0.0;
  std::size_t points = 0;
  bool log = false;
};

Axis axis_from(const json& j, const std::string& path) {
  Axis a;
  a.name = str(j, path, "parameter");
  const auto it = param_registry().find(a.name);
  if (it == param_registry().end())
    bad(path + ".parameter", "unknown or non-scalar parameter '" + a.name + "'");
  a.ref = it->second;
  a.from = num(j, path, "from");
  a.to = num(j, path, "to");
  a.points = std::size_t(as_uint(member(j, path, "points"), path + ".points"));
  a.log = flag_or(j, path, "log", false);
  if (a.points == 0) bad(path + ".points", "sweep is empty");
  if (a.points > 1 && a.from == a.to) bad(path, "sweep range is empty (from == to)");
  if (a.log && !(a.from > 0.0 && a.to > 0.0))
    bad(path, "log spacing needs positive endpoints");
  return a;
}

double axis_value(const Axis& a, std::size_t i) {
  if (a.points <= 1) return a.from;
  const double t = double(i) / double(a.points - 1);
  return a.log ? a.from * std::pow(a.to / a.from, t) : a.from + (a.to - a.from) * t;
}

void apply_param(const ParamRef& r, double v, MediumParams& m, RotationGeometry& g,
                 double& npol) {
  if (r.med)
    m.*(r.med) = v;
  else if (r.geo)
    g.*(r.geo) = v;
  else
    npol = v;
}

struct ScanSpec {
  MediumParams medium;
  RotationGeometry geometry;
  double n_polaritons = kNan;
  FillingConvention convention = FillingConvention::PaperLiteral;
  double margin = 10.0;
  std::vector<Axis> axes;
  std::vector<std::string> columns;
  bool want_fr = false;
  bool want_fill = false;
};

// One row of the table.  Quantities that are undefined at a sweep point (zero
// magnetic field, no losses) come back as nan instead of aborting the scan.
std::vector<double> scan_row(const ScanSpec& spec, std::size_t r, std::size_t n2) {
  MediumParams m = spec.medium;
  RotationGeometry g = spec.geometry;
  double npol = spec.n_polaritons;
  std::vector<double> out;
  out.reserve(spec.axes.size() + spec.columns.size());
  if (spec.axes.size() == 2) {
    const double v0 = axis_value(spec.axes[0], r / n2);
    const double v1 = axis_value(spec.axes[1], r % n2);
    apply_param(spec.axes[0].ref, v0, m, g, npol);
    apply_param(spec.axes[1].ref, v1, m, g, npol);
    out.push_back(v0);
    out.push_back(v1);
  } else {
    const double v0 = axis_value(spec.axes[0], r);
    apply_param(spec.axes[0].ref, v0, m, g, npol);
    out.push_back(v0);
  }
  m.validate();
  g.validate();
  const DerivedQuantities d = derive_quantities(m, g);
  std::optional<FeasibilityReport> fr;
  if (spec.want_fr) {
    try {
      fr = adiabaticity_window(d, spec.margin);
    } catch (const Error& e) {
      if (e.code() != Err::UndefinedField) throw;
    }
  }
  std::optional<double> fill;
  if (spec.want_fill) {
    try {
      fill = filling_factor(d, npol, spec.convention);
    } catch (const Error& e) {
      if (e.code() != Err::UndefinedField) throw;
    }
  }
  for (const std::string& c : spec.columns)
    out.push_back(column_value(c, d, fr ? &*fr : nullptr, fill ? &*fill : nullptr));
  return out;
}

std::string run_scan(const json& root, ArtifactSink& sink, const EmitFlags& emit,
                     int threads) {
  check_keys(root, "$",
             {"scenario", "output", "medium", "geometry", "filling", "feasibility", "sweep"});

  ScanSpec spec;
  spec.medium = medium_from(member(root, "$", "medium"), "$.medium");
  spec.geometry = geometry_from(member(root, "$", "geometry"), "$.geometry");

  if (const json* fl = find(root, "filling")) {
    check_keys(*fl, "$.filling", {"n_polaritons", "convention"});
    spec.n_polaritons = num_or(*fl, "$.filling", "n_polaritons", kNan);
    spec.convention = convention_from(
        str_or(*fl, "$.filling", "convention", "paper-literal"), "$.filling.convention");
  }
  if (const json* fb = find(root, "feasibility")) {
    check_keys(*fb, "$.feasibility", {"margin"});
    spec.margin = num_or(*fb, "$.feasibility", "margin", spec.margin);
  }

  const json& sw = member(root, "$", "sweep");
  check_keys(sw, "$.sweep", {"parameter", "from", "to", "points", "log", "second", "columns"});
  spec.axes.push_back(axis_from(sw, "$.sweep"));
  if (const json* second = find(sw, "second")) {
    check_keys(*second, "$.sweep.second", {"parameter", "from", "to", "points", "log"});
    spec.axes.push_back(axis_from(*second, "$.sweep.second"));
    if (spec.axes[1].name == spec.axes[0].name)
      bad("$.sweep.second.parameter", "same parameter swept twice");
  }

  std::size_t total = spec.axes[0].points;
  const std::size_t n2 = spec.axes.size() == 2 ? spec.axes[1].points : 1;
  total *= n2;
  if (total > 10000) bad("$.sweep", "more than 10000 points");

  if (const json* cols = find(sw, "columns")) {
    if (!cols->is_array() || cols->empty())
      bad("$.sweep.columns", "must be a nonempty array of column names");
    for (std::size_t i = 0; i < cols->size(); ++i) {
      char p[40];
      std::snprintf(p, sizeof p, "$.sweep.columns[%zu]", i);
      const std::string name = as_str((*cols)[i], p);
      const auto& reg = column_registry();
      if (std::find(reg.begin(), reg.end(), name) == reg.end())
        bad(p, "unknown column '" + name + "'");
      spec.columns.push_back(name);
    }
  } else {
    spec.columns = {"v_group", "omega_c", "l_mag", "degeneracy",
                    "nu_min",  "nu_max_scale", "feasible"};
  }
  for (const std::string& c : spec.columns) {
    if (feasibility_column(c)) spec.want_fr = true;
    if (c == "filling_factor") spec.want_fill = true;
  }
  const bool sweeps_npol =
      std::any_of(spec.axes.begin(), spec.axes.end(),
                  [](const Axis& a) { return a.ref.n_polaritons; });
  if (spec.want_fill && !sweeps_npol && !std::isfinite(spec.n_polaritons))
    bad("$.sweep.columns",
        "filling_factor needs a filling block or a filling.n_polaritons sweep");
  if (sweeps_npol) spec.want_fill = true;
  if (sweeps_npol &&
      std::find(spec.columns.begin(), spec.columns.end(), "filling_factor") ==
          spec.columns.end())
    spec.columns.push_back("filling_factor");

  // Rows are indexed by r = i * n2 + j and each worker takes every T-th row,
  // so the assembled table never depends on the thread count.
  std::vector<std::vector<double>> rows(total);
  struct WorkerError {
    std::size_t row;
    Err code;
    std::string message;
  };
  std::vector<std::optional<WorkerError>> errors;
  const int T = std::max(1, std::min<int>(threads, int(std::min<std::size_t>(
                                                       total, std::size_t(INT_MAX)))));
  errors.assign(std::size_t(T), std::nullopt);
  const auto worker = [&](int tid) {
    for (std::size_t r = std::size_t(tid); r < total; r += std::size_t(T)) {
      try {
        rows[r] = scan_row(spec, r, n2);
      } catch (const Error& e) {
        if (!errors[std::size_t(tid)]) errors[std::size_t(tid)] = {r, e.code(), e.what()};
        return;
      } catch (const std::exception& e) {
        if (!errors[std::size_t(tid)])
          errors[std::size_t(tid)] = {r, Err::NumericsFailure, e.what()};
        return;
      }
    }
  };
  if (T == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(std::size_t(T));
    for (int t = 0; t < T; ++t) pool.emplace_back(worker, t);
    for (std::thread& th : pool) th.join();
  }
  const WorkerError* first = nullptr;
  for (const auto& e : errors)
    if (e && (!first || e->row < first->row)) first = &*e;
  if (first) throw Error(first->code, first->message);

  std::string header;
  for (const Axis& a : spec.axes) {
    if (!header.empty()) header += ',';
    header += a.name;
  }
  for (const std::string& c : spec.columns) header += ',' + c;
  Csv csv(header.c_str());
  for (const std::vector<double>& r : rows) csv.row(r);

  if (emit.csv) {
    sink.write_text("scan.csv", csv.text());
    sink.gnuplot(
        "set datafile separator ','\n"
        "set xlabel '" + spec.axes[0].name + "'\n" +
        (spec.axes[0].log ? "set logscale x\n" : "") +
        "set key off\n"
        "plot 'scan.csv' every ::1 using 1:" + std::to_string(spec.axes.size() + 1) +
        " with lines\n");
  }

  if (emit.json_out) {
    json axes = json::array();
    for (const Axis& a : spec.axes)
      axes.push_back({{"parameter", a.name},
                      {"from", a.from},
                      {"to", a.to},
                      {"points", a.points},
                      {"log", a.log}});
    json out;
    out["points"] = total;
    out["axes"] = axes;
    out["columns"] = spec.columns;
    sink.write_text("scan.json", dump2(out));
  }

  char b[160];
  std::snprintf(b, sizeof b, "scan: %zu points over %s%s%s\n", total,
                spec.axes[0].name.c_str(), spec.axes.size() == 2 ? " x " : "",
                spec.axes.size() == 2 ? spec.axes[1].name.c_str() : "");
  return b;
}

}  // namespace

// ---------------------------------------------------------------- dispatch ---

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("ROTAPOL_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end && *end == '\0' && v > 0 && v <= 4096) return int(v);
  }
  return 1;
}

ScenarioReport run_scenario_json(const std::string& config_text,
                                 const ScenarioOptions& opts) {
  json root;
  try {
    root = json::parse(config_text);
  } catch (const json::exception& e) {
    fail(Err::ConfigInvalid, std::string("config is not valid JSON: ") + e.what());
  }
  require_object(root, "$");
  const std::string scen = str(root, "$", "scenario");

  const OutputSpec out = output_from(root, opts);
  ArtifactSink sink(out.dir, opts.gnuplot);

  ScenarioReport rep;
  rep.scenario = scen;
  rep.out_dir = sink.dir();
  try {
    if (scen == "derive")
      rep.text = run_derive(root, sink, out.emit);
    else if (scen == "landau")
      rep.text = run_landau(root, sink, out.emit);
    else if (scen == "evolve")
      rep.text = run_evolve(root, sink, out.emit);
    else if (scen == "cyclotron")
      rep.text = run_cyclotron(root, sink, out.emit);
    else if (scen == "rotate-image")
      rep.text = run_rotate_image(root, sink, out.emit);
    else if (scen == "validate")
      rep.text = run_validate(root, sink, out.emit);
    else if (scen == "scan")
      rep.text = run_scan(root, sink, out.emit, resolve_threads(opts.threads));
    else
      bad("$.scenario", "unknown scenario '" + scen + "'");
  } catch (const Error& e) {
    // The exit contract promises a diagnostic artifact for numerics failures;
    // a second failure while writing it must not mask the original error.
    if (err_exit_code(e.code()) == 3) {
      try {
        json diag;
        diag["error"] = err_name(e.code());
        diag["exit_code"] = 3;
        diag["message"] = e.what();
        diag["scenario"] = scen;
        sink.write_text("error.json", dump2(diag));
        sink.finish(scen);
      } catch (...) {
      }
    }
    throw;
  }
  rep.artifacts = sink.finish(scen);
  return rep;
}

ScenarioReport run_scenario_file(const std::filesystem::path& config_path,
                                 const ScenarioOptions& opts) {
  std::ifstream in(config_path, std::ios::binary);
  if (!in) fail(Err::IoError, "cannot open config '" + config_path.string() + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(Err::IoError, "cannot read config '" + config_path.string() + "'");
  return run_scenario_json(text, opts);
}

}  // namespace rotapol
