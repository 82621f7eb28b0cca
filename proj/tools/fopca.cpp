// fopca: command-line front end for fixed-order PCA estimation, spectral
// diagnostics, deformed Marchenko-Pastur densities and Monte Carlo tables.
//
// Exit codes: 0 success, 2 invalid configuration or input, 3 numeric failure.

#include <openssl/evp.h>
#include <unistd.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fopca/fopca.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace fopca;

namespace {

constexpr const char *kVersion = "0.1.0";
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

// Raised for malformed specs and flags; maps to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_hex(const std::string &bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return os.str();
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

json parse_json(const std::string &text, const std::string &what) {
  try {
    return json::parse(text);
  } catch (const json::exception &e) {
    throw ConfigError(what + " is not valid JSON: " + e.what());
  }
}

template <class T>
T get_or(const json &j, const char *key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception &e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

/// Output directory with all-or-nothing semantics: files are written to a
/// staging directory inside `--out` and moved into place by commit().
class OutputDir {
 public:
  explicit OutputDir(fs::path root) : root_(std::move(root)) {
    created_root_ = !fs::exists(root_);
    fs::create_directories(root_);
    staging_ = root_ / (".partial-" + std::to_string(::getpid()));
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }
  OutputDir(const OutputDir &) = delete;
  OutputDir &operator=(const OutputDir &) = delete;

  ~OutputDir() {
    if (committed_) return;
    std::error_code ec;
    fs::remove_all(staging_, ec);
    if (created_root_) fs::remove_all(root_, ec);
  }

  fs::path path(const std::string &name) {
    const fs::path p = staging_ / name;
    fs::create_directories(p.parent_path());
    files_.push_back(name);
    return p;
  }

  const std::vector<std::string> &files() const { return files_; }

  void commit() {
    for (const auto &entry : fs::directory_iterator(staging_)) {
      const fs::path target = root_ / entry.path().filename();
      fs::remove_all(target);
      fs::rename(entry.path(), target);
    }
    fs::remove_all(staging_);
    committed_ = true;
  }

 private:
  fs::path root_;
  fs::path staging_;
  bool created_root_ = false;
  bool committed_ = false;
  std::vector<std::string> files_;
};

struct Manifest {
  std::string command;
  std::string digest;
  std::optional<std::uint64_t> seed;
  std::string started = utc_now();

  void write(OutputDir &out, const json &extra = json::object()) {
    json m;
    m["command"] = command;
    m["config_sha256"] = digest;
    m["seed"] = seed ? json(*seed) : json(nullptr);
    m["tool_version"] = kVersion;
    m["started_utc"] = started;
    m["finished_utc"] = utc_now();
    std::vector<std::string> outputs = out.files();
    outputs.push_back("manifest.json");
    std::sort(outputs.begin(), outputs.end());
    m["outputs"] = outputs;
    for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
    std::ofstream(out.path("manifest.json")) << m.dump(2) << '\n';
  }
};

void write_text(const fs::path &p, const std::string &text) {
  std::ofstream out(p);
  if (!out) throw Error(Errc::input, "cannot write " + p.string());
  out << text;
}

std::string csv_field(double v) { return io::format_double(v); }

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// ---------------------------------------------------------------- simulate

DgpConfig parse_dgp(const json &j) {
  if (!j.is_object()) throw ConfigError("'dgp' must be an object");
  DgpConfig c;
  c.n = get_or<Eigen::Index>(j, "n", c.n);
  c.t = get_or<Eigen::Index>(j, "t", c.t);
  c.r = get_or<Eigen::Index>(j, "r", c.r);
  c.alpha = get_or<double>(j, "alpha", c.alpha);
  c.beta = get_or<double>(j, "beta", c.beta);
  c.mu_g = get_or<double>(j, "mu_g", c.mu_g);
  c.mu_y = get_or<double>(j, "mu_y", c.mu_y);
  c.mu_z = get_or<double>(j, "mu_z", c.mu_z);
  c.fix_sigma_e = get_or<bool>(j, "fix_sigma_e", c.fix_sigma_e);
  c.endogeneity = get_or<double>(j, "endogeneity", c.endogeneity);
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
  c.replications = get_or<std::uint32_t>(j, "replications", c.replications);
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const std::vector<std::string> known = {
        "n", "t", "r", "alpha", "beta", "mu_g", "mu_y", "mu_z", "fix_sigma_e",
        "endogeneity", "seed", "replications"};
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      throw ConfigError("unknown dgp field '" + it.key() + "'");
    }
  }
  return c;
}

struct SimulateSpec {
  DgpConfig dgp;
  std::vector<Eigen::Index> r_list;
  std::string sweep_param = "t";
  std::vector<double> sweep_values;
};

SimulateSpec parse_simulate_spec(const json &j) {
  if (!j.is_object()) throw ConfigError("spec must be a JSON object");
  if (!j.contains("dgp")) throw ConfigError("spec needs a 'dgp' object");
  if (!j.contains("R_list")) throw ConfigError("spec needs 'R_list'");
  SimulateSpec s;
  s.dgp = parse_dgp(j.at("dgp"));
  s.r_list = get_or<std::vector<Eigen::Index>>(j, "R_list", {});
  if (s.r_list.empty()) throw ConfigError("'R_list' is empty");
  const std::string mode = get_or<std::string>(j, "mode", "ols");
  if (mode == "ols") s.dgp.mode = EstimatorMode::ols;
  else if (mode == "iv") s.dgp.mode = EstimatorMode::iv;
  else throw ConfigError("mode must be \"ols\" or \"iv\"");
  if (j.contains("sweep")) {
    const json &sw = j.at("sweep");
    s.sweep_param = get_or<std::string>(sw, "param", "t");
    s.sweep_values = get_or<std::vector<double>>(sw, "values", {});
    if (s.sweep_param != "t" && s.sweep_param != "alpha") {
      throw ConfigError("sweep.param must be \"t\" or \"alpha\"");
    }
    if (s.sweep_values.empty()) throw ConfigError("sweep.values is empty");
  } else {
    s.sweep_values = {static_cast<double>(s.dgp.t)};
  }
  return s;
}

DgpConfig cell_config(const SimulateSpec &s, double value) {
  DgpConfig c = s.dgp;
  if (s.sweep_param == "t") {
    if (value != std::floor(value) || value < 3) throw ConfigError("T values must be integers >= 3");
    c.t = static_cast<Eigen::Index>(value);
  } else {
    c.alpha = value;
  }
  return c;
}

std::string sweep_label(const SimulateSpec &s) { return s.sweep_param == "t" ? "T" : "alpha"; }

void dump_replication(OutputDir &out, const std::string &dir, const SyntheticDraw &d,
                      const ExperimentResult &res, std::uint32_t rep) {
  io::write_csv(out.path(dir + "/panel.csv"), d.data.panel.data());
  Matrix outcomes(d.data.t(), 3);
  outcomes << d.data.y, d.data.g, d.data.z;
  io::write_csv(out.path(dir + "/outcomes.csv"), outcomes, {"y", "g", "z"});
  std::ostringstream os;
  os << "R,beta_hat\n";
  for (std::size_t k = 0; k < res.working_dims.size(); ++k) {
    os << res.working_dims[k] << ',' << csv_field(res.beta_hat[k][rep]) << '\n';
  }
  write_text(out.path(dir + "/beta_hat.csv"), os.str());
}

int cmd_simulate(const std::string &spec_path, const fs::path &out_dir,
                 std::optional<std::uint32_t> reps, std::optional<std::uint64_t> seed,
                 unsigned threads, bool dump_t, std::uint32_t dump_data) {
  const std::string bytes = read_file(spec_path);
  SimulateSpec spec = parse_simulate_spec(parse_json(bytes, spec_path));
  if (reps) spec.dgp.replications = *reps;
  if (seed) spec.dgp.seed = *seed;
  for (double v : spec.sweep_values) cell_config(spec, v).validate();

  OutputDir out(out_dir);
  Manifest manifest{"simulate", sha256_hex(bytes), spec.dgp.seed};
  const std::string label = sweep_label(spec);
  std::ostringstream table;
  table << label << ",R,mean,sd,q025,q975,ks_p,reps,degenerate\n";
  std::ostringstream tdump;
  if (dump_t) tdump << label << ",rep,R,t\n";

  for (double value : spec.sweep_values) {
    const DgpConfig c = cell_config(spec, value);
    spdlog::info("simulate {}={} N={} T={} r={} alpha={} reps={}", label, value, c.n, c.t, c.r,
                 c.alpha, c.replications);
    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentResult res = run_experiment(c, spec.r_list, threads);
    spdlog::info("cell done in {:.2f}s",
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    for (std::size_t k = 0; k < res.working_dims.size(); ++k) {
      const McSummary &s = res.summaries[k];
      table << csv_field(value) << ',' << res.working_dims[k] << ',' << csv_field(s.mean) << ','
            << csv_field(s.sd) << ',' << csv_field(s.q025) << ',' << csv_field(s.q975) << ','
            << csv_field(s.ks_p) << ',' << s.n_reps << ',' << s.n_degenerate << '\n';
      if (s.n_degenerate > 0) {
        spdlog::warn("{} degenerate replications at {}={}, R={}", s.n_degenerate, label, value,
                     res.working_dims[k]);
      }
    }
    if (dump_t) {
      for (std::uint32_t rep = 0; rep < c.replications; ++rep) {
        for (std::size_t k = 0; k < res.working_dims.size(); ++k) {
          tdump << csv_field(value) << ',' << rep << ',' << res.working_dims[k] << ','
                << csv_field(res.t_values[k][rep]) << '\n';
        }
      }
    }
    for (std::uint32_t rep = 0; rep < std::min(dump_data, c.replications); ++rep) {
      dump_replication(out, "data/" + label + "_" + csv_field(value) + "/rep" + std::to_string(rep),
                       generate(c, rep), res, rep);
    }
  }
  write_text(out.path("table.csv"), table.str());
  if (dump_t) write_text(out.path("t_values.csv"), tdump.str());
  manifest.write(out, {{"replications", spec.dgp.replications}, {"threads", threads}});
  out.commit();
  std::cout << table.str();
  return kExitOk;
}

// ---------------------------------------------------------------- estimate

Panel load_panel(const fs::path &p, bool header) {
  if (p.extension() == ".bin") return io::read_panel_binary(p);
  return io::read_panel_csv(p, header);
}

std::vector<Eigen::Index> parse_grid(const std::string &text) {
  std::vector<Eigen::Index> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = io::trim(item);
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v < 0) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception &) {
      throw ConfigError("--grid entries must be non-negative integers, got '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("--grid is empty");
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

json result_json(const InferenceResult &r, const std::string &mode) {
  json j;
  j["mode"] = mode;
  j["beta_hat"] = number_or_null(r.beta_hat);
  j["se"] = number_or_null(r.se);
  j["t"] = number_or_null(r.t_stat);
  j["first_stage_t"] = number_or_null(r.first_stage_t);
  j["gamma_hat"] = number_or_null(r.gamma_hat);
  j["R"] = r.r_used;
  j["warnings"] = r.warnings;
  return j;
}

int cmd_estimate(const fs::path &panel_path, const fs::path &outcomes_path, bool header,
                 std::optional<Eigen::Index> working_dim, const std::string &grid, bool ols,
                 bool iv, const std::optional<fs::path> &out_dir) {
  if (!working_dim && grid.empty()) throw ConfigError("give --R or --grid");
  const Panel x = load_panel(panel_path, header);
  const auto cols = io::read_named_columns(outcomes_path);
  for (const char *name : {"y", "g"}) {
    if (!cols.count(name)) throw ConfigError(std::string("outcomes file lacks column '") + name + "'");
  }
  const bool has_z = cols.count("z") > 0;
  if (iv && !has_z) throw ConfigError("--iv needs an instrument column 'z'");
  std::vector<std::string> modes;
  if (ols) modes.push_back("ols");
  if (iv) modes.push_back("iv");
  if (modes.empty()) modes.push_back("ols");

  const Vector &y = cols.at("y");
  const Vector &g = cols.at("g");
  if (y.size() != x.n_cols()) {
    throw ConfigError("outcomes have " + std::to_string(y.size()) + " rows but the panel has T = " +
                      std::to_string(x.n_cols()) + " columns");
  }
  auto data_for = [&](const std::string &mode) {
    return mode == "iv" ? RegressionData(y, g, cols.at("z"), x) : RegressionData::ols(y, g, x);
  };

  std::optional<OutputDir> out;
  if (out_dir) out.emplace(*out_dir);
  std::string digest_src = read_file(panel_path) + read_file(outcomes_path);

  if (!grid.empty()) {
    const auto dims = parse_grid(grid);
    std::ostringstream csv;
    csv << "R,mode,beta_hat,se,t,first_stage_t,gamma_hat\n";
    std::vector<std::vector<InferenceResult>> per_mode;
    for (const auto &m : modes) per_mode.push_back(iv_profile(data_for(m), dims));
    for (std::size_t i = 0; i < dims.size(); ++i) {
      for (std::size_t m = 0; m < modes.size(); ++m) {
        const InferenceResult &r = per_mode[m][i];
        for (const auto &w : r.warnings) spdlog::warn("R={} {}: {}", dims[i], modes[m], w);
        csv << dims[i] << ',' << modes[m] << ',' << csv_field(r.beta_hat) << ','
            << csv_field(r.se) << ',' << csv_field(r.t_stat) << ',' << csv_field(r.first_stage_t)
            << ',' << csv_field(r.gamma_hat) << '\n';
      }
    }
    std::cout << csv.str();
    if (out) {
      write_text(out->path("grid.csv"), csv.str());
      Manifest{"estimate", sha256_hex(digest_src + grid), std::nullopt}.write(*out);
      out->commit();
    }
    return kExitOk;
  }

  json results = json::array();
  for (const auto &m : modes) {
    InferenceResult r;
    try {
      r = iv_estimate(data_for(m), *working_dim);
    } catch (const InferenceError &e) {
      // Weak instruments and exact fits are reported, not fatal.
      r = e.partial();
      r.warnings.push_back(e.what());
      spdlog::warn("{}", e.what());
    }
    results.push_back(result_json(r, m));
  }
  const json report = results.size() == 1 ? results[0] : json(results);
  std::cout << report.dump(2) << '\n';
  if (out) {
    write_text(out->path("estimate.json"), report.dump(2) + "\n");
    Manifest{"estimate", sha256_hex(digest_src + std::to_string(*working_dim)), std::nullopt}
        .write(*out);
    out->commit();
  }
  return kExitOk;
}

// ---------------------------------------------------------------- diagnose

json law_json(const MpLaw &law) {
  json j;
  j["phi"] = law.phi;
  j["edges"] = law.edges;
  j["critical_points"] = law.critical_points;
  json bulks = json::array();
  for (const auto &[lo, hi] : law.bulks) bulks.push_back({lo, hi});
  j["bulks"] = bulks;
  std::vector<bool> deg(law.degenerate.begin(), law.degenerate.end());
  j["degenerate"] = deg;
  return j;
}

json regularity_json(const RegularityReport &rep) {
  json j;
  j["delta"] = rep.delta;
  j["delta_prime"] = rep.delta_prime;
  j["density_floor"] = rep.density_floor;
  json edges = json::array();
  for (const auto &e : rep.edges) {
    edges.push_back({{"edge", e.edge},
                     {"above_delta", e.above_delta},
                     {"separated", e.separated},
                     {"away_from_poles", e.away_from_poles},
                     {"regular", e.regular()}});
  }
  j["edges"] = edges;
  json bulks = json::array();
  for (const auto &b : rep.bulks) {
    bulks.push_back({{"interior", {b.lo, b.hi}}, {"min_density", b.min_density}, {"regular", b.regular}});
  }
  j["bulks"] = bulks;
  j["all_regular"] = rep.all_regular();
  return j;
}

int cmd_diagnose_real(const fs::path &panel_path, bool header, Eigen::Index working_dim,
                      std::uint64_t seed, double spike_margin, const fs::path &out_dir) {
  const Panel x = load_panel(panel_path, header);
  const Eigen::Index n = x.n_rows(), t = x.n_cols();
  const Eigen::Index m = std::min(n, t);
  if (working_dim < 1 || working_dim > m) throw ConfigError("--R must lie in [1, min(N, T)]");
  if (m < 4) throw ConfigError("diagnose needs min(N, T) >= 4");
  OutputDir out(out_dir);

  const Vector sv = linalg::singular_values(x.data());
  const Vector ev = sv.array().square() / static_cast<double>(t);
  Matrix scree(m, 3);
  for (Eigen::Index k = 0; k < m; ++k) scree.row(k) << static_cast<double>(k + 1), sv(k), ev(k);
  io::write_csv(out.path("scree.csv"), scree, {"k", "singular_value", "eigenvalue"});

  json report;
  report["N"] = n;
  report["T"] = t;
  report["R"] = working_dim;
  // Deformed MP fit of the bulk: Sigma is approximated by the row variances of
  // X minus its top-R components, binned into at most kFitAtoms atoms.
  if (std::abs(x.phi() - 1.0) < 1e-12) {
    report["mp_fit"] = nullptr;
    report["mp_fit_note"] = "phi = 1 is outside the supported regime";
  } else {
    const PcaFit f = fit(x, working_dim);
    const Matrix resid = x.data() - f.m_hat;
    std::vector<double> var(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      var[i] = resid.row(i).squaredNorm() / static_cast<double>(t - working_dim);
    }
    std::sort(var.begin(), var.end(), std::greater<>());
    constexpr std::size_t kFitAtoms = 20;
    const std::size_t bins = std::min(kFitAtoms, var.size());
    std::vector<SpectralMeasure::Atom> atoms;
    for (std::size_t b = 0; b < bins; ++b) {
      const std::size_t lo = b * var.size() / bins, hi = (b + 1) * var.size() / bins;
      double sum = 0.0;
      for (std::size_t i = lo; i < hi; ++i) sum += var[i];
      const double s = sum / static_cast<double>(hi - lo);
      const double w = static_cast<double>(hi - lo) / static_cast<double>(var.size());
      if (!atoms.empty() && atoms.back().s - s <= 1e-9 * atoms.back().s) {
        atoms.back().weight += w;
      } else {
        atoms.push_back({s, w});
      }
    }
    if (!(atoms.back().s > 0.0)) throw Error(Errc::numeric, "residual has a zero-variance row");
    const MpLaw law = solve_law(SpectralMeasure(atoms), x.phi());
    const double upper = law.edges.front();
    // Tracy-Widom scale of the top eigenvalue for white noise, rescaled to the fit.
    const double dn = static_cast<double>(n), dt = static_cast<double>(t);
    const double level = upper / std::pow(1.0 + std::sqrt(x.phi()), 2);
    const double tw = level * (std::sqrt(dn) + std::sqrt(dt)) *
                      std::cbrt(1.0 / std::sqrt(dn) + 1.0 / std::sqrt(dt)) / dt;
    const double threshold = upper * (1.0 + spike_margin) + 3.0 * tw;
    Eigen::Index spikes = 0;
    while (spikes < m && ev(spikes) > threshold) ++spikes;
    report["mp_fit"] = law_json(law);
    json jatoms = json::array();
    for (const auto &a : atoms) jatoms.push_back({a.s, a.weight});
    report["mp_fit"]["atoms"] = jatoms;
    report["mp_fit"]["upper_edge_singular_value"] =
        to_noise_singular_value(upper, static_cast<double>(t));
    report["tracy_widom_scale"] = tw;
    report["spike_threshold"] = threshold;
    report["spike_count"] = spikes;
    report["spike_margin"] = spike_margin;
    report["spike_flag"] = spikes > 0;
  }
  const ProbeSet probes = ProbeSet::standard(n, t, seed);
  const BoundaryReport b = boundary_case_r0(x, working_dim, probes);
  report["probe_incoherence_left"] = b.incoherence_left;
  report["probe_incoherence_right"] = b.incoherence_right;
  write_text(out.path("diagnose.json"), report.dump(2) + "\n");
  Manifest{"diagnose", sha256_hex(read_file(panel_path)), seed}.write(out);
  out.commit();
  std::cout << report.dump(2) << '\n';
  return kExitOk;
}

int cmd_diagnose_synthetic(const fs::path &spec_path, std::optional<std::uint64_t> seed,
                           std::uint32_t rep, const fs::path &out_dir) {
  const std::string bytes = read_file(spec_path);
  const json j = parse_json(bytes, spec_path.string());
  if (!j.contains("dgp") || !j.contains("R")) throw ConfigError("synthetic spec needs 'dgp' and 'R'");
  DgpConfig c = parse_dgp(j.at("dgp"));
  if (seed) c.seed = *seed;
  const auto working_dim = get_or<Eigen::Index>(j, "R", 0);
  c.validate();
  if (working_dim < c.r || working_dim > std::min(c.n, c.t) || working_dim < 1) {
    throw ConfigError("R must satisfy max(r, 1) <= R <= min(N, T)");
  }
  OutputDir out(out_dir);
  const SyntheticDraw d = generate(c, rep);
  const PcaFit f = fit(d.data.panel, working_dim);
  const ExtraSpectrumReport e =
      extra_spectrum_of_fit(f, d.data.panel, d.truth, ProbeSet::standard(c.n, c.t, c.seed, rep));
  json report;
  report["N"] = c.n;
  report["T"] = c.t;
  report["r"] = c.r;
  report["R"] = working_dim;
  report["replication"] = rep;
  report["nu_M"] = signal_strength(d.truth);
  report["gaps"] = std::vector<double>(e.gaps.data(), e.gaps.data() + e.gaps.size());
  report["weyl_margin"] = number_or_null(e.weyl_margin);
  report["incoherence_left"] = e.incoherence_left;
  report["incoherence_right"] = e.incoherence_right;
  report["ortho_left"] = e.ortho_left;
  report["ortho_right"] = e.ortho_right;
  if (c.r > 0) {
    report["lowrank_error"] = lowrank_error(f, d.truth);
    const AlignmentReport a = factor_alignment(f, d.truth);
    report["alignment"] = {{"degenerate", a.degenerate},
                           {"smallest_singular", a.smallest_singular},
                           {"expanded_error", a.expanded_error},
                           {"expanded_cross", a.expanded_cross},
                           {"compressed_error", a.compressed_error},
                           {"compressed_cross", a.compressed_cross},
                           {"sandwich_discrepancy", a.sandwich_discrepancy}};
  }
  const Vector sv = f.triple.singular_values;
  report["singular_values"] = std::vector<double>(sv.data(), sv.data() + sv.size());
  write_text(out.path("diagnose.json"), report.dump(2) + "\n");
  Manifest{"diagnose", sha256_hex(bytes), c.seed}.write(out);
  out.commit();
  std::cout << report.dump(2) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- mp-density

int cmd_mp_density(const fs::path &spec_path, const fs::path &out_dir) {
  const std::string bytes = read_file(spec_path);
  const json j = parse_json(bytes, spec_path.string());
  if (!j.contains("atoms") || !j.contains("phi")) throw ConfigError("spec needs 'atoms' and 'phi'");
  std::vector<SpectralMeasure::Atom> atoms;
  for (const auto &a : j.at("atoms")) {
    if (!a.is_array() || a.size() != 2) throw ConfigError("each atom must be [s, w]");
    atoms.push_back({a[0].get<double>(), a[1].get<double>()});
  }
  std::sort(atoms.begin(), atoms.end(), [](auto &l, auto &r) { return l.s > r.s; });
  const double phi = j.at("phi").get<double>();
  const MpLaw law = solve_law(SpectralMeasure(atoms), phi);

  const json grid = j.value("grid", json::object());
  const double lo = get_or<double>(grid, "min", 0.0);
  const double hi = get_or<double>(grid, "max", law.edges.front() * 1.1);
  const int points = get_or<int>(grid, "points", 200);
  if (points < 2 || !(hi > lo)) throw ConfigError("grid needs points >= 2 and max > min");
  const double eta = get_or<double>(j, "eta", law.default_eta());
  if (!(eta > 0.0)) throw ConfigError("eta must be positive");

  OutputDir out(out_dir);
  std::ostringstream csv;
  csv << "x,density\n";
  for (int i = 0; i < points; ++i) {
    const double x = lo + (hi - lo) * i / (points - 1);
    csv << csv_field(x) << ',' << csv_field(density(law, x, eta)) << '\n';
  }
  write_text(out.path("density.csv"), csv.str());

  json report = law_json(law);
  report["eta"] = eta;
  report["bulk_mass"] = bulk_masses(law);
  if (j.contains("delta")) {
    const double delta = j.at("delta").get<double>();
    const double delta_prime = get_or<double>(j, "delta_prime", delta);
    report["regularity"] = regularity_json(check_regularity(law, delta, delta_prime));
  }
  write_text(out.path("report.json"), report.dump(2) + "\n");
  Manifest{"mp-density", sha256_hex(bytes), std::nullopt}.write(out);
  out.commit();
  std::cout << report.dump(2) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- selftest

int cmd_selftest() {
  struct Check {
    const char *name;
    std::function<bool()> run;
  };
  auto near = [](double a, double b, double tol) { return std::abs(a - b) <= tol; };
  const std::vector<Check> checks = {
      {"svd_top diagonal",
       [&] {
         Matrix x = Matrix::Zero(3, 3);
         x.diagonal() << 3, 2, 1;
         const SvdTriple tr = svd_top(Panel(x), 2);
         return near(tr.singular_values(0), 3, 1e-12) && near(tr.singular_values(1), 2, 1e-12);
       }},
      {"demean_columns",
       [&] {
         Matrix a(3, 1);
         a << 1, 2, 3;
         const Matrix d = demean_columns(a);
         return near(d(0), -1, 1e-15) && near(d(1), 0, 1e-15) && near(d(2), 1, 1e-15);
       }},
      {"noiseless recovery",
       [&] {
         random::Stream s(1, 0, 1u);
         Matrix b(20, 2), f(30, 2);
         for (auto *m : {&b, &f})
           for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = s.normal();
         const Matrix x = b * f.transpose();
         const PcaFit p = fit(Panel(x), 4);
         return (p.m_hat - x).norm() < 1e-10 && p.triple.singular_values(2) < 1e-10;
       }},
      {"split boundaries",
       [&] {
         random::Stream s(2, 0, 1u);
         Matrix x(8, 9);
         for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = s.normal();
         const PcaFit p = fit(Panel(x), 3);
         return split(p, 3).extra_count() == 0 && split(p, 0).spiked_left().cols() == 0;
       }},
      {"evaluate_f hand value",
       [&] { return near(evaluate_f(SpectralMeasure::single(1.0), 0.5, -2.0), 0.0, 1e-15); }},
      {"MP edges, phi = 0.5",
       [&] {
         const MpLaw law = solve_law(SpectralMeasure::single(1.0), 0.5);
         return near(law.edges[0], std::pow(1 + std::sqrt(0.5), 2), 1e-8) &&
                near(law.edges[1], std::pow(1 - std::sqrt(0.5), 2), 1e-8);
       }},
      {"MP density off support",
       [&] {
         const MpLaw law = solve_law(SpectralMeasure::single(1.0), 0.5);
         return density(law, 4.0, law.default_eta()) < 1e-3;
       }},
      {"typical locations decrease",
       [&] {
         const auto g = typical_locations(solve_law(SpectralMeasure::single(1.0), 0.5), 1000, {1, 2, 3});
         return g[0] > g[1] && g[1] > g[2];
       }},
      {"rate regression power law",
       [&] {
         return near(rate_regression({{1, 1}, {2, 0.25}, {4, 0.0625}}).slope, -2.0, 1e-12);
       }},
      {"KS degenerate sample",
       [&] { return ks_test_normal(std::vector<double>(50, 0.0)) < 1e-10; }},
      {"summarize (1, 2, 3)",
       [&] {
         const McSummary s = summarize({1, 2, 3});
         return near(s.mean, 2, 1e-15) && near(s.sd, 1, 1e-15);
       }},
      {"exact fit flagged",
       [&] {
         random::Stream s(3, 0, 1u);
         Vector g(30);
         Matrix x(5, 30);
         for (Eigen::Index i = 0; i < 30; ++i) g(i) = s.normal();
         for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = s.normal();
         try {
           iv_estimate(RegressionData::ols(2.0 * g, g, Panel(x)), 0);
         } catch (const InferenceError &e) {
           return e.code() == Errc::singular_variance && near(e.partial().beta_hat, 2.0, 1e-10);
         }
         return false;
       }},
      {"pure-noise panel r = 0",
       [&] {
         DgpConfig c;
         c.n = 20;
         c.t = 30;
         c.r = 0;
         const SyntheticDraw d = generate(c, 0);
         return (d.data.panel.data() - *d.truth.noise).norm() == 0.0;
       }},
  };
  int failed = 0;
  for (const auto &c : checks) {
    bool ok = false;
    try {
      ok = c.run();
    } catch (const std::exception &e) {
      spdlog::error("{}: {}", c.name, e.what());
    }
    std::cout << (ok ? "PASS " : "FAIL ") << c.name << '\n';
    failed += !ok;
  }
  std::cout << (checks.size() - failed) << "/" << checks.size() << " checks passed\n";
  return failed ? kExitNumeric : kExitOk;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("fopca");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char *env = std::getenv("FOPCA_LOG")) {
    spdlog::set_level(spdlog::level::from_str(env));
  }
}

}  // namespace

int main(int argc, char **argv) {
  setup_logging();
  CLI::App app{"Fixed-order PCA for overestimated factor models.\n"
               "Exit codes: 0 ok, 2 invalid configuration or input, 3 numeric failure.\n"
               "Log level: FOPCA_LOG=trace|debug|info|warn|error|off (default warn)."};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  auto *sim = app.add_subcommand("simulate", "Monte Carlo table from a JSON experiment spec");
  std::string sim_spec;
  std::string sim_out;
  std::optional<std::uint32_t> sim_reps;
  std::optional<std::uint64_t> sim_seed;
  unsigned sim_threads = std::max(1u, std::thread::hardware_concurrency());
  bool sim_dump_t = false;
  std::uint32_t sim_dump_data = 0;
  sim->add_option("spec", sim_spec, "experiment spec (JSON)")->required();
  sim->add_option("--out", sim_out, "output directory")->required();
  sim->add_option("--reps", sim_reps, "override replications");
  sim->add_option("--seed", sim_seed, "override seed");
  sim->add_option("--threads", sim_threads, "worker threads")->check(CLI::PositiveNumber);
  sim->add_flag("--dump-t", sim_dump_t, "write per-replication t statistics");
  sim->add_option("--dump-data", sim_dump_data,
                  "write panel and outcomes of the first K replications per cell");

  auto *est = app.add_subcommand("estimate", "factor-augmented OLS/IV estimate on CSV data");
  std::string est_panel, est_outcomes, est_grid;
  std::optional<std::string> est_out;
  std::optional<Eigen::Index> est_r;
  bool est_header = false, est_ols = false, est_iv = false;
  est->add_option("--panel", est_panel, "N x T panel (CSV, or .bin binary)")->required();
  est->add_option("--outcomes", est_outcomes, "CSV with header and columns y, g[, z]")->required();
  est->add_option("--R", est_r, "working dimension");
  est->add_option("--grid", est_grid, "comma-separated working dimensions");
  est->add_flag("--header", est_header, "panel CSV has a header row");
  est->add_flag("--ols", est_ols, "OLS (z = g)");
  est->add_flag("--iv", est_iv, "IV with instrument column z");
  est->add_option("--out", est_out, "output directory");

  auto *dia = app.add_subcommand("diagnose", "scree, MP bulk fit and probe incoherence");
  std::string dia_panel, dia_spec, dia_out;
  Eigen::Index dia_r = 1;
  bool dia_header = false;
  std::optional<std::uint64_t> dia_seed;
  std::uint32_t dia_rep = 0;
  double dia_margin = 0.05;
  auto *dia_panel_opt = dia->add_option("--panel", dia_panel, "real-data panel");
  auto *dia_spec_opt = dia->add_option("--spec", dia_spec, "synthetic spec {dgp, R}");
  dia_panel_opt->excludes(dia_spec_opt);
  dia->add_option("--R", dia_r, "working dimension");
  dia->add_flag("--header", dia_header, "panel CSV has a header row");
  dia->add_option("--seed", dia_seed, "probe / DGP seed");
  dia->add_option("--rep", dia_rep, "replication index (synthetic)");
  dia->add_option("--spike-margin", dia_margin, "relative margin above the MP upper edge (added to 3 Tracy-Widom sd)");
  dia->add_option("--out", dia_out, "output directory")->required();

  auto *mpd = app.add_subcommand("mp-density", "deformed Marchenko-Pastur density and edges");
  std::string mpd_spec, mpd_out;
  mpd->add_option("spec", mpd_spec, "{atoms, phi, grid, eta[, delta, delta_prime]}")->required();
  mpd->add_option("--out", mpd_out, "output directory")->required();

  app.add_subcommand("selftest", "run the quick built-in checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*sim) {
      return cmd_simulate(sim_spec, sim_out, sim_reps, sim_seed, sim_threads, sim_dump_t,
                          sim_dump_data);
    }
    if (*est) {
      return cmd_estimate(est_panel, est_outcomes, est_header, est_r, est_grid, est_ols, est_iv,
                          est_out ? std::optional<fs::path>(*est_out) : std::nullopt);
    }
    if (*dia) {
      if (!dia_spec.empty()) return cmd_diagnose_synthetic(dia_spec, dia_seed, dia_rep, dia_out);
      if (dia_panel.empty()) throw ConfigError("diagnose needs --panel or --spec");
      return cmd_diagnose_real(dia_panel, dia_header, dia_r, dia_seed.value_or(1), dia_margin,
                               dia_out);
    }
    if (*mpd) return cmd_mp_density(mpd_spec, mpd_out);
    return cmd_selftest();
  } catch (const ConfigError &e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  } catch (const json::exception &e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  } catch (const Error &e) {
    spdlog::error("{}", e.what());
    return e.is_validation() ? kExitConfig : kExitNumeric;
  } catch (const fs::filesystem_error &e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  } catch (const std::exception &e) {
    spdlog::error("{}", e.what());
    return kExitNumeric;
  }
}
