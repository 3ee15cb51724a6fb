#include "statgeo/commands.hpp"

#include "statgeo/geodesic.hpp"
#include "statgeo/io.hpp"
#include "statgeo/land.hpp"
#include "statgeo/metric.hpp"
#include "statgeo/parallel.hpp"
#include "statgeo/toy.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <numbers>
#include <ostream>
#include <sstream>

namespace statgeo {

namespace {

[[noreturn]] void usage_error(const std::string& what) { throw Error(ErrorCode::ParseError, what); }

Vec parse_vec(const std::string& text, const char* what) {
  std::vector<double> values;
  std::istringstream in(text);
  std::string cell;
  while (std::getline(in, cell, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      usage_error(std::string("bad number in ") + what + ": '" + cell + "'");
    }
  }
  if (values.empty()) usage_error(std::string(what) + " is empty");
  return Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
}

std::vector<Eigen::Index> parse_counts(const std::string& text, const char* what) {
  const Vec v = parse_vec(text, what);
  std::vector<Eigen::Index> out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] != std::floor(v[i]) || v[i] < 0) usage_error(std::string(what) + " must hold non-negative integers");
    out.push_back(static_cast<Eigen::Index>(v[i]));
  }
  return out;
}

/// Wall-clock stages and counters, printed to stderr with --profile.
class Profiler {
 public:
  explicit Profiler(bool enabled) : enabled_(enabled) {}

  template <typename F>
  auto stage(const std::string& name, F&& fn) {
    const auto start = std::chrono::steady_clock::now();
    struct Record {
      Profiler* self;
      std::string name;
      std::chrono::steady_clock::time_point start;
      ~Record() {
        self->stages_.emplace_back(name, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
      }
    } record{this, name, start};
    return fn();
  }

  void count(const std::string& name, double value) { counters_.emplace_back(name, value); }

  void report(std::ostream& err) const {
    if (!enabled_) return;
    Json j;
    Json stages = Json::object();
    for (const auto& [name, secs] : stages_) stages[name] = secs;
    j["profile"] = std::move(stages);
    Json counters = Json::object();
    for (const auto& [name, v] : counters_) counters[name] = v;
    j["counters"] = std::move(counters);
    err << j.dump() << '\n';
  }

 private:
  bool enabled_;
  std::vector<std::pair<std::string, double>> stages_;
  std::vector<std::pair<std::string, double>> counters_;
};

struct Common {
  unsigned threads = 1;
  bool profile = false;
  std::string config;
  std::string seed;

  std::uint64_t require_seed(const char* command) const {
    if (seed.empty()) usage_error(std::string(command) + " needs --seed (or a seed in the config file)");
    try {
      std::size_t used = 0;
      const auto s = std::stoull(seed, &used);
      if (used != seed.size()) throw std::invalid_argument(seed);
      return s;
    } catch (const std::exception&) {
      usage_error("seed must be a non-negative integer");
    }
  }
};

struct EnergyOptions {
  long N = 64;
  int segments = 4;
  int max_iters = 500;
  double grad_tol = 1e-8;
  double step = 1.0;
  std::string gradient = "auto";
  std::string energy = "kl";
  long mc_samples = 0;
  double fd_step = 1e-6;
  double jitter = 1e-4;
  int shooting_iters = 20;

  EnergyConfig build(std::uint64_t seed) const {
    EnergyConfig cfg;
    cfg.N = N;
    cfg.segments = segments;
    cfg.optimizer.max_iters = max_iters;
    cfg.optimizer.grad_tol = grad_tol;
    cfg.optimizer.step = step;
    cfg.fd_step = fd_step;
    cfg.jitter = jitter;
    cfg.shooting_iters = shooting_iters;
    if (gradient == "auto") {
      cfg.gradient = GradientMode::Auto;
    } else if (gradient == "analytic") {
      cfg.gradient = GradientMode::Analytic;
    } else if (gradient == "fd") {
      cfg.gradient = GradientMode::FiniteDifference;
    } else {
      usage_error("--gradient must be auto, analytic or fd");
    }
    if (energy == "kl") {
      cfg.energy = EnergyKind::Kl;
    } else if (energy == "categorical") {
      cfg.energy = EnergyKind::Categorical;
    } else {
      usage_error("--energy must be kl or categorical");
    }
    if (mc_samples > 0) cfg.mc = McSettings{seed, mc_samples};
    if (N < 2) usage_error("--N must be >= 2");
    if (segments < 1) usage_error("--segments must be >= 1");
    return cfg;
  }
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--threads", c.threads, "Worker threads (STATGEO_THREADS overrides)");
  sub->add_flag("--profile", c.profile, "Report per-stage wall time on stderr");
  sub->add_option("--config", c.config, "JSON file with default option values");
  sub->add_option("--seed", c.seed, "Random seed");
}

void add_energy(CLI::App* sub, EnergyOptions& e) {
  sub->add_option("--N", e.N, "Energy discretization count");
  sub->add_option("--segments", e.segments, "Spline segments");
  sub->add_option("--max-iters", e.max_iters, "Optimizer iterations");
  sub->add_option("--grad-tol", e.grad_tol, "Relative gradient tolerance");
  sub->add_option("--step", e.step, "Initial optimizer step");
  sub->add_option("--gradient", e.gradient, "auto, analytic or fd");
  sub->add_option("--energy", e.energy, "kl or categorical");
  sub->add_option("--mc-samples", e.mc_samples, "Monte-Carlo KL samples (0: closed form)");
  sub->add_option("--fd-step", e.fd_step, "Finite-difference step on spline coefficients");
  sub->add_option("--jitter", e.jitter, "Initial coefficient jitter");
  sub->add_option("--shooting-iters", e.shooting_iters, "Newton refinements of log maps (0: spline velocity)");
}

/// Turns a JSON config object into --key=value arguments placed before the user's arguments.
std::vector<std::string> config_arguments(const std::string& path) {
  const Json j = parse_json(read_text(path));
  if (!j.is_object()) usage_error("config file must hold a JSON object");
  std::vector<std::string> out;
  for (const auto& [key, value] : j.items()) {
    std::string name = key;
    for (auto& ch : name) {
      if (ch == '_') ch = '-';
    }
    if (name == "config") continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) out.push_back("--" + name);
    } else if (value.is_string()) {
      out.push_back("--" + name + "=" + value.get<std::string>());
    } else if (value.is_number_integer() || value.is_number_unsigned()) {
      out.push_back("--" + name + "=" + value.dump());
    } else if (value.is_number()) {
      out.push_back("--" + name + "=" + format_double(value.get<double>()));
    } else if (value.is_array()) {
      std::string joined;
      for (std::size_t i = 0; i < value.size(); ++i) {
        if (i) joined += ',';
        joined += value[i].is_number_float() ? format_double(value[i].get<double>()) : value[i].dump();
      }
      out.push_back("--" + name + "=" + joined);
    } else {
      usage_error("unsupported config value for '" + key + "'");
    }
  }
  return out;
}

std::string find_config(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return {};
}

/// Metric source selected by --grid, --decoder or --identity.
struct MetricSource {
  std::string grid;
  std::string decoder;
  bool identity = false;

  void add(CLI::App* sub) {
    sub->add_option("--grid", grid, "Metric grid JSON");
    sub->add_option("--decoder", decoder, "Decoder JSON (exact pullback metric)");
    sub->add_flag("--identity", identity, "Euclidean metric");
  }

  int chosen() const { return (grid.empty() ? 0 : 1) + (decoder.empty() ? 0 : 1) + (identity ? 1 : 0); }

  LatentMetric load(Eigen::Index identity_dim, std::shared_ptr<const DecoderMap>* dec_out = nullptr) const {
    if (chosen() != 1) usage_error("choose exactly one of --grid, --decoder, --identity");
    if (!grid.empty()) return LatentMetric::grid(grid_from_json(parse_json(read_text(grid))));
    if (!decoder.empty()) {
      auto dec = std::make_shared<const DecoderMap>(load_decoder(decoder));
      if (dec_out) *dec_out = dec;
      return LatentMetric::exact(dec);
    }
    return LatentMetric::constant(Mat::Identity(identity_dim, identity_dim));
  }

  std::string ref() const {
    if (!grid.empty()) return "grid:" + grid;
    if (!decoder.empty()) return "decoder:" + decoder;
    return "identity";
  }
};

void require_dim(const Vec& v, Eigen::Index d, const char* what) {
  if (v.size() != d) usage_error(std::string(what) + " must have " + std::to_string(d) + " coordinates");
}

// ---------------------------------------------------------------------------------------------

struct ToygenOptions {
  long n = 200;
  double noise = 0.1;
  std::string out;
};

int cmd_toygen(const ToygenOptions& o, const Common& c, std::ostream& out, Profiler& prof) {
  if (o.n < 1) usage_error("--n must be >= 1");
  Rng rng(c.require_seed("toygen"));
  const Mat codes = prof.stage("generate", [&] { return toy_circle_codes(o.n, o.noise, rng); });
  if (o.out.empty()) {
    out << codes_to_csv(codes);
  } else {
    save_codes(o.out, codes);
    out << dump_json(Json{{"codes", o.out}, {"rows", o.n}});
  }
  return 0;
}

struct ToyDecoderCliOptions {
  std::string family = "normal";
  std::string codes;
  bool no_regularization = false;
  std::string beta;
  double c = 7.0;
  long kmeans_k = 24;
  std::string out;
};

int cmd_toy_decoder(const ToyDecoderCliOptions& o, const Common& c, std::ostream& out, Profiler& prof) {
  const std::uint64_t seed = c.require_seed("toy-decoder");
  const FamilyKind family = parse_family(o.family);
  ToyDecoderOptions opts;
  if (!o.beta.empty()) opts.beta = parse_vec(o.beta, "--beta")[0];
  opts.c = o.c;
  opts.kmeans_k = o.kmeans_k;
  Mat codes;
  const bool regularize = !o.codes.empty() && !o.no_regularization;
  if (regularize) codes = load_codes(o.codes);
  Rng rng(seed);
  const DecoderMap dec = prof.stage("build", [&] { return make_toy_decoder(family, rng, regularize ? &codes : nullptr, opts); });
  const Json j = decoder_to_json(dec, seed);
  if (o.out.empty()) {
    out << dump_json(j);
  } else {
    write_text(o.out, dump_json(j));
    out << dump_json(Json{{"decoder", o.out},
                          {"family", std::string(family_name(family))},
                          {"regularized", dec.regularization().has_value()}});
  }
  return 0;
}

struct GeodesicOptions {
  std::string decoder;
  std::string from, to;
  std::string codes;
  std::string pairs;  // "i,j;k,l"
  long samples = 100;
  std::string out;
  EnergyOptions energy;
};

int cmd_geodesic(const GeodesicOptions& o, const Common& c, std::ostream& out, Profiler& prof) {
  const std::uint64_t seed = c.require_seed("geodesic");
  if (o.samples < 1) usage_error("--samples must be >= 1");
  const DecoderMap dec = prof.stage("load", [&] { return load_decoder(o.decoder); });
  const Eigen::Index d = dec.latent_dim();
  const EnergyConfig cfg = o.energy.build(seed);

  std::vector<std::pair<Vec, Vec>> endpoints;
  if (!o.pairs.empty()) {
    if (o.codes.empty()) usage_error("--pairs needs --codes");
    if (!o.from.empty() || !o.to.empty()) usage_error("use either --from/--to or --codes/--pairs");
    const Mat codes = load_codes(o.codes);
    if (codes.cols() != d) usage_error("codes dimension does not match the decoder");
    std::istringstream in(o.pairs);
    std::string item;
    while (std::getline(in, item, ';')) {
      const auto idx = parse_counts(item, "--pairs");
      if (idx.size() != 2) usage_error("--pairs entries must be i,j");
      for (auto i : idx) {
        if (i >= codes.rows()) usage_error("--pairs index out of range");
      }
      endpoints.emplace_back(codes.row(idx[0]).transpose(), codes.row(idx[1]).transpose());
    }
  } else {
    if (o.from.empty() || o.to.empty()) usage_error("geodesic needs --from and --to, or --codes and --pairs");
    endpoints.emplace_back(parse_vec(o.from, "--from"), parse_vec(o.to, "--to"));
  }
  for (const auto& [a, b] : endpoints) {
    require_dim(a, d, "start point");
    require_dim(b, d, "end point");
  }

  std::vector<std::optional<GeodesicResult>> results(endpoints.size());
  prof.stage("optimize", [&] {
    parallel_for(endpoints.size(), c.threads, [&](std::size_t k) {
      Rng rng = Rng(seed).split(k);
      results[k] = minimize_energy(endpoints[k].first, endpoints[k].second, dec, cfg, rng);
    });
    return 0;
  });

  const bool batch = endpoints.size() > 1;
  const McSettings* mc = cfg.mc ? &*cfg.mc : nullptr;
  std::string csv;
  Json summaries = Json::array();
  long iterations = 0;
  prof.stage("output", [&] {
    csv += batch ? "pair,t" : "t";
    for (Eigen::Index k = 0; k < d; ++k) csv += ",z" + std::to_string(k);
    for (Eigen::Index k = 0; k < dec.output_dim(); ++k) csv += ",eta" + std::to_string(k);
    csv += ",segment_kl\n";
    for (std::size_t p = 0; p < results.size(); ++p) {
      const GeodesicResult& r = *results[p];
      iterations += r.iterations;
      std::vector<Vec> z(static_cast<std::size_t>(o.samples + 1));
      std::vector<std::vector<ParamPoint>> eta;
      for (long s = 0; s <= o.samples; ++s) {
        z[static_cast<std::size_t>(s)] = r.curve.position(static_cast<double>(s) / static_cast<double>(o.samples));
        eta.push_back(forward(dec, z[static_cast<std::size_t>(s)]));
      }
      for (long s = 0; s <= o.samples; ++s) {
        const auto i = static_cast<std::size_t>(s);
        if (batch) csv += std::to_string(p) + ",";
        csv += format_double(static_cast<double>(s) / static_cast<double>(o.samples));
        for (Eigen::Index k = 0; k < d; ++k) csv += "," + format_double(z[i][k]);
        for (const auto& pt : eta[i]) {
          for (Eigen::Index k = 0; k < pt.size(); ++k) csv += "," + format_double(pt[k]);
        }
        csv += ",";
        if (s < o.samples) csv += format_double(features_kl(eta[i], eta[i + 1], mc));
        csv += "\n";
      }
      const SplineCurve straight(r.curve.start(), r.curve.end(), r.curve.segments());
      Json sj;
      if (batch) sj["pair"] = p;
      sj["energy"] = r.energy;
      sj["length"] = curve_length(r.curve, dec, cfg.N, mc);
      sj["straight_energy"] = r.straight_energy;
      sj["straight_length"] = curve_length(straight, dec, cfg.N, mc);
      sj["iterations"] = r.iterations;
      sj["converged"] = r.converged;
      summaries.push_back(std::move(sj));
    }
    return 0;
  });
  prof.count("optimizer_iterations", static_cast<double>(iterations));
  write_text(o.out, csv);
  out << dump_json(batch ? Json{{"geodesics", summaries}, {"csv", o.out}} : [&] {
    Json j = summaries[0];
    j["csv"] = o.out;
    return j;
  }());
  return 0;
}

struct MetricGridOptions {
  std::string decoder;
  std::string mode = "pullback";
  std::string lower, upper, resolution;
  double bandwidth = 0.0;
  double epsilon = 1e-2;
  long mc_samples = 0;
  double validation_radius = 0.1;
  std::string out;
};

int cmd_metric_grid(const MetricGridOptions& o, const Common& c, std::ostream& out, Profiler& prof) {
  const auto dec = std::make_shared<const DecoderMap>(prof.stage("load", [&] { return load_decoder(o.decoder); }));
  const Eigen::Index d = dec->latent_dim();
  const Vec lower = parse_vec(o.lower, "--lower"), upper = parse_vec(o.upper, "--upper");
  require_dim(lower, d, "--lower");
  require_dim(upper, d, "--upper");
  const auto resolution = parse_counts(o.resolution, "--resolution");
  if (static_cast<Eigen::Index>(resolution.size()) != d) usage_error("--resolution needs one count per latent dimension");

  const bool probe = o.mode == "kl-probe";
  if (!probe && o.mode != "pullback") usage_error("--mode must be pullback or kl-probe");
  std::optional<McSettings> mc;
  if (o.mc_samples > 0) mc = McSettings{c.require_seed("metric-grid with --mc-samples"), o.mc_samples};
  const LatentMetric metric = probe ? LatentMetric::probe(dec, o.epsilon, mc) : LatentMetric::exact(dec);

  MetricGrid grid;
  grid.lower = lower;
  grid.upper = upper;
  grid.resolution = resolution;
  grid.points = lattice_points(lower, upper, resolution);
  double bw = o.bandwidth;
  if (!(bw > 0)) {
    bw = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < d; ++k) {
      bw = std::min(bw, (upper[k] - lower[k]) / static_cast<double>(resolution[static_cast<std::size_t>(k)] - 1));
    }
    if (!(bw > 0) || !std::isfinite(bw)) usage_error("grid bounds must satisfy lower < upper");
  }
  grid.bandwidth = bw;
  const auto S = static_cast<std::size_t>(grid.points.rows());
  grid.tensors.resize(S);
  std::vector<double> validation(probe ? S : 0);

  std::vector<Vec> directions;
  if (d == 2) {
    for (int k = 0; k < 8; ++k) {
      const double a = 2.0 * std::numbers::pi * k / 8.0;
      directions.push_back(o.validation_radius * Vec(Eigen::Vector2d(std::cos(a), std::sin(a))));
    }
  } else {
    for (Eigen::Index k = 0; k < d; ++k) {
      directions.push_back(o.validation_radius * Vec::Unit(d, k));
      directions.push_back(-o.validation_radius * Vec::Unit(d, k));
    }
  }

  prof.stage("tensors", [&] {
    parallel_for(S, c.threads, [&](std::size_t s) {
      const Vec z = grid.points.row(static_cast<Eigen::Index>(s)).transpose();
      try {
        grid.tensors[s] = metric(z);
        if (!grid.tensors[s].allFinite()) throw Error(ErrorCode::NonFinite, "non-finite tensor");
        if (probe) {
          const auto base = forward(*dec, z);
          const McSettings* settings = mc ? &*mc : nullptr;
          double err = 0.0;
          for (const Vec& delta : directions) {
            const double klv = features_kl(base, forward(*dec, z + delta), settings);
            err += std::abs(klv - 0.5 * delta.dot(grid.tensors[s] * delta));
          }
          validation[s] = err / static_cast<double>(directions.size());
        }
      } catch (const Error& e) {
        throw Error(e.code(), "grid point " + std::to_string(s) + ": " + e.what());
      }
    });
    return 0;
  });

  Json j;
  j["mode"] = o.mode;
  if (probe) j["epsilon"] = o.epsilon;
  const Json grid_json = grid_to_json(grid);
  for (const auto& [key, value] : grid_json.items()) j[key] = value;
  if (probe) {
    Json v = Json::array();
    double mean = 0.0;
    for (double e : validation) {
      v.push_back(e);
      mean += e;
    }
    j["validation_radius"] = o.validation_radius;
    j["validation_error"] = std::move(v);
    j["mean_validation_error"] = mean / static_cast<double>(S);
  }
  if (o.out.empty()) {
    out << dump_json(j);
  } else {
    write_text(o.out, dump_json(j));
    Json summary{{"grid", o.out}, {"points", S}, {"mode", o.mode}};
    if (probe) summary["mean_validation_error"] = j["mean_validation_error"];
    out << dump_json(summary);
  }
  return 0;
}

struct LandCliOptions {
  MetricSource source;
  std::string codes;
  long mc_samples = 512;
  int exp_steps = 20;
  int max_iters = 50;
  long log_N = 16;
  std::string density_resolution = "30,30";
  std::string density_lower, density_upper;
  std::string density;
  std::string out;
};

int cmd_land(const LandCliOptions& o, const Common& c, std::ostream& out, Profiler& prof) {
  const std::uint64_t seed = c.require_seed("land");
  const Mat codes = prof.stage("load", [&] { return load_codes(o.codes); });
  const LatentMetric metric = o.source.load(codes.cols());
  if (metric.dim() != codes.cols()) usage_error("codes dimension does not match the metric");
  const Eigen::Index d = metric.dim();

  LandConfig cfg;
  cfg.mc_samples = o.mc_samples;
  cfg.exp_steps = o.exp_steps;
  cfg.max_iters = o.max_iters;
  cfg.log_map.N = o.log_N;
  cfg.threads = c.threads;
  cfg.seed = seed;
  Rng rng(seed);
  const LandFitResult fit = prof.stage("fit", [&] { return land_fit(codes, metric, std::nullopt, cfg, rng); });
  prof.count("fit_iterations", fit.iterations);

  Json j = land_to_json(fit.model, o.source.ref());
  j["nll"] = fit.nll;
  j["initial_nll"] = fit.initial_nll;
  j["iterations"] = fit.iterations;
  j["converged"] = fit.converged;

  if (!o.density.empty()) {
    const auto res = parse_counts(o.density_resolution, "--density-resolution");
    if (static_cast<Eigen::Index>(res.size()) != d) usage_error("--density-resolution needs one count per dimension");
    Vec lo = codes.colwise().minCoeff().transpose(), hi = codes.colwise().maxCoeff().transpose();
    const Vec pad = 0.25 * (hi - lo);
    lo -= pad;
    hi += pad;
    if (!o.density_lower.empty()) lo = parse_vec(o.density_lower, "--density-lower");
    if (!o.density_upper.empty()) hi = parse_vec(o.density_upper, "--density-upper");
    require_dim(lo, d, "--density-lower");
    require_dim(hi, d, "--density-upper");
    const Mat pts = lattice_points(lo, hi, res);
    double cell = 1.0;
    for (Eigen::Index k = 0; k < d; ++k) cell *= (hi[k] - lo[k]) / static_cast<double>(res[static_cast<std::size_t>(k)] - 1);
    const auto base = [&] {
      Eigen::LLT<Mat> llt(metric(fit.model.mean));
      return llt.matrixLLT().diagonal().array().log().sum();
    }();
    Vec dens(pts.rows()), vol(pts.rows());
    prof.stage("density", [&] {
      parallel_for(static_cast<std::size_t>(pts.rows()), c.threads, [&](std::size_t s) {
        const auto r = static_cast<Eigen::Index>(s);
        const Vec z = pts.row(r).transpose();
        dens[r] = std::exp(land_logpdf(fit.model, z));
        Eigen::LLT<Mat> llt(metric(z));
        vol[r] = std::exp(llt.matrixLLT().diagonal().array().log().sum() - base);
      });
      return 0;
    });
    std::string csv;
    for (Eigen::Index k = 0; k < d; ++k) csv += "z" + std::to_string(k) + ",";
    csv += "density,volume\n";
    for (Eigen::Index r = 0; r < pts.rows(); ++r) {
      for (Eigen::Index k = 0; k < d; ++k) csv += format_double(pts(r, k)) + ",";
      csv += format_double(dens[r]) + "," + format_double(vol[r]) + "\n";
    }
    write_text(o.density, csv);
    j["density_csv"] = o.density;
    j["lattice_sum"] = dens.dot(vol) * cell;
  }

  if (o.out.empty()) {
    out << dump_json(j);
  } else {
    write_text(o.out, dump_json(j));
    out << dump_json(Json{{"model", o.out}, {"nll", fit.nll}, {"converged", fit.converged}});
  }
  if (!fit.converged) throw Error(ErrorCode::NonConvergence, "LAND fit did not converge; model written with converged=false");
  return 0;
}

struct KlOptions {
  std::string decoder;
  std::string z1, z2;
  long mc_samples = 0;
};

int cmd_kl(const KlOptions& o, const Common& c, std::ostream& out, Profiler& prof) {
  const DecoderMap dec = prof.stage("load", [&] { return load_decoder(o.decoder); });
  const Vec z1 = parse_vec(o.z1, "--z1"), z2 = parse_vec(o.z2, "--z2");
  require_dim(z1, dec.latent_dim(), "--z1");
  require_dim(z2, dec.latent_dim(), "--z2");
  std::optional<McSettings> mc;
  if (o.mc_samples > 0) mc = McSettings{c.require_seed("kl with --mc-samples"), o.mc_samples};
  const double klv = prof.stage("kl", [&] { return latent_kl(dec, z1, z2, mc ? &*mc : nullptr); });
  const Vec delta = z2 - z1;
  const double quad = 0.5 * delta.dot(pullback(dec, z1) * delta);
  out << dump_json(Json{{"kl", klv}, {"quadratic_approx", quad}, {"gap", std::abs(klv - quad)}});
  return 0;
}

struct ExpOptions {
  MetricSource source;
  std::string z, v;
  int steps = 100;
  double fd_step = 1e-5;
};

int cmd_exp(const ExpOptions& o, const Common& c, std::ostream& out, Profiler& prof) {
  (void)c;
  const Vec z = parse_vec(o.z, "--z"), v = parse_vec(o.v, "--v");
  const LatentMetric metric = prof.stage("load", [&] { return o.source.load(z.size()); });
  require_dim(z, metric.dim(), "--z");
  require_dim(v, metric.dim(), "--v");
  const ExpResult r = prof.stage("integrate", [&] { return exp_map(metric, z, v, o.steps, o.fd_step); });
  out << dump_json(Json{{"endpoint", vector_to_json(r.endpoint)}, {"t", vector_to_json(r.t)}, {"path", matrix_to_json(r.path)}});
  return 0;
}

struct LogOptions {
  MetricSource source;
  std::string z, y;
  EnergyOptions energy;
};

int cmd_log(const LogOptions& o, const Common& c, std::ostream& out, Profiler& prof) {
  const std::uint64_t seed = c.require_seed("log");
  const Vec z = parse_vec(o.z, "--z"), y = parse_vec(o.y, "--y");
  const EnergyConfig cfg = o.energy.build(seed);
  Rng rng(seed);
  LogResult r;
  if (!o.source.decoder.empty() && o.source.chosen() == 1) {
    const DecoderMap dec = prof.stage("load", [&] { return load_decoder(o.source.decoder); });
    require_dim(z, dec.latent_dim(), "--z");
    require_dim(y, dec.latent_dim(), "--y");
    r = prof.stage("optimize", [&] { return log_map(dec, z, y, cfg, rng); });
  } else {
    const LatentMetric metric = prof.stage("load", [&] { return o.source.load(z.size()); });
    require_dim(z, metric.dim(), "--z");
    require_dim(y, metric.dim(), "--y");
    r = prof.stage("optimize", [&] { return log_map(metric, z, y, cfg, rng); });
  }
  prof.count("optimizer_iterations", r.geodesic.iterations);
  out << dump_json(Json{{"v", vector_to_json(r.v)},
                        {"length", r.length},
                        {"energy", r.geodesic.energy},
                        {"straight_energy", r.geodesic.straight_energy},
                        {"iterations", r.geodesic.iterations},
                        {"converged", r.geodesic.converged}});
  return 0;
}

void report_error(std::ostream& err, const std::string& code, const std::string& message) {
  err << Json{{"error", code}, {"message", message}}.dump() << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fisher-Rao pullback geometry of decoder latent spaces", "statgeo"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  Common common;
  ToygenOptions toygen;
  ToyDecoderCliOptions toydec;
  GeodesicOptions geo;
  MetricGridOptions grid;
  LandCliOptions land;
  KlOptions klo;
  ExpOptions expo;
  LogOptions logo;

  auto* s_toygen = app.add_subcommand("toygen", "Noisy unit-circle latent codes");
  add_common(s_toygen, common);
  s_toygen->add_option("--n", toygen.n, "Number of codes");
  s_toygen->add_option("--noise", toygen.noise, "Gaussian noise scale");
  s_toygen->add_option("--out", toygen.out, "Output CSV (stdout if absent)");

  auto* s_toydec = app.add_subcommand("toy-decoder", "Random toy decoder, optionally regularized on codes");
  add_common(s_toydec, common);
  s_toydec->add_option("--family", toydec.family, "Likelihood family");
  s_toydec->add_option("--codes", toydec.codes, "Latent codes CSV for KMeans regularization");
  s_toydec->add_flag("--no-regularization", toydec.no_regularization, "Skip regularization even with --codes");
  s_toydec->add_option("--beta", toydec.beta, "Translated-sigmoid beta");
  s_toydec->add_option("--c", toydec.c, "Translated-sigmoid offset");
  s_toydec->add_option("--kmeans-k", toydec.kmeans_k, "KMeans centers");
  s_toydec->add_option("--out", toydec.out, "Output decoder JSON (stdout if absent)");

  auto* s_geo = app.add_subcommand("geodesic", "Energy-minimizing spline between latent points");
  add_common(s_geo, common);
  add_energy(s_geo, geo.energy);
  s_geo->add_option("--decoder", geo.decoder, "Decoder JSON")->required();
  s_geo->add_option("--from", geo.from, "Start point x,y,...");
  s_geo->add_option("--to", geo.to, "End point x,y,...");
  s_geo->add_option("--codes", geo.codes, "Latent codes CSV");
  s_geo->add_option("--pairs", geo.pairs, "Index pairs into --codes: i,j;k,l");
  s_geo->add_option("--samples", geo.samples, "Curve samples T (T + 1 rows)");
  s_geo->add_option("--out", geo.out, "Output CSV")->required();

  auto* s_grid = app.add_subcommand("metric-grid", "Metric tensors on a lattice");
  add_common(s_grid, common);
  s_grid->add_option("--decoder", grid.decoder, "Decoder JSON")->required();
  s_grid->add_option("--mode", grid.mode, "pullback or kl-probe");
  s_grid->add_option("--lower", grid.lower, "Lower corner")->required();
  s_grid->add_option("--upper", grid.upper, "Upper corner")->required();
  s_grid->add_option("--resolution", grid.resolution, "Points per axis")->required();
  s_grid->add_option("--bandwidth", grid.bandwidth, "Kernel bandwidth (default: lattice spacing)");
  s_grid->add_option("--epsilon", grid.epsilon, "KL-probe step");
  s_grid->add_option("--mc-samples", grid.mc_samples, "Monte-Carlo KL samples (0: closed form)");
  s_grid->add_option("--validation-radius", grid.validation_radius, "Radius of the KL-probe validation directions");
  s_grid->add_option("--out", grid.out, "Output JSON (stdout if absent)");

  auto* s_land = app.add_subcommand("land", "Fit a locally adaptive normal distribution");
  add_common(s_land, common);
  land.source.add(s_land);
  s_land->add_option("--codes", land.codes, "Latent codes CSV")->required();
  s_land->add_option("--mc-samples", land.mc_samples, "Normalizer samples");
  s_land->add_option("--exp-steps", land.exp_steps, "RK4 steps of the normalizer exp maps");
  s_land->add_option("--max-iters", land.max_iters, "Fit iterations");
  s_land->add_option("--log-N", land.log_N, "Energy discretization of the log maps");
  s_land->add_option("--density", land.density, "Density CSV over a lattice");
  s_land->add_option("--density-resolution", land.density_resolution, "Density lattice points per axis");
  s_land->add_option("--density-lower", land.density_lower, "Density lattice lower corner");
  s_land->add_option("--density-upper", land.density_upper, "Density lattice upper corner");
  s_land->add_option("--out", land.out, "Model JSON (stdout if absent)");

  auto* s_kl = app.add_subcommand("kl", "KL divergence against its quadratic approximation");
  add_common(s_kl, common);
  s_kl->add_option("--decoder", klo.decoder, "Decoder JSON")->required();
  s_kl->add_option("--z1", klo.z1, "First latent point")->required();
  s_kl->add_option("--z2", klo.z2, "Second latent point")->required();
  s_kl->add_option("--mc-samples", klo.mc_samples, "Monte-Carlo KL samples (0: closed form)");

  auto* s_exp = app.add_subcommand("exp", "Exponential map by RK4");
  add_common(s_exp, common);
  expo.source.add(s_exp);
  s_exp->add_option("--z", expo.z, "Base point")->required();
  s_exp->add_option("--v", expo.v, "Initial velocity")->required();
  s_exp->add_option("--steps", expo.steps, "RK4 steps");
  s_exp->add_option("--fd-step", expo.fd_step, "Metric derivative step");

  auto* s_log = app.add_subcommand("log", "Logarithmic map via the minimizing spline");
  add_common(s_log, common);
  add_energy(s_log, logo.energy);
  logo.source.add(s_log);
  s_log->add_option("--z", logo.z, "Base point")->required();
  s_log->add_option("--y", logo.y, "Target point")->required();

  std::vector<std::string> args = raw_args;
  try {
    const std::string config = find_config(args);
    if (!config.empty() && !args.empty()) {
      const auto extra = config_arguments(config);
      args.insert(args.begin() + 1, extra.begin(), extra.end());
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    report_error(err, "UsageError", e.what());
    return 1;
  } catch (const Error& e) {
    report_error(err, to_string(e.code()), e.what());
    return 1;
  }

  if (const char* env = std::getenv("STATGEO_THREADS")) {
    try {
      const long t = std::stol(env);
      if (t > 0) common.threads = static_cast<unsigned>(t);
    } catch (const std::exception&) {
      report_error(err, "UsageError", "STATGEO_THREADS must be a positive integer");
      return 1;
    }
  }
  if (common.threads == 0) common.threads = 1;

  Profiler prof(common.profile);
  int code = 0;
  try {
    if (s_toygen->parsed()) {
      code = cmd_toygen(toygen, common, out, prof);
    } else if (s_toydec->parsed()) {
      code = cmd_toy_decoder(toydec, common, out, prof);
    } else if (s_geo->parsed()) {
      code = cmd_geodesic(geo, common, out, prof);
    } else if (s_grid->parsed()) {
      code = cmd_metric_grid(grid, common, out, prof);
    } else if (s_land->parsed()) {
      code = cmd_land(land, common, out, prof);
    } else if (s_kl->parsed()) {
      code = cmd_kl(klo, common, out, prof);
    } else if (s_exp->parsed()) {
      code = cmd_exp(expo, common, out, prof);
    } else if (s_log->parsed()) {
      code = cmd_log(logo, common, out, prof);
    }
  } catch (const Error& e) {
    prof.report(err);
    report_error(err, to_string(e.code()), e.what());
    return e.code() == ErrorCode::ParseError ? 1 : 2;
  } catch (const std::exception& e) {
    prof.report(err);
    report_error(err, "InternalError", e.what());
    return 2;
  }
  prof.report(err);
  return code;
}

}  // namespace statgeo
