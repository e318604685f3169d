#include "otwb/cli_commands.hpp"

#include "otwb/agd_baseline.hpp"
#include "otwb/error.hpp"
#include "otwb/ot_solver.hpp"
#include "otwb/penalized.hpp"
#include "otwb/rng.hpp"
#include "otwb/wb_solver.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace otwb {

using nlohmann::json;

namespace {

const char* candidate_name(CandidatePolicy p) {
  switch (p) {
    case CandidatePolicy::ergodic: return "ergodic";
    case CandidatePolicy::last: return "last";
    case CandidatePolicy::both: return "both";
  }
  return "?";
}

json config_json(const EngineConfig& c) {
  return json{{"rho", c.rho},           {"beta0", c.beta0},         {"gamma", c.gamma},
              {"L", c.L},               {"theta0", c.theta0},       {"eps", c.eps},
              {"max_outer", c.max_outer}, {"max_inner", c.max_inner}, {"gap_every", c.gap_every},
              {"candidates", candidate_name(c.candidates)},
              {"general_average", c.general_average}};
}

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

std::optional<double> parse_gamma(const std::string& text) {
  if (text == "auto") return std::nullopt;
  try {
    std::size_t used = 0;
    const double g = std::stod(text, &used);
    if (used != text.size() || !(g >= 0.0) || !std::isfinite(g)) throw std::invalid_argument(text);
    return g;
  } catch (const std::exception&) {
    throw UsageError("--gamma expects 'auto' or a nonnegative number, got '" + text + "'");
  }
}

bool contains(const std::vector<std::string>& names, const std::string& name) {
  return std::find(names.begin(), names.end(), name) != names.end();
}

std::string join(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : ", ") + n;
  return out;
}

SolveOutcome solve_ot(const OtInstance& inst, const SolveFlags& f) {
  SolveOutcome o;
  const std::optional<double> gamma = parse_gamma(f.gamma);
  if (f.method == "agd-scaled") {
    AgdOptions opt;
    opt.gamma = gamma;
    opt.delta = f.delta;
    if (f.max_iter) opt.max_iter = *f.max_iter;
    const AgdReport r = solve_agd(inst, f.eps, opt);
    o.trace = r.trace;
    o.converged = r.converged;
    o.gap = r.gap_certificate;
    o.iterations = r.iterations;
    o.inner_total = static_cast<long>(r.backtracking.size());
    o.report = json{{"value", r.value},
                    {"gap_certificate", r.gap_certificate},
                    {"iterations", r.iterations},
                    {"oracle_calls", r.oracle_calls},
                    {"support", support_fraction(r.plan_rounded)},
                    {"config",
                     {{"gamma", r.gamma},
                      {"delta", opt.delta},
                      {"max_iter", opt.max_iter},
                      {"eps", f.eps}}}};
    return o;
  }

  OtOptions opt;
  if (f.method == "hpd" || f.method == "hpd-ls") {
    opt.variant = OtVariant::plain;
    opt.mode = f.fixed_marginal ? OtMode::fixed_marginal : OtMode::simplex;
    opt.linesearch = f.method == "hpd-ls";
  } else if (f.method == "gamma-hpd-ls" || f.method == "gamma-hpd-ls-fm") {
    opt.variant = OtVariant::regularized;
    opt.mode = (f.fixed_marginal || f.method == "gamma-hpd-ls-fm") ? OtMode::fixed_marginal
                                                                    : OtMode::simplex;
  } else if (f.method == "hpd-scaled") {
    opt.mode = OtMode::scaled;
    opt.delta = f.delta;
    opt.variant = (gamma && *gamma == 0.0) ? OtVariant::plain : OtVariant::regularized;
  } else {
    throw UsageError("unknown method '" + f.method + "' for an ot instance (expected one of " +
                     join(ot_methods()) + ")");
  }
  if (opt.variant == OtVariant::regularized) opt.gamma_reg = gamma;
  if (f.beta1_mult) opt.beta1_mult = *f.beta1_mult;
  opt.rho = f.rho;
  if (f.max_iter) opt.max_outer = *f.max_iter;

  const OtSolution s = solve_eps(inst, f.eps, opt);
  o.trace = s.trace;
  o.converged = s.converged;
  o.gap = s.gap_certificate;
  o.iterations = s.iterations;
  o.inner_total = s.inner_total;
  json cfg = config_json(s.config);
  cfg["variant"] = opt.variant == OtVariant::plain ? "plain" : "regularized";
  cfg["mode"] = opt.mode == OtMode::simplex          ? "simplex"
                : opt.mode == OtMode::fixed_marginal ? "fixed_marginal"
                                                     : "scaled";
  cfg["linesearch"] = opt.linesearch;
  cfg["gamma_reg"] = s.gamma_reg;
  cfg["beta1_mult"] = opt.beta1_mult;
  if (opt.mode == OtMode::scaled) cfg["delta"] = opt.delta;
  o.report = json{{"value", s.value},
                  {"lower_bound", s.lower_bound},
                  {"gap_certificate", s.gap_certificate},
                  {"gap_raw", s.gap_raw},
                  {"iterations", s.iterations},
                  {"inner_total", s.inner_total},
                  {"support", s.support},
                  {"invariant_violations", s.invariant_violations},
                  {"config", cfg}};
  return o;
}

SolveOutcome solve_wb_method(const WbInstance& inst, const SolveFlags& f) {
  SolveOutcome o;
  const std::optional<double> gamma = parse_gamma(f.gamma);
  const double auto_gamma = f.eps / (4.0 * std::log(static_cast<double>(inst.n)));
  if (f.method == "penalized") {
    PenalizedOptions opt;
    opt.rho = f.rho;
    opt.gamma_reg = gamma.value_or(0.0);
    if (f.beta1_mult) opt.beta_mult = *f.beta1_mult;
    if (f.max_iter) opt.max_outer = *f.max_iter;
    const Penalty pen = Penalty::parse(f.penalty);
    const UnbalancedWbReport r = solve_unbalanced_wb(inst, pen, f.eps, opt);
    o.trace = r.trace;
    o.converged = r.converged;
    o.gap = r.gap;
    o.iterations = r.iterations;
    o.inner_total = r.inner_total;
    json cfg = config_json(r.config);
    cfg["penalty"] = pen.to_string();
    o.report = json{{"value", r.value},     {"gap_certificate", r.gap},
                    {"iterations", r.iterations}, {"inner_total", r.inner_total},
                    {"barycenter", vector_json(r.barycenter)}, {"config", cfg}};
    return o;
  }
  WbOptions opt;
  if (f.method == "hpd" || f.method == "hpd-ls") {
    opt.linesearch = f.method == "hpd-ls";
    opt.gamma_reg = 0.0;
    opt.fixed_marginal = f.fixed_marginal;
  } else if (f.method == "gamma-hpd-ls" || f.method == "gamma-hpd-ls-fm") {
    opt.gamma_reg = gamma.value_or(auto_gamma);
    opt.fixed_marginal = f.fixed_marginal || f.method == "gamma-hpd-ls-fm";
  } else {
    throw UsageError("unknown method '" + f.method + "' for a wb instance (expected one of " +
                     join(wb_methods()) + ")");
  }
  opt.rho = f.rho;
  if (f.beta1_mult) opt.beta_mult = *f.beta1_mult;
  if (f.max_iter) opt.max_outer = *f.max_iter;
  const WbSolution s = solve_wb(inst, f.eps, opt);
  o.trace = s.trace;
  o.converged = s.converged;
  o.gap = s.gap_certificate;
  o.iterations = s.iterations;
  o.inner_total = s.inner_total;
  json cfg = config_json(s.config);
  cfg["fixed_marginal"] = opt.fixed_marginal;
  cfg["linesearch"] = opt.linesearch;
  cfg["beta_mult"] = opt.beta_mult;
  o.report = json{{"value", s.value},
                  {"gap_certificate", s.gap_certificate},
                  {"gap_raw", s.gap_raw},
                  {"iterations", s.iterations},
                  {"inner_total", s.inner_total},
                  {"plan_passes", s.plan_passes},
                  {"barycenter", vector_json(s.barycenter)},
                  {"config", cfg}};
  return o;
}

SolveOutcome solve_uot_method(const UnbalancedOtInstance& inst, const SolveFlags& f) {
  if (!contains(unbalanced_methods(), f.method)) {
    throw UsageError("unknown method '" + f.method + "' for a uot instance (expected one of " +
                     join(unbalanced_methods()) + ")");
  }
  PenalizedOptions opt;
  opt.rho = f.rho;
  opt.gamma_reg = parse_gamma(f.gamma).value_or(0.0);
  if (f.beta1_mult) opt.beta_mult = *f.beta1_mult;
  if (f.max_iter) opt.max_outer = *f.max_iter;
  const Penalty pen = Penalty::parse(f.penalty);
  const UnbalancedOtReport r = solve_unbalanced_ot(inst, pen, f.eps, opt);
  SolveOutcome o;
  o.trace = r.trace;
  o.converged = r.converged;
  o.gap = r.gap;
  o.iterations = r.iterations;
  o.inner_total = r.inner_total;
  json cfg = config_json(r.config);
  cfg["penalty"] = pen.to_string();
  o.report = json{{"value", r.value},
                  {"transport_cost", r.transport_cost},
                  {"penalty_term", r.penalty_term},
                  {"gap_certificate", r.gap},
                  {"gap_raw", r.gap_raw},
                  {"iterations", r.iterations},
                  {"inner_total", r.inner_total},
                  {"config", cfg}};
  return o;
}

const char* kind_name(const AnyInstance& inst) {
  if (std::holds_alternative<OtInstance>(inst)) return "ot";
  if (std::holds_alternative<WbInstance>(inst)) return "wb";
  return "uot";
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path + " for writing");
  f << text;
  if (!f) throw Error("write failed: " + path);
}

UnbalancedOtInstance gen_unbalanced(Index n, std::uint64_t seed) {
  const OtInstance base = gen_random_instance(n, seed);
  SplitMix64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const double mass = rng.uniform(0.5, 1.5);
  return UnbalancedOtInstance::make(base.mu, base.nu.values() * mass, base.cost.raw());
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void add_solver_flags(CLI::App* cmd, SolveFlags& f) {
  cmd->add_option("--method", f.method, "solver method");
  cmd->add_option("--eps", f.eps, "target certified gap");
  cmd->add_option("--gamma", f.gamma, "regularization: auto or a value");
  cmd->add_option("--beta1-mult", f.beta1_mult, "multiplier on the default step ratio");
  cmd->add_option("--rho", f.rho, "linesearch shrink factor");
  cmd->add_option("--delta", f.delta, "floor parameter of the scaled kernel");
  cmd->add_option("--penalty", f.penalty, "quad:eta or tv:alpha");
  cmd->add_flag("--fixed-marginal", f.fixed_marginal, "keep plan rows equal to the first marginal");
  cmd->add_option("--max-iter", f.max_iter, "outer iteration budget");
  cmd->add_option("--seed", f.seed, "seed for randomized choices");
}

void validate_flags(const SolveFlags& f) {
  if (!(f.eps > 0.0) || !std::isfinite(f.eps)) throw UsageError("--eps must be positive");
  if (!(f.rho > 0.0 && f.rho < 1.0)) throw UsageError("--rho must lie in (0, 1)");
  if (!(f.delta > 0.0 && f.delta < 1.0)) throw UsageError("--delta must lie in (0, 1)");
  if (f.max_iter && *f.max_iter < 0) throw UsageError("--max-iter must be nonnegative");
  if (f.beta1_mult && !(*f.beta1_mult > 0.0)) throw UsageError("--beta1-mult must be positive");
  parse_gamma(f.gamma);
}

}  // namespace

const std::vector<std::string>& ot_methods() {
  static const std::vector<std::string> names{"hpd",        "hpd-ls",     "gamma-hpd-ls",
                                              "gamma-hpd-ls-fm", "hpd-scaled", "agd-scaled"};
  return names;
}

const std::vector<std::string>& wb_methods() {
  static const std::vector<std::string> names{"hpd", "hpd-ls", "gamma-hpd-ls", "gamma-hpd-ls-fm",
                                              "penalized"};
  return names;
}

const std::vector<std::string>& unbalanced_methods() {
  static const std::vector<std::string> names{"penalized"};
  return names;
}

SolveOutcome run_method(const AnyInstance& inst, const SolveFlags& flags) {
  validate_flags(flags);
  const auto start = std::chrono::steady_clock::now();
  SolveOutcome o = std::visit(
      [&](const auto& i) -> SolveOutcome {
        using T = std::decay_t<decltype(i)>;
        if constexpr (std::is_same_v<T, OtInstance>) return solve_ot(i, flags);
        else if constexpr (std::is_same_v<T, WbInstance>) return solve_wb_method(i, flags);
        else return solve_uot_method(i, flags);
      },
      inst);
  o.report["method"] = flags.method;
  o.report["kind"] = kind_name(inst);
  o.report["eps"] = flags.eps;
  o.report["converged"] = o.converged;
  o.report["gap_rounded"] = o.gap;
  o.report["wall_s"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  o.report["config"]["seed"] = flags.seed;
  o.report["config"]["method"] = flags.method;
  return o;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Optimal transport and barycenter solver"};
  app.require_subcommand(1);

  // gen
  std::string kind, gen_out, image_a, image_b;
  Index gen_n = 0, npix = 0, gen_m = 10;
  std::uint64_t gen_seed = 0;
  bool squared = false;
  auto* gen = app.add_subcommand("gen", "write an instance file");
  gen->add_option("--kind", kind, "gaussian, random, corner, image-pair, gaussian-wb, uot-random")
      ->required();
  gen->add_option("--n", gen_n, "number of support points");
  gen->add_option("--npix", npix, "image side length");
  gen->add_option("--m", gen_m, "number of marginals (gaussian-wb)");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--image-a", image_a, "first image for image-pair");
  gen->add_option("--image-b", image_b, "second image for image-pair");
  gen->add_flag("--squared", squared, "squared pixel distance");
  gen->add_option("--out", gen_out, "output path")->required();

  // solve
  SolveFlags flags;
  std::string in_path, trace_path, svg_path, report_path;
  auto* solve = app.add_subcommand("solve", "solve an instance file");
  solve->add_option("--in", in_path, "instance file")->required();
  add_solver_flags(solve, flags);
  solve->add_option("--trace", trace_path, "trace CSV output");
  solve->add_option("--svg", svg_path, "convergence plot output");
  solve->add_option("--report", report_path, "report JSON output (default stdout)");

  // bench
  SolveFlags bench_flags;
  std::vector<std::string> bench_inputs;
  std::string methods = "gamma-hpd-ls-fm", bench_out;
  auto* bench = app.add_subcommand("bench", "run methods over instance files");
  bench->add_option("--instances", bench_inputs, "instance files")->required();
  bench->add_option("--methods", methods, "comma-separated method names");
  add_solver_flags(bench, bench_flags);
  bench->add_option("--out", bench_out, "CSV output (default stdout)");

  // plot
  std::string plot_in, plot_out, plot_title = "duality gap";
  auto* plot = app.add_subcommand("plot", "render a trace CSV as SVG");
  plot->add_option("--trace", plot_in, "trace CSV")->required();
  plot->add_option("--svg", plot_out, "SVG output")->required();
  plot->add_option("--title", plot_title, "plot title");

  std::vector<std::string> argv_store{"otwb"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitCertified;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*gen) {
      AnyInstance inst;
      if (kind == "gaussian") {
        if (gen_n < 2) throw UsageError("--n must be at least 2");
        inst = gen_gaussian_instance(gen_n, gen_seed);
      } else if (kind == "random") {
        if (gen_n < 2) throw UsageError("--n must be at least 2");
        inst = gen_random_instance(gen_n, gen_seed);
      } else if (kind == "corner") {
        if (npix < 2) throw UsageError("--npix must be at least 2");
        inst = gen_corner_to_dense(npix, squared);
      } else if (kind == "image-pair") {
        Matrix a, b;
        if (!image_a.empty() || !image_b.empty()) {
          if (image_a.empty() || image_b.empty()) {
            throw UsageError("image-pair needs both --image-a and --image-b");
          }
          a = load_image(image_a);
          b = load_image(image_b);
        } else {
          if (npix < 2) throw UsageError("--npix must be at least 2");
          a = gen_blob_image(npix, gen_seed);
          b = gen_blob_image(npix, gen_seed + 1);
        }
        inst = image_pair_instance(a, b, squared);
      } else if (kind == "gaussian-wb") {
        if (gen_n < 2 || gen_m < 2) throw UsageError("--n and --m must be at least 2");
        inst = gen_gaussian_wb(gen_m, gen_n, gen_seed).instance;
      } else if (kind == "uot-random") {
        if (gen_n < 2) throw UsageError("--n must be at least 2");
        inst = gen_unbalanced(gen_n, gen_seed);
      } else {
        throw UsageError("unknown kind '" + kind + "'");
      }
      save_instance(inst, gen_out);
      return kExitCertified;
    }

    if (*solve) {
      validate_flags(flags);
      const AnyInstance inst = load_instance(in_path);
      const SolveOutcome o = run_method(inst, flags);
      if (!trace_path.empty()) write_trace(o.trace, trace_path);
      if (!svg_path.empty()) write_text(svg_path, trace_to_svg(o.trace, flags.method));
      const std::string text = o.report.dump(2) + "\n";
      if (report_path.empty()) out << text;
      else write_text(report_path, text);
      if (!o.converged) {
        err << "not converged: best certificate " << o.gap << " > eps " << flags.eps << '\n';
        return kExitNotConverged;
      }
      return kExitCertified;
    }

    if (*bench) {
      validate_flags(bench_flags);
      const std::vector<std::string> names = split_list(methods);
      if (names.empty()) throw UsageError("--methods is empty");
      std::ostringstream csv;
      csv << "instance,method,status,gap,iterations,wall_s,inner_total,error\n"
          << std::setprecision(17);
      for (const auto& path : bench_inputs) {
        std::optional<AnyInstance> inst;
        std::string load_error;
        try {
          inst = load_instance(path);
        } catch (const std::exception& e) {
          load_error = e.what();
        }
        for (const auto& name : names) {
          csv << path << ',' << name << ',';
          if (!inst) {
            csv << "error,,,,,\"" << load_error << "\"\n";
            continue;
          }
          SolveFlags f = bench_flags;
          f.method = name;
          const auto start = std::chrono::steady_clock::now();
          try {
            const SolveOutcome o = run_method(*inst, f);
            const double wall =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            csv << (o.converged ? "certified" : "not_converged") << ',' << o.gap << ','
                << o.iterations << ',' << wall << ',' << o.inner_total << ",\n";
          } catch (const std::exception& e) {
            std::string msg = e.what();
            std::replace(msg.begin(), msg.end(), '"', '\'');
            csv << "error,,,,,\"" << msg << "\"\n";
          }
        }
      }
      if (bench_out.empty()) out << csv.str();
      else write_text(bench_out, csv.str());
      return kExitCertified;
    }

    if (*plot) {
      write_text(plot_out, trace_to_svg(read_trace(plot_in), plot_title));
      return kExitCertified;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace otwb
