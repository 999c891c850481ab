#pragma once

// Command-line front end: `predict`, `simulate` and `generate`.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hcdpi/dm_sampler.hpp"
#include "hcdpi/error.hpp"
#include "hcdpi/io.hpp"
#include "hcdpi/methods.hpp"
#include "hcdpi/parallel.hpp"
#include "hcdpi/simulation.hpp"

namespace hcdpi {

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kUsage = 2;
inline constexpr int kParse = 3;
inline constexpr int kValidation = 4;
inline constexpr int kIo = 5;
inline constexpr int kDegenerateDesign = 6;
inline constexpr int kZeroCategory = 7;
inline constexpr int kZeroProbability = 8;
inline constexpr int kInvalidDispersion = 9;
inline constexpr int kNotPsd = 10;
inline constexpr int kBracket = 11;
inline constexpr int kInitialization = 12;
inline constexpr int kDomain = 13;
inline constexpr int kInternal = 70;
}  // namespace exit_code

inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return exit_code::kUsage;
    case ErrorCode::ParseError: return exit_code::kParse;
    case ErrorCode::ValidationError: return exit_code::kValidation;
    case ErrorCode::IoError: return exit_code::kIo;
    case ErrorCode::DegenerateDesign: return exit_code::kDegenerateDesign;
    case ErrorCode::ZeroCategory: return exit_code::kZeroCategory;
    case ErrorCode::ZeroProbability: return exit_code::kZeroProbability;
    case ErrorCode::InvalidDispersion: return exit_code::kInvalidDispersion;
    case ErrorCode::NotPSD: return exit_code::kNotPsd;
    case ErrorCode::BracketError: return exit_code::kBracket;
    case ErrorCode::InitializationError: return exit_code::kInitialization;
    case ErrorCode::DomainError: return exit_code::kDomain;
  }
  return exit_code::kInternal;
}

namespace cli_detail {

inline std::vector<double> parse_double_list(const std::string& s, const char* what) {
  std::vector<double> out;
  for (const auto& part : split(s, ',')) {
    try {
      out.push_back(parse_number(part));
    } catch (const Error&) {
      fail(ErrorCode::InvalidArgument, std::string(what) + ": '" + part + "' is not a number");
    }
    if (!std::isfinite(out.back())) fail(ErrorCode::InvalidArgument, std::string(what) + " must be finite");
  }
  return out;
}

inline std::vector<long long> parse_int_list(const std::string& s, const char* what) {
  std::vector<long long> out;
  for (const auto& v : parse_double_list(s, what)) {
    if (v != std::floor(v)) fail(ErrorCode::InvalidArgument, std::string(what) + " must be integers");
    out.push_back(static_cast<long long>(v));
  }
  return out;
}

inline std::vector<PriorChoice::Kind> parse_priors(const std::string& s) {
  std::vector<PriorChoice::Kind> out;
  for (const auto& p : split(s, ',')) {
    const auto k = parse_prior(p);
    if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
  }
  return out;
}

inline std::string bracket(double lo, double hi) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "[%.2f, %.2f]", lo, hi);
  return buf;
}

/// Category-by-method table of [L, U] bounds, one row per category.
inline void print_interval_table(std::ostream& out, const std::vector<PredictionIntervalSet>& sets,
                                 const std::vector<std::string>& labels, const std::vector<count_t>* future) {
  std::vector<std::string> head{"Category"};
  if (future) head.push_back("y_c");
  for (const auto& s : sets) head.push_back(s.method);
  std::vector<std::vector<std::string>> rows{head};
  for (std::size_t c = 0; c < labels.size(); ++c) {
    std::vector<std::string> row{labels[c]};
    if (future) row.push_back(std::to_string((*future)[c]));
    for (const auto& s : sets) row.push_back(bracket(s.lower[c], s.upper[c]));
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& r : rows)
    for (std::size_t j = 0; j < r.size(); ++j) width[j] = std::max(width[j], r[j].size());
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < r.size(); ++j)
      out << (j ? "  " : "") << std::left << std::setw(static_cast<int>(width[j])) << r[j];
    out << '\n';
  }
}

inline void write_error(std::ostream& err, const std::string& kind, const std::string& message, int code) {
  err << nlohmann::json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << '\n';
}

}  // namespace cli_detail

struct PredictOptions {
  std::string data_path;
  long long m = 0;
  std::string future_path;
  double alpha = 0.05;
  std::string methods = "all";
  std::size_t B = kDefaultBootstrapReplicates;
  std::string prior = "cauchy";
  std::size_t chains = 4;
  std::size_t iterations = 2500;
  std::size_t warmup = 1000;
  std::size_t mvn_draws = kDefaultMvnDraws;
  double tolerance = 0.0025;
  std::uint64_t seed = 42;
  std::string out = "-";
  std::string format;
  bool repair = false;
  bool quiet = false;
};

inline int run_predict(const PredictOptions& o, unsigned threads, std::ostream& out) {
  auto table = parse_counts_csv(o.data_path, 2);
  const RngStream master(o.seed);
  HistoricalDataset data = table.data;
  if (o.repair) {
    // Same rule the bootstrap applies to its replicates.
    RngStream repair_rng = master.substream(0);
    Matrix<count_t> counts = data.counts();
    std::uniform_int_distribution<std::size_t> pick(0, data.clusters() - 1);
    const auto totals = data.category_totals();
    for (std::size_t c = 0; c < data.categories(); ++c)
      if (totals[c] == 0) counts(pick(repair_rng), c) += 1;
    data = HistoricalDataset(std::move(counts), data.labels());
  }
  const FutureSpec spec{static_cast<count_t>(o.m), o.alpha};
  spec.validate();

  std::vector<std::string> ids;
  for (const auto& id : split(o.methods, ','))
    if (!id.empty()) ids.push_back(id);
  const auto methods = parse_methods(ids, cli_detail::parse_priors(o.prior));

  MethodSettings settings;
  settings.bootstrap_replicates = o.B;
  settings.calibration.tolerance = o.tolerance;
  settings.mvn_draws = o.mvn_draws;
  settings.mcmc.chains = o.chains;
  settings.mcmc.iterations = o.iterations;
  settings.mcmc.warmup = o.warmup;
  settings.threads = threads;

  std::optional<std::vector<count_t>> future;
  if (!o.future_path.empty()) {
    const auto ft = parse_counts_csv(o.future_path, 1);
    if (ft.data.clusters() != 1) fail(ErrorCode::ValidationError, o.future_path + ": expected exactly one study row");
    if (ft.data.categories() != data.categories())
      fail(ErrorCode::ValidationError, o.future_path + ": category count differs from the historical data");
    future = std::vector<count_t>(ft.data.counts().row(0).begin(), ft.data.counts().row(0).end());
    if (ft.data.total() != spec.m)
      fail(ErrorCode::ValidationError, o.future_path + ": future counts sum to " + std::to_string(ft.data.total()) +
                                           ", not m=" + std::to_string(spec.m));
  }

  std::vector<PredictionIntervalSet> sets;
  std::vector<std::string> warnings;
  if (!methods.empty()) {
    auto run = compute_intervals(data, spec, methods, settings, master.substream(1));
    sets = std::move(run.intervals);
    warnings = std::move(run.warnings);
  }
  std::vector<Verdict> verdicts;
  if (future)
    for (const auto& s : sets) verdicts.push_back({s.method, s.contains(*future)});

  const auto format = o.format.empty() ? format_for_path(o.out) : parse_format(o.format);
  emit_intervals(sets, format, o.out, verdicts, out);

  if (!o.quiet && o.out != "-") {
    cli_detail::print_interval_table(out, sets, data.labels(), future ? &*future : nullptr);
    for (const auto& v : verdicts) out << v.method << ": " << (v.contains ? "contains" : "does not contain") << " the future observation\n";
  }
  for (const auto& s : sets)
    for (const auto& d : s.diagnostics) warnings.push_back(s.method + ": " + d);
  if (!o.quiet)
    for (const auto& w : warnings) out << "warning: " << w << '\n';
  return exit_code::kOk;
}

struct SimulateOptions {
  std::string config_path;
  std::string out = "-";
  std::string format;
  std::string tail_out;
  bool full_scale = false;
};

/// Scenarios described by a key = value config (see README).
inline std::vector<Scenario> scenarios_from_config(const std::map<std::string, std::string>& kv, bool full_scale_flag) {
  static const std::vector<std::string> known = {
      "scenario_id", "catalog", "pi",     "K",      "n",     "m",         "phi",       "n_iter",     "B",
      "S",           "chains",  "iterations", "warmup", "alpha", "seed", "methods", "prior", "repair",
      "mvn_draws",   "tolerance", "full_scale"};
  for (const auto& [k, v] : kv)
    if (std::find(known.begin(), known.end(), k) == known.end()) fail(ErrorCode::ParseError, "unknown config key '" + k + "'");
  auto get = [&](const std::string& key, const std::string& def) {
    const auto it = kv.find(key);
    return it == kv.end() ? def : it->second;
  };
  const bool full_scale = full_scale_flag || get("full_scale", "false") == "true";

  Scenario base;
  base.n_iter = static_cast<std::size_t>(cli_detail::parse_int_list(get("n_iter", full_scale ? "1000" : "500"), "n_iter").at(0));
  base.alpha = cli_detail::parse_double_list(get("alpha", "0.05"), "alpha").at(0);
  base.seed = static_cast<std::uint64_t>(cli_detail::parse_int_list(get("seed", "1"), "seed").at(0));
  base.repair_zero_columns = get("repair", "false") == "true";
  base.settings.bootstrap_replicates =
      static_cast<std::size_t>(cli_detail::parse_int_list(get("B", full_scale ? "10000" : "2000"), "B").at(0));
  base.settings.mvn_draws = static_cast<std::size_t>(cli_detail::parse_int_list(get("mvn_draws", "100000"), "mvn_draws").at(0));
  base.settings.calibration.tolerance = cli_detail::parse_double_list(get("tolerance", "0.0025"), "tolerance").at(0);
  base.settings.mcmc.chains = static_cast<std::size_t>(cli_detail::parse_int_list(get("chains", "4"), "chains").at(0));
  base.settings.mcmc.warmup = static_cast<std::size_t>(cli_detail::parse_int_list(get("warmup", "1000"), "warmup").at(0));
  if (kv.count("iterations")) {
    base.settings.mcmc.iterations = static_cast<std::size_t>(cli_detail::parse_int_list(get("iterations", ""), "iterations").at(0));
  } else {
    const auto S = cli_detail::parse_int_list(get("S", full_scale ? "10000" : "4000"), "S").at(0);
    base.settings.mcmc.iterations = std::max<std::size_t>(1, static_cast<std::size_t>(S) / base.settings.mcmc.chains);
  }
  std::vector<std::string> ids;
  for (const auto& id : split(get("methods", "all"), ','))
    if (!id.empty()) ids.push_back(id);
  base.methods = parse_methods(ids, cli_detail::parse_priors(get("prior", "cauchy")));

  std::vector<std::pair<std::string, std::vector<double>>> vectors;
  if (kv.count("pi")) {
    vectors.emplace_back(get("scenario_id", "custom"), normalize_probabilities(cli_detail::parse_double_list(get("pi", ""), "pi")));
  }
  if (kv.count("catalog")) {
    for (const auto& sel : split(get("catalog", ""), ',')) {
      for (const auto& v : probability_catalog()) {
        const bool all = sel == "all";
        const bool family = sel == "C" + std::to_string(v.categories);
        if (all || family || sel == v.id) vectors.emplace_back(v.id, v.pi);
      }
      if (sel != "all" && sel != "C3" && sel != "C5" && sel != "C10") catalog_vector(sel);  // validates the id
    }
  }
  if (vectors.empty()) fail(ErrorCode::ParseError, "config needs 'pi' or 'catalog'");

  const auto Ks = cli_detail::parse_int_list(get("K", "10"), "K");
  const auto ns = cli_detail::parse_int_list(get("n", "50"), "n");
  const auto phis = cli_detail::parse_double_list(get("phi", "5"), "phi");
  std::vector<Scenario> out;
  std::size_t index = 0;
  for (const auto& [vid, pi] : vectors) {
    for (auto K : Ks) {
      for (auto n : ns) {
        for (double phi : phis) {
          Scenario s = base;
          s.K = static_cast<std::size_t>(K);
          s.n = n;
          s.m = kv.count("m") ? cli_detail::parse_int_list(get("m", ""), "m").at(0) : n;
          s.phi = phi;
          s.pi_true = pi;
          char buf[128];
          std::snprintf(buf, sizeof buf, "%s_K%lld_n%lld_phi%g", vid.c_str(), K, n, phi);
          s.id = buf;
          s.sparse = s.min_expected_count() < 1.0;
          s.seed = index == 0 ? base.seed : mix_key(base.seed, index);
          ++index;
          out.push_back(std::move(s));
        }
      }
    }
  }
  return out;
}

inline int run_simulate(const SimulateOptions& o, unsigned threads, std::ostream& out) {
  auto in = open_input(o.config_path);
  const auto scenarios = scenarios_from_config(parse_key_values(in, o.config_path), o.full_scale);
  std::vector<SimulationReport> reports;
  for (const auto& s : scenarios) {
    reports.push_back(run_simulation(s, threads));
    const auto& r = reports.back();
    if (o.out == "-") continue;  // stdout carries the report
    out << s.id << ": " << r.iterations - r.failed_iterations << "/" << r.iterations << " iterations ok, "
        << std::fixed << std::setprecision(1) << r.runtime_seconds << " s" << std::defaultfloat << '\n';
    if (r.exceeded_failure_cap)
      out << "warning: " << s.id << " exceeded the 5% failure cap (" << r.failed_iterations << " failures)\n";
  }
  const auto format = o.format.empty() ? format_for_path(o.out) : parse_format(o.format);
  emit_report(reports, format, o.out, out);
  if (!o.tail_out.empty()) {
    write_output(o.tail_out, [&](std::ostream& os) {
      bool first = true;
      for (const auto& r : reports) {
        std::ostringstream block;
        write_tail_balance_csv(block, tail_balance(r), r.scenario.id);
        std::string text = block.str();
        if (!first) text.erase(0, text.find('\n') + 1);  // one header only
        os << text;
        first = false;
      }
    }, out);
  }
  return exit_code::kOk;
}

struct GenerateOptions {
  long long K = 10;
  long long n = 0;
  double phi = 0.0;
  std::string pi;
  std::uint64_t seed = 1;
  std::string out = "-";
  std::string labels;
  long long m = 0;
  std::string future_out;
  bool no_repair = false;
};

inline int run_generate(const GenerateOptions& o, std::ostream& out) {
  if (o.K < 1 || o.n < 1) fail(ErrorCode::InvalidArgument, "K and n must be >= 1");
  const auto pi = normalize_probabilities(cli_detail::parse_double_list(o.pi, "pi"));
  std::vector<std::string> labels;
  if (!o.labels.empty()) labels = split(o.labels, ',');
  if (!labels.empty() && labels.size() != pi.size())
    fail(ErrorCode::InvalidArgument, "--labels needs one label per category");
  const RngStream master(o.seed);
  RngStream hist_rng = master.substream(0);
  const auto data = generate_dataset(static_cast<std::size_t>(o.K), o.n, pi, o.phi, hist_rng, !o.no_repair, labels);
  write_output(o.out, [&](std::ostream& os) { write_counts_csv(os, data); }, out);
  if (!o.future_out.empty()) {
    const count_t m = o.m > 0 ? o.m : o.n;
    RngStream fut_rng = master.substream(1);
    const auto y = sample_dm_vector(m, pi, o.phi, fut_rng);
    Matrix<count_t> row(1, y.size());
    for (std::size_t c = 0; c < y.size(); ++c) row(0, c) = y[c];
    const HistoricalDataset fut(std::move(row), data.labels());
    write_output(o.future_out, [&](std::ostream& os) { write_counts_csv(os, fut, "concurrent"); }, out);
  }
  return exit_code::kOk;
}

/// Entry point shared by the hcdpi executable and the tests.
inline int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Simultaneous prediction intervals for overdispersed multinomial historical control data", "hcdpi"};
  app.require_subcommand(1);
  unsigned threads = default_thread_count();

  PredictOptions po;
  auto* predict = app.add_subcommand("predict", "Prediction intervals for a future study from historical counts");
  predict->add_option("--data", po.data_path, "Historical counts CSV (study,<cat_1>,...,<cat_C>)")->required();
  predict->add_option("--m", po.m, "Future sample size")->required();
  predict->add_option("--future", po.future_path, "Concurrent control CSV (one row) to check against the intervals");
  predict->add_option("--alpha", po.alpha, "Simultaneous error rate")->capture_default_str();
  predict->add_option("--methods", po.methods, "Comma-separated method ids, or 'all'")->capture_default_str();
  predict->add_option("--B", po.B, "Bootstrap replicates")->capture_default_str();
  predict->add_option("--prior", po.prior, "Prior(s) for Bayesian methods: cauchy, beta, or cauchy,beta")->capture_default_str();
  predict->add_option("--chains", po.chains, "MCMC chains")->capture_default_str();
  predict->add_option("--iterations", po.iterations, "Retained MCMC iterations per chain")->capture_default_str();
  predict->add_option("--warmup", po.warmup, "MCMC warmup iterations per chain")->capture_default_str();
  predict->add_option("--mvn-draws", po.mvn_draws, "Monte-Carlo draws for the MVN quantile")->capture_default_str();
  predict->add_option("--tolerance", po.tolerance, "Calibration tolerance")->capture_default_str();
  predict->add_option("--seed", po.seed, "Random seed")->capture_default_str();
  predict->add_option("--out", po.out, "Output path ('-' for stdout)")->capture_default_str();
  predict->add_option("--format", po.format, "csv or json (default: from --out extension)");
  predict->add_flag("--repair", po.repair, "Add one count to a random study for every all-zero category");
  predict->add_option("--threads", threads, "Worker threads (default: HCDPI_THREADS or hardware concurrency)")
      ->check(CLI::PositiveNumber);
  predict->add_flag("--quiet", po.quiet, "Suppress the summary table");

  SimulateOptions so;
  auto* simulate = app.add_subcommand("simulate", "Coverage simulation over one or more scenarios");
  simulate->add_option("--config", so.config_path, "key = value scenario file")->required();
  simulate->add_option("--out", so.out, "Report path ('-' for stdout)")->capture_default_str();
  simulate->add_option("--format", so.format, "csv or json (default: from --out extension)");
  simulate->add_option("--tail-out", so.tail_out, "Optional tail-balance CSV");
  simulate->add_option("--threads", threads, "Worker threads (default: HCDPI_THREADS or hardware concurrency)")
      ->check(CLI::PositiveNumber);
  simulate->add_flag("--full-scale", so.full_scale, "Use 1000 iterations, B=10000, S=10000 unless set in the config");

  GenerateOptions go;
  auto* generate = app.add_subcommand("generate", "Synthetic historical counts from the Dirichlet-multinomial model");
  generate->add_option("--K", go.K, "Number of studies")->required();
  generate->add_option("--n", go.n, "Units per study")->required();
  generate->add_option("--phi", go.phi, "Dispersion (1 < phi < n)")->required();
  generate->add_option("--pi", go.pi, "Comma-separated category probabilities (rescaled to sum 1)")->required();
  generate->add_option("--seed", go.seed, "Random seed")->capture_default_str();
  generate->add_option("--out", go.out, "Output CSV ('-' for stdout)")->capture_default_str();
  generate->add_option("--labels", go.labels, "Comma-separated category labels");
  generate->add_option("--m", go.m, "Concurrent control size (default: n)");
  generate->add_option("--future-out", go.future_out, "Also draw a concurrent control and write it here");
  generate->add_flag("--no-repair", go.no_repair, "Keep all-zero categories as drawn");

  std::vector<std::string> storage{"hcdpi"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    cli_detail::write_error(err, "UsageError", e.what(), exit_code::kUsage);
    return exit_code::kUsage;
  }

  try {
    if (*predict) return run_predict(po, threads, out);
    if (*simulate) return run_simulate(so, threads, out);
    if (*generate) return run_generate(go, out);
  } catch (const Error& e) {
    const int code = exit_code_for(e.code());
    cli_detail::write_error(err, std::string(error_name(e.code())), e.detail(), code);
    return code;
  } catch (const std::exception& e) {
    cli_detail::write_error(err, "InternalError", e.what(), exit_code::kInternal);
    return exit_code::kInternal;
  }
  return exit_code::kUsage;
}

}  // namespace hcdpi
