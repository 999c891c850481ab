#pragma once

// Method registry and the one-call driver that applies any subset of the
// interval methods to one historical dataset. Bootstrap methods share a
// single ensemble; Bayesian constructions share one posterior per prior.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hcdpi/asymptotic.hpp"
#include "hcdpi/bayes.hpp"
#include "hcdpi/bootstrap.hpp"
#include "hcdpi/error.hpp"
#include "hcdpi/model.hpp"
#include "hcdpi/rng.hpp"

namespace hcdpi {

enum class MethodKind {
  Pointwise,
  Bonferroni,
  Mvn,
  SymCalib,
  AsymCalib,
  Marginal,
  Masr,
  RankScs,
  BayesMarginal,
  BayesMean,
  BayesScs,
};

struct Method {
  MethodKind kind = MethodKind::Pointwise;
  std::optional<PriorChoice::Kind> prior;  // Bayesian methods only

  bool is_bayesian() const noexcept { return kind >= MethodKind::BayesMarginal; }
  bool is_bootstrap() const noexcept { return kind >= MethodKind::SymCalib && kind <= MethodKind::RankScs; }

  friend bool operator==(const Method&, const Method&) = default;
};

inline constexpr std::string_view method_base_name(MethodKind kind) {
  switch (kind) {
    case MethodKind::Pointwise: return "pointwise";
    case MethodKind::Bonferroni: return "bonferroni";
    case MethodKind::Mvn: return "mvn";
    case MethodKind::SymCalib: return "sym-calib";
    case MethodKind::AsymCalib: return "asym-calib";
    case MethodKind::Marginal: return "marginal";
    case MethodKind::Masr: return "masr";
    case MethodKind::RankScs: return "rank-scs";
    case MethodKind::BayesMarginal: return "bayes-marginal";
    case MethodKind::BayesMean: return "bayes-mean";
    case MethodKind::BayesScs: return "bayes-scs";
  }
  return "";
}

inline constexpr MethodKind kAllMethodKinds[] = {
    MethodKind::Pointwise, MethodKind::Mvn,      MethodKind::Bonferroni,    MethodKind::SymCalib,
    MethodKind::AsymCalib, MethodKind::Marginal, MethodKind::RankScs,       MethodKind::Masr,
    MethodKind::BayesMean, MethodKind::BayesMarginal, MethodKind::BayesScs,
};

inline std::string prior_suffix(PriorChoice::Kind k) { return k == PriorChoice::Kind::HalfCauchy ? "cauchy" : "beta"; }

inline std::string method_id(const Method& m) {
  std::string id(method_base_name(m.kind));
  if (m.is_bayesian() && m.prior) id += "-" + prior_suffix(*m.prior);
  return id;
}

/// Every accepted method id, Bayesian ones with and without a prior suffix.
inline std::vector<std::string> valid_method_ids() {
  std::vector<std::string> ids;
  for (auto k : kAllMethodKinds) {
    ids.emplace_back(method_base_name(k));
    if (Method{k}.is_bayesian()) {
      ids.push_back(std::string(method_base_name(k)) + "-cauchy");
      ids.push_back(std::string(method_base_name(k)) + "-beta");
    }
  }
  return ids;
}

inline PriorChoice::Kind parse_prior(std::string_view name) {
  if (name == "cauchy" || name == "half-cauchy") return PriorChoice::Kind::HalfCauchy;
  if (name == "beta") return PriorChoice::Kind::BetaRho;
  fail(ErrorCode::InvalidArgument, "unknown prior '" + std::string(name) + "' (valid: cauchy, beta)");
}

/// Parses one id. Bare Bayesian ids expand to one method per default prior;
/// "all" expands to every method.
inline std::vector<Method> parse_method(std::string_view id, const std::vector<PriorChoice::Kind>& default_priors) {
  std::vector<Method> out;
  auto add_bayes = [&](MethodKind k) {
    for (auto p : default_priors) out.push_back({k, p});
  };
  if (id == "all") {
    for (auto k : kAllMethodKinds) {
      if (Method{k}.is_bayesian())
        add_bayes(k);
      else
        out.push_back({k, std::nullopt});
    }
    return out;
  }
  for (auto k : kAllMethodKinds) {
    const std::string base(method_base_name(k));
    if (id == base) {
      if (Method{k}.is_bayesian())
        add_bayes(k);
      else
        out.push_back({k, std::nullopt});
      return out;
    }
    if (Method{k}.is_bayesian()) {
      if (id == base + "-cauchy") return {{k, PriorChoice::Kind::HalfCauchy}};
      if (id == base + "-beta") return {{k, PriorChoice::Kind::BetaRho}};
    }
  }
  std::string valid;
  for (const auto& v : valid_method_ids()) valid += (valid.empty() ? "" : ", ") + v;
  fail(ErrorCode::InvalidArgument, "unknown method '" + std::string(id) + "'; valid ids: all, " + valid);
}

inline std::vector<Method> parse_methods(const std::vector<std::string>& ids,
                                         const std::vector<PriorChoice::Kind>& default_priors) {
  std::vector<Method> out;
  for (const auto& id : ids) {
    for (const auto& m : parse_method(id, default_priors))
      if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  return out;
}

struct MethodSettings {
  std::size_t bootstrap_replicates = kDefaultBootstrapReplicates;
  CalibrationSettings calibration;
  std::size_t mvn_draws = kDefaultMvnDraws;
  McmcSettings mcmc;
  unsigned threads = 1;
};

struct MethodRun {
  std::vector<PredictionIntervalSet> intervals;  // same order as the requested methods
  std::optional<ModelFit> fit;
  std::vector<std::string> warnings;
};

/// Applies the requested methods to one dataset. Random streams are tied
/// to the method family (and prior), not to list position, so adding a
/// method never changes another method's result.
inline MethodRun compute_intervals(const HistoricalDataset& data, const FutureSpec& spec,
                                   const std::vector<Method>& methods, const MethodSettings& settings,
                                   RngStream rng) {
  spec.validate();
  MethodRun run;
  const bool needs_fit = std::any_of(methods.begin(), methods.end(), [](const Method& m) { return !m.is_bayesian(); });
  const bool needs_boot = std::any_of(methods.begin(), methods.end(), [](const Method& m) { return m.is_bootstrap(); });
  if (needs_fit) run.fit = fit_model(data);

  std::optional<BootstrapEnsemble> ensemble;
  if (needs_boot)
    ensemble = build_ensemble(*run.fit, data, spec, settings.bootstrap_replicates, rng.substream(1), settings.threads);

  std::optional<PredictiveSamples> predictive[2];
  auto predictive_for = [&](PriorChoice::Kind kind) -> const PredictiveSamples& {
    const auto slot = static_cast<std::size_t>(kind == PriorChoice::Kind::HalfCauchy ? 0 : 1);
    if (!predictive[slot]) {
      const PriorChoice prior = kind == PriorChoice::Kind::HalfCauchy ? PriorChoice::half_cauchy() : PriorChoice::beta_rho();
      const auto draws = mcmc_sample(data, prior, settings.mcmc, rng.substream(10 + slot), settings.threads);
      for (const auto& w : draws.warnings) run.warnings.push_back(prior.name() + " prior: " + w);
      predictive[slot] = posterior_predictive(draws, spec.m, rng.substream(20 + slot), settings.threads);
    }
    return *predictive[slot];
  };

  for (const auto& method : methods) {
    PredictionIntervalSet set;
    switch (method.kind) {
      case MethodKind::Pointwise: set = pointwise_interval(*run.fit, spec); break;
      case MethodKind::Bonferroni: set = bonferroni_interval(*run.fit, spec); break;
      case MethodKind::Mvn: set = mvn_interval(*run.fit, spec, settings.mvn_draws, rng.substream(2), settings.threads); break;
      case MethodKind::SymCalib: set = symmetric_calibration(*ensemble, *run.fit, spec, settings.calibration); break;
      case MethodKind::AsymCalib: set = asymmetric_calibration(*ensemble, *run.fit, spec, settings.calibration); break;
      case MethodKind::Marginal: set = marginal_calibration(*ensemble, *run.fit, spec, settings.calibration); break;
      case MethodKind::Masr: set = masr_interval(*ensemble, *run.fit, spec); break;
      case MethodKind::RankScs: set = rank_scs_interval(*ensemble, *run.fit, spec); break;
      case MethodKind::BayesMarginal:
        set = bayes_bonferroni_interval(predictive_for(method.prior.value_or(PriorChoice::Kind::HalfCauchy)), spec.alpha);
        break;
      case MethodKind::BayesMean:
        set = bayes_mean_centered_interval(predictive_for(method.prior.value_or(PriorChoice::Kind::HalfCauchy)), spec.alpha);
        break;
      case MethodKind::BayesScs:
        set = bayes_rank_scs_interval(predictive_for(method.prior.value_or(PriorChoice::Kind::HalfCauchy)), spec.alpha);
        break;
    }
    set.method = method_id(method);
    set.labels = data.labels();
    run.intervals.push_back(std::move(set));
  }
  return run;
}

}  // namespace hcdpi
