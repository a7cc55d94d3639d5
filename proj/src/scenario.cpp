#include <algorithm>
#include <cmath>
#include <future>
#include <ostream>

#include "wxleak/experiment.hpp"
#include "wxleak/random.hpp"
#include "wxleak/var_assim.hpp"

namespace wxleak::experiment {

namespace {

// stream tags for derive_seed
constexpr std::uint64_t kBackgroundStream = 0x4247;  // "BG"
constexpr std::uint64_t kObsNoiseStream = 0x4f4e;    // "ON"

struct Forecast {
  nwp::Trajectory trajectory;
  nwp::ForecastDiagnostics diagnostics;
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct MemberResult {
  Forecast baseline;
  std::vector<LevelRow> levels;  // per-member metrics, averaged later
};

class ScenarioRunner {
 public:
  ScenarioRunner(const ScenarioConfig& config, std::ostream* verbose)
      : config_(config),
        verbose_(verbose),
        locations_(nwp::alternate_locations(config.grid_size)),
        bias_template_(radiance::BiasModel::from_names(
            0.0, std::vector<double>(config.predictor_names.size(), 0.0), config.predictor_names)),
        setup_{config.forward, config.mapping, bias_template_.with_packed(config.true_bias),
               config.obs_error_stddev},
        op_(std::make_shared<var::GridColumnOperator>(config.grid_size, locations_, bias_template_,
                                                       config.forward, config.mapping)) {
    nwp::NatureRunOptions nro;
    nro.grid_size = config.grid_size;
    nro.initial_moisture = config.initial_moisture;
    truth_ = nwp::nature_run(config.model, config.seeds.nature, config.spinup_steps, 0, nro).front();
    for (double level : config.leakage_levels) chains_.push_back(leakage_chain(config, level));
  }

  MemberResult run_member(std::size_t member) const {
    const nwp::ModelState background = perturbed_background(member);
    const std::uint64_t noise_seed = derive_seed(config_.seeds.obs_noise, kObsNoiseStream, member);

    MemberResult out;
    out.baseline = analyse_and_forecast(background, noise_seed, 0.0, "baseline", member);
    for (std::size_t l = 0; l < chains_.size(); ++l) {
      const std::string tag = "level " + format_number(config_.leakage_levels[l]) + " dBW";
      const Forecast f = analyse_and_forecast(background, noise_seed, chains_[l].delta_tb_k, tag, member);
      out.levels.push_back(compare(out.baseline, f));
    }
    return out;
  }

  const std::vector<leakage::ChainResult>& chains() const { return chains_; }

 private:
  nwp::ModelState perturbed_background(std::size_t member) const {
    GaussianStream rng(derive_seed(config_.seeds.init, kBackgroundStream, member));
    const double sigma = std::sqrt(config_.state_variance);
    nwp::ModelState s = truth_;
    for (auto& t : s.temperature) t += sigma * rng.normal();
    for (auto& q : s.moisture) q = std::max(0.0, q + sigma * rng.normal());
    return s;
  }

  Forecast analyse_and_forecast(const nwp::ModelState& background, std::uint64_t noise_seed, double delta_tb,
                                const std::string& tag, std::size_t member) const {
    try {
      auto obs = nwp::synthesize_observations(truth_, setup_, noise_seed, delta_tb, locations_);
      const auto n = static_cast<Eigen::Index>(config_.grid_size);
      var::VectorXd xb(2 * n);
      for (Eigen::Index k = 0; k < n; ++k) {
        xb[k] = background.temperature[static_cast<std::size_t>(k)];
        xb[n + k] = background.moisture[static_cast<std::size_t>(k)];
      }
      const var::VectorXd bb =
          Eigen::Map<const var::VectorXd>(config_.background_bias.data(),
                                          static_cast<Eigen::Index>(config_.background_bias.size()));
      auto r = var::observation_covariance(obs);
      var::AssimilationProblem problem(
          xb, bb, var::Covariance::scaled_identity(static_cast<std::size_t>(2 * n), config_.state_variance),
          var::Covariance::scaled_identity(static_cast<std::size_t>(bb.size()), config_.bias_variance),
          std::move(r), std::move(obs), op_, config_.hold_bias);

      var::MinimizerOptions mo;
      if (verbose_) {
        *verbose_ << "member " << member << ", " << tag << ":\n";
        mo.trace = verbose_;
      }
      const auto analysis = var::minimize(problem, problem.background(), mo);

      nwp::ModelState start;
      start.temperature.assign(analysis.analysis.state.data(), analysis.analysis.state.data() + n);
      start.moisture.assign(analysis.analysis.state.data() + n, analysis.analysis.state.data() + 2 * n);
      for (auto& q : start.moisture) q = std::max(0.0, q);

      Forecast f;
      f.trajectory = nwp::integrate(start, config_.model, config_.forecast_steps());
      f.diagnostics = nwp::diagnostics(f.trajectory, config_.model);
      f.cost = analysis.final_cost;
      f.iterations = analysis.iterations;
      f.converged = analysis.converged;
      return f;
    } catch (const ValidationError& e) {
      throw ValidationError(tag + ", member " + std::to_string(member) + ": " + e.what());
    } catch (const std::runtime_error& e) {
      throw RuntimeError(tag + ", member " + std::to_string(member) + ": " + e.what());
    }
  }

  LevelRow compare(const Forecast& base, const Forecast& pert) const {
    auto max_rms = [](const std::vector<double>& a, const std::vector<double>& b) {
      double mx = 0.0, ss = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = std::abs(a[k] - b[k]);
        mx = std::max(mx, d);
        ss += d * d;
      }
      return std::pair{mx, std::sqrt(ss / static_cast<double>(a.size()))};
    };
    LevelRow row;
    std::tie(row.precip_diff_max_mm, row.precip_diff_rms_mm) =
        max_rms(pert.diagnostics.accumulated_precipitation, base.diagnostics.accumulated_precipitation);
    // a temperature difference in K is the same number in deg C
    std::tie(row.t2m_diff_max_c, row.t2m_diff_rms_c) =
        max_rms(pert.diagnostics.two_meter_temperature, base.diagnostics.two_meter_temperature);
    const std::size_t probe = config_.probe_steps();
    row.probe_t_diff_rms_c = max_rms(pert.trajectory.states[probe].temperature,
                                     base.trajectory.states[probe].temperature)
                                 .second;
    row.analysis_cost = pert.cost;
    row.mean_iterations = pert.iterations;
    row.converged = pert.converged;
    return row;
  }

  const ScenarioConfig& config_;
  std::ostream* verbose_;
  std::vector<std::size_t> locations_;
  radiance::BiasModel bias_template_;
  nwp::ObservationSetup setup_;
  std::shared_ptr<const var::GridColumnOperator> op_;
  nwp::ModelState truth_;
  std::vector<leakage::ChainResult> chains_;
};

void accumulate(LevelRow& sum, const LevelRow& r) {
  sum.precip_diff_max_mm += r.precip_diff_max_mm;
  sum.precip_diff_rms_mm += r.precip_diff_rms_mm;
  sum.t2m_diff_max_c += r.t2m_diff_max_c;
  sum.t2m_diff_rms_c += r.t2m_diff_rms_c;
  sum.probe_t_diff_rms_c += r.probe_t_diff_rms_c;
  sum.analysis_cost += r.analysis_cost;
  sum.mean_iterations += r.mean_iterations;
  sum.converged = sum.converged && r.converged;
}

void scale(LevelRow& row, double s) {
  row.precip_diff_max_mm *= s;
  row.precip_diff_rms_mm *= s;
  row.t2m_diff_max_c *= s;
  row.t2m_diff_rms_c *= s;
  row.probe_t_diff_rms_c *= s;
  row.analysis_cost *= s;
  row.mean_iterations *= s;
}

}  // namespace

leakage::ChainResult leakage_chain(const ScenarioConfig& config, double level_dbw) {
  const double fraction =
      config.mask_enabled ? leakage::aci_leakage_fraction(config.mask, config.aggressor, config.victim) : 1.0;
  const auto power = leakage::aggregate_leakage_power(config.field.with_eirp(level_dbw), fraction);
  return leakage::evaluate_chain(power, config.link, config.victim, config.antenna);
}

ScenarioReport run_scenario(const ScenarioConfig& config, const RunOptions& options) {
  const ScenarioRunner runner(config, options.verbose);
  const std::size_t members = config.ensemble_size;

  std::vector<MemberResult> results(members);
  const unsigned jobs = options.verbose ? 1U : std::max(1U, options.jobs);
  if (jobs == 1) {
    for (std::size_t m = 0; m < members; ++m) results[m] = runner.run_member(m);
  } else {
    // members are independent; results land in member order regardless of scheduling
    for (std::size_t start = 0; start < members; start += jobs) {
      std::vector<std::future<MemberResult>> batch;
      for (std::size_t m = start; m < std::min(members, start + jobs); ++m)
        batch.push_back(std::async(std::launch::async, [&runner, m] { return runner.run_member(m); }));
      for (std::size_t i = 0; i < batch.size(); ++i) results[start + i] = batch[i].get();
    }
  }

  ScenarioReport report;
  report.config_hash = config_hash(config);
  report.defaulted = config.defaulted;
  report.ensemble_size = members;
  report.forecast_length = config.forecast_length;
  report.probe_lead_time = config.probe_lead_time;

  const double inv = 1.0 / static_cast<double>(members);
  for (const auto& r : results) {
    report.baseline.analysis_cost += r.baseline.cost;
    report.baseline.mean_iterations += r.baseline.iterations;
    report.baseline.converged = report.baseline.converged && r.baseline.converged;
  }
  report.baseline.analysis_cost *= inv;
  report.baseline.mean_iterations *= inv;

  for (std::size_t l = 0; l < config.leakage_levels.size(); ++l) {
    LevelRow row;
    for (const auto& r : results) accumulate(row, r.levels[l]);
    scale(row, inv);
    row.leakage_dbw = config.leakage_levels[l];
    row.noise_k = runner.chains()[l].noise.value_k;
    row.delta_tb_k = runner.chains()[l].delta_tb_k;
    report.levels.push_back(row);
  }
  return report;
}

}  // namespace wxleak::experiment
