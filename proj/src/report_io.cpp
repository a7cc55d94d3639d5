#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "wxleak/error.hpp"
#include "wxleak/experiment.hpp"

namespace wxleak::experiment {

namespace {

std::string level_label(const LevelRow& row) {
  return row.is_baseline() ? std::string("baseline") : format_number(*row.leakage_dbw);
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void emit_csv(const ScenarioReport& report, std::ostream& out) {
  out << kCsvHeader << '\n';
  auto row = [&out](const LevelRow& r) {
    out << level_label(r) << ',' << format_number(r.noise_k) << ',' << format_number(r.delta_tb_k) << ','
        << format_number(r.precip_diff_max_mm) << ',' << format_number(r.precip_diff_rms_mm) << ','
        << format_number(r.t2m_diff_max_c) << ',' << format_number(r.t2m_diff_rms_c) << ','
        << format_number(r.analysis_cost) << ',' << (r.converged ? "true" : "false") << '\n';
  };
  row(report.baseline);
  for (const auto& r : report.levels) row(r);
}

void emit_csv(const ScenarioReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write CSV to '" + path.string() + "'");
  emit_csv(report, out);
  if (!out) throw RuntimeError("error while writing '" + path.string() + "'");
}

void emit_lead_csv(const ScenarioReport& report, std::ostream& out) {
  out << "leakage_dBW,delta_tb_K,lead_time,t_diff_rms_C\n";
  auto row = [&](const LevelRow& r) {
    out << level_label(r) << ',' << format_number(r.delta_tb_k) << ',' << format_number(report.probe_lead_time)
        << ',' << format_number(r.probe_t_diff_rms_c) << '\n';
  };
  row(report.baseline);
  for (const auto& r : report.levels) row(r);
}

void emit_summary(const ScenarioReport& report, std::ostream& out) {
  out << "config sha256   " << report.config_hash << '\n'
      << "ensemble size   " << report.ensemble_size << '\n'
      << "forecast length " << report.forecast_length << " model time units (probe at "
      << report.probe_lead_time << ")\n";
  if (!report.defaulted.empty()) {
    out << "defaults used   ";
    for (std::size_t i = 0; i < report.defaulted.size(); ++i)
      out << (i ? ", " : "") << report.defaulted[i];
    out << '\n';
  }
  out << '\n';

  const auto flags = out.flags();
  out << std::left << std::setw(10) << "leakage" << std::right << std::setw(12) << "noise[K]"
      << std::setw(12) << "dTb[K]" << std::setw(12) << "dP max" << std::setw(12) << "dP rms"
      << std::setw(12) << "dT2m max" << std::setw(12) << "dT2m rms" << std::setw(12) << "dT@probe"
      << std::setw(12) << "cost" << std::setw(8) << "iters" << std::setw(6) << "conv" << '\n';
  auto row = [&out](const LevelRow& r) {
    out << std::left << std::setw(10) << (r.is_baseline() ? std::string("baseline") : format_number(*r.leakage_dbw))
        << std::right << std::setprecision(4) << std::scientific;
    for (double v : {r.noise_k, r.delta_tb_k, r.precip_diff_max_mm, r.precip_diff_rms_mm, r.t2m_diff_max_c,
                     r.t2m_diff_rms_c, r.probe_t_diff_rms_c, r.analysis_cost})
      out << std::setw(12) << v;
    out << std::fixed << std::setprecision(1) << std::setw(8) << r.mean_iterations << std::setw(6)
        << (r.converged ? "yes" : "no") << '\n';
    out.unsetf(std::ios::floatfield);
  };
  row(report.baseline);
  for (const auto& r : report.levels) row(r);
  out << "\nunits: precipitation mm, temperature differences deg C\n";
  out.flags(flags);
}

std::vector<NoiseTableRow> noise_table(const ScenarioConfig& config, double from, double to, double step) {
  if (!(step > 0.0) || !(from <= to)) throw ValidationError("noise table needs from <= to and step > 0");
  std::vector<NoiseTableRow> rows;
  const auto n = static_cast<std::size_t>(std::floor((to - from) / step + 1e-9));
  for (std::size_t i = 0; i <= n; ++i) {
    const double level = from + static_cast<double>(i) * step;
    const auto chain = leakage_chain(config, level);
    rows.push_back({level, chain.received_power_w, chain.noise.value_k, chain.delta_tb_k});
  }
  return rows;
}

void emit_noise_table(const std::vector<NoiseTableRow>& rows, std::ostream& out) {
  out << "leakage_dBW,received_power_W,noise_K,delta_tb_K\n";
  for (const auto& r : rows)
    out << format_number(r.leakage_dbw) << ',' << format_number(r.received_power_w) << ','
        << format_number(r.noise_k) << ',' << format_number(r.delta_tb_k) << '\n';
}

}  // namespace wxleak::experiment
