#ifndef VSR_REPORT_HPP
#define VSR_REPORT_HPP

// Report files for a training trace: per-step CSV, JSON summary, SVG chart.

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "vsr/checkpoint.hpp"
#include "vsr/grpo.hpp"

namespace vsr {

struct ReportPaths {
  fs::path csv;
  fs::path summary;
  fs::path svg;
};

inline std::string fmt_num(double v, const char* f = "%.10g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline std::string trace_csv(const TrainingTrace& t) {
  std::string out =
      "step,mean_reward,mean_visual,mean_answer,format_rate,kl,grad_norm,"
      "eval_accuracy,eval_self_contained,eval_lsr\n";
  for (const auto& s : t.steps) {
    out += std::to_string(s.step);
    for (double v : {s.mean_reward, s.mean_visual, s.mean_answer, s.format_rate, s.kl, s.grad_norm})
      out += "," + fmt_num(v);
    if (s.eval)
      for (double v : {s.eval->accuracy, s.eval->self_contained, s.eval->lsr}) out += "," + fmt_num(v);
    else
      out += ",,,";
    out += "\n";
  }
  return out;
}

inline nlohmann::json trace_summary(const TrainingTrace& t) {
  double r = 0, vis = 0, ans = 0, fmt = 0;
  for (const auto& s : t.steps) {
    r += s.mean_reward;
    vis += s.mean_visual;
    ans += s.mean_answer;
    fmt += s.format_rate;
  }
  const double n = t.steps.empty() ? 1.0 : static_cast<double>(t.steps.size());
  nlohmann::json j = {{"steps", t.steps.size()},
                      {"reward_means",
                       {{"total", r / n}, {"visual", vis / n}, {"answer", ans / n}, {"format", fmt / n}}}};
  if (!t.steps.empty()) {
    const auto& last = t.steps.back();
    j["final_step"] = {{"mean_reward", last.mean_reward},
                       {"mean_visual", last.mean_visual},
                       {"mean_answer", last.mean_answer},
                       {"format_rate", last.format_rate},
                       {"kl", last.kl}};
  }
  return j;
}

/// Reward curves, smoothed over a trailing window.
inline std::string trace_svg(const TrainingTrace& t, std::size_t window = 20) {
  constexpr double W = 640, H = 360, L = 50, R = 130, T = 20, B = 40;
  struct Series {
    const char* label;
    const char* color;
    double StepRecord::*field;
  };
  const std::array<Series, 4> series{{{"total reward", "#1f77b4", &StepRecord::mean_reward},
                                      {"visual", "#2ca02c", &StepRecord::mean_visual},
                                      {"answer", "#d62728", &StepRecord::mean_answer},
                                      {"format", "#9467bd", &StepRecord::format_rate}}};
  const double ymax = 2.5;
  const std::size_t n = t.steps.size();
  auto x = [&](std::size_t i) { return L + (W - L - R) * (n <= 1 ? 0.0 : double(i) / double(n - 1)); };
  auto y = [&](double v) { return T + (H - T - B) * (1.0 - std::clamp(v, 0.0, ymax) / ymax); };

  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"360\" "
                  "viewBox=\"0 0 640 360\">\n<rect width=\"640\" height=\"360\" fill=\"white\"/>\n";
  s += "<line x1=\"" + fmt_num(L, "%.1f") + "\" y1=\"" + fmt_num(H - B, "%.1f") + "\" x2=\"" +
       fmt_num(W - R, "%.1f") + "\" y2=\"" + fmt_num(H - B, "%.1f") + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + fmt_num(L, "%.1f") + "\" y1=\"" + fmt_num(T, "%.1f") + "\" x2=\"" +
       fmt_num(L, "%.1f") + "\" y2=\"" + fmt_num(H - B, "%.1f") + "\" stroke=\"black\"/>\n";
  for (double v : {0.0, 0.5, 1.0, 1.5, 2.0, 2.5})
    s += "<text x=\"" + fmt_num(L - 8, "%.1f") + "\" y=\"" + fmt_num(y(v) + 4, "%.1f") +
         "\" font-size=\"11\" text-anchor=\"end\">" + fmt_num(v, "%.1f") + "</text>\n";
  s += "<text x=\"" + fmt_num((L + W - R) / 2, "%.1f") + "\" y=\"" + fmt_num(H - 8, "%.1f") +
       "\" font-size=\"12\" text-anchor=\"middle\">step (" + std::to_string(n) + " total)</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& se = series[k];
    if (n > 0) {
      s += "<polyline fill=\"none\" stroke=\"" + std::string(se.color) + "\" stroke-width=\"1.5\" points=\"";
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += t.steps[i].*se.field;
        if (i >= window) acc -= t.steps[i - window].*se.field;
        const double avg = acc / double(std::min(i + 1, window));
        s += fmt_num(x(i), "%.2f") + "," + fmt_num(y(avg), "%.2f") + (i + 1 < n ? " " : "");
      }
      s += "\"/>\n";
    }
    const double ly = T + 16.0 * double(k + 1);
    s += "<line x1=\"" + fmt_num(W - R + 10, "%.1f") + "\" y1=\"" + fmt_num(ly - 4, "%.1f") + "\" x2=\"" +
         fmt_num(W - R + 30, "%.1f") + "\" y2=\"" + fmt_num(ly - 4, "%.1f") + "\" stroke=\"" + se.color +
         "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + fmt_num(W - R + 35, "%.1f") + "\" y=\"" + fmt_num(ly, "%.1f") +
         "\" font-size=\"11\">" + se.label + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

/// Writes metrics.csv, summary.json and rewards.svg under `dir`. `extra` is
/// merged into the summary (final evaluation, config echo).
inline ReportPaths emit_report(const TrainingTrace& trace, const nlohmann::json& extra,
                               const fs::path& dir) {
  ReportPaths p{dir / "metrics.csv", dir / "summary.json", dir / "rewards.svg"};
  nlohmann::json summary = trace_summary(trace);
  if (extra.is_object())
    for (const auto& [k, v] : extra.items()) summary[k] = v;
  write_file(p.csv, trace_csv(trace));
  write_json(p.summary, summary);
  write_file(p.svg, trace_svg(trace));
  return p;
}

inline nlohmann::json to_json(const EvalSnapshot& e) {
  return {{"accuracy", e.accuracy}, {"self_contained", e.self_contained}, {"lsr", e.lsr}};
}

inline nlohmann::json to_json(const StepRecord& s) {
  nlohmann::json j = {{"step", s.step},           {"mean_reward", s.mean_reward},
                      {"mean_visual", s.mean_visual}, {"mean_answer", s.mean_answer},
                      {"format_rate", s.format_rate}, {"kl", s.kl},
                      {"grad_norm", s.grad_norm}};
  if (s.eval) j["eval"] = to_json(*s.eval);
  return j;
}

inline StepRecord step_record_from_json(const nlohmann::json& j) {
  StepRecord s;
  s.step = j.at("step").get<int>();
  s.mean_reward = j.at("mean_reward").get<double>();
  s.mean_visual = j.at("mean_visual").get<double>();
  s.mean_answer = j.at("mean_answer").get<double>();
  s.format_rate = j.at("format_rate").get<double>();
  s.kl = j.at("kl").get<double>();
  s.grad_norm = j.at("grad_norm").get<double>();
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    s.eval = EvalSnapshot{e.at("accuracy").get<double>(), e.at("self_contained").get<double>(),
                          e.at("lsr").get<double>()};
  }
  return s;
}

}  // namespace vsr

#endif  // VSR_REPORT_HPP
