#include "demark/bench/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "demark/core/error.hpp"

namespace demark::bench {

using nlohmann::json;

const ConditionResult* ExperimentReport::find(const std::string& scheme, const std::string& condition,
                                              std::size_t n) const {
  for (const auto& r : results) {
    if (r.scheme == scheme && r.condition == condition && (n == 0 || r.n == n)) return &r;
  }
  return nullptr;
}

namespace {

json metric_json(const std::optional<Metric>& m) {
  if (!m) return nullptr;
  return json{{"value", m->value}, {"samples", m->samples}};
}

std::optional<Metric> metric_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return Metric{j.at(key).at("value").get<double>(), j.at(key).at("samples").get<std::size_t>()};
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string percent(const std::optional<Metric>& m) {
  return m ? fmt("%.3f", 100.0 * m->value) : std::string("-");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text) || !out.flush()) throw Error(ErrorKind::Io, "cannot write " + path.string());
}

}  // namespace

json to_json(const ExperimentReport& report) {
  json results = json::array();
  for (const auto& r : report.results) {
    results.push_back({{"scheme", r.scheme},
                       {"condition", r.condition},
                       {"n", r.n},
                       {"er", metric_json(r.metrics.er)},
                       {"ber", metric_json(r.metrics.ber)},
                       {"tp", metric_json(r.metrics.tp)},
                       {"fp", metric_json(r.metrics.fp)},
                       {"extra", r.extra}});
  }
  json timing = json::array();
  for (const auto& t : report.timing) {
    timing.push_back({{"n", t.n},
                      {"iterations", t.iterations},
                      {"mean_ms", t.mean_ms},
                      {"p50_ms", t.p50_ms},
                      {"p95_ms", t.p95_ms},
                      {"p99_ms", t.p99_ms},
                      {"max_ms", t.max_ms}});
  }
  json curve = json::array();
  for (const auto& p : report.rainbow_curve) {
    curve.push_back({{"length", p.length},
                     {"tp_undefended", p.tp_undefended},
                     {"tp_defended", p.tp_defended},
                     {"flows", p.flows}});
  }
  return json{{"scenario", report.scenario},
              {"config", report.config},
              {"seeds", report.seeds},
              {"checksums", report.checksums},
              {"results", results},
              {"timing", timing},
              {"rainbow_curve", curve},
              {"notes", report.notes}};
}

ExperimentReport report_from_json(const json& j) {
  ExperimentReport report;
  try {
    report.scenario = j.at("scenario").get<std::string>();
    report.config = j.value("config", json::object());
    report.seeds = j.value("seeds", std::map<std::string, std::uint64_t>{});
    report.checksums = j.value("checksums", std::map<std::string, std::string>{});
    for (const auto& r : j.value("results", json::array())) {
      ConditionResult c;
      c.scheme = r.at("scheme").get<std::string>();
      c.condition = r.at("condition").get<std::string>();
      c.n = r.at("n").get<std::size_t>();
      c.metrics.er = metric_from(r, "er");
      c.metrics.ber = metric_from(r, "ber");
      c.metrics.tp = metric_from(r, "tp");
      c.metrics.fp = metric_from(r, "fp");
      c.extra = r.value("extra", json::object());
      report.results.push_back(std::move(c));
    }
    for (const auto& t : j.value("timing", json::array())) {
      report.timing.push_back({t.at("n").get<std::size_t>(), t.at("iterations").get<std::size_t>(),
                               t.at("mean_ms").get<double>(), t.at("p50_ms").get<double>(),
                               t.at("p95_ms").get<double>(), t.at("p99_ms").get<double>(),
                               t.at("max_ms").get<double>()});
    }
    for (const auto& p : j.value("rainbow_curve", json::array())) {
      report.rainbow_curve.push_back({p.at("length").get<std::size_t>(), p.at("tp_undefended").get<double>(),
                                      p.at("tp_defended").get<double>(), p.at("flows").get<std::size_t>()});
    }
    report.notes = j.value("notes", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, std::string("report JSON: ") + e.what());
  }
  return report;
}

std::string render_markdown(const ExperimentReport& report) {
  std::ostringstream md;
  md << "# Experiment report: " << report.scenario << "\n\n";

  for (const char* scheme : {"whitebox", "blackbox"}) {
    std::set<std::size_t> ns;
    for (const auto& r : report.results) {
      if (r.scheme == scheme) ns.insert(r.n);
    }
    if (ns.empty()) continue;
    md << "## Fingerprint extraction, " << scheme << " (percent)\n\n";
    md << "| n | ER undefended | BER undefended | ER defended | BER defended |\n";
    md << "|---|---|---|---|---|\n";
    for (std::size_t n : ns) {
      const auto* u = report.find(scheme, "undefended", n);
      const auto* d = report.find(scheme, "defended", n);
      md << "| " << n << " | " << (u ? percent(u->metrics.er) : "-") << " | "
         << (u ? percent(u->metrics.ber) : "-") << " | " << (d ? percent(d->metrics.er) : "-") << " | "
         << (d ? percent(d->metrics.ber) : "-") << " |\n";
    }
    md << '\n';
  }

  bool classic = false;
  for (const auto& r : report.results) classic |= r.scheme == "rainbow" || r.scheme == "swirl";
  if (classic) {
    md << "## Conventional watermarks (percent)\n\n";
    md << "| scheme | condition | n | TP | FP |\n|---|---|---|---|---|\n";
    for (const auto& r : report.results) {
      if (r.scheme != "rainbow" && r.scheme != "swirl") continue;
      md << "| " << r.scheme << " | " << r.condition << " | " << (r.n ? std::to_string(r.n) : "-") << " | "
         << percent(r.metrics.tp) << " | " << percent(r.metrics.fp) << " |\n";
    }
    md << '\n';
  }

  if (!report.rainbow_curve.empty()) {
    md << "## RAINBOW TP by flow length\n\n| length | TP undefended | TP defended | flows |\n|---|---|---|---|\n";
    for (const auto& p : report.rainbow_curve) {
      md << "| " << p.length << " | " << fmt("%.3f", p.tp_undefended) << " | " << fmt("%.3f", p.tp_defended)
         << " | " << p.flows << " |\n";
    }
    md << '\n';
  }

  if (!report.timing.empty()) {
    md << "## Defense latency per window (ms)\n\n| n | iterations | mean | p50 | p95 | p99 | max |\n"
          "|---|---|---|---|---|---|---|\n";
    for (const auto& t : report.timing) {
      md << "| " << t.n << " | " << t.iterations << " | " << fmt("%.4f", t.mean_ms) << " | "
         << fmt("%.4f", t.p50_ms) << " | " << fmt("%.4f", t.p95_ms) << " | " << fmt("%.4f", t.p99_ms) << " | "
         << fmt("%.4f", t.max_ms) << " |\n";
    }
    md << '\n';
  }

  md << "## Provenance\n\n";
  for (const auto& [k, v] : report.seeds) md << "- seed `" << k << "` = " << v << '\n';
  for (const auto& [k, v] : report.checksums) md << "- model `" << k << "` checksum `" << v << "`\n";
  if (!report.notes.empty()) {
    md << "\n## Notes\n\n";
    for (const auto& note : report.notes) md << "- " << note << '\n';
  }
  return md.str();
}

void write_rainbow_csv(const std::filesystem::path& path, const std::vector<RainbowPoint>& curve) {
  std::string text = "length,tp_undefended,tp_defended\n";
  for (const auto& p : curve) {
    text += std::to_string(p.length) + ',' + fmt("%.6f", p.tp_undefended) + ',' + fmt("%.6f", p.tp_defended) + '\n';
  }
  write_text(path, text);
}

void emit_report(const ExperimentReport& report, const std::filesystem::path& dir, ReportFormat format) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
  if (format != ReportFormat::Markdown) write_text(dir / "report.json", to_json(report).dump(2) + "\n");
  if (format != ReportFormat::Json) write_text(dir / "report.md", render_markdown(report));
  if (!report.rainbow_curve.empty()) write_rainbow_csv(dir / "rainbow_tp_by_length.csv", report.rainbow_curve);
}

ExperimentReport merge_reports(const std::vector<ExperimentReport>& reports) {
  ExperimentReport out;
  for (const auto& r : reports) {
    out.scenario += (out.scenario.empty() ? "" : "+") + r.scenario;
    if (!r.config.empty()) out.config[r.scenario] = r.config;
    out.seeds.insert(r.seeds.begin(), r.seeds.end());
    out.checksums.insert(r.checksums.begin(), r.checksums.end());
    out.results.insert(out.results.end(), r.results.begin(), r.results.end());
    out.timing.insert(out.timing.end(), r.timing.begin(), r.timing.end());
    out.rainbow_curve.insert(out.rainbow_curve.end(), r.rainbow_curve.begin(), r.rainbow_curve.end());
    for (const auto& note : r.notes) {
      if (std::find(out.notes.begin(), out.notes.end(), note) == out.notes.end()) out.notes.push_back(note);
    }
  }
  return out;
}

}  // namespace demark::bench
