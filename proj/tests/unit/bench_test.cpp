#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "demark/bench/experiments.hpp"
#include "demark/bench/metrics.hpp"
#include "demark/bench/report.hpp"
#include "demark/core/random.hpp"
#include "helpers.hpp"

using namespace demark;
using namespace demark::bench;

namespace {

ExperimentReport sample_report() {
  ExperimentReport r;
  r.scenario = "whitebox";
  r.seeds["experiment"] = 1;
  r.checksums["finn_n100.decoder"] = "00ff";
  for (std::size_t n : {50u, 100u, 150u, 200u}) {
    ConditionResult u{"whitebox", "undefended", n, {}, nlohmann::json::object()};
    u.metrics.er = Metric{0.99, 2048};
    u.metrics.ber = Metric{0.002, 2048};
    ConditionResult d{"whitebox", "defended", n, {}, nlohmann::json::object()};
    d.metrics.er = Metric{0.001, 2048};
    d.metrics.ber = Metric{0.5, 2048};
    d.extra["note"] = "x";
    r.results.push_back(u);
    r.results.push_back(d);
  }
  r.timing.push_back({100, 10, 0.5, 0.4, 0.9, 1.0, 1.2});
  r.rainbow_curve.push_back({1200, 0.98, 0.0, 500});
  r.notes.push_back("synthetic");
  return r;
}

}  // namespace

TEST_CASE("extraction rate") {
  const std::vector<std::uint32_t> truth{1, 2, 3, 4};
  CHECK(compute_er(truth, truth) == 1.0);
  CHECK(compute_er(std::vector<std::uint32_t>{0, 0, 0, 0}, truth) == 0.0);
  CHECK(compute_er(std::vector<std::uint32_t>{1, 2, 0, 0}, truth) == 0.5);
  CHECK_ERROR_KIND(compute_er(std::vector<std::uint32_t>{1}, truth), ErrorKind::LengthMismatch);
}

TEST_CASE("ER plus the mismatch fraction is one") {
  Rng rng(1);
  std::vector<std::uint32_t> a(1000), b(1000);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = static_cast<std::uint32_t>(rng.below(4));
    b[i] = static_cast<std::uint32_t>(rng.below(4));
  }
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < a.size(); ++i) mismatches += a[i] != b[i];
  CHECK(compute_er(a, b) + static_cast<double>(mismatches) / 1000.0 == 1.0);
}

TEST_CASE("bit error rate") {
  CHECK(compute_ber(std::vector<std::uint32_t>{0}, std::vector<std::uint32_t>{1023}) == 1.0);
  const std::vector<std::uint32_t> ids{5, 77, 1000};
  CHECK(compute_ber(ids, ids) == 0.0);
  std::vector<std::uint32_t> complement;
  for (auto v : ids) complement.push_back(~v & 1023u);
  CHECK(compute_ber(ids, complement) == 1.0);
  CHECK(compute_ber(std::vector<std::uint32_t>{0}, std::vector<std::uint32_t>{1}) == doctest::Approx(0.1));
}

TEST_CASE("random guessing gives BER 0.5") {
  Rng rng(2024);
  std::vector<std::uint32_t> guess(100000), truth(100000);
  for (std::size_t i = 0; i < guess.size(); ++i) {
    guess[i] = static_cast<std::uint32_t>(rng.below(1024));
    truth[i] = static_cast<std::uint32_t>(rng.below(1024));
  }
  CHECK(std::abs(compute_ber(guess, truth) - 0.5) <= 0.01);
}

TEST_CASE("TP and FP") {
  const auto perfect = compute_tp_fp({true, true, true}, {false, false});
  CHECK(perfect.tp == 1.0);
  CHECK(perfect.fp == 0.0);
  CHECK(perfect.watermarked == 3);
  CHECK(perfect.clean == 2);
  const auto mixed = compute_tp_fp({true, false, false, false}, {true, false, false, false});
  CHECK(mixed.tp == 0.25);
  CHECK(mixed.fp == 0.25);
}

TEST_CASE("report JSON round trip") {
  const auto r = sample_report();
  const auto j = to_json(r);
  const auto back = report_from_json(j);
  CHECK(to_json(back) == j);
  CHECK(back.results.size() == 8);
  CHECK(back.seeds.at("experiment") == 1);
  CHECK(back.checksums.at("finn_n100.decoder") == "00ff");
  REQUIRE(back.find("whitebox", "defended", 150) != nullptr);
  CHECK(back.find("whitebox", "defended", 150)->metrics.ber->value == 0.5);
  CHECK(back.find("whitebox", "defended", 150)->extra["note"] == "x");
  CHECK(back.find("blackbox", "defended") == nullptr);
}

TEST_CASE("markdown has one row per n with four metric columns") {
  const auto md = render_markdown(sample_report());
  CHECK(md.find("| n | ER undefended | BER undefended | ER defended | BER defended |") != std::string::npos);
  std::istringstream in(md);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    for (const char* n : {"| 50 |", "| 100 |", "| 150 |", "| 200 |"}) {
      if (line.rfind(n, 0) == 0 && std::count(line.begin(), line.end(), '|') == 6) ++rows;
    }
  }
  CHECK(rows == 4);
  CHECK(md.find("00ff") != std::string::npos);
}

TEST_CASE("emit_report writes JSON, Markdown and the RAINBOW CSV") {
  const auto dir = std::filesystem::temp_directory_path() / "demark_bench_test";
  std::filesystem::remove_all(dir);
  emit_report(sample_report(), dir);
  CHECK(std::filesystem::exists(dir / "report.json"));
  CHECK(std::filesystem::exists(dir / "report.md"));
  std::ifstream csv(dir / "rainbow_tp_by_length.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "length,tp_undefended,tp_defended");
  std::string row;
  std::getline(csv, row);
  CHECK(row.rfind("1200,", 0) == 0);
  std::ifstream js(dir / "report.json");
  const auto loaded = report_from_json(nlohmann::json::parse(js));
  CHECK(loaded.results.size() == 8);
  std::filesystem::remove_all(dir);
}

TEST_CASE("merge_reports concatenates") {
  auto a = sample_report();
  auto b = sample_report();
  b.scenario = "classic";
  const auto m = merge_reports({a, b});
  CHECK(m.results.size() == 16);
  CHECK(m.scenario.find("whitebox") != std::string::npos);
  CHECK(m.scenario.find("classic") != std::string::npos);
}

TEST_CASE("experiment config JSON") {
  const ExperimentConfig defaults;
  CHECK(defaults.train_windows == 2000);
  CHECK(defaults.test_windows == 500);
  CHECK(defaults.lengths == std::vector<std::size_t>{50, 100, 150, 200});
  const auto j = to_json(defaults);
  CHECK(to_json(config_from_json(j)) == j);

  const auto partial = config_from_json(nlohmann::json::parse(R"({"seed": 9, "lengths": [100], "gan": {"w1": 0.5}})"));
  CHECK(partial.seed == 9);
  CHECK(partial.lengths == std::vector<std::size_t>{100});
  CHECK(partial.gan.w1 == 0.5);
  CHECK(partial.gan.w2 == defaults.gan.w2);

  CHECK_ERROR_KIND(config_from_json(nlohmann::json::parse(R"({"sede": 1})")), ErrorKind::Format);
  CHECK_ERROR_KIND(config_from_json(nlohmann::json::parse(R"({"gan": {"w3": 1}})")), ErrorKind::Format);
  CHECK_ERROR_KIND(load_experiment_config("/nonexistent/config.json"), ErrorKind::Io);
}

TEST_CASE("datasets are seeded per stream") {
  ExperimentConfig cfg;
  cfg.train_windows = 40;
  cfg.test_windows = 10;
  const auto d1 = make_dataset(cfg, 50, 1);
  const auto d1b = make_dataset(cfg, 50, 1);
  const auto d2 = make_dataset(cfg, 50, 2);
  CHECK(d1.train.size() == 40);
  CHECK(d1.test.size() == 10);
  CHECK(d1.windows == d1b.windows);
  CHECK(d1.windows != d2.windows);
  CHECK(dataset_tag(cfg, 50, 1) != dataset_tag(cfg, 50, 2));
}

TEST_CASE("timing benchmark reports ordered percentiles") {
  const defense::DefenseModel model{defense::make_converter(100, 1), defense::RemapConfig{}, "t"};
  const auto t = run_timing_benchmark(model, 200, 1);
  CHECK(t.n == 100);
  CHECK(t.iterations == 200);
  CHECK(t.mean_ms > 0.0);
  CHECK(t.p50_ms <= t.p95_ms);
  CHECK(t.p95_ms <= t.p99_ms);
  CHECK(t.p99_ms <= t.max_ms);
}
