// Command-line front end for the watermarking attack/defense laboratory.

#include <csignal>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "demark/adversary/fingerprinting.hpp"
#include "demark/bench/experiments.hpp"
#include "demark/bench/report.hpp"
#include "demark/channel/channel.hpp"
#include "demark/core/error.hpp"
#include "demark/core/trace_io.hpp"
#include "demark/defense/converter.hpp"
#include "demark/nn/serialize.hpp"
#include "demark/runtime/defense_engine.hpp"

namespace fs = std::filesystem;
using namespace demark;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;
};

Endpoint parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorKind::Format, "endpoint must be host:port");
  Endpoint ep;
  ep.host = text.substr(0, colon);
  const int port = std::stoi(text.substr(colon + 1));
  if (port < 0 || port > 65535) throw Error(ErrorKind::OutOfRange, "port out of range");
  ep.port = static_cast<std::uint16_t>(port);
  return ep;
}

void print_pair(const adversary::FingerprintModelPair& pair) {
  nlohmann::json j{{"architecture", adversary::to_string(pair.architecture)},
                   {"n", pair.n},
                   {"m", pair.m},
                   {"epochs", pair.loss_curve.size()},
                   {"validation_er", pair.validation_er},
                   {"mean_added_delay_ms", adversary::mean_added_delay(pair.encoder, pair.m)},
                   {"encoder_checksum", nn::model_checksum(pair.encoder)},
                   {"decoder_checksum", nn::model_checksum(pair.decoder)}};
  std::cout << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flow watermarking attacks and the IPD-conversion defense"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string config_path;
  std::string out_dir = "out";
  bool verbose = false;
  app.add_option("--seed", seed, "Experiment seed (overrides the config)")
      ->each([&](const std::string&) { seed_given = true; });
  app.add_option("--config", config_path, "Experiment config JSON")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "Output directory for models, traces and reports");
  app.add_flag("-v,--verbose", verbose, "Log training progress to stderr");

  std::size_t n = 100;
  std::size_t count = 500;
  std::size_t packets = 1201;
  std::string input_path;
  std::string converter_stem;
  std::string scenario = "whitebox";
  std::string listen = "127.0.0.1:9000";
  std::string forward = "127.0.0.1:9001";
  std::size_t iterations = 0;

  auto* synth = app.add_subcommand("synth", "Synthesize flows into <out>/flows.csv");
  synth->add_option("--count", count, "Number of flows")->check(CLI::PositiveNumber);
  synth->add_option("--packets", packets, "Packets per flow")->check(CLI::Range(2, 100000000));

  auto* train_adv = app.add_subcommand("train-adversary", "Train the fingerprinting adversary on D1");
  train_adv->add_option("--n", n, "IPD window length");
  auto* train_sub = app.add_subcommand("train-substitute", "Train the substitute model on D2");
  train_sub->add_option("--n", n, "IPD window length");
  auto* train_conv = app.add_subcommand("train-converter", "Train a converter against a frozen decoder");
  train_conv->add_option("--n", n, "IPD window length");
  train_conv->add_option("--scenario", scenario, "whitebox (adversary decoder) or blackbox (substitute)")
      ->check(CLI::IsMember({"whitebox", "blackbox"}));

  auto* eval_wb = app.add_subcommand("eval-whitebox", "ER/BER with and without the defense, white-box");
  auto* eval_bb = app.add_subcommand("eval-blackbox", "ER/BER of the adversary against a substitute-trained defense");
  auto* eval_classic = app.add_subcommand("eval-classic", "RAINBOW and SWIRL TP/FP with and without the defense");

  auto* simulate = app.add_subcommand("simulate", "Run the real-time defense on a trace in virtual time");
  simulate->add_option("--input", input_path, "Trace CSV (default: one synthetic flow)")->check(CLI::ExistingFile);
  simulate->add_option("--converter", converter_stem, "Converter stem (<stem>.dmrk + <stem>.json)")->required();

  auto* relay = app.add_subcommand("relay", "Re-time length-prefixed frames between two TCP endpoints");
  relay->add_option("--listen", listen, "host:port to accept the upstream connection on");
  relay->add_option("--forward", forward, "host:port to forward to");
  relay->add_option("--converter", converter_stem, "Converter stem")->required();

  auto* timing = app.add_subcommand("bench-timing", "convert+remap latency per window");
  timing->add_option("--converter", converter_stem, "Time this converter instead of the n sweep");
  timing->add_option("--iterations", iterations, "Timed calls (default from config)");

  CLI11_PARSE(app, argc, argv);

  try {
    bench::ExperimentConfig config = config_path.empty() ? bench::ExperimentConfig{}
                                                         : bench::load_experiment_config(config_path);
    if (seed_given) config.seed = seed;
    config.verbose = config.verbose || verbose;
    const fs::path out(out_dir);
    if (config.model_dir.empty()) config.model_dir = out / "models";
    if (iterations > 0) config.timing_iterations = iterations;

    if (synth->parsed()) {
      channel::FlowSynthConfig sc = config.synth;
      sc.packets = packets;
      sc.seed = config.seed;
      fs::create_directories(out);
      save_traces(out / "flows.csv", channel::synthesize_flows(sc, count));
      std::cout << "wrote " << count << " flows to " << (out / "flows.csv").string() << '\n';
    } else if (train_adv->parsed() || train_sub->parsed()) {
      const bool sub = train_sub->parsed();
      const std::uint64_t stream = sub ? 2 : 1;
      const auto data = bench::make_dataset(config, n, stream);
      print_pair(bench::obtain_fingerprinting(
          config, sub ? adversary::Architecture::Substitute : adversary::Architecture::Finn, data, stream));
    } else if (train_conv->parsed()) {
      const bool bb = scenario == "blackbox";
      const std::uint64_t stream = bb ? 2 : 1;
      const auto data = bench::make_dataset(config, n, stream);
      const auto target = bench::obtain_fingerprinting(
          config, bb ? adversary::Architecture::Substitute : adversary::Architecture::Finn, data, stream);
      const auto model = bench::obtain_converter(config, target, data, scenario);
      std::cout << nlohmann::json{{"n", model.n()},
                                  {"provenance", model.provenance},
                                  {"checksum", nn::model_checksum(model.converter)}}
                       .dump(2)
                << '\n';
    } else if (eval_wb->parsed() || eval_bb->parsed() || eval_classic->parsed()) {
      bench::ExperimentReport report = eval_wb->parsed()   ? bench::run_whitebox_experiment(config)
                                       : eval_bb->parsed() ? bench::run_blackbox_experiment(config)
                                                           : bench::run_classic_experiments(config);
      bench::emit_report(report, out / report.scenario);
      std::cout << bench::render_markdown(report);
    } else if (simulate->parsed()) {
      const auto model = defense::load_defense(converter_stem);
      std::vector<FlowTrace> traces;
      if (input_path.empty()) {
        channel::FlowSynthConfig sc = config.synth;
        sc.seed = config.seed;
        traces = channel::synthesize_flows(sc, 1);
      } else {
        traces = load_traces(input_path);
      }
      std::vector<FlowTrace> outputs;
      nlohmann::json stats = nlohmann::json::array();
      for (std::size_t i = 0; i < traces.size(); ++i) {
        const auto res = runtime::run_simulation(model, traces[i], model.n(), derive_seed(config.seed, i));
        outputs.push_back(res.output);
        stats.push_back({{"flow_id", traces[i].flow_id},
                         {"real", res.stats.real_packets},
                         {"chaff", res.stats.chaff_packets},
                         {"chaff_ratio", res.stats.chaff_ratio},
                         {"mean_queue_delay_ms", res.stats.mean_queue_delay_ms},
                         {"max_queue_delay_ms", res.stats.max_queue_delay_ms},
                         {"queue_high_water", res.stats.queue_high_water},
                         {"windows", res.stats.windows}});
      }
      fs::create_directories(out);
      save_traces(out / "defended.csv", outputs);
      std::cout << stats.dump(2) << '\n';
    } else if (relay->parsed()) {
      const auto model = defense::load_defense(converter_stem);
      const auto l = parse_endpoint(listen);
      const auto f = parse_endpoint(forward);
      runtime::RelayConfig rc;
      rc.listen_host = l.host;
      rc.listen_port = l.port;
      rc.forward_host = f.host;
      rc.forward_port = f.port;
      rc.seed = config.seed;
      rc.stop = &g_stop;
      rc.on_listening = [](std::uint16_t port) { std::cerr << "listening on port " << port << '\n'; };
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      const auto report = runtime::run_relay(rc, model);
      std::cout << nlohmann::json{{"frames_in", report.frames_in},
                                  {"real_out", report.real_out},
                                  {"chaff_out", report.chaff_out},
                                  {"undelivered", report.undelivered},
                                  {"downstream_failed", report.downstream_failed}}
                       .dump(2)
                << '\n';
    } else if (timing->parsed()) {
      bench::ExperimentReport report;
      if (converter_stem.empty()) {
        report = bench::run_timing_sweep(config);
      } else {
        report.scenario = "timing";
        report.timing.push_back(
            bench::run_timing_benchmark(defense::load_defense(converter_stem), config.timing_iterations, config.seed));
      }
      bench::emit_report(report, out / "timing");
      std::cout << bench::render_markdown(report);
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
