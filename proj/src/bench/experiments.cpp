#include "demark/bench/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>

#include "demark/bench/metrics.hpp"
#include "demark/core/error.hpp"
#include "demark/nn/serialize.hpp"
#include "demark/runtime/defense_engine.hpp"

namespace demark::bench {

using nlohmann::json;

ExperimentConfig::ExperimentConfig() {
  adversary.epochs = 60;
  adversary.target_er = 0.999;
  substitute = adversary;
  gan.epochs = 5;
}

namespace {

void check_keys(const json& j, const char* where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw Error(ErrorKind::Format, std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw Error(ErrorKind::Format, std::string("unknown config key '") + where + "." + key + "'");
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

json adversary_json(const adversary::AdversaryTrainConfig& c) {
  return {{"noise_scale", c.noise_scale}, {"epochs", c.epochs},           {"batch", c.batch},
          {"learning_rate", c.learning_rate}, {"eval_every", c.eval_every}, {"validation_samples", c.validation_samples},
          {"patience", c.patience}, {"min_epochs", c.min_epochs},       {"min_improvement", c.min_improvement}, {"target_er", c.target_er}};
}

void adversary_from(const json& j, const char* where, adversary::AdversaryTrainConfig& c) {
  check_keys(j, where,
             {"noise_scale", "epochs", "batch", "learning_rate", "eval_every", "validation_samples", "patience",
              "min_epochs", "min_improvement", "target_er"});
  read(j, "noise_scale", c.noise_scale);
  read(j, "epochs", c.epochs);
  read(j, "batch", c.batch);
  read(j, "learning_rate", c.learning_rate);
  read(j, "eval_every", c.eval_every);
  read(j, "validation_samples", c.validation_samples);
  read(j, "patience", c.patience);
  read(j, "min_epochs", c.min_epochs);
  read(j, "min_improvement", c.min_improvement);
  read(j, "target_er", c.target_er);
}

std::string stem_name(const std::string& kind, std::size_t n, std::uint64_t seed, std::uint64_t stream) {
  return kind + "_n" + std::to_string(n) + "_s" + std::to_string(seed) + "_d" + std::to_string(stream);
}

bool cached(const ExperimentConfig& config, const std::string& stem) {
  return !config.model_dir.empty() && std::filesystem::exists(config.model_dir / (stem + ".json"));
}

std::vector<std::uint32_t> uniform_ids(std::size_t count, std::size_t m, Rng& rng) {
  std::vector<std::uint32_t> ids(count);
  for (auto& id : ids) id = static_cast<std::uint32_t>(rng.below(m));
  return ids;
}

void jitter_in_place(nn::Matrix& x, const channel::JitterConfig& jitter, Rng& rng) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    x.data()[i] = std::max(0.0, x.data()[i] + channel::sample_laplace(jitter.location, jitter.scale, rng));
  }
}

void log(const ExperimentConfig& config, const std::string& line) {
  if (config.verbose) std::cerr << line << '\n';
}

Metric metric(double v, std::size_t samples) { return Metric{v, samples}; }

void add_pair_provenance(ExperimentReport& report, const std::string& name,
                         const adversary::FingerprintModelPair& pair) {
  report.checksums[name + ".encoder"] = nn::model_checksum(pair.encoder);
  report.checksums[name + ".decoder"] = nn::model_checksum(pair.decoder);
}

const char* kNoiseNote =
    "Adversary training noise reuses the evaluation jitter, Laplace(0, 10 ms); the true training noise "
    "magnitude of the attacked system is unknown.";
const char* kClampNote = "Encoder delays are clamped at zero: the watermarker only delays packets.";
const char* kSynthNote = "Flows are synthetic (two-component log-normal IPD mixture), not captured traffic.";

}  // namespace

json to_json(const ExperimentConfig& c) {
  json mixture = json::array();
  for (const auto& comp : c.synth.mixture) {
    mixture.push_back({{"weight", comp.weight}, {"log_mean", comp.log_mean}, {"log_sigma", comp.log_sigma}});
  }
  return {{"seed", c.seed},
          {"train_windows", c.train_windows},
          {"test_windows", c.test_windows},
          {"validation_fraction", c.validation_fraction},
          {"lengths", c.lengths},
          {"blackbox_n", c.blackbox_n},
          {"m", c.m},
          {"eval_samples", c.eval_samples},
          {"converter_samples", c.converter_samples},
          {"jitter", {{"location", c.jitter.location}, {"scale", c.jitter.scale}}},
          {"synth", {{"packets", c.synth.packets}, {"mixture", mixture}}},
          {"adversary", adversary_json(c.adversary)},
          {"substitute", adversary_json(c.substitute)},
          {"gan",
           {{"w1", c.gan.w1},
            {"w2", c.gan.w2},
            {"epochs", c.gan.epochs},
            {"batch", c.gan.batch},
            {"lr_converter", c.gan.lr_converter},
            {"lr_discriminator", c.gan.lr_discriminator},
            {"real_location", c.gan.real_location},
            {"real_scale", c.gan.real_scale}}},
          {"remap",
           {{"mu_min", c.remap.mu_min},
            {"mu_max", c.remap.mu_max},
            {"sigma", c.remap.sigma},
            {"mean_mode", c.remap.mean_mode == defense::MeanMode::PostScaling ? "post" : "pre"}}},
          {"rainbow", {{"amplitude", c.rainbow.amplitude}, {"threshold", c.rainbow.threshold}}},
          {"rainbow_lengths", c.rainbow_lengths},
          {"classic_flows", c.classic_flows},
          {"clean_flows", c.clean_flows},
          {"swirl",
           {{"interval_ms", c.swirl.interval_ms},
            {"subintervals", c.swirl.subintervals},
            {"slots", c.swirl.slots},
            {"packet_threshold", c.swirl.packet_threshold},
            {"pairs", c.swirl.pairs},
            {"mark_threshold", c.swirl.mark_threshold},
            {"sync_search_ms", c.swirl.sync_search_ms},
            {"sync_step_ms", c.swirl.sync_step_ms}}},
          {"swirl_packets", c.swirl_packets},
          {"classic_n", c.classic_n},
          {"timing_iterations", c.timing_iterations},
          {"model_dir", c.model_dir.string()},
          {"verbose", c.verbose}};
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  try {
    check_keys(j, "config",
               {"seed", "train_windows", "test_windows", "validation_fraction", "lengths", "blackbox_n", "m",
                "eval_samples", "converter_samples", "jitter", "synth", "adversary", "substitute", "gan", "remap",
                "rainbow", "rainbow_lengths", "classic_flows", "clean_flows", "swirl", "swirl_packets", "classic_n",
                "timing_iterations", "model_dir", "verbose"});
    read(j, "seed", c.seed);
    read(j, "train_windows", c.train_windows);
    read(j, "test_windows", c.test_windows);
    read(j, "validation_fraction", c.validation_fraction);
    read(j, "lengths", c.lengths);
    read(j, "blackbox_n", c.blackbox_n);
    read(j, "m", c.m);
    read(j, "eval_samples", c.eval_samples);
    read(j, "converter_samples", c.converter_samples);
    if (j.contains("jitter")) {
      const auto& s = j.at("jitter");
      check_keys(s, "jitter", {"location", "scale"});
      read(s, "location", c.jitter.location);
      read(s, "scale", c.jitter.scale);
    }
    if (j.contains("synth")) {
      const auto& s = j.at("synth");
      check_keys(s, "synth", {"packets", "mixture"});
      read(s, "packets", c.synth.packets);
      if (s.contains("mixture")) {
        c.synth.mixture.clear();
        for (const auto& comp : s.at("mixture")) {
          check_keys(comp, "synth.mixture[]", {"weight", "log_mean", "log_sigma"});
          c.synth.mixture.push_back({comp.at("weight").get<double>(), comp.at("log_mean").get<double>(),
                                     comp.at("log_sigma").get<double>()});
        }
      }
      channel::validate(c.synth);
    }
    if (j.contains("adversary")) adversary_from(j.at("adversary"), "adversary", c.adversary);
    if (j.contains("substitute")) adversary_from(j.at("substitute"), "substitute", c.substitute);
    if (j.contains("gan")) {
      const auto& s = j.at("gan");
      check_keys(s, "gan",
                 {"w1", "w2", "epochs", "batch", "lr_converter", "lr_discriminator", "real_location", "real_scale"});
      read(s, "w1", c.gan.w1);
      read(s, "w2", c.gan.w2);
      read(s, "epochs", c.gan.epochs);
      read(s, "batch", c.gan.batch);
      read(s, "lr_converter", c.gan.lr_converter);
      read(s, "lr_discriminator", c.gan.lr_discriminator);
      read(s, "real_location", c.gan.real_location);
      read(s, "real_scale", c.gan.real_scale);
      defense::validate(c.gan);
    }
    if (j.contains("remap")) {
      const auto& s = j.at("remap");
      check_keys(s, "remap", {"mu_min", "mu_max", "sigma", "mean_mode"});
      read(s, "mu_min", c.remap.mu_min);
      read(s, "mu_max", c.remap.mu_max);
      read(s, "sigma", c.remap.sigma);
      if (s.contains("mean_mode")) {
        const auto mode = s.at("mean_mode").get<std::string>();
        if (mode != "post" && mode != "pre") throw Error(ErrorKind::Format, "remap.mean_mode must be post or pre");
        c.remap.mean_mode = mode == "pre" ? defense::MeanMode::PreScaling : defense::MeanMode::PostScaling;
      }
      defense::validate(c.remap);
    }
    if (j.contains("rainbow")) {
      const auto& s = j.at("rainbow");
      check_keys(s, "rainbow", {"amplitude", "threshold"});
      read(s, "amplitude", c.rainbow.amplitude);
      read(s, "threshold", c.rainbow.threshold);
    }
    read(j, "rainbow_lengths", c.rainbow_lengths);
    read(j, "classic_flows", c.classic_flows);
    read(j, "clean_flows", c.clean_flows);
    if (j.contains("swirl")) {
      const auto& s = j.at("swirl");
      check_keys(s, "swirl",
                 {"interval_ms", "subintervals", "slots", "packet_threshold", "pairs", "mark_threshold",
                  "sync_search_ms", "sync_step_ms"});
      read(s, "interval_ms", c.swirl.interval_ms);
      read(s, "subintervals", c.swirl.subintervals);
      read(s, "slots", c.swirl.slots);
      read(s, "packet_threshold", c.swirl.packet_threshold);
      read(s, "pairs", c.swirl.pairs);
      read(s, "mark_threshold", c.swirl.mark_threshold);
      read(s, "sync_search_ms", c.swirl.sync_search_ms);
      read(s, "sync_step_ms", c.swirl.sync_step_ms);
      classic::validate(c.swirl);
    }
    read(j, "swirl_packets", c.swirl_packets);
    read(j, "classic_n", c.classic_n);
    read(j, "timing_iterations", c.timing_iterations);
    if (j.contains("model_dir")) c.model_dir = j.at("model_dir").get<std::string>();
    read(j, "verbose", c.verbose);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, std::string("config: ") + e.what());
  }
  if (c.lengths.empty() || c.rainbow_lengths.empty()) throw Error(ErrorKind::Format, "config: empty length list");
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::string dataset_tag(const ExperimentConfig& config, std::size_t n, std::uint64_t stream) {
  return "synthetic seed=" + std::to_string(config.seed) + " stream=" + std::to_string(stream) +
         " n=" + std::to_string(n) + " windows=" + std::to_string(config.train_windows + config.test_windows);
}

Dataset make_dataset(const ExperimentConfig& config, std::size_t n, std::uint64_t stream) {
  const std::size_t total = config.train_windows + config.test_windows;
  if (total == 0 || config.train_windows == 0 || config.test_windows == 0) {
    throw Error(ErrorKind::OutOfRange, "train and test window counts must be >= 1");
  }
  channel::FlowSynthConfig synth = config.synth;
  synth.seed = derive_seed(config.seed, stream);
  const std::size_t per_flow = (synth.packets - 1) / n;
  if (per_flow == 0) throw Error(ErrorKind::InsufficientLength, "synthetic flows are shorter than one window");
  const std::size_t flows = (total + per_flow - 1) / per_flow;
  auto windows = windows_from_traces(channel::synthesize_flows(synth, flows, "d" + std::to_string(stream)), n);
  windows.resize(total);
  return split_dataset(std::move(windows),
                       static_cast<double>(config.train_windows) / static_cast<double>(total),
                       derive_seed(synth.seed, 77));
}

adversary::FingerprintModelPair obtain_fingerprinting(const ExperimentConfig& config,
                                                      adversary::Architecture arch, const Dataset& data,
                                                      std::uint64_t stream) {
  const std::size_t n = data.window_length();
  auto train_cfg = arch == adversary::Architecture::Finn ? config.adversary : config.substitute;
  train_cfg.n = n;
  train_cfg.m = config.m;
  train_cfg.seed = derive_seed(config.seed, 100 + 10 * stream + static_cast<std::uint64_t>(arch));
  train_cfg.verbose = config.verbose;
  const auto stem = stem_name(std::string(adversary::to_string(arch)), n, config.seed, stream);
  if (cached(config, stem)) {
    log(config, "loading " + stem);
    return adversary::load_pair(config.model_dir / stem);
  }
  auto train = data.train_windows();
  const auto held = static_cast<std::size_t>(std::round(config.validation_fraction * static_cast<double>(train.size())));
  std::vector<IpdSequence> validation;
  if (held > 0 && held < train.size()) {
    validation.assign(train.end() - static_cast<std::ptrdiff_t>(held), train.end());
    train.resize(train.size() - held);
  }
  log(config, "training " + stem + " on " + std::to_string(train.size()) + " windows");
  auto pair = adversary::train_fingerprinting(train, validation, train_cfg, arch);
  pair.dataset_tag = dataset_tag(config, n, stream);
  if (!config.model_dir.empty()) {
    std::filesystem::create_directories(config.model_dir);
    adversary::save_pair(pair, config.model_dir / stem);
  }
  return pair;
}

nn::Matrix watermark_through_channel(const adversary::FingerprintModelPair& pair,
                                     const std::vector<IpdSequence>& windows,
                                     std::span<const std::uint32_t> ids, const channel::JitterConfig& jitter,
                                     Rng& rng) {
  if (windows.empty()) throw Error(ErrorKind::InsufficientLength, "no windows");
  const nn::Matrix delays = adversary::encode_batch(pair.encoder, ids);
  nn::Matrix out(delays.rows(), delays.cols());
  for (Eigen::Index r = 0; r < delays.rows(); ++r) {
    const auto& w = windows[static_cast<std::size_t>(r) % windows.size()];
    if (static_cast<Eigen::Index>(w.size()) != delays.cols()) {
      throw Error(ErrorKind::LengthMismatch, "window length differs from the encoder output");
    }
    for (Eigen::Index c = 0; c < delays.cols(); ++c) {
      out(r, c) = std::max(0.0, w[static_cast<std::size_t>(c)] + delays(r, c));
    }
  }
  jitter_in_place(out, jitter, rng);
  return out;
}

defense::DefenseModel obtain_converter(const ExperimentConfig& config,
                                       const adversary::FingerprintModelPair& target, const Dataset& data,
                                       const std::string& tag) {
  const std::size_t n = data.window_length();
  const auto stem = stem_name("converter_" + tag, n, config.seed, 0);
  if (cached(config, stem)) {
    log(config, "loading " + stem);
    return defense::load_defense(config.model_dir / stem);
  }
  Rng rng(derive_seed(config.seed, 300 + n));
  const auto ids = uniform_ids(config.converter_samples, target.m, rng);
  const nn::Matrix x = watermark_through_channel(target, data.train_windows(), ids, config.jitter, rng);
  auto gan = config.gan;
  gan.seed = derive_seed(config.seed, 400 + n);
  gan.verbose = config.verbose;
  log(config, "training " + stem + " on " + std::to_string(x.rows()) + " watermarked windows");
  auto trained = defense::train_converter(target.decoder, x, gan, config.remap);
  trained.defense.provenance = tag + " against " + std::string(adversary::to_string(target.architecture)) +
                               " decoder " + nn::model_checksum(target.decoder) + "; " + target.dataset_tag;
  if (!config.model_dir.empty()) {
    std::filesystem::create_directories(config.model_dir);
    defense::save_defense(trained.defense, config.model_dir / stem);
  }
  return trained.defense;
}

ExtractionEval evaluate_extraction(const ExperimentConfig& config, const adversary::FingerprintModelPair& adversary,
                                   const std::vector<IpdSequence>& windows, const defense::DefenseModel* defense,
                                   std::uint64_t seed) {
  ExtractionEval ev;
  ev.truth = adversary::stratified_ids(config.eval_samples, adversary.m);
  Rng rng(seed);
  nn::Matrix x = watermark_through_channel(adversary, windows, ev.truth, config.jitter, rng);
  if (defense != nullptr) {
    x = defense::defend_batch(*defense, x);
    jitter_in_place(x, config.jitter, rng);
  }
  ev.extracted = adversary::extract_batch(adversary::decode_batch(adversary.decoder, x));
  ev.er = compute_er(ev.extracted, ev.truth);
  ev.ber = compute_ber(ev.extracted, ev.truth, adversary.bits());
  return ev;
}

namespace {

ConditionResult extraction_result(const std::string& scheme, const std::string& condition, std::size_t n,
                                  const ExtractionEval& ev) {
  ConditionResult r;
  r.scheme = scheme;
  r.condition = condition;
  r.n = n;
  r.metrics.er = metric(ev.er, ev.truth.size());
  r.metrics.ber = metric(ev.ber, ev.truth.size());
  r.extra["distinct_outputs"] = std::set<std::uint32_t>(ev.extracted.begin(), ev.extracted.end()).size();
  return r;
}

void pair_extras(ConditionResult& r, const adversary::FingerprintModelPair& pair) {
  r.extra["mean_added_delay_ms"] = adversary::mean_added_delay(pair.encoder, pair.m);
  r.extra["training_epochs"] = pair.loss_curve.size();
  r.extra["final_training_loss"] = pair.loss_curve.empty() ? 0.0 : pair.loss_curve.back();
}

}  // namespace

ExperimentReport run_whitebox_experiment(const ExperimentConfig& config) {
  ExperimentReport report;
  report.scenario = "whitebox";
  report.config = to_json(config);
  report.seeds["experiment"] = config.seed;
  report.seeds["dataset_d1"] = derive_seed(config.seed, 1);
  report.notes = {kNoiseNote, kClampNote, kSynthNote};
  for (std::size_t n : config.lengths) {
    const Dataset d1 = make_dataset(config, n, 1);
    const auto pair = obtain_fingerprinting(config, adversary::Architecture::Finn, d1, 1);
    const auto test = d1.test_windows();
    const auto undef = evaluate_extraction(config, pair, test, nullptr, derive_seed(config.seed, 500 + n));
    auto ru = extraction_result("whitebox", "undefended", n, undef);
    pair_extras(ru, pair);
    report.results.push_back(std::move(ru));
    log(config, "whitebox n=" + std::to_string(n) + " undefended ER " + std::to_string(undef.er));

    const auto conv = obtain_converter(config, pair, d1, "whitebox");
    const auto def = evaluate_extraction(config, pair, test, &conv, derive_seed(config.seed, 600 + n));
    report.results.push_back(extraction_result("whitebox", "defended", n, def));
    log(config, "whitebox n=" + std::to_string(n) + " defended ER " + std::to_string(def.er) + " BER " +
                    std::to_string(def.ber));
    add_pair_provenance(report, "finn_n" + std::to_string(n), pair);
    report.checksums["converter_whitebox_n" + std::to_string(n)] = nn::model_checksum(conv.converter);
  }
  return report;
}

ExperimentReport run_blackbox_experiment(const ExperimentConfig& config) {
  ExperimentReport report;
  report.scenario = "blackbox";
  report.config = to_json(config);
  report.seeds["experiment"] = config.seed;
  report.seeds["dataset_d1"] = derive_seed(config.seed, 1);
  report.seeds["dataset_d2"] = derive_seed(config.seed, 2);
  report.notes = {kNoiseNote, kClampNote, kSynthNote,
                  "The substitute and its converter only see D2; the adversary is evaluated on D1."};
  const std::size_t n = config.blackbox_n;
  const Dataset d1 = make_dataset(config, n, 1);
  const Dataset d2 = make_dataset(config, n, 2);
  const auto adv = obtain_fingerprinting(config, adversary::Architecture::Finn, d1, 1);
  const auto sub = obtain_fingerprinting(config, adversary::Architecture::Substitute, d2, 2);
  const auto conv = obtain_converter(config, sub, d2, "blackbox");
  const auto test = d1.test_windows();

  const auto undef = evaluate_extraction(config, adv, test, nullptr, derive_seed(config.seed, 700));
  auto ru = extraction_result("blackbox", "undefended", n, undef);
  pair_extras(ru, adv);
  report.results.push_back(std::move(ru));
  const auto def = evaluate_extraction(config, adv, test, &conv, derive_seed(config.seed, 701));
  auto rd = extraction_result("blackbox", "defended", n, def);
  const auto sub_undef = evaluate_extraction(config, sub, d2.test_windows(), nullptr, derive_seed(config.seed, 702));
  const auto sub_def = evaluate_extraction(config, sub, d2.test_windows(), &conv, derive_seed(config.seed, 703));
  rd.extra["substitute_undefended_er"] = sub_undef.er;
  rd.extra["substitute_defended_er"] = sub_def.er;
  rd.extra["substitute_defended_ber"] = sub_def.ber;
  report.results.push_back(std::move(rd));
  log(config, "blackbox defended ER " + std::to_string(def.er) + " BER " + std::to_string(def.ber));
  add_pair_provenance(report, "finn_n" + std::to_string(n), adv);
  add_pair_provenance(report, "substitute_n" + std::to_string(n), sub);
  report.checksums["converter_blackbox_n" + std::to_string(n)] = nn::model_checksum(conv.converter);
  return report;
}

ExperimentReport run_classic_experiments(const ExperimentConfig& config, const defense::DefenseModel* defense_in) {
  ExperimentReport report;
  report.scenario = "classic";
  report.config = to_json(config);
  report.seeds["experiment"] = config.seed;
  report.notes = {kSynthNote,
                  "Jitter is applied once before the defense and once after it.",
                  "SWIRL jitter perturbs each timestamp independently; IPD-wise jitter would accumulate into a "
                  "random walk of the packet times."};

  defense::DefenseModel owned;
  const defense::DefenseModel* defense = defense_in;
  if (defense == nullptr) {
    const Dataset d1 = make_dataset(config, config.classic_n, 1);
    const auto pair = obtain_fingerprinting(config, adversary::Architecture::Finn, d1, 1);
    owned = obtain_converter(config, pair, d1, "whitebox");
    defense = &owned;
  }
  const std::size_t n = defense->n();
  report.checksums["converter_n" + std::to_string(n)] = nn::model_checksum(defense->converter);

  std::vector<std::size_t> lengths = config.rainbow_lengths;
  std::sort(lengths.begin(), lengths.end());
  const std::size_t max_len = lengths.back();

  // RAINBOW
  {
    channel::FlowSynthConfig synth = config.synth;
    synth.packets = max_len + 1;
    synth.seed = derive_seed(config.seed, 3);
    report.seeds["rainbow_flows"] = synth.seed;
    const auto flows = channel::synthesize_flows(synth, config.classic_flows, "rb");
    std::vector<std::vector<bool>> undef(lengths.size()), def(lengths.size());
    for (std::size_t f = 0; f < flows.size(); ++f) {
      classic::RainbowConfig rc = config.rainbow;
      rc.window = max_len;
      rc.seed = derive_seed(config.seed, 5000 + f);
      const auto clean = ipds_from_timestamps(flows[f]);
      const auto emb = classic::rainbow_embed(clean, rc, flows[f].flow_id);
      Rng rng(derive_seed(config.seed, 6000 + f));
      const auto observed = channel::apply_jitter(emb.watermarked, config.jitter.location, config.jitter.scale, rng);
      const auto sim = runtime::run_simulation(*defense, timestamps_from_ipds(flows[f].timestamps.front(), observed),
                                               n, derive_seed(config.seed, 7000 + f));
      const auto defended = channel::apply_jitter(ipds_from_timestamps(sim.output), config.jitter.location,
                                                  config.jitter.scale, rng);
      for (std::size_t li = 0; li < lengths.size(); ++li) {
        classic::RainbowConfig lc = rc;
        lc.window = lengths[li];
        classic::RainbowRecord rec = emb.record;
        rec.clean.resize(lc.window);
        rec.w.resize(lc.window);
        undef[li].push_back(classic::rainbow_detect(observed, rec, lc).detected);
        def[li].push_back(classic::rainbow_detect(defended, rec, lc).detected);
      }
    }
    synth.seed = derive_seed(config.seed, 4);
    report.seeds["rainbow_clean_flows"] = synth.seed;
    const auto clean_flows = channel::synthesize_flows(synth, config.clean_flows, "rbc");
    std::vector<bool> clean_hits;
    for (std::size_t f = 0; f < clean_flows.size(); ++f) {
      classic::RainbowConfig rc = config.rainbow;
      rc.window = max_len;
      rc.seed = derive_seed(config.seed, 8000 + f);
      const auto clean = ipds_from_timestamps(clean_flows[f]);
      const auto rec = classic::rainbow_embed(clean, rc).record;
      Rng rng(derive_seed(config.seed, 9000 + f));
      const auto observed = channel::apply_jitter(clean, config.jitter.location, config.jitter.scale, rng);
      clean_hits.push_back(classic::rainbow_detect(observed, rec, rc).detected);
    }
    double max_def = 0.0;
    for (std::size_t li = 0; li < lengths.size(); ++li) {
      const auto u = compute_tp_fp(undef[li], clean_hits);
      const auto d = compute_tp_fp(def[li], clean_hits);
      report.rainbow_curve.push_back({lengths[li], u.tp, d.tp, flows.size()});
      max_def = std::max(max_def, d.tp);
    }
    const auto top = compute_tp_fp(undef.back(), clean_hits);
    ConditionResult ru{"rainbow", "undefended", 0, {}, json::object()};
    ru.metrics.tp = metric(top.tp, top.watermarked);
    ru.metrics.fp = metric(top.fp, top.clean);
    ru.extra["window"] = max_len;
    report.results.push_back(ru);
    ConditionResult rd{"rainbow", "defended", n, {}, json::object()};
    rd.metrics.tp = metric(compute_tp_fp(def.back(), clean_hits).tp, flows.size());
    rd.extra["window"] = max_len;
    rd.extra["max_tp_over_lengths"] = max_def;
    report.results.push_back(rd);
    log(config, "rainbow undefended TP " + std::to_string(top.tp) + " FP " + std::to_string(top.fp) +
                    " defended max TP " + std::to_string(max_def));
  }

  // SWIRL
  {
    channel::FlowSynthConfig synth = config.synth;
    synth.packets = config.swirl_packets;
    synth.seed = derive_seed(config.seed, 10);
    report.seeds["swirl_flows"] = synth.seed;
    const auto flows = channel::synthesize_flows(synth, config.classic_flows, "sw");
    std::vector<bool> undef, def;
    std::size_t def_max_pairs = 0;
    for (std::size_t f = 0; f < flows.size(); ++f) {
      classic::SwirlConfig sc = config.swirl;
      sc.key = derive_seed(config.seed, 11000 + f);
      const auto marked = classic::swirl_embed(flows[f], sc);
      channel::JitterConfig jc = config.jitter;
      jc.seed = derive_seed(config.seed, 12000 + f);
      const auto observed = channel::apply_timestamp_jitter(marked, jc);
      undef.push_back(classic::swirl_detect(observed, sc).detected);
      const auto sim = runtime::run_simulation(*defense, observed, n, derive_seed(config.seed, 13000 + f));
      jc.seed = derive_seed(config.seed, 14000 + f);
      const auto det = classic::swirl_detect(channel::apply_timestamp_jitter(sim.output, jc), sc);
      def.push_back(det.detected);
      def_max_pairs = std::max(def_max_pairs, det.matching_pairs);
    }
    synth.seed = derive_seed(config.seed, 15);
    report.seeds["swirl_clean_flows"] = synth.seed;
    const auto clean_flows = channel::synthesize_flows(synth, config.clean_flows, "swc");
    std::vector<bool> clean_hits;
    std::size_t clean_max_pairs = 0;
    for (std::size_t f = 0; f < clean_flows.size(); ++f) {
      classic::SwirlConfig sc = config.swirl;
      sc.key = derive_seed(config.seed, 16000 + f);
      channel::JitterConfig jc = config.jitter;
      jc.seed = derive_seed(config.seed, 17000 + f);
      const auto det = classic::swirl_detect(channel::apply_timestamp_jitter(clean_flows[f], jc), sc);
      clean_hits.push_back(det.detected);
      clean_max_pairs = std::max(clean_max_pairs, det.matching_pairs);
    }
    const auto u = compute_tp_fp(undef, clean_hits);
    const auto d = compute_tp_fp(def, clean_hits);
    ConditionResult ru{"swirl", "undefended", 0, {}, json::object()};
    ru.metrics.tp = metric(u.tp, u.watermarked);
    ru.metrics.fp = metric(u.fp, u.clean);
    ru.extra["clean_max_matching_pairs"] = clean_max_pairs;
    report.results.push_back(ru);
    ConditionResult rd{"swirl", "defended", n, {}, json::object()};
    rd.metrics.tp = metric(d.tp, d.watermarked);
    rd.extra["max_matching_pairs"] = def_max_pairs;
    report.results.push_back(rd);
    log(config, "swirl undefended TP " + std::to_string(u.tp) + " FP " + std::to_string(u.fp) + " defended TP " +
                    std::to_string(d.tp));
  }
  return report;
}

TimingStats run_timing_benchmark(const defense::DefenseModel& model, std::size_t iterations, std::uint64_t seed) {
  if (iterations == 0) throw Error(ErrorKind::OutOfRange, "iterations must be >= 1");
  const std::size_t n = model.n();
  Rng rng(seed);
  constexpr std::size_t kInputs = 64;
  std::vector<IpdSequence> inputs(kInputs, IpdSequence(n));
  for (auto& x : inputs) {
    for (double& v : x) v = std::max(0.0, channel::sample_laplace(45.0, 14.14, rng));
  }
  double sink = 0.0;
  for (std::size_t i = 0; i < std::min<std::size_t>(iterations, 100); ++i) {
    sink += defense::defend_window(model, inputs[i % kInputs]).front();
  }
  std::vector<double> ms(iterations);
  for (std::size_t i = 0; i < iterations; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto y = defense::defend_window(model, inputs[i % kInputs]);
    const auto t1 = std::chrono::steady_clock::now();
    sink += y.front();
    ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  if (!std::isfinite(sink)) throw Error(ErrorKind::NonFinite, "defense produced non-finite output");
  TimingStats st;
  st.n = n;
  st.iterations = iterations;
  double sum = 0.0;
  for (double v : ms) sum += v;
  st.mean_ms = sum / static_cast<double>(iterations);
  std::sort(ms.begin(), ms.end());
  auto pct = [&](double p) { return ms[std::min(ms.size() - 1, static_cast<std::size_t>(p * static_cast<double>(ms.size())))]; };
  st.p50_ms = pct(0.50);
  st.p95_ms = pct(0.95);
  st.p99_ms = pct(0.99);
  st.max_ms = ms.back();
  return st;
}

ExperimentReport run_timing_sweep(const ExperimentConfig& config) {
  ExperimentReport report;
  report.scenario = "timing";
  report.config = to_json(config);
  report.seeds["experiment"] = config.seed;
  for (std::size_t n : config.lengths) {
    defense::DefenseModel model{defense::make_converter(n, derive_seed(config.seed, 800 + n)), config.remap, "untrained"};
    report.timing.push_back(run_timing_benchmark(model, config.timing_iterations, derive_seed(config.seed, 900 + n)));
  }
  return report;
}

}  // namespace demark::bench
