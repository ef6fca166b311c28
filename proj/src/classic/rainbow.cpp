#include "demark/classic/rainbow.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "demark/core/error.hpp"
#include "demark/core/random.hpp"

namespace demark::classic {

void validate(const RainbowConfig& config) {
  if (!(config.amplitude > 0.0)) throw Error(ErrorKind::OutOfRange, "RAINBOW amplitude must be > 0");
  if (!(config.threshold > 0.0 && config.threshold < 1.0)) {
    throw Error(ErrorKind::OutOfRange, "RAINBOW threshold must lie in (0, 1)");
  }
  if (config.window < 1) throw Error(ErrorKind::OutOfRange, "RAINBOW window must be >= 1");
}

std::vector<double> rainbow_sequence(const RainbowConfig& config) {
  Rng rng(config.seed);
  std::vector<double> w(config.window);
  for (double& v : w) v = rng.coin() ? config.amplitude : -config.amplitude;
  return w;
}

RainbowEmbedding rainbow_embed(std::span<const double> ipds, const RainbowConfig& config, std::string flow_id) {
  if (config.window < 1 || !(config.amplitude >= 0.0)) {
    throw Error(ErrorKind::OutOfRange, "RAINBOW needs window >= 1 and amplitude >= 0");
  }
  if (ipds.size() < config.window) {
    throw Error(ErrorKind::InsufficientLength, "flow has " + std::to_string(ipds.size()) +
                                                   " IPDs, RAINBOW window is " + std::to_string(config.window));
  }
  RainbowEmbedding out;
  out.record.flow_id = std::move(flow_id);
  out.record.clean.assign(ipds.begin(), ipds.begin() + static_cast<std::ptrdiff_t>(config.window));
  out.record.w = rainbow_sequence(config);
  out.watermarked.assign(ipds.begin(), ipds.end());
  for (std::size_t i = 0; i < config.window; ++i) {
    out.watermarked[i] = std::max(0.0, ipds[i] + out.record.w[i]);
  }
  return out;
}

RainbowDetection rainbow_detect(std::span<const double> observed, const RainbowRecord& record,
                                const RainbowConfig& config) {
  const std::size_t window = config.window;
  if (record.clean.size() != window || record.w.size() != window) {
    throw Error(ErrorKind::LengthMismatch, "RAINBOW record length differs from the window");
  }
  if (observed.size() < window) {
    throw Error(ErrorKind::LengthMismatch, "observed flow has " + std::to_string(observed.size()) +
                                               " IPDs, window is " + std::to_string(window));
  }
  double dot = 0.0, nd = 0.0, nw = 0.0;
  for (std::size_t i = 0; i < window; ++i) {
    const double d = observed[i] - record.clean[i];
    dot += d * record.w[i];
    nd += d * d;
    nw += record.w[i] * record.w[i];
  }
  RainbowDetection det;
  if (nd > 0.0 && nw > 0.0) det.correlation = std::clamp(dot / std::sqrt(nd * nw), -1.0, 1.0);
  det.detected = det.correlation >= config.threshold;
  return det;
}

namespace {

void append_number(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

double parse_number(std::string_view field, std::size_t line) {
  double v = 0.0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size() || !std::isfinite(v)) {
    throw Error(ErrorKind::Format, "line " + std::to_string(line) + ": bad number '" + std::string(field) + "'");
  }
  return v;
}

}  // namespace

void save_rainbow_record(const std::filesystem::path& path, const RainbowRecord& record) {
  if (record.clean.size() != record.w.size()) {
    throw Error(ErrorKind::LengthMismatch, "RAINBOW record columns differ in length");
  }
  std::string text = "index,clean_ipd_ms,w_ms\n";
  for (std::size_t i = 0; i < record.clean.size(); ++i) {
    text += std::to_string(i);
    text += ',';
    append_number(text, record.clean[i]);
    text += ',';
    append_number(text, record.w[i]);
    text += '\n';
  }
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw Error(ErrorKind::Io, "cannot write " + path.string());
}

RainbowRecord load_rainbow_record(const std::filesystem::path& path, std::string flow_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  RainbowRecord record;
  record.flow_id = std::move(flow_id);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      if (line != "index,clean_ipd_ms,w_ms") throw Error(ErrorKind::Format, "line 1: unexpected header");
      continue;
    }
    if (line.empty()) continue;
    std::string_view sv(line);
    const auto c1 = sv.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : sv.find(',', c1 + 1);
    if (c2 == std::string_view::npos || sv.find(',', c2 + 1) != std::string_view::npos) {
      throw Error(ErrorKind::Format, "line " + std::to_string(lineno) + ": expected 3 fields");
    }
    const double idx = parse_number(sv.substr(0, c1), lineno);
    if (idx != static_cast<double>(record.clean.size())) {
      throw Error(ErrorKind::Format, "line " + std::to_string(lineno) + ": index out of sequence");
    }
    record.clean.push_back(parse_number(sv.substr(c1 + 1, c2 - c1 - 1), lineno));
    record.w.push_back(parse_number(sv.substr(c2 + 1), lineno));
  }
  return record;
}

}  // namespace demark::classic
