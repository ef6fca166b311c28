#include "demark/core/trace_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <unordered_map>

#include "demark/core/error.hpp"

namespace demark {

namespace {

constexpr std::string_view kHeader = "flow_id,timestamp_ms";

std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
  throw Error(ErrorKind::Format, "line " + std::to_string(line) + ": " + msg);
}

}  // namespace

std::vector<FlowTrace> read_traces(std::istream& in) {
  std::vector<FlowTrace> traces;
  std::unordered_map<std::string, std::size_t> index;
  std::string raw;
  std::size_t line_no = 0;
  bool seen_header = false;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim_cr(raw);
    if (!seen_header) {
      if (line.size() >= 3 && line.substr(0, 3) == "\xEF\xBB\xBF") line.remove_prefix(3);
      if (line.empty()) continue;
      if (line != kHeader) fail(line_no, "expected header '" + std::string(kHeader) + "'");
      seen_header = true;
      continue;
    }
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string_view::npos || comma == 0) fail(line_no, "expected 'flow_id,timestamp_ms'");
    const std::string id(line.substr(0, comma));
    const std::string_view num = line.substr(comma + 1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), value);
    if (ec != std::errc() || ptr != num.data() + num.size()) {
      fail(line_no, "cannot parse timestamp '" + std::string(num) + "'");
    }
    if (!std::isfinite(value) || value < 0.0) fail(line_no, "timestamp must be finite and >= 0");
    auto [it, inserted] = index.try_emplace(id, traces.size());
    if (inserted) traces.push_back(FlowTrace{id, {}});
    auto& ts = traces[it->second].timestamps;
    if (!ts.empty() && value < ts.back()) fail(line_no, "timestamps of flow '" + id + "' decrease");
    ts.push_back(value);
  }
  return traces;
}

void write_traces(std::ostream& out, const std::vector<FlowTrace>& traces) {
  out << kHeader << '\n';
  char buf[64];
  for (const auto& trace : traces) {
    validate_trace(trace);
    if (trace.flow_id.empty() || trace.flow_id.find_first_of(",\n\r") != std::string::npos) {
      throw Error(ErrorKind::Format, "flow id '" + trace.flow_id + "' is not CSV-safe");
    }
    for (double t : trace.timestamps) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, t);
      out << trace.flow_id << ',' << std::string_view(buf, static_cast<std::size_t>(ptr - buf)) << '\n';
    }
  }
}

std::vector<FlowTrace> load_traces(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  return read_traces(in);
}

void save_traces(const std::filesystem::path& path, const std::vector<FlowTrace>& traces) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  write_traces(out, traces);
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace demark
